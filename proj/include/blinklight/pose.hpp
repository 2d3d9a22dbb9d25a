#pragma once

// Keypoint ingestion: OpenPose-style per-frame documents -> principal person
// per frame -> confidence masking -> gap interpolation -> normalized
// (frame x 36) joint matrix.

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "blinklight/common.hpp"

namespace blinklight::pose {

struct Keypoint {
  double x = 0.0;  // pixels
  double y = 0.0;  // pixels
  double c = 0.0;  // confidence in [0, 1]

  bool operator==(const Keypoint&) const = default;
};

/// One detected person, COCO 18-joint layout.
struct PersonPose {
  std::array<Keypoint, kJointCount> joints{};

  bool operator==(const PersonPose&) const = default;
};

using Frame = std::vector<PersonPose>;

struct ClipMeta {
  std::string clip_id;
  double fps = 30.0;
  int width = 0;
  int height = 0;

  void validate() const;
  bool operator==(const ClipMeta&) const = default;
};

struct PoseSequence {
  ClipMeta meta;
  std::vector<Frame> frames;

  bool operator==(const PoseSequence&) const = default;
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense normalized coordinates: row = frame, channel 2j = x_j / width,
/// channel 2j+1 = y_j / height.
struct JointMatrix {
  std::string clip_id;
  double fps = 30.0;
  RowMatrix values;

  std::size_t n_frames() const noexcept { return static_cast<std::size_t>(values.rows()); }
};

/// Raw bytes of one per-frame keypoint document. `name` is used in errors.
struct FrameDocument {
  std::string name;
  std::string bytes;
};

/// Parses one keypoint document: top-level "people" array, each entry with a
/// flat "pose_keypoints_2d" array of 54 numbers.
Frame parse_frame(const FrameDocument& doc);
PoseSequence parse_keypoints(std::span<const FrameDocument> docs, const ClipMeta& meta);

/// Inverse of parse_frame. Emits numbers in shortest round-trip form.
std::string serialize_frame(const Frame& frame);

/// Reads `clip.json` (id, fps, width, height) from a clip directory.
ClipMeta read_clip_meta(const std::filesystem::path& clip_dir);
void write_clip_meta(const std::filesystem::path& clip_dir, const ClipMeta& meta, std::size_t n_frames);
/// Reads every `*_keypoints.json` file under `clip_dir/keypoints`, ordered by
/// the numeric run of digits before the `_keypoints` suffix.
PoseSequence read_clip(const std::filesystem::path& clip_dir);
std::string keypoint_file_name(const std::string& clip_id, std::size_t frame);

/// Area of the axis-aligned bounding box over joints with c > 0; nullopt when
/// fewer than two such joints exist.
std::optional<double> body_area(const PersonPose& person);

/// Person with the largest body area; ties go to the lowest index.
std::optional<std::size_t> select_principal_index(std::span<const PersonPose> frame);
std::optional<PersonPose> select_principal_person(std::span<const PersonPose> frame);

inline constexpr double kDefaultConfidenceThreshold = 0.7;

struct MaskedJoint {
  double x = 0.0;
  double y = 0.0;
  bool missing = true;

  bool operator==(const MaskedJoint&) const = default;
};

using MaskedPose = std::array<MaskedJoint, kJointCount>;
using FilledPose = std::array<std::array<double, 2>, kJointCount>;

/// Joint j is missing iff c_j < threshold (strict).
MaskedPose mask_low_confidence(const PersonPose& person, double threshold = kDefaultConfidenceThreshold);
/// All joints missing; stands in for frames without a principal person.
MaskedPose absent_pose();

/// Fills one scalar series: interior gaps linearly, leading/trailing gaps by
/// nearest valid value. Throws UnusableDataError when nothing is valid.
std::vector<double> fill_gaps(std::span<const std::optional<double>> series);

/// Per-joint, per-coordinate gap filling over a clip. A joint missing in every
/// frame takes the clip-wide mean of all valid coordinates. Throws
/// UnusableDataError if the clip has no valid observation at all.
std::vector<FilledPose> interpolate_missing(std::span<const MaskedPose> track);

inline constexpr double kClampLow = -0.1;
inline constexpr double kClampHigh = 1.1;

JointMatrix normalize(std::span<const FilledPose> track, int width, int height, std::string clip_id = {},
                      double fps = 30.0);

struct IngestStats {
  std::size_t absent_frames = 0;
  std::size_t masked_joints = 0;
};

/// Full ingestion of a clip: principal person, masking, interpolation,
/// normalization.
JointMatrix ingest(const PoseSequence& seq, double threshold = kDefaultConfidenceThreshold,
                   IngestStats* stats = nullptr);

/// CSV with header `frame,c0,...,c35`.
std::string joints_to_csv(const JointMatrix& joints);
JointMatrix joints_from_csv(std::string_view text, std::string clip_id, double fps,
                            std::string_view what = "joints csv");

}  // namespace blinklight::pose
