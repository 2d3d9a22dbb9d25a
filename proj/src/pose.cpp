#include "blinklight/pose.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "blinklight/io.hpp"

namespace blinklight::pose {

using nlohmann::json;

namespace {

constexpr std::size_t kNumbersPerPerson = 3 * kJointCount;
constexpr std::string_view kKeypointSuffix = "_keypoints.json";

// Digits immediately preceding "_keypoints.json", e.g. clip_000000000042_keypoints.json -> 42.
std::optional<std::size_t> frame_index_of(const std::string& name) {
  if (name.size() <= kKeypointSuffix.size() || !name.ends_with(kKeypointSuffix)) return std::nullopt;
  const std::size_t end = name.size() - kKeypointSuffix.size();
  std::size_t begin = end;
  while (begin > 0 && name[begin - 1] >= '0' && name[begin - 1] <= '9') --begin;
  if (begin == end) return std::nullopt;
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(name.data() + begin, name.data() + end, value);
  if (ec != std::errc()) return std::nullopt;
  return value;
}

}  // namespace

void ClipMeta::validate() const {
  if (!(fps > 0.0)) throw SchemaError(fmt::format("clip '{}': fps must be positive", clip_id));
  if (width <= 0 || height <= 0) {
    throw SchemaError(fmt::format("clip '{}': image dimensions must be positive", clip_id));
  }
}

Frame parse_frame(const FrameDocument& doc) {
  json root;
  try {
    root = json::parse(doc.bytes);
  } catch (const json::parse_error& e) {
    throw ParseError(fmt::format("{}: malformed keypoint document at byte offset {}: {}", doc.name, e.byte,
                                 e.what()));
  }
  if (!root.is_object() || !root.contains("people") || !root["people"].is_array()) {
    throw SchemaError(fmt::format("{}: expected an object with a \"people\" array", doc.name));
  }
  Frame frame;
  const auto& people = root["people"];
  frame.reserve(people.size());
  for (std::size_t p = 0; p < people.size(); ++p) {
    const auto& person = people[p];
    if (!person.is_object() || !person.contains("pose_keypoints_2d") ||
        !person["pose_keypoints_2d"].is_array()) {
      throw SchemaError(fmt::format("{}: person {} has no \"pose_keypoints_2d\" array", doc.name, p));
    }
    const auto& kp = person["pose_keypoints_2d"];
    if (kp.size() != kNumbersPerPerson) {
      throw SchemaError(fmt::format("{}: person {} has {} keypoint numbers, expected {}", doc.name, p,
                                    kp.size(), kNumbersPerPerson));
    }
    PersonPose pose;
    for (std::size_t j = 0; j < kJointCount; ++j) {
      for (std::size_t k = 0; k < 3; ++k) {
        if (!kp[3 * j + k].is_number()) {
          throw SchemaError(fmt::format("{}: person {} keypoint value {} is not a number", doc.name, p, 3 * j + k));
        }
      }
      pose.joints[j] = {kp[3 * j].get<double>(), kp[3 * j + 1].get<double>(), kp[3 * j + 2].get<double>()};
    }
    frame.push_back(pose);
  }
  return frame;
}

PoseSequence parse_keypoints(std::span<const FrameDocument> docs, const ClipMeta& meta) {
  meta.validate();
  if (docs.empty()) throw SchemaError(fmt::format("clip '{}' has no keypoint documents", meta.clip_id));
  PoseSequence seq{meta, {}};
  seq.frames.reserve(docs.size());
  for (const auto& doc : docs) seq.frames.push_back(parse_frame(doc));
  return seq;
}

std::string serialize_frame(const Frame& frame) {
  json people = json::array();
  for (const auto& person : frame) {
    json kp = json::array();
    for (const auto& j : person.joints) {
      kp.push_back(j.x);
      kp.push_back(j.y);
      kp.push_back(j.c);
    }
    people.push_back(json{{"pose_keypoints_2d", std::move(kp)}});
  }
  json root{{"version", 1.3}, {"people", std::move(people)}};
  return root.dump();
}

ClipMeta read_clip_meta(const std::filesystem::path& clip_dir) {
  const auto path = clip_dir / "clip.json";
  json j;
  try {
    j = json::parse(io::read_text(path));
  } catch (const json::parse_error& e) {
    throw ParseError(fmt::format("{}: malformed metadata at byte offset {}", path.string(), e.byte));
  }
  try {
    ClipMeta meta{j.at("id").get<std::string>(), j.value("fps", 30.0), j.at("width").get<int>(),
                  j.at("height").get<int>()};
    meta.validate();
    return meta;
  } catch (const json::exception& e) {
    throw SchemaError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void write_clip_meta(const std::filesystem::path& clip_dir, const ClipMeta& meta, std::size_t n_frames) {
  json j{{"id", meta.clip_id}, {"fps", meta.fps}, {"width", meta.width}, {"height", meta.height},
         {"n_frames", n_frames}};
  io::write_text(clip_dir / "clip.json", j.dump(2) + "\n");
}

std::string keypoint_file_name(const std::string& clip_id, std::size_t frame) {
  return fmt::format("{}_{:012d}{}", clip_id, frame, kKeypointSuffix);
}

PoseSequence read_clip(const std::filesystem::path& clip_dir) {
  const auto meta = read_clip_meta(clip_dir);
  const auto kp_dir = clip_dir / "keypoints";
  if (!std::filesystem::is_directory(kp_dir)) {
    throw IoError(fmt::format("clip '{}': missing keypoint directory '{}'", meta.clip_id, kp_dir.string()));
  }
  std::map<std::size_t, std::filesystem::path> ordered;
  for (const auto& entry : std::filesystem::directory_iterator(kp_dir)) {
    if (!entry.is_regular_file()) continue;
    const auto name = entry.path().filename().string();
    if (auto index = frame_index_of(name)) {
      if (!ordered.emplace(*index, entry.path()).second) {
        throw SchemaError(fmt::format("clip '{}': duplicate frame index {}", meta.clip_id, *index));
      }
    }
  }
  std::vector<FrameDocument> docs;
  docs.reserve(ordered.size());
  for (const auto& [index, path] : ordered) docs.push_back({path.string(), io::read_text(path)});
  return parse_keypoints(docs, meta);
}

std::optional<double> body_area(const PersonPose& person) {
  std::size_t count = 0;
  double min_x = 0, max_x = 0, min_y = 0, max_y = 0;
  for (const auto& j : person.joints) {
    if (!(j.c > 0.0)) continue;
    if (count == 0) {
      min_x = max_x = j.x;
      min_y = max_y = j.y;
    } else {
      min_x = std::min(min_x, j.x);
      max_x = std::max(max_x, j.x);
      min_y = std::min(min_y, j.y);
      max_y = std::max(max_y, j.y);
    }
    ++count;
  }
  if (count < 2) return std::nullopt;
  return (max_x - min_x) * (max_y - min_y);
}

std::optional<std::size_t> select_principal_index(std::span<const PersonPose> frame) {
  std::optional<std::size_t> best;
  double best_area = 0.0;
  for (std::size_t i = 0; i < frame.size(); ++i) {
    const auto area = body_area(frame[i]);
    if (!area) continue;
    if (!best || *area > best_area) {
      best = i;
      best_area = *area;
    }
  }
  return best;
}

std::optional<PersonPose> select_principal_person(std::span<const PersonPose> frame) {
  if (auto i = select_principal_index(frame)) return frame[*i];
  return std::nullopt;
}

MaskedPose mask_low_confidence(const PersonPose& person, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("confidence threshold must lie in [0, 1]");
  MaskedPose out;
  for (std::size_t j = 0; j < kJointCount; ++j) {
    const auto& k = person.joints[j];
    out[j] = {k.x, k.y, k.c < threshold};
  }
  return out;
}

MaskedPose absent_pose() { return MaskedPose{}; }

std::vector<double> fill_gaps(std::span<const std::optional<double>> series) {
  std::vector<double> out(series.size());
  std::optional<std::size_t> prev;
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (!series[i]) continue;
    out[i] = *series[i];
    if (!prev) {
      for (std::size_t k = 0; k < i; ++k) out[k] = *series[i];
    } else if (i - *prev > 1) {
      const double a = *series[*prev];
      const double b = *series[i];
      const double span = static_cast<double>(i - *prev);
      for (std::size_t k = *prev + 1; k < i; ++k) {
        out[k] = a + (b - a) * static_cast<double>(k - *prev) / span;
      }
    }
    prev = i;
  }
  if (!prev) throw UnusableDataError("series has no valid observation");
  for (std::size_t k = *prev + 1; k < series.size(); ++k) out[k] = *series[*prev];
  return out;
}

std::vector<FilledPose> interpolate_missing(std::span<const MaskedPose> track) {
  if (track.empty()) throw UnusableDataError("empty joint track");
  double sum[2] = {0.0, 0.0};
  std::size_t valid = 0;
  for (const auto& pose : track) {
    for (const auto& j : pose) {
      if (j.missing) continue;
      sum[0] += j.x;
      sum[1] += j.y;
      ++valid;
    }
  }
  if (valid == 0) throw UnusableDataError("clip has no valid joint observation");
  const double mean[2] = {sum[0] / static_cast<double>(valid), sum[1] / static_cast<double>(valid)};

  std::vector<FilledPose> out(track.size());
  std::vector<std::optional<double>> series(track.size());
  for (std::size_t j = 0; j < kJointCount; ++j) {
    for (std::size_t axis = 0; axis < 2; ++axis) {
      bool any = false;
      for (std::size_t t = 0; t < track.size(); ++t) {
        const auto& joint = track[t][j];
        if (joint.missing) {
          series[t].reset();
        } else {
          series[t] = axis == 0 ? joint.x : joint.y;
          any = true;
        }
      }
      if (!any) {
        for (auto& pose : out) pose[j][axis] = mean[axis];
        continue;
      }
      const auto filled = fill_gaps(series);
      for (std::size_t t = 0; t < track.size(); ++t) out[t][j][axis] = filled[t];
    }
  }
  return out;
}

JointMatrix normalize(std::span<const FilledPose> track, int width, int height, std::string clip_id, double fps) {
  if (width <= 0 || height <= 0) throw ConfigError("image dimensions must be positive");
  JointMatrix out{std::move(clip_id), fps, RowMatrix(static_cast<Eigen::Index>(track.size()), kChannelCount)};
  const double sx = 1.0 / static_cast<double>(width);
  const double sy = 1.0 / static_cast<double>(height);
  for (std::size_t t = 0; t < track.size(); ++t) {
    for (std::size_t j = 0; j < kJointCount; ++j) {
      const auto row = static_cast<Eigen::Index>(t);
      const auto col = static_cast<Eigen::Index>(2 * j);
      out.values(row, col) = std::clamp(track[t][j][0] * sx, kClampLow, kClampHigh);
      out.values(row, col + 1) = std::clamp(track[t][j][1] * sy, kClampLow, kClampHigh);
    }
  }
  return out;
}

JointMatrix ingest(const PoseSequence& seq, double threshold, IngestStats* stats) {
  seq.meta.validate();
  if (seq.frames.empty()) throw UnusableDataError(fmt::format("clip '{}' has no frames", seq.meta.clip_id));
  IngestStats local;
  std::vector<MaskedPose> track;
  track.reserve(seq.frames.size());
  for (const auto& frame : seq.frames) {
    if (auto person = select_principal_person(frame)) {
      track.push_back(mask_low_confidence(*person, threshold));
      for (const auto& j : track.back()) local.masked_joints += j.missing ? 1 : 0;
    } else {
      track.push_back(absent_pose());
      ++local.absent_frames;
    }
  }
  std::vector<FilledPose> filled;
  try {
    filled = interpolate_missing(track);
  } catch (const UnusableDataError& e) {
    throw UnusableDataError(fmt::format("clip '{}': {}", seq.meta.clip_id, e.what()));
  }
  if (stats) *stats = local;
  return normalize(filled, seq.meta.width, seq.meta.height, seq.meta.clip_id, seq.meta.fps);
}

std::string joints_to_csv(const JointMatrix& joints) {
  std::string out = "frame";
  for (std::size_t c = 0; c < kChannelCount; ++c) out += fmt::format(",c{}", c);
  out += '\n';
  for (Eigen::Index t = 0; t < joints.values.rows(); ++t) {
    out += std::to_string(t);
    for (Eigen::Index c = 0; c < joints.values.cols(); ++c) {
      out += ',';
      out += io::format_double(joints.values(t, c));
    }
    out += '\n';
  }
  return out;
}

JointMatrix joints_from_csv(std::string_view text, std::string clip_id, double fps, std::string_view what) {
  std::vector<std::array<double, kChannelCount>> rows;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    const auto fields = io::split_csv_line(line);
    if (fields.size() != kChannelCount + 1) {
      throw SchemaError(fmt::format("{}: line {} has {} fields, expected {}", what, line_no, fields.size(),
                                    kChannelCount + 1));
    }
    std::array<double, kChannelCount> row{};
    for (std::size_t c = 0; c < kChannelCount; ++c) {
      row[c] = io::parse_double(fields[c + 1], fmt::format("{} line {}", what, line_no));
    }
    rows.push_back(row);
  }
  JointMatrix out{std::move(clip_id), fps, RowMatrix(static_cast<Eigen::Index>(rows.size()), kChannelCount)};
  for (std::size_t t = 0; t < rows.size(); ++t) {
    for (std::size_t c = 0; c < kChannelCount; ++c) {
      out.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) = rows[t][c];
    }
  }
  return out;
}

}  // namespace blinklight::pose
