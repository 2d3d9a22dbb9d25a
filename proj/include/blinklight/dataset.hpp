#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "blinklight/blink.hpp"
#include "blinklight/cnn.hpp"
#include "blinklight/pose.hpp"

namespace blinklight::dataset {

inline constexpr std::size_t kDefaultWindow = 90;

/// `window` consecutive joint rows ending at `end_frame`, labelled with the
/// blink rate at `end_frame`.
struct WindowSample {
  std::string clip_id;
  std::size_t end_frame = 0;
  cnn::RowMatrix input;
  double target = 0.0;

  cnn::WindowView view() const { return cnn::WindowView(input); }
};

struct BuildStats {
  bool too_short = false;
};

/// Windows end at frames window-1, window-1+stride, ... . A clip shorter than
/// the window yields no samples and sets stats->too_short.
std::vector<WindowSample> build_windows(const pose::JointMatrix& joints, const blink::BlinkRateSeries& rates,
                                        std::size_t window = kDefaultWindow, std::size_t stride = 1,
                                        BuildStats* stats = nullptr);

struct Fold {
  std::vector<std::string> train_clip_ids;
  std::string test_clip_id;

  bool operator==(const Fold&) const = default;
};

struct FoldPlan {
  std::vector<Fold> folds;
};

/// Leave-one-out: fold i holds out clip_ids[i]; training order follows input order.
FoldPlan loocv_splits(std::span<const std::string> clip_ids);

/// Channel layout recorded in dataset containers.
inline constexpr std::string_view kChannelOrderTag = "xy-interleaved-18";
inline constexpr std::uint32_t kDatasetVersion = 1;

struct DatasetHeader {
  std::uint32_t version = kDatasetVersion;
  std::uint32_t window = kDefaultWindow;
  std::uint32_t stride = 1;
  std::uint32_t channels = kChannelCount;
  std::string channel_order{kChannelOrderTag};
};

/// Container: magic "BLNKDSET", header, u64 sample count, then per sample
/// (clip id, u64 end frame, f64 target, window*channels f64 row-major),
/// then a CRC-32 of everything before it.
io::Bytes encode_dataset(const DatasetHeader& header, std::span<const WindowSample> samples);
std::vector<WindowSample> decode_dataset(std::span<const std::uint8_t> bytes, DatasetHeader* header = nullptr,
                                         std::string_view what = "dataset");
void save_dataset(const std::filesystem::path& path, const DatasetHeader& header,
                  std::span<const WindowSample> samples);
std::vector<WindowSample> load_dataset(const std::filesystem::path& path, DatasetHeader* header = nullptr);

/// Inspection export: `clip_id,end_frame,target,v0,...` with v row-major.
std::string dataset_to_csv(std::span<const WindowSample> samples);

}  // namespace blinklight::dataset
