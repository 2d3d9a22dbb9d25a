#include "blinklight/dataset.hpp"

#include <cstring>

#include <fmt/format.h>

namespace blinklight::dataset {
namespace {

constexpr char kMagic[8] = {'B', 'L', 'N', 'K', 'D', 'S', 'E', 'T'};

}  // namespace

std::vector<WindowSample> build_windows(const pose::JointMatrix& joints, const blink::BlinkRateSeries& rates,
                                        std::size_t window, std::size_t stride, BuildStats* stats) {
  if (window == 0 || stride == 0) throw ConfigError("window and stride must be positive");
  if (joints.n_frames() != rates.values.size()) {
    throw ConfigError(fmt::format("clip '{}': {} joint frames vs {} blink-rate frames", joints.clip_id,
                                  joints.n_frames(), rates.values.size()));
  }
  if (stats) *stats = {};
  std::vector<WindowSample> out;
  if (joints.n_frames() < window) {
    if (stats) stats->too_short = true;
    return out;
  }
  out.reserve((joints.n_frames() - window) / stride + 1);
  const auto w = static_cast<Eigen::Index>(window);
  for (std::size_t end = window - 1; end < joints.n_frames(); end += stride) {
    const auto first = static_cast<Eigen::Index>(end + 1 - window);
    out.push_back({joints.clip_id, end, joints.values.middleRows(first, w), rates.values[end]});
  }
  return out;
}

FoldPlan loocv_splits(std::span<const std::string> clip_ids) {
  if (clip_ids.size() < 2) throw ConfigError("leave-one-out needs at least 2 clips");
  FoldPlan plan;
  plan.folds.reserve(clip_ids.size());
  for (std::size_t i = 0; i < clip_ids.size(); ++i) {
    Fold fold;
    fold.test_clip_id = clip_ids[i];
    for (std::size_t k = 0; k < clip_ids.size(); ++k) {
      if (k != i) fold.train_clip_ids.push_back(clip_ids[k]);
    }
    plan.folds.push_back(std::move(fold));
  }
  return plan;
}

io::Bytes encode_dataset(const DatasetHeader& header, std::span<const WindowSample> samples) {
  io::ByteWriter w;
  w.put_raw({reinterpret_cast<const std::uint8_t*>(kMagic), sizeof kMagic});
  w.put_u32(header.version);
  w.put_u32(header.window);
  w.put_u32(header.stride);
  w.put_u32(header.channels);
  w.put_string(header.channel_order);
  w.put_u64(samples.size());
  for (const auto& s : samples) {
    if (s.input.rows() != header.window || s.input.cols() != header.channels) {
      throw ConfigError(fmt::format("sample {}@{} does not match the dataset header shape", s.clip_id, s.end_frame));
    }
    w.put_string(s.clip_id);
    w.put_u64(s.end_frame);
    w.put_f64(s.target);
    for (Eigen::Index i = 0; i < s.input.size(); ++i) w.put_f64(s.input.data()[i]);
  }
  w.put_u32(io::crc32(w.bytes()));
  return std::move(w).take();
}

std::vector<WindowSample> decode_dataset(std::span<const std::uint8_t> bytes, DatasetHeader* header_out,
                                         std::string_view what) {
  io::ByteReader r(bytes, std::string(what));
  auto magic = r.get_raw(sizeof kMagic);
  if (std::memcmp(magic.data(), kMagic, sizeof kMagic) != 0) r.fail("bad magic bytes");
  DatasetHeader header;
  header.version = r.get_u32();
  if (header.version != kDatasetVersion) r.fail(fmt::format("unsupported dataset version {}", header.version));
  header.window = r.get_u32();
  header.stride = r.get_u32();
  header.channels = r.get_u32();
  header.channel_order = r.get_string();
  if (header.channel_order != kChannelOrderTag) {
    r.fail(fmt::format("unknown channel order '{}'", header.channel_order));
  }
  const auto count = r.get_u64();
  const std::size_t per_sample = std::size_t{8} * header.window * header.channels;
  if (per_sample > 0 && count > r.remaining() / per_sample) r.fail("sample count exceeds container size");
  std::vector<WindowSample> samples;
  samples.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    WindowSample s;
    s.clip_id = r.get_string();
    s.end_frame = r.get_u64();
    s.target = r.get_f64();
    s.input.resize(header.window, header.channels);
    for (Eigen::Index k = 0; k < s.input.size(); ++k) s.input.data()[k] = r.get_f64();
    samples.push_back(std::move(s));
  }
  const std::size_t payload_end = r.offset();
  if (r.get_u32() != io::crc32(bytes.first(payload_end))) r.fail("CRC mismatch (corrupt dataset)");
  if (r.remaining() != 0) r.fail("trailing bytes after dataset");
  if (header_out) *header_out = header;
  return samples;
}

void save_dataset(const std::filesystem::path& path, const DatasetHeader& header,
                  std::span<const WindowSample> samples) {
  io::write_file(path, encode_dataset(header, samples));
}

std::vector<WindowSample> load_dataset(const std::filesystem::path& path, DatasetHeader* header) {
  return decode_dataset(io::read_file(path), header, path.string());
}

std::string dataset_to_csv(std::span<const WindowSample> samples) {
  std::string out = "clip_id,end_frame,target";
  const Eigen::Index values = samples.empty() ? 0 : samples.front().input.size();
  for (Eigen::Index i = 0; i < values; ++i) out += fmt::format(",v{}", i);
  out += '\n';
  for (const auto& s : samples) {
    out += fmt::format("{},{},{}", s.clip_id, s.end_frame, io::format_double(s.target));
    for (Eigen::Index i = 0; i < s.input.size(); ++i) {
      out += ',';
      out += io::format_double(s.input.data()[i]);
    }
    out += '\n';
  }
  return out;
}

}  // namespace blinklight::dataset
