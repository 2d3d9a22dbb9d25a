#include "blinklight/highlight.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace blinklight::highlight {

SeriesMoments moments(std::span<const double> values) {
  if (values.empty()) return {};
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / n)};
}

std::vector<HighlightSegment> detect(const train::PredictedSeries& pred, const DetectParams& params) {
  if (params.min_run == 0) throw ConfigError("min_run must be at least 1");
  if (!(params.k >= 0.0)) throw ConfigError("k must be non-negative");
  const auto& v = pred.values;
  std::vector<HighlightSegment> out;
  if (v.size() < params.min_run) return out;
  const auto m = moments(v);
  if (!(m.sd > 0.0)) return out;
  const double threshold = m.mean - params.k * m.sd;

  std::vector<char> below(v.size(), 0);
  if (params.mode == RunMode::AllFrames) {
    for (std::size_t i = 0; i < v.size(); ++i) below[i] = v[i] < threshold;
  } else {
    const std::size_t w = params.min_run;
    double sum = std::accumulate(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(w), 0.0);
    for (std::size_t s = 0; s + w <= v.size(); ++s) {
      if (s > 0) sum += v[s + w - 1] - v[s - 1];
      if (sum / static_cast<double>(w) < threshold) std::fill_n(below.begin() + static_cast<std::ptrdiff_t>(s), w, 1);
    }
  }

  std::size_t i = 0;
  while (i < v.size()) {
    if (!below[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < v.size() && below[j + 1]) ++j;
    if (j - i + 1 >= params.min_run) {
      HighlightSegment seg;
      seg.clip_id = pred.clip_id;
      seg.start_frame = pred.first_valid_frame + i;
      seg.end_frame = pred.first_valid_frame + j;
      seg.min_value = *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(i),
                                        v.begin() + static_cast<std::ptrdiff_t>(j + 1));
      seg.depth_sd = (m.mean - seg.min_value) / m.sd;
      out.push_back(std::move(seg));
    }
    i = j + 1;
  }
  return out;
}

std::vector<HighlightSegment> export_clip_bounds(std::vector<HighlightSegment> segments, double pad, double fps,
                                                 double clip_duration_s) {
  if (!(pad >= 0.0)) throw ConfigError("pad must be non-negative");
  if (!(fps > 0.0)) throw ConfigError("fps must be positive");
  for (auto& s : segments) {
    s.padded_start_s = std::max(0.0, static_cast<double>(s.start_frame) / fps - pad);
    s.padded_end_s = std::min(clip_duration_s, static_cast<double>(s.end_frame + 1) / fps + pad);
    s.overlaps = false;
  }
  for (std::size_t a = 0; a < segments.size(); ++a) {
    for (std::size_t b = a + 1; b < segments.size(); ++b) {
      if (segments[a].clip_id != segments[b].clip_id) continue;
      if (segments[a].padded_start_s < segments[b].padded_end_s &&
          segments[b].padded_start_s < segments[a].padded_end_s) {
        segments[a].overlaps = segments[b].overlaps = true;
      }
    }
  }
  return segments;
}

Summary summarize(std::span<const std::string> clips, std::span<const HighlightSegment> segments) {
  if (clips.empty()) throw ConfigError("summary needs at least one clip");
  Summary s;
  for (const auto& c : clips) s.counts[c] = 0;
  for (const auto& seg : segments) {
    auto it = s.counts.find(seg.clip_id);
    if (it == s.counts.end()) throw ConfigError(fmt::format("segment from unlisted clip '{}'", seg.clip_id));
    ++it->second;
  }
  const double n = static_cast<double>(s.counts.size());
  for (const auto& [id, c] : s.counts) s.mean += static_cast<double>(c);
  s.mean /= n;
  if (s.counts.size() > 1) {
    double ss = 0.0;
    for (const auto& [id, c] : s.counts) ss += (static_cast<double>(c) - s.mean) * (static_cast<double>(c) - s.mean);
    s.sd = std::sqrt(ss / (n - 1.0));
  }
  return s;
}

std::string segments_to_json(std::span<const HighlightSegment> segments) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : segments) {
    arr.push_back({{"clip_id", s.clip_id},
                   {"start_frame", s.start_frame},
                   {"end_frame", s.end_frame},
                   {"min_value", s.min_value},
                   {"depth_sd", s.depth_sd},
                   {"padded_start_s", s.padded_start_s},
                   {"padded_end_s", s.padded_end_s},
                   {"overlaps", s.overlaps}});
  }
  return arr.dump(2) + "\n";
}

std::string summary_to_csv(const Summary& summary) {
  std::string out = "clip_id,n_segments\n";
  for (const auto& [id, c] : summary.counts) out += fmt::format("{},{}\n", id, c);
  return out;
}

std::string plot_csv(const train::PredictedSeries& pred, const DetectParams& params) {
  const auto m = moments(pred.values);
  const double threshold = m.mean - params.k * m.sd;
  std::string out = "frame,pred,threshold\n";
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    out += fmt::format("{},{},{}\n", pred.first_valid_frame + i, io::format_double(pred.values[i]),
                       io::format_double(threshold));
  }
  return out;
}

}  // namespace blinklight::highlight
