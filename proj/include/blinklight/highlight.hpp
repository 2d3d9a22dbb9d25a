#pragma once

// Highlight scenes: sustained runs where the predicted blink probability sits
// k standard deviations below the clip's mean.

#include <map>
#include <span>
#include <string>
#include <vector>

#include "blinklight/trainer.hpp"

namespace blinklight::highlight {

enum class RunMode {
  /// Every frame of a run of >= min_run frames is below the threshold.
  AllFrames,
  /// Union of min_run-frame windows whose mean is below the threshold.
  WindowMean,
};

struct DetectParams {
  double k = 2.0;
  std::size_t min_run = 5;
  RunMode mode = RunMode::AllFrames;
};

struct HighlightSegment {
  std::string clip_id;
  std::size_t start_frame = 0;  // inclusive, absolute frame index
  std::size_t end_frame = 0;    // inclusive
  double min_value = 0.0;
  /// (series mean - min_value) / series sd.
  double depth_sd = 0.0;
  double padded_start_s = 0.0;
  double padded_end_s = 0.0;
  /// Padded bounds intersect another segment's padded bounds.
  bool overlaps = false;
};

/// Series mean and population standard deviation.
struct SeriesMoments {
  double mean = 0.0;
  double sd = 0.0;
};
SeriesMoments moments(std::span<const double> values);

/// Threshold = mean - k * sd over the whole series; strict "<". A constant
/// series gives no segments.
std::vector<HighlightSegment> detect(const train::PredictedSeries& pred, const DetectParams& params = {});

/// padded_start = max(0, start / fps - pad), padded_end = min(duration,
/// (end + 1) / fps + pad). Overlapping padded segments are flagged, not merged.
std::vector<HighlightSegment> export_clip_bounds(std::vector<HighlightSegment> segments, double pad, double fps,
                                                 double clip_duration_s);

struct Summary {
  std::map<std::string, std::size_t> counts;
  double mean = 0.0;
  /// Sample standard deviation; 0 for a single clip.
  double sd = 0.0;
};

/// `clips` lists every clip so that clips without segments count as 0.
Summary summarize(std::span<const std::string> clips, std::span<const HighlightSegment> segments);

/// JSON array of segment objects.
std::string segments_to_json(std::span<const HighlightSegment> segments);
/// CSV `clip_id,n_segments`.
std::string summary_to_csv(const Summary& summary);
/// CSV `frame,pred,threshold` for plotting.
std::string plot_csv(const train::PredictedSeries& pred, const DetectParams& params = {});

}  // namespace blinklight::highlight
