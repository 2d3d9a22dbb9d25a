#pragma once

// Prediction-vs-truth correlation with a shuffle (surrogate) null, Bonferroni
// correction, and event-aligned averaging.

#include <span>
#include <string>
#include <vector>

#include "blinklight/blink.hpp"
#include "blinklight/trainer.hpp"

namespace blinklight::stats {

/// Sample Pearson correlation. Throws UndefinedStatisticError if either series
/// is constant, ConfigError if lengths differ or are below 3.
double pearson(std::span<const double> x, std::span<const double> y);

struct SurrogateParams {
  std::size_t n_shuffles = 1000;
  std::uint64_t seed = 0;
  double alpha = 0.05;
  /// Bonferroni divisor.
  std::size_t n_comparisons = 1;
};

struct CorrelationReport {
  std::string series_id;
  double r = 0.0;
  double null_mean = 0.0;
  double null_sd = 0.0;
  double z = 0.0;
  /// Two-sided normal tail of z.
  double p = 1.0;
  double alpha_corrected = 0.05;
  bool significant = false;
};

/// Copy of `values` under the permutation used for shuffle `index`.
std::vector<double> surrogate(std::span<const double> values, std::uint64_t seed, std::size_t index);

/// Correlations of `actual` with n_shuffles permuted copies of `pred`.
/// Shuffle i is seeded with mix_seed(seed, i).
std::vector<double> surrogate_null(std::span<const double> pred, std::span<const double> actual,
                                   std::size_t n_shuffles, std::uint64_t seed);

/// z = (r - mean(null)) / sd(null); significant iff p < alpha / n_comparisons
/// and z > 0.
CorrelationReport surrogate_test(std::span<const double> pred, std::span<const double> actual,
                                 const SurrogateParams& params, std::string series_id = {});

/// The part of `actual` that lines up with the prediction's frame range.
std::vector<double> aligned_actual(const train::PredictedSeries& pred, const blink::BlinkRateSeries& actual);

struct AlignParams {
  std::size_t pre_window = 30;
  std::size_t post_window = 90;
  std::size_t n_shuffles = 1000;
  std::uint64_t seed = 0;
  double alpha = 0.05;
};

struct AlignedCurves {
  std::size_t event_count = 0;
  /// Frame offsets -pre_window .. +post_window.
  std::vector<int> offsets;
  std::vector<double> pred_mean;
  std::vector<double> pred_se;
  std::vector<double> actual_mean;
  std::vector<double> actual_se;
};

struct AlignResult {
  AlignedCurves curves;
  /// One per used event. A slice with zero variance gets r = NaN and is not
  /// significant.
  std::vector<CorrelationReport> event_reports;
  std::vector<std::size_t> used_events;
  std::size_t dropped_events = 0;
};

/// Slices both series around each event whose whole window lies inside the
/// predicted range (others are dropped), averages them with standard errors,
/// and surrogate-tests each event slice with n_comparisons = used events.
/// Throws UnusableDataError if no event is usable.
AlignResult align_events(const train::PredictedSeries& pred, const blink::BlinkRateSeries& actual,
                         std::span<const std::size_t> event_frames, const AlignParams& params = {},
                         const std::string& id_prefix = {});

/// Several series aligned to one set of offsets (e.g. events from every clip).
struct EventSlices {
  std::vector<std::vector<double>> pred;
  std::vector<std::vector<double>> actual;
};
void collect_event_slices(const train::PredictedSeries& pred, const blink::BlinkRateSeries& actual,
                          std::span<const std::size_t> event_frames, const AlignParams& params, EventSlices& out,
                          std::size_t* dropped = nullptr);
AlignedCurves average_slices(const EventSlices& slices, const AlignParams& params);

/// Mean and standard error (sample sd / sqrt(n); 0 when n = 1) per column.
void mean_and_se(const std::vector<std::vector<double>>& rows, std::vector<double>& mean, std::vector<double>& se);

/// CSV `series_id,r,null_mean,null_sd,z,p,significant`.
std::string reports_to_csv(std::span<const CorrelationReport> reports);
/// CSV `offset_frame,pred_mean,pred_se,actual_mean,actual_se`.
std::string curves_to_csv(const AlignedCurves& curves);

}  // namespace blinklight::stats
