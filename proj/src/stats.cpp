#include "blinklight/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace blinklight::stats {
namespace {

void check_pair(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ConfigError(fmt::format("series lengths differ ({} vs {})", x.size(), y.size()));
  if (x.size() < 3) throw ConfigError("correlation needs at least 3 points");
}

// Centered and scaled to unit sum of squares; throws on zero variance.
std::vector<double> unit_centered(std::span<const double> v, const char* name) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  std::vector<double> out(v.size());
  double ss = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = v[i] - mean;
    ss += out[i] * out[i];
  }
  if (!(ss > 0.0)) throw UndefinedStatisticError(fmt::format("correlation undefined: {} has zero variance", name));
  const double norm = std::sqrt(ss);
  for (auto& o : out) o /= norm;
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void permute(std::vector<double>& values, std::uint64_t seed, std::size_t index) {
  std::mt19937_64 rng(mix_seed(seed, index));
  std::shuffle(values.begin(), values.end(), rng);
}

bool slice_ok(std::size_t event, const AlignParams& params, std::size_t first, std::size_t end_exclusive) {
  return event >= first + params.pre_window && event + params.post_window < end_exclusive;
}

}  // namespace

double pearson(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  const auto ux = unit_centered(x, "x");
  const auto uy = unit_centered(y, "y");
  return std::clamp(dot(ux, uy), -1.0, 1.0);
}

std::vector<double> surrogate(std::span<const double> values, std::uint64_t seed, std::size_t index) {
  std::vector<double> out(values.begin(), values.end());
  permute(out, seed, index);
  return out;
}

std::vector<double> surrogate_null(std::span<const double> pred, std::span<const double> actual,
                                   std::size_t n_shuffles, std::uint64_t seed) {
  check_pair(pred, actual);
  const auto ux = unit_centered(pred, "prediction");
  const auto uy = unit_centered(actual, "actual");
  std::vector<double> null(n_shuffles);
  std::vector<double> shuffled;
  for (std::size_t i = 0; i < n_shuffles; ++i) {
    shuffled = ux;
    permute(shuffled, seed, i);
    null[i] = std::clamp(dot(shuffled, uy), -1.0, 1.0);
  }
  return null;
}

CorrelationReport surrogate_test(std::span<const double> pred, std::span<const double> actual,
                                 const SurrogateParams& params, std::string series_id) {
  if (params.n_shuffles < 2) throw ConfigError("surrogate test needs at least 2 shuffles");
  if (params.n_comparisons == 0) throw ConfigError("n_comparisons must be at least 1");
  if (!(params.alpha > 0.0 && params.alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");

  CorrelationReport report;
  report.series_id = std::move(series_id);
  report.r = pearson(pred, actual);
  const auto null = surrogate_null(pred, actual, params.n_shuffles, params.seed);
  const double n = static_cast<double>(null.size());
  report.null_mean = std::accumulate(null.begin(), null.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : null) ss += (v - report.null_mean) * (v - report.null_mean);
  report.null_sd = std::sqrt(ss / (n - 1.0));

  const double diff = report.r - report.null_mean;
  if (report.null_sd > 0.0) {
    report.z = diff / report.null_sd;
  } else {
    report.z = diff > 0 ? std::numeric_limits<double>::infinity()
                        : (diff < 0 ? -std::numeric_limits<double>::infinity() : 0.0);
  }
  report.p = std::erfc(std::abs(report.z) / std::sqrt(2.0));
  report.alpha_corrected = params.alpha / static_cast<double>(params.n_comparisons);
  report.significant = report.p < report.alpha_corrected && report.z > 0.0;
  return report;
}

std::vector<double> aligned_actual(const train::PredictedSeries& pred, const blink::BlinkRateSeries& actual) {
  const std::size_t first = pred.first_valid_frame;
  if (first + pred.values.size() > actual.values.size()) {
    throw ConfigError(fmt::format("clip '{}': prediction covers frames up to {}, actual series has {}", pred.clip_id,
                                  first + pred.values.size(), actual.values.size()));
  }
  return {actual.values.begin() + static_cast<std::ptrdiff_t>(first),
          actual.values.begin() + static_cast<std::ptrdiff_t>(first + pred.values.size())};
}

void mean_and_se(const std::vector<std::vector<double>>& rows, std::vector<double>& mean, std::vector<double>& se) {
  const std::size_t width = rows.empty() ? 0 : rows.front().size();
  mean.assign(width, 0.0);
  se.assign(width, 0.0);
  if (rows.empty()) return;
  const double n = static_cast<double>(rows.size());
  for (const auto& row : rows) {
    for (std::size_t k = 0; k < width; ++k) mean[k] += row[k];
  }
  for (auto& m : mean) m /= n;
  if (rows.size() < 2) return;
  for (std::size_t k = 0; k < width; ++k) {
    double ss = 0.0;
    for (const auto& row : rows) ss += (row[k] - mean[k]) * (row[k] - mean[k]);
    se[k] = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
}

void collect_event_slices(const train::PredictedSeries& pred, const blink::BlinkRateSeries& actual,
                          std::span<const std::size_t> event_frames, const AlignParams& params, EventSlices& out,
                          std::size_t* dropped) {
  const std::size_t first = pred.first_valid_frame;
  const std::size_t end = std::min(first + pred.values.size(), actual.values.size());
  const std::size_t width = params.pre_window + params.post_window + 1;
  for (const auto e : event_frames) {
    if (!slice_ok(e, params, first, end)) {
      if (dropped) ++*dropped;
      continue;
    }
    const std::size_t lo = e - params.pre_window;
    std::vector<double> p(width);
    std::vector<double> a(width);
    for (std::size_t k = 0; k < width; ++k) {
      p[k] = pred.values[lo + k - first];
      a[k] = actual.values[lo + k];
    }
    out.pred.push_back(std::move(p));
    out.actual.push_back(std::move(a));
  }
}

AlignedCurves average_slices(const EventSlices& slices, const AlignParams& params) {
  AlignedCurves curves;
  curves.event_count = slices.pred.size();
  for (int k = -static_cast<int>(params.pre_window); k <= static_cast<int>(params.post_window); ++k) {
    curves.offsets.push_back(k);
  }
  mean_and_se(slices.pred, curves.pred_mean, curves.pred_se);
  mean_and_se(slices.actual, curves.actual_mean, curves.actual_se);
  return curves;
}

AlignResult align_events(const train::PredictedSeries& pred, const blink::BlinkRateSeries& actual,
                         std::span<const std::size_t> event_frames, const AlignParams& params,
                         const std::string& id_prefix) {
  AlignResult result;
  const std::size_t first = pred.first_valid_frame;
  const std::size_t end = std::min(first + pred.values.size(), actual.values.size());
  for (const auto e : event_frames) {
    if (slice_ok(e, params, first, end)) result.used_events.push_back(e);
  }
  EventSlices slices;
  collect_event_slices(pred, actual, event_frames, params, slices, &result.dropped_events);
  if (result.dropped_events > 0) {
    spdlog::warn("clip '{}': {} event(s) too close to the clip bounds were dropped", pred.clip_id,
                 result.dropped_events);
  }
  if (slices.pred.empty()) throw UnusableDataError(fmt::format("clip '{}': no usable events", pred.clip_id));
  result.curves = average_slices(slices, params);

  const SurrogateParams sp{params.n_shuffles, params.seed, params.alpha, slices.pred.size()};
  for (std::size_t i = 0; i < slices.pred.size(); ++i) {
    auto id = fmt::format("{}{}@{}", id_prefix, pred.clip_id, result.used_events[i]);
    try {
      auto seeded = sp;
      seeded.seed = mix_seed(params.seed, i);
      result.event_reports.push_back(surrogate_test(slices.pred[i], slices.actual[i], seeded, std::move(id)));
    } catch (const UndefinedStatisticError&) {
      CorrelationReport r;
      r.series_id = fmt::format("{}{}@{}", id_prefix, pred.clip_id, result.used_events[i]);
      r.r = r.null_mean = r.null_sd = r.z = std::numeric_limits<double>::quiet_NaN();
      r.p = 1.0;
      r.alpha_corrected = sp.alpha / static_cast<double>(sp.n_comparisons);
      result.event_reports.push_back(r);
    }
  }
  return result;
}

std::string reports_to_csv(std::span<const CorrelationReport> reports) {
  std::string out = "series_id,r,null_mean,null_sd,z,p,significant\n";
  for (const auto& r : reports) {
    out += fmt::format("{},{},{},{},{},{},{}\n", r.series_id, io::format_double(r.r), io::format_double(r.null_mean),
                       io::format_double(r.null_sd), io::format_double(r.z), io::format_double(r.p),
                       r.significant ? 1 : 0);
  }
  return out;
}

std::string curves_to_csv(const AlignedCurves& c) {
  std::string out = "offset_frame,pred_mean,pred_se,actual_mean,actual_se\n";
  for (std::size_t k = 0; k < c.offsets.size(); ++k) {
    out += fmt::format("{},{},{},{},{}\n", c.offsets[k], io::format_double(c.pred_mean[k]),
                       io::format_double(c.pred_se[k]), io::format_double(c.actual_mean[k]),
                       io::format_double(c.actual_se[k]));
  }
  return out;
}

}  // namespace blinklight::stats
