#pragma once

// Acceptance checks, one function per criterion. The self-contained checks
// (1-4, 7) build their own data; 5, 6 and 8 read the outputs of a finished
// pipeline run; 9 runs a reduced pipeline twice at different thread counts.

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "blinklight/cnn.hpp"
#include "blinklight/pipeline.hpp"

namespace blinklight::acceptance {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

/// "[PASS] 3 overfit sanity: <detail> (12.1 s)"
std::string format_line(const CriterionResult& r);

// ---- oracles ------------------------------------------------------------

/// Direct loop evaluation of the network (no packing, no GEMM).
double naive_forward(const cnn::ModelParams& params, cnn::WindowView input);

struct NumericGradient {
  Eigen::VectorXd values;
  /// The +h and -h evaluations put some rectifier on different sides of its
  /// kink, so the difference quotient is not a derivative there.
  std::vector<bool> crosses_kink;
};

/// Central finite differences of the batch RMSE for every parameter.
NumericGradient numeric_gradient(const cnn::ModelParams& params, std::span<const cnn::WindowView> inputs,
                                 std::span<const double> targets, double h);

/// |a - n| / max(|a|, |n|, floor), maximized over parameters not flagged in
/// `skip` (which may be empty).
double max_relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric, double floor,
                          const std::vector<bool>& skip = {});

struct OnsetMatch {
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
  double max_error = 0.0;  // seconds, over matched pairs
  double f1() const;
};

/// One-to-one greedy matching of sorted onset lists within `tolerance` seconds.
OnsetMatch match_onsets(std::span<const double> detected, std::span<const double> truth, double tolerance);

// ---- criteria -----------------------------------------------------------

CriterionResult check_gradients(std::span<const std::uint64_t> seeds = {});
CriterionResult check_conv_oracle(std::size_t cases = 100, std::uint64_t seed = 7);
CriterionResult check_overfit(std::uint64_t seed = 11, const ExecOptions& exec = {});

struct CalibrationOptions {
  std::size_t trials = 200;
  std::size_t frames = 5000;
  std::size_t n_shuffles = 1000;
  double alpha = 0.05;
  std::size_t n_comparisons = 48;
  std::uint64_t seed = 2024;
};
CriterionResult check_surrogate_calibration(const CalibrationOptions& options = {});

/// Reads <out>/stats/reports.csv; needs at least 10 of every 12 clips significant.
CriterionResult check_loocv_significance(const pipeline::PipelineConfig& run);
/// Reads <out>/stats/curves.csv.
CriterionResult check_event_shape(const pipeline::PipelineConfig& run);
CriterionResult check_highlight_rule(std::uint64_t seed = 5);
/// Detected blink onsets of the run against the corpus's planted onsets.
CriterionResult check_blink_recovery(const pipeline::PipelineConfig& run);

/// Small corpus and budget derived from `base`, for the determinism check.
pipeline::PipelineConfig reduced_config(const pipeline::PipelineConfig& base);
/// Runs the reduced pipeline in workdir/threads_<a> and workdir/threads_<b>
/// and compares every stage manifest's artifact hashes.
CriterionResult check_determinism(const pipeline::PipelineConfig& base, std::size_t threads_a,
                                  std::size_t threads_b, const std::filesystem::path& workdir);

struct ReproduceOptions {
  /// Thread count of the determinism check's second run; 0 picks one that
  /// differs from the configured count.
  std::size_t verify_threads = 0;
};

struct AcceptanceReport {
  std::vector<CriterionResult> results;
  std::filesystem::path path;
  std::size_t passed() const;
  bool all_passed() const { return passed() == results.size(); }
};

using ResultCallback = std::function<void(const CriterionResult&)>;

/// Runs every stage on a fresh synthetic corpus under config.out_dir, then
/// evaluates all criteria and writes <out>/reproduce/acceptance.json.
AcceptanceReport reproduce(pipeline::PipelineConfig config, const ReproduceOptions& options = {},
                           const ResultCallback& on_result = {});

}  // namespace blinklight::acceptance
