#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "blinklight/blink.hpp"
#include "blinklight/cnn.hpp"
#include "blinklight/dataset.hpp"
#include "blinklight/pose.hpp"

namespace blinklight::train {

struct TrainConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 4096;
  std::size_t max_epochs = 100;
  std::uint64_t shuffle_seed = 0;
  /// Optimize in per-channel standardized input coordinates (see
  /// InputScaling). The returned parameters always act on raw inputs.
  /// Off here; the pipeline turns it on.
  bool standardize_inputs = false;

  void validate() const;
};

/// Adam moment accumulators, shape-congruent with the parameters.
struct AdamState {
  explicit AdamState(std::size_t size)
      : m(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size))),
        v(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size))) {}
  explicit AdamState(const cnn::ModelParams& params) : AdamState(params.size()) {}

  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::uint64_t t = 0;
};

/// One bias-corrected Adam update in place. A non-finite gradient throws
/// NumericError and leaves params and state untouched.
void adam_step(cnn::ModelParams& params, const cnn::GradientSet& grads, AdamState& state, const TrainConfig& config);

/// Per-channel affine map x' = (x - mean) / scale of the network input.
/// Training with it on means Adam works on parameters of a network fed x',
/// which is then folded back into the first convolution:
///   W = W' / scale,  b = b' - sum_{c,k} W[:, c, k] * mean[c].
/// Raw joint coordinates all sit near 0.5 with small spread, so without it
/// every feature starts as a large near-constant and the first updates mostly
/// switch rectifiers off.
struct InputScaling {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;
};

/// Mean and population sd of every channel over all rows of all windows. A
/// channel with sd below 1e-12 keeps scale 1.
InputScaling channel_scaling(std::span<const cnn::WindowView> inputs);
/// Parameters of the raw-input network equivalent to `standardized`.
cnn::ModelParams fold_scaling(const cnn::ModelParams& standardized, const InputScaling& scaling);
/// Turns gradients with respect to the folded (raw-input) parameters into
/// gradients with respect to the standardized ones, in place.
void unfold_gradient(cnn::GradientSet& grads, const InputScaling& scaling);

struct EpochRecord {
  std::size_t epoch = 0;
  /// Sample-weighted mean of the batch RMSEs seen during the epoch.
  double rmse = 0.0;
  double wall_ms = 0.0;
};

struct TrainResult {
  cnn::ModelParams params;
  std::vector<EpochRecord> history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Seed of the epoch's shuffle: mix_seed(shuffle_seed, epoch).
std::uint64_t epoch_shuffle_seed(std::uint64_t shuffle_seed, std::size_t epoch);

/// Runs exactly max_epochs epochs: reshuffle, split into batches of
/// batch_size (last one smaller), one Adam step per batch on the batch RMSE.
TrainResult train(std::span<const cnn::WindowView> inputs, std::span<const double> targets,
                  const cnn::ModelConfig& model, const TrainConfig& config, std::uint64_t init_seed,
                  const ExecOptions& exec = {}, const EpochCallback& on_epoch = {});
TrainResult train(std::span<const dataset::WindowSample> samples, const cnn::ModelConfig& model,
                  const TrainConfig& config, std::uint64_t init_seed, const ExecOptions& exec = {},
                  const EpochCallback& on_epoch = {});

/// Per-frame predictions for frames first_valid_frame .. T-1.
struct PredictedSeries {
  std::string clip_id;
  double fps = 30.0;
  std::size_t first_valid_frame = 0;
  std::vector<double> values;
};

/// One forward pass per window ending at each frame t >= window - 1.
PredictedSeries predict_clip(const cnn::ModelParams& params, const pose::JointMatrix& joints,
                             const ExecOptions& exec = {});

/// CSV `frame,predicted_rate`.
std::string predicted_to_csv(const PredictedSeries& series);
PredictedSeries predicted_from_csv(std::string_view text, std::string clip_id, double fps,
                                   std::string_view what = "predicted csv");

struct ClipData {
  pose::JointMatrix joints;
  blink::BlinkRateSeries rates;
};

struct LoocvOptions {
  cnn::ModelConfig model;
  TrainConfig train;
  /// Stride of the training windows; predictions are always dense.
  std::size_t train_stride = 1;
  /// Fold i initializes from mix_seed(init_seed, i) and shuffles with
  /// mix_seed(train.shuffle_seed, i).
  std::uint64_t init_seed = 0;
  ExecOptions exec;
};

struct FoldOutcome {
  std::string test_clip_id;
  std::optional<PredictedSeries> prediction;
  std::optional<cnn::ModelParams> params;
  std::vector<EpochRecord> history;
  /// Empty on success.
  std::string error;
};

/// Training hook: receives the fold's training samples (borrowed) and fold index.
using TrainFn =
    std::function<TrainResult(std::span<const dataset::WindowSample* const>, std::size_t fold_index)>;

/// Trains one model per fold from scratch on every non-held-out clip and
/// predicts the held-out clip. A failing fold is reported in its outcome and
/// the remaining folds still run.
std::vector<FoldOutcome> run_loocv(std::span<const ClipData> clips, const dataset::FoldPlan& plan,
                                   const LoocvOptions& options, const TrainFn& trainer = {});

}  // namespace blinklight::train
