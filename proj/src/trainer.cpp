#include "blinklight/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <random>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace blinklight::train {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("beta1 and beta2 must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
}

void adam_step(cnn::ModelParams& params, const cnn::GradientSet& grads, AdamState& state, const TrainConfig& config) {
  if (grads.size() != params.size() || state.m.size() != params.values().size() ||
      state.v.size() != params.values().size()) {
    throw ConfigError("adam_step: parameter, gradient and state shapes differ");
  }
  if (!grads.all_finite()) throw NumericError("adam_step: non-finite gradient, step aborted");

  const auto& g = grads.values();
  const std::uint64_t t = state.t + 1;
  const double b1 = config.beta1;
  const double b2 = config.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(t));
  state.m = b1 * state.m + (1.0 - b1) * g;
  state.v = b2 * state.v + (1.0 - b2) * g.cwiseProduct(g);
  auto& theta = params.values();
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double m_hat = state.m[i] / correction1;
    const double v_hat = state.v[i] / correction2;
    theta[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
  }
  state.t = t;
}

InputScaling channel_scaling(std::span<const cnn::WindowView> inputs) {
  if (inputs.empty()) throw ConfigError("channel_scaling needs at least one window");
  const auto channels = static_cast<Eigen::Index>(inputs.front().channels);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(channels);
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(channels);
  double rows = 0.0;
  for (const auto& w : inputs) {
    const cnn::ConstRowMatrixMap m(w.data, static_cast<Eigen::Index>(w.length), channels);
    sum += m.colwise().sum().transpose();
    rows += static_cast<double>(w.length);
  }
  const Eigen::VectorXd mean = sum / rows;
  for (const auto& w : inputs) {
    const cnn::ConstRowMatrixMap m(w.data, static_cast<Eigen::Index>(w.length), channels);
    sq += (m.rowwise() - mean.transpose()).cwiseAbs2().colwise().sum().transpose();
  }
  InputScaling out{mean, (sq / rows).cwiseSqrt()};
  for (Eigen::Index c = 0; c < channels; ++c) {
    if (!(out.scale[c] >= 1e-12)) out.scale[c] = 1.0;
  }
  return out;
}

cnn::ModelParams fold_scaling(const cnn::ModelParams& standardized, const InputScaling& scaling) {
  cnn::ModelParams raw = standardized;
  const std::size_t kernel = raw.config().kernel_size;
  auto w = raw.conv_weight(0);
  auto b = raw.conv_bias(0);
  for (Eigen::Index col = 0; col < w.cols(); ++col) {
    const auto c = col / static_cast<Eigen::Index>(kernel);
    w.col(col) /= scaling.scale[c];
    b -= w.col(col) * scaling.mean[c];
  }
  return raw;
}

void unfold_gradient(cnn::GradientSet& grads, const InputScaling& scaling) {
  const std::size_t kernel = grads.config().kernel_size;
  auto w = grads.conv_weight(0);
  const auto b = grads.conv_bias(0);
  for (Eigen::Index col = 0; col < w.cols(); ++col) {
    const auto c = col / static_cast<Eigen::Index>(kernel);
    w.col(col) = (w.col(col) - b * scaling.mean[c]) / scaling.scale[c];
  }
}

std::uint64_t epoch_shuffle_seed(std::uint64_t shuffle_seed, std::size_t epoch) {
  return mix_seed(shuffle_seed, epoch);
}

TrainResult train(std::span<const cnn::WindowView> inputs, std::span<const double> targets,
                  const cnn::ModelConfig& model, const TrainConfig& config, std::uint64_t init_seed,
                  const ExecOptions& exec, const EpochCallback& on_epoch) {
  config.validate();
  if (inputs.empty()) throw ConfigError("train needs at least one sample");
  if (inputs.size() != targets.size()) throw ConfigError("train: inputs and targets differ in length");

  // `weights` is what Adam updates; `result.params` is always its raw-input
  // equivalent, which is what the loss is evaluated with.
  cnn::ModelParams weights = cnn::init_params(model, init_seed);
  std::optional<InputScaling> scaling;
  if (config.standardize_inputs) scaling = channel_scaling(inputs);
  TrainResult result{scaling ? fold_scaling(weights, *scaling) : weights, {}};
  AdamState state(weights);
  std::vector<std::size_t> order(inputs.size());
  std::vector<cnn::WindowView> batch_inputs;
  std::vector<double> batch_targets;

  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(epoch_shuffle_seed(config.shuffle_seed, epoch));
    std::shuffle(order.begin(), order.end(), rng);

    double weighted = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch_inputs.clear();
      batch_targets.clear();
      for (std::size_t k = start; k < end; ++k) {
        batch_inputs.push_back(inputs[order[k]]);
        batch_targets.push_back(targets[order[k]]);
      }
      try {
        auto [loss, grads] = cnn::backward(result.params, batch_inputs, batch_targets, exec);
        if (!std::isfinite(loss)) throw NumericError("non-finite batch loss");
        if (scaling) {
          unfold_gradient(grads, *scaling);
          adam_step(weights, grads, state, config);
          result.params = fold_scaling(weights, *scaling);
        } else {
          adam_step(weights, grads, state, config);
          result.params = weights;
        }
        weighted += loss * static_cast<double>(end - start);
      } catch (const NumericError& e) {
        throw NumericError(fmt::format("epoch {} batch {}: {}", epoch, batch_index, e.what()));
      }
    }
    EpochRecord record{epoch, weighted / static_cast<double>(order.size()),
                       std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count()};
    result.history.push_back(record);
    if (on_epoch) on_epoch(record);
  }
  return result;
}

TrainResult train(std::span<const dataset::WindowSample> samples, const cnn::ModelConfig& model,
                  const TrainConfig& config, std::uint64_t init_seed, const ExecOptions& exec,
                  const EpochCallback& on_epoch) {
  std::vector<cnn::WindowView> views;
  std::vector<double> targets;
  views.reserve(samples.size());
  targets.reserve(samples.size());
  for (const auto& s : samples) {
    views.push_back(s.view());
    targets.push_back(s.target);
  }
  return train(views, targets, model, config, init_seed, exec, on_epoch);
}

PredictedSeries predict_clip(const cnn::ModelParams& params, const pose::JointMatrix& joints,
                             const ExecOptions& exec) {
  const auto& config = params.config();
  if (joints.n_frames() < config.window) {
    throw ConfigError(fmt::format("clip '{}' has {} frames, prediction needs at least {}", joints.clip_id,
                                  joints.n_frames(), config.window));
  }
  if (static_cast<std::size_t>(joints.values.cols()) != config.in_channels) {
    throw ConfigError(fmt::format("clip '{}' has {} channels, model expects {}", joints.clip_id,
                                  joints.values.cols(), config.in_channels));
  }
  std::vector<cnn::WindowView> views;
  views.reserve(joints.n_frames() - config.window + 1);
  for (std::size_t end = config.window - 1; end < joints.n_frames(); ++end) {
    views.emplace_back(joints.values.data() + (end + 1 - config.window) * config.in_channels, config.window,
                       config.in_channels);
  }
  return {joints.clip_id, joints.fps, config.window - 1, cnn::forward_batch(params, views, exec)};
}

std::string predicted_to_csv(const PredictedSeries& series) {
  std::string out = "frame,predicted_rate\n";
  for (std::size_t i = 0; i < series.values.size(); ++i) {
    out += fmt::format("{},{}\n", series.first_valid_frame + i, io::format_double(series.values[i]));
  }
  return out;
}

PredictedSeries predicted_from_csv(std::string_view text, std::string clip_id, double fps, std::string_view what) {
  PredictedSeries out{std::move(clip_id), fps, 0, {}};
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(pos, end - pos);
    pos = end + 1;
    if (++line_no == 1 || line.empty()) continue;
    const auto fields = io::split_csv_line(line);
    if (fields.size() != 2) throw SchemaError(fmt::format("{}: line {} needs 2 fields", what, line_no));
    const auto ctx = fmt::format("{} line {}", what, line_no);
    const auto frame = static_cast<std::size_t>(io::parse_double(fields[0], ctx));
    if (out.values.empty()) {
      out.first_valid_frame = frame;
    } else if (frame != out.first_valid_frame + out.values.size()) {
      throw SchemaError(fmt::format("{}: frames must be consecutive", ctx));
    }
    out.values.push_back(io::parse_double(fields[1], ctx));
  }
  return out;
}

std::vector<FoldOutcome> run_loocv(std::span<const ClipData> clips, const dataset::FoldPlan& plan,
                                   const LoocvOptions& options, const TrainFn& trainer) {
  std::map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    if (!by_id.emplace(clips[i].joints.clip_id, i).second) {
      throw ConfigError(fmt::format("duplicate clip id '{}'", clips[i].joints.clip_id));
    }
  }
  for (const auto& fold : plan.folds) {
    if (!by_id.count(fold.test_clip_id)) throw ConfigError(fmt::format("fold plan names unknown clip '{}'", fold.test_clip_id));
    for (const auto& id : fold.train_clip_ids) {
      if (!by_id.count(id)) throw ConfigError(fmt::format("fold plan names unknown clip '{}'", id));
      if (id == fold.test_clip_id) throw ConfigError(fmt::format("clip '{}' is both train and test", id));
    }
  }

  std::vector<std::vector<dataset::WindowSample>> windows(clips.size());
  for (std::size_t i = 0; i < clips.size(); ++i) {
    dataset::BuildStats stats;
    windows[i] = dataset::build_windows(clips[i].joints, clips[i].rates, options.model.window, options.train_stride, &stats);
    if (stats.too_short) spdlog::warn("clip '{}' is shorter than one window; it contributes no samples", clips[i].joints.clip_id);
  }

  std::vector<FoldOutcome> outcomes;
  outcomes.reserve(plan.folds.size());
  for (std::size_t f = 0; f < plan.folds.size(); ++f) {
    const auto& fold = plan.folds[f];
    FoldOutcome outcome;
    outcome.test_clip_id = fold.test_clip_id;
    try {
      std::vector<const dataset::WindowSample*> samples;
      for (const auto& id : fold.train_clip_ids) {
        for (const auto& w : windows[by_id.at(id)]) samples.push_back(&w);
      }
      spdlog::info("fold {}/{}: holding out '{}', {} training windows", f + 1, plan.folds.size(),
                   fold.test_clip_id, samples.size());
      TrainResult trained = [&] {
        if (trainer) return trainer(samples, f);
        auto config = options.train;
        config.shuffle_seed = mix_seed(options.train.shuffle_seed, f);
        std::vector<cnn::WindowView> views;
        std::vector<double> targets;
        views.reserve(samples.size());
        targets.reserve(samples.size());
        for (const auto* s : samples) {
          views.push_back(s->view());
          targets.push_back(s->target);
        }
        return train(views, targets, options.model, config, mix_seed(options.init_seed, f), options.exec);
      }();
      outcome.prediction = predict_clip(trained.params, clips[by_id.at(fold.test_clip_id)].joints, options.exec);
      outcome.history = std::move(trained.history);
      outcome.params = std::move(trained.params);
    } catch (const Error& e) {
      outcome.error = e.what();
      spdlog::error("fold '{}' failed: {}", fold.test_clip_id, e.what());
    }
    outcomes.push_back(std::move(outcome));
  }
  return outcomes;
}

}  // namespace blinklight::train
