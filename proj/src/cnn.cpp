#include "blinklight/cnn.hpp"

#include <cmath>
#include <cstring>
#include <random>

#include <fmt/format.h>

namespace blinklight::cnn {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr char kMagic[8] = {'B', 'L', 'N', 'K', 'C', 'N', 'N', '\0'};

Index idx(std::size_t v) { return static_cast<Index>(v); }

// GEMM layout of a conv weight: out x (kernel * in), column k * in + c, so that
// an im2col column is the concatenation of `kernel` consecutive input frames.
MatrixXd pack_weight(ConstRowMatrixMap w, std::size_t channels, std::size_t kernel) {
  MatrixXd packed(w.rows(), idx(channels * kernel));
  for (std::size_t k = 0; k < kernel; ++k) {
    for (std::size_t c = 0; c < channels; ++c) {
      packed.col(idx(k * channels + c)) = w.col(idx(c * kernel + k));
    }
  }
  return packed;
}

struct PackedModel {
  explicit PackedModel(const ModelParams& params) : config(params.config()) {
    for (std::size_t l = 0; l < kLayerCount; ++l) {
      weights[l] = pack_weight(params.conv_weight(l), config.layer_in_channels(l), config.kernel_size);
      bias[l] = params.conv_bias(l);
    }
    head_weight = params.head_weight();
    head_bias = params.head_bias();
  }

  ModelConfig config;
  std::array<MatrixXd, kLayerCount> weights;
  std::array<VectorXd, kLayerCount> bias;
  VectorXd head_weight;
  double head_bias = 0.0;
};

struct PackedGradients {
  explicit PackedGradients(const PackedModel& model) {
    for (std::size_t l = 0; l < kLayerCount; ++l) {
      weights[l] = MatrixXd::Zero(model.weights[l].rows(), model.weights[l].cols());
      bias[l] = VectorXd::Zero(model.bias[l].size());
    }
    head_weight = VectorXd::Zero(model.head_weight.size());
  }

  void set_zero() {
    for (std::size_t l = 0; l < kLayerCount; ++l) {
      weights[l].setZero();
      bias[l].setZero();
    }
    head_weight.setZero();
    head_bias = 0.0;
  }

  void add(const PackedGradients& other) {
    for (std::size_t l = 0; l < kLayerCount; ++l) {
      weights[l] += other.weights[l];
      bias[l] += other.bias[l];
    }
    head_weight += other.head_weight;
    head_bias += other.head_bias;
  }

  std::array<MatrixXd, kLayerCount> weights;
  std::array<VectorXd, kLayerCount> bias;
  VectorXd head_weight;
  double head_bias = 0.0;
};

// Single-sample forward/backward workspace. Every sample goes through its own
// GEMMs, so a sample's output never depends on what else is in the batch.
class SampleEngine {
 public:
  explicit SampleEngine(const ModelConfig& config)
      : config_(config), lengths_(config.layer_lengths()) {}

  double forward(const PackedModel& model, WindowView input) {
    const double* src = input.data;
    std::size_t channels = config_.in_channels;
    const std::size_t kernel = config_.kernel_size;
    for (std::size_t l = 0; l < kLayerCount; ++l) {
      const std::size_t out_len = lengths_[l];
      auto& cols = cols_[l];
      cols.resize(idx(kernel * channels), idx(out_len));
      for (std::size_t t = 0; t < out_len; ++t) {
        double* dst = cols.data() + t * kernel * channels;
        std::memcpy(dst, src + t * channels, kernel * channels * sizeof(double));
      }
      auto& act = act_[l];
      act.noalias() = model.weights[l] * cols;
      act.colwise() += model.bias[l];
      if (!act.allFinite()) {
        throw NumericError(fmt::format("non-finite activation in conv layer {}", l + 1));
      }
      if (config_.activation == Activation::Rectifier) act = act.cwiseMax(0.0);
      src = act.data();
      channels = config_.filters[l];
    }
    pooled_ = act_[kLayerCount - 1].rowwise().sum() / static_cast<double>(lengths_.back());
    const double out = model.head_weight.dot(pooled_) + model.head_bias;
    if (!std::isfinite(out)) throw NumericError("non-finite network output in head layer");
    return out;
  }

  // Accumulates upstream * d(output)/d(theta) for the sample of the last
  // forward() call.
  void backward(const PackedModel& model, double upstream, PackedGradients& grads) {
    const std::size_t kernel = config_.kernel_size;
    grads.head_weight += upstream * pooled_;
    grads.head_bias += upstream;

    const double per_step = upstream / static_cast<double>(lengths_.back());
    delta_ = (model.head_weight * per_step).replicate(1, idx(lengths_.back()));
    for (std::size_t l = kLayerCount; l-- > 0;) {
      if (config_.activation == Activation::Rectifier) {
        delta_ = (act_[l].array() > 0.0).select(delta_, 0.0);
      }
      grads.weights[l].noalias() += delta_ * cols_[l].transpose();
      grads.bias[l] += delta_.rowwise().sum();
      if (l == 0) break;

      const std::size_t channels = config_.layer_in_channels(l);
      const std::size_t out_len = lengths_[l];
      const std::size_t in_len = lengths_[l - 1];
      dcols_.noalias() = model.weights[l].transpose() * delta_;
      prev_.setZero(idx(channels), idx(in_len));
      for (std::size_t t = 0; t < out_len; ++t) {
        for (std::size_t k = 0; k < kernel; ++k) {
          prev_.col(idx(t + k)) += dcols_.block(idx(k * channels), idx(t), idx(channels), 1);
        }
      }
      delta_.swap(prev_);
    }
  }

  const std::array<MatrixXd, kLayerCount>& activations() const { return act_; }
  const VectorXd& pooled() const { return pooled_; }

 private:
  ModelConfig config_;
  std::array<std::size_t, kLayerCount> lengths_;
  std::array<MatrixXd, kLayerCount> cols_;
  std::array<MatrixXd, kLayerCount> act_;
  VectorXd pooled_;
  MatrixXd delta_;
  MatrixXd dcols_;
  MatrixXd prev_;
};

void check_input(const ModelConfig& config, WindowView input, std::size_t index) {
  if (input.data == nullptr || input.length != config.window || input.channels != config.in_channels) {
    throw ConfigError(fmt::format("input {} has shape {}x{}, model expects {}x{}", index, input.length,
                                  input.channels, config.window, config.in_channels));
  }
}

std::size_t chunk_count(std::size_t n) { return (n + kChunkSamples - 1) / kChunkSamples; }

}  // namespace

void ModelConfig::validate() const {
  if (in_channels == 0 || kernel_size == 0 || window == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  for (auto f : filters) {
    if (f == 0) throw ConfigError("filter counts must be positive");
  }
  if (window < kLayerCount * (kernel_size - 1) + 1) {
    throw ConfigError(fmt::format("window {} too short for three VALID convolutions of kernel {}",
                                  window, kernel_size));
  }
  if (activation != Activation::Rectifier && activation != Activation::Identity) {
    throw ConfigError("unknown activation");
  }
}

std::array<std::size_t, kLayerCount> ModelConfig::layer_lengths() const {
  std::array<std::size_t, kLayerCount> out{};
  std::size_t len = window;
  for (auto& o : out) {
    len = len - kernel_size + 1;
    o = len;
  }
  return out;
}

ParamLayout::ParamLayout(const ModelConfig& config) {
  config.validate();
  std::size_t offset = 0;
  for (std::size_t l = 0; l < kLayerCount; ++l) {
    conv_weight[l] = offset;
    offset += config.filters[l] * config.layer_in_channels(l) * config.kernel_size;
    conv_bias[l] = offset;
    offset += config.filters[l];
  }
  head_weight = offset;
  offset += config.filters.back();
  head_bias = offset;
  total = offset + 1;
}

TensorSet::TensorSet(const ModelConfig& config)
    : config_(config), layout_(config), values_(VectorXd::Zero(idx(layout_.total))) {}

RowMatrixMap TensorSet::conv_weight(std::size_t layer) {
  return {values_.data() + layout_.conv_weight[layer], idx(config_.filters[layer]),
          idx(config_.layer_in_channels(layer) * config_.kernel_size)};
}

ConstRowMatrixMap TensorSet::conv_weight(std::size_t layer) const {
  return {values_.data() + layout_.conv_weight[layer], idx(config_.filters[layer]),
          idx(config_.layer_in_channels(layer) * config_.kernel_size)};
}

VectorMap TensorSet::conv_bias(std::size_t layer) {
  return {values_.data() + layout_.conv_bias[layer], idx(config_.filters[layer])};
}

ConstVectorMap TensorSet::conv_bias(std::size_t layer) const {
  return {values_.data() + layout_.conv_bias[layer], idx(config_.filters[layer])};
}

VectorMap TensorSet::head_weight() {
  return {values_.data() + layout_.head_weight, idx(config_.filters.back())};
}

ConstVectorMap TensorSet::head_weight() const {
  return {values_.data() + layout_.head_weight, idx(config_.filters.back())};
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  ModelParams params(config);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t l = 0; l < kLayerCount; ++l) {
    const double fan_in = static_cast<double>(config.layer_in_channels(l) * config.kernel_size);
    const double sd = std::sqrt(2.0 / fan_in);
    auto w = params.conv_weight(l);
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = sd * normal(rng);
  }
  const double head_sd = std::sqrt(2.0 / static_cast<double>(config.filters.back()));
  auto hw = params.head_weight();
  for (Index i = 0; i < hw.size(); ++i) hw[i] = head_sd * normal(rng);
  return params;
}

ModelParams zero_params(const ModelConfig& config) { return ModelParams(config); }

double forward(const ModelParams& params, WindowView input) {
  check_input(params.config(), input, 0);
  PackedModel model(params);
  SampleEngine engine(params.config());
  return engine.forward(model, input);
}

Activations forward_with_activations(const ModelParams& params, WindowView input) {
  check_input(params.config(), input, 0);
  PackedModel model(params);
  SampleEngine engine(params.config());
  Activations out;
  out.output = engine.forward(model, input);
  out.layers = engine.activations();
  out.pooled = engine.pooled();
  return out;
}

std::vector<double> forward_batch(const ModelParams& params, std::span<const WindowView> inputs,
                                  const ExecOptions& exec) {
  for (std::size_t i = 0; i < inputs.size(); ++i) check_input(params.config(), inputs[i], i);
  PackedModel model(params);
  std::vector<double> out(inputs.size());
  const std::size_t slots = std::max<std::size_t>(1, exec.threads);
  std::vector<SampleEngine> engines(slots, SampleEngine(params.config()));
  run_waves(
      chunk_count(inputs.size()), slots,
      [&](std::size_t chunk, std::size_t slot) {
        const std::size_t end = std::min(inputs.size(), (chunk + 1) * kChunkSamples);
        for (std::size_t i = chunk * kChunkSamples; i < end; ++i) {
          out[i] = engines[slot].forward(model, inputs[i]);
        }
      },
      [](std::size_t, std::size_t) {});
  return out;
}

double rmse(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.empty()) throw ConfigError("rmse of an empty batch");
  if (predictions.size() != targets.size()) {
    throw ConfigError(fmt::format("rmse: {} predictions vs {} targets", predictions.size(), targets.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = predictions[i] - targets[i];
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(predictions.size()));
}

BackwardResult backward(const ModelParams& params, std::span<const WindowView> inputs,
                        std::span<const double> targets, const ExecOptions& exec) {
  if (inputs.empty()) throw ConfigError("backward on an empty batch");
  if (inputs.size() != targets.size()) {
    throw ConfigError(fmt::format("backward: {} inputs vs {} targets", inputs.size(), targets.size()));
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) check_input(params.config(), inputs[i], i);

  const auto& config = params.config();
  PackedModel model(params);
  const std::size_t slots = std::max<std::size_t>(1, exec.threads);
  std::vector<SampleEngine> engines(slots, SampleEngine(config));
  std::vector<PackedGradients> partial(slots, PackedGradients(model));
  PackedGradients total(model);
  std::vector<double> predictions(inputs.size());

  // d(rmse)/d(p_i) = (p_i - t_i) / (n * rmse): accumulate the residual-weighted
  // output gradients first and apply the common factor once at the end.
  run_waves(
      chunk_count(inputs.size()), slots,
      [&](std::size_t chunk, std::size_t slot) {
        auto& engine = engines[slot];
        auto& grads = partial[slot];
        grads.set_zero();
        const std::size_t end = std::min(inputs.size(), (chunk + 1) * kChunkSamples);
        for (std::size_t i = chunk * kChunkSamples; i < end; ++i) {
          predictions[i] = engine.forward(model, inputs[i]);
          engine.backward(model, predictions[i] - targets[i], grads);
        }
      },
      [&](std::size_t, std::size_t slot) { total.add(partial[slot]); });

  BackwardResult result{rmse(predictions, targets), GradientSet(config)};
  const double scale =
      1.0 / (static_cast<double>(inputs.size()) * std::max(result.loss, kRmseGradientFloor));
  auto& g = result.gradients;
  for (std::size_t l = 0; l < kLayerCount; ++l) {
    const std::size_t channels = config.layer_in_channels(l);
    auto w = g.conv_weight(l);
    for (std::size_t k = 0; k < config.kernel_size; ++k) {
      for (std::size_t c = 0; c < channels; ++c) {
        w.col(idx(c * config.kernel_size + k)) = total.weights[l].col(idx(k * channels + c)) * scale;
      }
    }
    g.conv_bias(l) = total.bias[l] * scale;
  }
  g.head_weight() = total.head_weight * scale;
  g.head_bias() = total.head_bias * scale;
  if (!g.all_finite()) throw NumericError("non-finite gradient");
  return result;
}

io::Bytes encode_params(const ModelParams& params) {
  const auto& c = params.config();
  io::ByteWriter w;
  w.put_raw({reinterpret_cast<const std::uint8_t*>(kMagic), sizeof kMagic});
  w.put_u32(kCheckpointVersion);
  w.put_u32(static_cast<std::uint32_t>(c.in_channels));
  for (auto f : c.filters) w.put_u32(static_cast<std::uint32_t>(f));
  w.put_u32(static_cast<std::uint32_t>(c.kernel_size));
  w.put_u32(static_cast<std::uint32_t>(c.window));
  w.put_u32(static_cast<std::uint32_t>(c.activation));
  w.put_u64(params.size());
  for (Index i = 0; i < params.values().size(); ++i) w.put_f64(params.values()[i]);
  w.put_u32(io::crc32(w.bytes()));
  return std::move(w).take();
}

ModelParams decode_params(std::span<const std::uint8_t> bytes, std::string_view what) {
  io::ByteReader r(bytes, std::string(what));
  auto magic = r.get_raw(sizeof kMagic);
  if (std::memcmp(magic.data(), kMagic, sizeof kMagic) != 0) r.fail("bad magic bytes");
  const auto version = r.get_u32();
  if (version != kCheckpointVersion) {
    r.fail(fmt::format("unsupported checkpoint version {} (expected {})", version, kCheckpointVersion));
  }
  ModelConfig config;
  config.in_channels = r.get_u32();
  for (auto& f : config.filters) f = r.get_u32();
  config.kernel_size = r.get_u32();
  config.window = r.get_u32();
  config.activation = static_cast<Activation>(r.get_u32());
  try {
    config.validate();
  } catch (const ConfigError& e) {
    r.fail(fmt::format("invalid model config: {}", e.what()));
  }
  ModelParams params(config);
  const auto count = r.get_u64();
  if (count != params.size()) {
    r.fail(fmt::format("value count {} does not match config ({})", count, params.size()));
  }
  for (Index i = 0; i < params.values().size(); ++i) params.values()[i] = r.get_f64();
  const std::size_t payload_end = r.offset();
  const auto stored_crc = r.get_u32();
  if (stored_crc != io::crc32(bytes.first(payload_end))) r.fail("CRC mismatch (corrupt checkpoint)");
  if (r.remaining() != 0) r.fail("trailing bytes after checkpoint");
  if (!params.all_finite()) r.fail("non-finite parameter values");
  return params;
}

void save_params(const ModelParams& params, const std::filesystem::path& path) {
  io::write_file(path, encode_params(params));
}

ModelParams load_params(const std::filesystem::path& path) {
  return decode_params(io::read_file(path), path.string());
}

ModelParams load_params(const std::filesystem::path& path, const ModelConfig& expected) {
  auto params = load_params(path);
  if (!(params.config() == expected)) {
    throw ConfigError(fmt::format("checkpoint '{}' was written for a different model config", path.string()));
  }
  return params;
}

}  // namespace blinklight::cnn
