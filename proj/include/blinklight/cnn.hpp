#pragma once

// Three-layer 1D convolutional regressor over a (time x channel) window:
//
//   conv1 -> act -> conv2 -> act -> conv3 -> act -> mean over time -> affine -> scalar
//
// All convolutions are VALID (no padding), stride 1. Computation is in double
// precision. Gradients are exact reverse-mode derivatives of the batch RMSE.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "blinklight/common.hpp"
#include "blinklight/exec.hpp"
#include "blinklight/io.hpp"

namespace blinklight::cnn {

inline constexpr std::size_t kLayerCount = 3;

enum class Activation : std::uint32_t {
  Rectifier = 0,
  /// Test hook: turns the network into a linear map of its input.
  Identity = 1,
};

struct ModelConfig {
  std::size_t in_channels = kChannelCount;
  std::array<std::size_t, kLayerCount> filters{64, 128, 64};
  std::size_t kernel_size = 8;
  /// Input length in frames.
  std::size_t window = 90;
  Activation activation = Activation::Rectifier;

  /// Throws ConfigError if a dimension is zero or the window does not survive
  /// three VALID convolutions.
  void validate() const;
  /// Time length after each convolution: window - k + 1, repeated.
  std::array<std::size_t, kLayerCount> layer_lengths() const;
  std::size_t layer_in_channels(std::size_t layer) const {
    return layer == 0 ? in_channels : filters[layer - 1];
  }

  bool operator==(const ModelConfig&) const = default;
};

/// Offsets of each tensor inside the flat parameter vector, in declaration
/// order: conv1.weight, conv1.bias, conv2.weight, conv2.bias, conv3.weight,
/// conv3.bias, head.weight, head.bias. Conv weights are stored
/// out_channels x in_channels x kernel, row-major.
struct ParamLayout {
  explicit ParamLayout(const ModelConfig& config);

  std::array<std::size_t, kLayerCount> conv_weight{};
  std::array<std::size_t, kLayerCount> conv_bias{};
  std::size_t head_weight = 0;
  std::size_t head_bias = 0;
  std::size_t total = 0;
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixMap = Eigen::Map<RowMatrix>;
using ConstRowMatrixMap = Eigen::Map<const RowMatrix>;
using VectorMap = Eigen::Map<Eigen::VectorXd>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;

/// Flat storage for one full set of network tensors plus typed views.
class TensorSet {
 public:
  explicit TensorSet(const ModelConfig& config);

  const ModelConfig& config() const noexcept { return config_; }
  const ParamLayout& layout() const noexcept { return layout_; }

  Eigen::VectorXd& values() noexcept { return values_; }
  const Eigen::VectorXd& values() const noexcept { return values_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(values_.size()); }

  /// out_channels x (in_channels * kernel); column index = c * kernel + k.
  RowMatrixMap conv_weight(std::size_t layer);
  ConstRowMatrixMap conv_weight(std::size_t layer) const;
  VectorMap conv_bias(std::size_t layer);
  ConstVectorMap conv_bias(std::size_t layer) const;
  VectorMap head_weight();
  ConstVectorMap head_weight() const;
  double& head_bias() { return values_[static_cast<Eigen::Index>(layout_.head_bias)]; }
  double head_bias() const { return values_[static_cast<Eigen::Index>(layout_.head_bias)]; }

  bool all_finite() const { return values_.allFinite(); }

 private:
  ModelConfig config_;
  ParamLayout layout_;
  Eigen::VectorXd values_;
};

/// Trainable weights and biases.
class ModelParams : public TensorSet {
 public:
  using TensorSet::TensorSet;
};

/// d(loss)/d(parameter), shape-congruent with ModelParams.
class GradientSet : public TensorSet {
 public:
  using TensorSet::TensorSet;
};

/// Non-owning view of one (time x channel) input window stored row-major,
/// i.e. each frame's channels are contiguous.
struct WindowView {
  const double* data = nullptr;
  std::size_t length = 0;
  std::size_t channels = 0;

  WindowView() = default;
  WindowView(const double* d, std::size_t len, std::size_t ch) : data(d), length(len), channels(ch) {}
  WindowView(const RowMatrix& m)  // NOLINT(google-explicit-constructor)
      : data(m.data()),
        length(static_cast<std::size_t>(m.rows())),
        channels(static_cast<std::size_t>(m.cols())) {}
};

/// Zero-mean normal weights with variance 2 / fan_in, zero biases.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);
ModelParams zero_params(const ModelConfig& config);

/// Per-layer post-activation outputs (channels x time) of a single forward pass.
struct Activations {
  std::array<Eigen::MatrixXd, kLayerCount> layers;
  Eigen::VectorXd pooled;
  double output = 0.0;
};

double forward(const ModelParams& params, WindowView input);
Activations forward_with_activations(const ModelParams& params, WindowView input);
/// Outputs are bit-identical to calling forward() on each window.
std::vector<double> forward_batch(const ModelParams& params, std::span<const WindowView> inputs,
                                  const ExecOptions& exec = {});

/// sqrt(mean((p - t)^2)).
double rmse(std::span<const double> predictions, std::span<const double> targets);

/// Denominator floor of the RMSE gradient at a perfect fit.
inline constexpr double kRmseGradientFloor = 1e-12;

struct BackwardResult {
  double loss = 0.0;
  GradientSet gradients;
};

/// Batch RMSE and its exact gradient. The batch is processed in fixed chunks of
/// kChunkSamples windows whose partial gradients are summed in index order, so
/// the result does not depend on exec.threads.
BackwardResult backward(const ModelParams& params, std::span<const WindowView> inputs,
                        std::span<const double> targets, const ExecOptions& exec = {});

inline constexpr std::size_t kChunkSamples = 16;

/// Checkpoint: magic "BLNKCNN\0", u32 version, config, u64 value count,
/// f64 values in layout order, u32 CRC-32 of everything before it.
inline constexpr std::uint32_t kCheckpointVersion = 1;
io::Bytes encode_params(const ModelParams& params);
ModelParams decode_params(std::span<const std::uint8_t> bytes, std::string_view what = "checkpoint");
void save_params(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_params(const std::filesystem::path& path);
/// Also rejects a checkpoint whose recorded config differs from `expected`.
ModelParams load_params(const std::filesystem::path& path, const ModelConfig& expected);

}  // namespace blinklight::cnn
