#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "blinklight/acceptance.hpp"
#include "blinklight/cnn.hpp"

using namespace blinklight;
using cnn::RowMatrix;

namespace {

cnn::ModelConfig tiny(std::size_t c0 = 2, std::size_t c1 = 3, std::size_t c2 = 2, std::size_t k = 3,
                      std::size_t window = 10, std::size_t channels = 4) {
  cnn::ModelConfig cfg;
  cfg.in_channels = channels;
  cfg.filters = {c0, c1, c2};
  cfg.kernel_size = k;
  cfg.window = window;
  return cfg;
}

RowMatrix noise(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  RowMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

}  // namespace

TEST_SUITE("cnn") {
  TEST_CASE("paper architecture shapes") {
    const cnn::ModelConfig cfg;
    const auto params = cnn::init_params(cfg, 1);
    CHECK(params.conv_weight(0).rows() == 64);
    CHECK(params.conv_weight(0).cols() == 36 * 8);
    CHECK(params.conv_weight(1).rows() == 128);
    CHECK(params.conv_weight(2).cols() == 128 * 8);
    CHECK(params.head_weight().size() == 64);
    const auto len = cfg.layer_lengths();
    CHECK(len[0] == 83);
    CHECK(len[1] == 76);
    CHECK(len[2] == 69);
    CHECK(params.size() == 64 * 36 * 8 + 64 + 128 * 64 * 8 + 128 + 64 * 128 * 8 + 64 + 64 + 1);
  }

  TEST_CASE("config validation") {
    auto cfg = tiny();
    cfg.window = 6;  // 10 - 3*2 = 4 would survive; 6 - 6 = 0 does not
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny();
    cfg.filters[1] = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK_NOTHROW(tiny().validate());
  }

  TEST_CASE("initialization is seeded") {
    const auto a = cnn::init_params(tiny(), 3);
    const auto b = cnn::init_params(tiny(), 3);
    const auto c = cnn::init_params(tiny(), 4);
    CHECK(a.values() == b.values());
    CHECK(a.values() != c.values());
    CHECK(a.conv_bias(0).isZero());
  }

  TEST_CASE("zero network and constant path") {
    auto params = cnn::zero_params(tiny());
    const auto x = noise(10, 4, 1);
    CHECK(cnn::forward(params, x) == 0.0);
    params.head_bias() = 0.37;
    CHECK(cnn::forward(params, x) == 0.37);
  }

  TEST_CASE("forward matches the naive convolution oracle") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      auto params = cnn::init_params(tiny(), seed);
      std::mt19937_64 rng(seed);
      std::normal_distribution<double> n(0.0, 0.1);
      for (std::size_t l = 0; l < 3; ++l) {
        for (Eigen::Index i = 0; i < params.conv_bias(l).size(); ++i) params.conv_bias(l)[i] = n(rng);
      }
      const auto x = noise(10, 4, seed + 100);
      CHECK(std::abs(cnn::forward(params, x) - acceptance::naive_forward(params, x)) < 1e-12);
    }
  }

  TEST_CASE("batched and single outputs are bit-identical") {
    const cnn::ModelConfig cfg;
    const auto params = cnn::init_params(cfg, 9);
    std::vector<RowMatrix> xs;
    for (int i = 0; i < 5; ++i) xs.push_back(noise(90, 36, i));
    std::vector<cnn::WindowView> views(xs.begin(), xs.end());
    const auto batch = cnn::forward_batch(params, views, {2});
    for (std::size_t i = 0; i < xs.size(); ++i) CHECK(batch[i] == cnn::forward(params, xs[i]));
  }

  TEST_CASE("rmse closed forms") {
    CHECK(cnn::rmse(std::vector{1.0, 0.0}, std::vector{0.0, 0.0}) == doctest::Approx(0.7071067811865476).epsilon(1e-15));
    CHECK(cnn::rmse(std::vector{0.2}, std::vector{0.5}) == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(cnn::rmse(std::vector{0.3, 0.4}, std::vector{0.3, 0.4}) == 0.0);
    CHECK_THROWS_AS(cnn::rmse(std::vector<double>{}, std::vector<double>{}), ConfigError);
    CHECK_THROWS_AS(cnn::rmse(std::vector{1.0}, std::vector{1.0, 2.0}), ConfigError);
  }

  TEST_CASE("gradients match central differences on a tiny config") {
    const auto cfg = tiny();
    auto params = cnn::init_params(cfg, 21);
    std::vector<RowMatrix> xs{noise(10, 4, 1), noise(10, 4, 2), noise(10, 4, 3)};
    std::vector<cnn::WindowView> views(xs.begin(), xs.end());
    const std::vector<double> targets{0.1, -0.2, 0.3};
    const auto analytic = cnn::backward(params, views, targets).gradients.values();
    const auto numeric = acceptance::numeric_gradient(params, views, targets, 1e-4);
    CHECK(acceptance::max_relative_error(analytic, numeric.values, 1e-6, numeric.crosses_kink) < 1e-4);
  }

  TEST_CASE("perfect fit gives zero gradients") {
    const auto cfg = tiny();
    const auto params = cnn::init_params(cfg, 2);
    const auto x = noise(10, 4, 5);
    const std::vector<cnn::WindowView> views{cnn::WindowView(x)};
    const std::vector<double> targets{cnn::forward(params, x)};
    const auto res = cnn::backward(params, views, targets);
    CHECK(res.loss == 0.0);
    CHECK(res.gradients.values().isZero());
  }

  TEST_CASE("duplicated sample leaves the gradient unchanged") {
    const auto params = cnn::init_params(tiny(), 4);
    const auto x = noise(10, 4, 6);
    const std::vector<cnn::WindowView> one{x};
    const std::vector<cnn::WindowView> two{x, x};
    const auto g1 = cnn::backward(params, one, std::vector{0.5}).gradients.values();
    const auto g2 = cnn::backward(params, two, std::vector{0.5, 0.5}).gradients.values();
    CHECK((g1 - g2).cwiseAbs().maxCoeff() < 1e-14);
  }

  TEST_CASE("gradients do not depend on the thread count") {
    const cnn::ModelConfig cfg;
    const auto params = cnn::init_params(cfg, 8);
    std::vector<RowMatrix> xs;
    std::vector<double> t;
    for (int i = 0; i < 40; ++i) {
      xs.push_back(noise(90, 36, 50 + i));
      t.push_back(0.01 * i);
    }
    std::vector<cnn::WindowView> views(xs.begin(), xs.end());
    const auto a = cnn::backward(params, views, t, {1});
    const auto b = cnn::backward(params, views, t, {3});
    CHECK(a.loss == b.loss);
    CHECK(a.gradients.values() == b.gradients.values());
  }

  TEST_CASE("non-finite activations raise NumericError") {
    auto params = cnn::init_params(tiny(), 1);
    params.conv_bias(1)[0] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(cnn::forward(params, noise(10, 4, 1)), NumericError);
  }

  TEST_CASE("checkpoint round-trip and corruption") {
    const auto cfg = tiny();
    const auto params = cnn::init_params(cfg, 12);
    const auto bytes = cnn::encode_params(params);
    const auto back = cnn::decode_params(bytes);
    CHECK(back.config() == cfg);
    CHECK(back.values() == params.values());
    CHECK(cnn::encode_params(back) == bytes);

    auto truncated = bytes;
    truncated.resize(bytes.size() - 9);
    CHECK_THROWS_AS(cnn::decode_params(truncated), ParseError);
    auto flipped = bytes;
    flipped[40] ^= 0x01;
    CHECK_THROWS_AS(cnn::decode_params(flipped), ParseError);
    auto trailing = bytes;
    trailing.push_back(0);
    CHECK_THROWS(cnn::decode_params(trailing));
    auto magic = bytes;
    magic[0] = 'X';
    CHECK_THROWS_AS(cnn::decode_params(magic), ParseError);

    const auto path = std::filesystem::temp_directory_path() / "blinklight_test_ckpt.bin";
    cnn::save_params(params, path);
    CHECK(cnn::load_params(path).values() == params.values());
    auto other = cfg;
    other.kernel_size = 2;
    CHECK_THROWS_AS(cnn::load_params(path, other), ConfigError);
    std::filesystem::remove(path);
  }
}
