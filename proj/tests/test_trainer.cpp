#include <doctest.h>

#include <cmath>
#include <random>

#include "blinklight/trainer.hpp"

using namespace blinklight;
using namespace blinklight::train;

namespace {

cnn::ModelConfig small_model() {
  cnn::ModelConfig cfg;
  cfg.filters = {4, 6, 4};
  cfg.kernel_size = 3;
  cfg.window = 12;
  return cfg;
}

std::vector<dataset::WindowSample> samples(std::size_t n, std::size_t window, double (*target)(const cnn::RowMatrix&),
                                           std::uint64_t seed = 3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<dataset::WindowSample> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].clip_id = "c";
    out[i].end_frame = i;
    out[i].input = cnn::RowMatrix(window, kChannelCount);
    for (Eigen::Index k = 0; k < out[i].input.size(); ++k) out[i].input.data()[k] = u(rng);
    out[i].target = target(out[i].input);
  }
  return out;
}

pose::JointMatrix clip_joints(const std::string& id, std::size_t frames, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  pose::JointMatrix j;
  j.clip_id = id;
  j.values = pose::RowMatrix(frames, kChannelCount);
  for (Eigen::Index k = 0; k < j.values.size(); ++k) j.values.data()[k] = u(rng);
  return j;
}

}  // namespace

TEST_SUITE("trainer") {
  TEST_CASE("adam first step by hand") {
    cnn::ModelConfig cfg = small_model();
    auto params = cnn::zero_params(cfg);
    cnn::GradientSet g(cfg);
    g.values().setZero();
    g.values()[0] = 1.0;
    AdamState state(params);
    adam_step(params, g, state, TrainConfig{});
    CHECK(params.values()[0] == doctest::Approx(-0.001 / (1.0 + 1e-8)).epsilon(1e-12));
    CHECK(params.values().tail(params.size() - 1).isZero());
    CHECK(state.t == 1);
  }

  TEST_CASE("zero gradient leaves params unchanged") {
    auto params = cnn::init_params(small_model(), 1);
    const auto before = params.values();
    cnn::GradientSet g(small_model());
    g.values().setZero();
    AdamState state(params);
    adam_step(params, g, state, TrainConfig{});
    CHECK(params.values() == before);
  }

  TEST_CASE("adam is state dependent") {
    const auto cfg = small_model();
    cnn::GradientSet g(cfg);
    g.values().setConstant(0.5);
    auto a = cnn::zero_params(cfg);
    AdamState sa(a);
    adam_step(a, g, sa, TrainConfig{});
    adam_step(a, g, sa, TrainConfig{});
    TrainConfig doubled;
    doubled.learning_rate = 0.002;
    auto b = cnn::zero_params(cfg);
    AdamState sb(b);
    adam_step(b, g, sb, doubled);
    CHECK(a.values() != b.values());
  }

  TEST_CASE("non-finite gradient is rejected before any change") {
    auto params = cnn::init_params(small_model(), 2);
    const auto before = params.values();
    cnn::GradientSet g(small_model());
    g.values().setZero();
    g.values()[3] = std::nan("");
    AdamState state(params);
    CHECK_THROWS_AS(adam_step(params, g, state, TrainConfig{}), NumericError);
    CHECK(params.values() == before);
    CHECK(state.t == 0);
    CHECK(state.m.isZero());
  }

  TEST_CASE("config validation") {
    TrainConfig c;
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = TrainConfig{};
    c.beta1 = 1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = TrainConfig{};
    c.learning_rate = -1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }

  TEST_CASE("one batch per epoch when the batch exceeds the data") {
    const auto s = samples(10, 12, [](const cnn::RowMatrix&) { return 0.1; });
    TrainConfig c;
    c.max_epochs = 3;
    c.standardize_inputs = true;
    std::size_t epochs = 0;
    const auto r = train::train(s, small_model(), c, 1, {}, [&](const EpochRecord&) { ++epochs; });
    CHECK(epochs == 3);
    CHECK(r.history.size() == 3);
    // With a single full batch the logged rmse is the loss before each step.
    std::vector<cnn::WindowView> v;
    std::vector<double> t;
    for (const auto& x : s) {
      v.push_back(x.view());
      t.push_back(x.target);
    }
    const auto start = fold_scaling(cnn::init_params(small_model(), 1), channel_scaling(v));
    CHECK(r.history[0].rmse == doctest::Approx(cnn::rmse(cnn::forward_batch(start, v), t)).epsilon(1e-12));

    c.standardize_inputs = false;
    const auto plain = train::train(s, small_model(), c, 1);
    CHECK(plain.history[0].rmse == cnn::rmse(cnn::forward_batch(cnn::init_params(small_model(), 1), v), t));
  }

  TEST_CASE("channel scaling statistics") {
    cnn::RowMatrix a(2, kChannelCount);
    cnn::RowMatrix b(2, kChannelCount);
    a.setConstant(0.5);
    b.setConstant(0.5);
    a.col(3) << 1.0, 2.0;
    b.col(3) << 3.0, 4.0;
    const std::vector<cnn::WindowView> v{a, b};
    const auto sc = channel_scaling(v);
    CHECK(sc.mean[3] == doctest::Approx(2.5));
    CHECK(sc.scale[3] == doctest::Approx(std::sqrt(1.25)));
    CHECK(sc.mean[0] == doctest::Approx(0.5));
    CHECK(sc.scale[0] == 1.0);  // constant channel
  }

  TEST_CASE("folded network equals the standardized one") {
    const auto s = samples(6, 12, [](const cnn::RowMatrix& m) { return m.mean(); });
    std::vector<cnn::WindowView> raw;
    for (const auto& x : s) raw.push_back(x.view());
    auto sc = channel_scaling(raw);
    std::vector<cnn::RowMatrix> standardized;
    for (const auto& x : s) {
      standardized.push_back((x.input.rowwise() - sc.mean.transpose()).array().rowwise() /
                             sc.scale.transpose().array());
    }
    std::vector<cnn::WindowView> stdv(standardized.begin(), standardized.end());
    std::vector<double> targets;
    for (const auto& x : s) targets.push_back(x.target);

    const auto weights = cnn::init_params(small_model(), 4);
    const auto folded = fold_scaling(weights, sc);
    for (std::size_t i = 0; i < s.size(); ++i) {
      CHECK(std::abs(cnn::forward(folded, raw[i]) - cnn::forward(weights, stdv[i])) < 1e-12);
    }

    auto via_raw = cnn::backward(folded, raw, targets).gradients;
    unfold_gradient(via_raw, sc);
    const auto direct = cnn::backward(weights, stdv, targets).gradients;
    CHECK((via_raw.values() - direct.values()).cwiseAbs().maxCoeff() < 1e-10);
  }

  TEST_CASE("constant target is learned") {
    const auto s = samples(64, 12, [](const cnn::RowMatrix&) { return 0.25; });
    TrainConfig c;
    c.batch_size = 8;
    const auto r = train::train(s, small_model(), c, 5);
    for (const auto& x : s) CHECK(std::abs(cnn::forward(r.params, x.view()) - 0.25) < 1e-3);

    // Standardized inputs are several times larger, so the input-dependent
    // part of the output keeps jittering at Adam's step size.
    c.standardize_inputs = true;
    const auto rs = train::train(s, small_model(), c, 5);
    for (const auto& x : s) CHECK(std::abs(cnn::forward(rs.params, x.view()) - 0.25) < 2e-2);
  }

  TEST_CASE("training is reproducible and thread-count independent") {
    const auto s = samples(40, 12, [](const cnn::RowMatrix& m) { return 0.3 * m.col(2).mean(); });
    TrainConfig c;
    c.batch_size = 16;
    c.max_epochs = 4;
    c.shuffle_seed = 9;
    const auto a = train::train(s, small_model(), c, 7, {1});
    const auto b = train::train(s, small_model(), c, 7, {3});
    CHECK(a.params.values() == b.params.values());
    CHECK(cnn::encode_params(a.params) == cnn::encode_params(b.params));
    c.shuffle_seed = 10;
    const auto d = train::train(s, small_model(), c, 7, {1});
    CHECK(a.params.values() != d.params.values());
  }

  TEST_CASE("predict_clip covers frames from window-1") {
    const auto cfg = small_model();
    auto params = cnn::zero_params(cfg);
    params.head_bias() = 0.125;
    const auto j = clip_joints("c", 20, 1);
    const auto p = predict_clip(params, j);
    CHECK(p.first_valid_frame == 11);
    REQUIRE(p.values.size() == 9);
    CHECK(std::all_of(p.values.begin(), p.values.end(), [](double v) { return v == 0.125; }));
    CHECK(predict_clip(params, clip_joints("c", 12, 1)).values.size() == 1);

    const auto back = predicted_from_csv(predicted_to_csv(p), "c", 30.0);
    CHECK(back.first_valid_frame == 11);
    CHECK(back.values == p.values);
  }

  TEST_CASE("loocv trains one model per held-out clip") {
    std::vector<ClipData> clips;
    for (int i = 0; i < 3; ++i) {
      ClipData d;
      d.joints = clip_joints("clip" + std::to_string(i), 30, i);
      d.rates.clip_id = d.joints.clip_id;
      d.rates.values.assign(30, 0.1 * i);
      clips.push_back(std::move(d));
    }
    std::vector<std::string> ids{"clip0", "clip1", "clip2"};
    LoocvOptions opt;
    opt.model = small_model();
    opt.train.max_epochs = 1;
    std::vector<std::vector<std::string>> seen(3);
    const auto outcomes = run_loocv(clips, dataset::loocv_splits(ids), opt,
                                    [&](std::span<const dataset::WindowSample* const> s, std::size_t fold) {
                                      for (const auto* w : s) seen[fold].push_back(w->clip_id);
                                      std::vector<dataset::WindowSample> copy;
                                      for (const auto* w : s) copy.push_back(*w);
                                      return train::train(copy, opt.model, opt.train, fold);
                                    });
    REQUIRE(outcomes.size() == 3);
    for (std::size_t f = 0; f < 3; ++f) {
      CHECK(outcomes[f].error.empty());
      CHECK(outcomes[f].test_clip_id == ids[f]);
      REQUIRE(outcomes[f].prediction.has_value());
      CHECK(outcomes[f].prediction->values.size() == 19);
      CHECK(std::none_of(seen[f].begin(), seen[f].end(), [&](const auto& id) { return id == ids[f]; }));
      CHECK(seen[f].size() == 2 * 19);
    }
  }
}
