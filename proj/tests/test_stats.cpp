#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "blinklight/stats.hpp"

using namespace blinklight;
using namespace blinklight::stats;

namespace {

std::vector<double> white(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

}  // namespace

TEST_SUITE("stats") {
  TEST_CASE("pearson closed forms") {
    const std::vector<double> x{1, 2, 3, 4, 5};
    std::vector<double> y;
    for (double v : x) y.push_back(-2.0 * v + 7.0);
    CHECK(pearson(x, x) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(pearson(x, y) == doctest::Approx(-1.0).epsilon(1e-15));
    // Hand-evaluated: sxy = 6.5, sxx = 5, syy = 8.75.
    CHECK(std::abs(pearson(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 2, 3, 5}) -
                   6.5 / std::sqrt(5.0 * 8.75)) < 1e-12);
  }

  TEST_CASE("pearson errors") {
    CHECK_THROWS_AS(pearson(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), UndefinedStatisticError);
    CHECK_THROWS_AS(pearson(std::vector<double>{1, 2}, std::vector<double>{1, 2}), ConfigError);
    CHECK_THROWS_AS(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2}), ConfigError);
  }

  TEST_CASE("surrogates are seeded permutations") {
    const auto v = white(100, 1);
    auto s = surrogate(v, 42, 3);
    CHECK(s != v);
    CHECK(surrogate(v, 42, 3) == s);
    CHECK(surrogate(v, 42, 4) != s);
    auto sorted_v = v;
    std::sort(sorted_v.begin(), sorted_v.end());
    std::sort(s.begin(), s.end());
    CHECK(s == sorted_v);
  }

  TEST_CASE("identical series are significant after correction") {
    const auto v = white(5000, 2);
    const auto rep = surrogate_test(v, v, {1000, 7, 0.05, 48}, "same");
    CHECK(rep.r == doctest::Approx(1.0));
    CHECK(rep.significant);
    CHECK(rep.alpha_corrected == doctest::Approx(0.05 / 48));
    CHECK(std::abs(rep.null_mean) < 0.01);
  }

  TEST_CASE("negative correlation is never significant") {
    auto v = white(500, 3);
    std::vector<double> neg;
    for (double x : v) neg.push_back(-x);
    const auto rep = surrogate_test(v, neg, {200, 1, 0.05, 1});
    CHECK(rep.z < 0);
    CHECK_FALSE(rep.significant);
  }

  TEST_CASE("white noise calibration on a few trials") {
    std::size_t hits = 0;
    for (std::uint64_t t = 0; t < 40; ++t) {
      const auto rep = surrogate_test(white(1000, 100 + t), white(1000, 900 + t), {200, t, 0.05, 1});
      hits += rep.p < 0.05;
    }
    CHECK(hits <= 6);
  }

  TEST_CASE("event alignment") {
    train::PredictedSeries pred;
    pred.clip_id = "c";
    pred.first_valid_frame = 10;
    pred.values = white(200, 5);
    blink::BlinkRateSeries actual;
    actual.clip_id = "c";
    actual.values.assign(210, 0.0);
    for (std::size_t i = 0; i < 200; ++i) actual.values[10 + i] = pred.values[i];
    const std::vector<std::size_t> events{50, 120, 205};  // the last one is too close to the end
    AlignParams ap;
    ap.pre_window = 5;
    ap.post_window = 10;
    ap.n_shuffles = 100;
    const auto res = align_events(pred, actual, events, ap);
    CHECK(res.used_events == std::vector<std::size_t>{50, 120});
    CHECK(res.dropped_events == 1);
    REQUIRE(res.event_reports.size() == 2);
    CHECK(res.event_reports[0].r == doctest::Approx(1.0));
    CHECK(res.curves.offsets.front() == -5);
    CHECK(res.curves.offsets.back() == 10);
    CHECK(res.curves.pred_mean == res.curves.actual_mean);
  }

  TEST_CASE("identical events give zero standard error") {
    std::vector<std::vector<double>> rows{{1.0, 2.0}, {1.0, 2.0}};
    std::vector<double> mean;
    std::vector<double> se;
    mean_and_se(rows, mean, se);
    CHECK(mean == std::vector{1.0, 2.0});
    CHECK(se == std::vector{0.0, 0.0});
    rows = {{0.0}, {2.0}};
    mean_and_se(rows, mean, se);
    CHECK(se[0] == doctest::Approx(1.0));  // sd sqrt(2) over sqrt(2)
  }

  TEST_CASE("no usable event") {
    train::PredictedSeries pred{"c", 30.0, 0, white(50, 1)};
    blink::BlinkRateSeries actual{"c", 30.0, 1, white(50, 2), 0};
    CHECK_THROWS_AS(align_events(pred, actual, std::vector<std::size_t>{2}), UnusableDataError);
  }

  TEST_CASE("report csv shape") {
    const auto v = white(100, 9);
    const std::vector<CorrelationReport> reps{surrogate_test(v, v, {50, 1, 0.05, 1}, "x")};
    const auto csv = reports_to_csv(reps);
    CHECK(csv.rfind("series_id,r,null_mean,null_sd,z,p,significant\nx,", 0) == 0);
  }
}
