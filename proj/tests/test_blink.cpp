#include <doctest.h>

#include <cmath>
#include <random>

#include "blinklight/blink.hpp"
#include "blinklight/common.hpp"

using namespace blinklight;
using namespace blinklight::blink;

namespace {

// Noisy flat trace with spike-then-dip artifacts starting at the given samples.
PupilTrace trace_with(const std::vector<std::size_t>& onsets, std::size_t length, std::size_t n = 1200,
                      std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.01);
  PupilTrace t{"p", "c", 120.0, {}};
  std::vector<double> v(n);
  for (auto& x : v) x = 3.0 + noise(rng);
  for (auto k : onsets) {
    for (std::size_t i = k; i < k + length; ++i) v[i] += 0.5;
  }
  t.samples.assign(v.begin(), v.end());
  return t;
}

}  // namespace

TEST_SUITE("blink") {
  TEST_CASE("constant trace has no blinks") {
    PupilTrace t{"p", "c", 120.0, std::vector<std::optional<double>>(500, 3.0)};
    CHECK(detect_blinks(t).empty());
  }

  TEST_CASE("all-invalid trace is unusable") {
    PupilTrace t{"p", "c", 120.0, std::vector<std::optional<double>>(50)};
    CHECK_THROWS_AS(detect_blinks(t), UnusableDataError);
  }

  TEST_CASE("injected artifacts are recovered to the sample") {
    const std::vector<std::size_t> onsets{100, 400, 700, 1000};
    const auto events = detect_blinks(trace_with(onsets, 24));  // dip 0.2 s after the spike
    REQUIRE(events.size() == onsets.size());
    for (std::size_t i = 0; i < onsets.size(); ++i) {
      CHECK(events[i].onset_time == doctest::Approx(static_cast<double>(onsets[i]) / 120.0).epsilon(1e-12));
      CHECK(events[i].offset_time == doctest::Approx(static_cast<double>(onsets[i] + 24) / 120.0).epsilon(1e-12));
    }
  }

  TEST_CASE("spike without a dip inside the pairing window is ignored") {
    // 0.6 s between the rise and the fall.
    const auto events = detect_blinks(trace_with({300}, 72));
    CHECK(events.empty());
  }

  TEST_CASE("fraction of participants per frame") {
    EventsByParticipant ev;
    ev["a"] = {{"a", 10.0 / 30.0, 10.0 / 30.0}};
    ev["b"] = {{"b", 10.5 / 30.0, 10.5 / 30.0}};
    ev["c"] = {};
    ev["d"] = {};
    const auto s = blink_rate_series(ev, 20, 30.0, MarkMode::OnsetOnly);
    CHECK(s.values[10] == 0.5);
    CHECK(s.values[9] == 0.0);
    CHECK(s.n_participants == 4);
  }

  TEST_CASE("no events gives zeros; span marking covers onset..offset frames") {
    EventsByParticipant none{{"a", {}}};
    const auto z = blink_rate_series(none, 5, 30.0);
    CHECK(std::all_of(z.values.begin(), z.values.end(), [](double v) { return v == 0.0; }));

    EventsByParticipant one{{"a", {{"a", 10.0 / 30.0, 15.5 / 30.0}}}};
    const auto s = blink_rate_series(one, 20, 30.0, MarkMode::Span);
    for (std::size_t f = 0; f < 20; ++f) CHECK(s.values[f] == (f >= 10 && f <= 15 ? 1.0 : 0.0));
  }

  TEST_CASE("events past the clip end are clipped and counted") {
    EventsByParticipant one{{"a", {{"a", 0.5, 2.0}}}};
    const auto s = blink_rate_series(one, 20, 30.0, MarkMode::Span);
    CHECK(s.clipped_events == 1);
    CHECK(s.values[19] == 1.0);
  }

  TEST_CASE("one participant blinking twice in a frame counts once") {
    EventsByParticipant ev{{"a", {{"a", 0.0, 0.001}, {"a", 0.01, 0.02}}}};
    CHECK(blink_rate_series(ev, 3, 30.0, MarkMode::OnsetOnly).values[0] == 1.0);
  }

  TEST_CASE("pupil csv round-trip with invalid samples") {
    PupilTrace t{"p01", "c", 120.0, {3.0, std::nullopt, 3.25, 3.5}};
    const auto back = parse_pupil_csv(pupil_to_csv(t), "p01", "c");
    CHECK(back.samples == t.samples);
    CHECK(back.sample_rate == doctest::Approx(120.0));
    CHECK_THROWS_AS(parse_pupil_csv("time_s,diameter\n0,x\n", "p", "c"), ParseError);
  }

  TEST_CASE("rate csv round-trip") {
    BlinkRateSeries s{"c", 30.0, 4, {0.0, 0.25, 0.5}, 0};
    const auto back = rate_from_csv(rate_to_csv(s), "c", 30.0, 4);
    CHECK(back.values == s.values);
  }

  TEST_CASE("moving average is centered") {
    const auto m = moving_average(std::vector{0.0, 3.0, 0.0, 3.0}, 3);
    CHECK(m[1] == doctest::Approx(1.0));
    CHECK(m[0] == doctest::Approx(1.5));
  }
}
