#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include <nlohmann/json.hpp>

#include "blinklight/synth.hpp"

using namespace blinklight;
using namespace blinklight::synth;
namespace fs = std::filesystem;

namespace {

SynthSpec small_spec() {
  SynthSpec s;
  s.clip_count = 2;
  s.duration_s = 20.0;
  s.n_participants = 6;
  s.events_min = 1;
  s.events_max = 2;
  s.seed = 99;
  return s;
}

constexpr std::size_t kRightHip = 8;

// The skater is always the last person of a frame. Absent frames are empty.
std::optional<double> skater_hip_y(const pose::Frame& frame) {
  if (frame.empty()) return std::nullopt;
  return frame.back().joints[kRightHip].y;
}

}  // namespace

TEST_SUITE("synth") {
  TEST_CASE("same seed, same clip") {
    const auto spec = small_spec();
    const auto a = gen_clip(spec, 1);
    const auto b = gen_clip(spec, 1);
    CHECK(a.pose == b.pose);
    CHECK(a.event_frames == b.event_frames);
    CHECK(a.latent == b.latent);
    CHECK(a.pupils.truth.size() == b.pupils.truth.size());
    CHECK(a.pupils.truth[0].onsets == b.pupils.truth[0].onsets);
    CHECK(gen_clip(spec, 0).pose != a.pose);
  }

  TEST_CASE("event schedule respects spacing and margins") {
    auto spec = small_spec();
    spec.duration_s = 60.0;
    spec.events_min = 6;
    spec.events_max = 6;
    for (std::size_t c = 0; c < 5; ++c) {
      const auto ev = gen_event_frames(spec, c);
      REQUIRE(ev.size() == 6);
      CHECK(std::is_sorted(ev.begin(), ev.end()));
      CHECK(ev.front() >= static_cast<std::size_t>(spec.first_event_s * spec.fps));
      CHECK(ev.back() + static_cast<std::size_t>(spec.last_event_margin_s * spec.fps) <= spec.n_frames());
      for (std::size_t i = 1; i < ev.size(); ++i) CHECK(ev[i] - ev[i - 1] >= 150);
    }
  }

  TEST_CASE("zero events gives a flat latent curve") {
    auto spec = small_spec();
    spec.events_min = 0;
    spec.events_max = 0;
    const auto clip = gen_clip(spec, 0);
    CHECK(clip.event_frames.empty());
    for (double v : clip.latent) CHECK(v == spec.baseline_probability());
  }

  TEST_CASE("burst is visible in the hips and nowhere else") {
    const auto spec = small_spec();
    const std::vector<std::size_t> events{300};
    const auto with = gen_pose(spec, 0, events);
    const auto without = gen_pose(spec, 0, {});
    REQUIRE(with.frames.size() == without.frames.size());
    std::vector<double> base;
    for (const auto& fr : without.frames) {
      if (const auto y = skater_hip_y(fr)) base.push_back(*y);
    }
    const double mean = std::accumulate(base.begin(), base.end(), 0.0) / static_cast<double>(base.size());
    double var = 0.0;
    for (double y : base) var += (y - mean) * (y - mean);
    const double sd = std::sqrt(var / static_cast<double>(base.size()));
    double deviation = 0.0;
    for (std::size_t f = 290; f <= 310; ++f) {
      if (const auto y = skater_hip_y(with.frames[f])) deviation = std::max(deviation, std::abs(*y - mean));
    }
    CHECK(deviation > 3.0 * sd);

    double peak = 0.0;
    for (std::size_t f = 0; f < with.frames.size(); ++f) {
      const auto a = skater_hip_y(with.frames[f]);
      const auto b = skater_hip_y(without.frames[f]);
      REQUIRE(a.has_value() == b.has_value());
      if (!a) continue;
      const double lift = *b - *a;
      if (f < 300 || f > 300 + 21) {
        CHECK(lift == 0.0);
      } else {
        peak = std::max(peak, lift);
      }
    }
    CHECK(peak > 3.0 * spec.pose_noise_px);
    CHECK(peak > 0.9 * spec.burst_amplitude_px);
  }

  TEST_CASE("suppression shape") {
    const auto spec = small_spec();
    CHECK(suppression_factor(spec, -1.0) == 1.0);
    CHECK(suppression_factor(spec, spec.suppression_min_s) == doctest::Approx(1.0 - spec.suppression_depth));
    CHECK(suppression_factor(spec, 1.2) > 1.0);
    CHECK(suppression_factor(spec, 2.0) == 1.0);

    const std::vector<std::size_t> events{200};
    const auto latent = gen_latent_blink_curve(spec, events);
    const auto argmin = static_cast<std::size_t>(std::min_element(latent.begin(), latent.end()) - latent.begin());
    CHECK(argmin >= 200);
    CHECK(argmin <= 215);
  }

  TEST_CASE("full depth reaches zero") {
    auto spec = small_spec();
    spec.suppression_depth = 1.0;
    const std::vector<std::size_t> events{200};
    const auto latent = gen_latent_blink_curve(spec, events);
    CHECK(*std::min_element(latent.begin(), latent.end()) == 0.0);
  }

  TEST_CASE("zero latent gives no blinks") {
    const auto spec = small_spec();
    const std::vector<double> latent(spec.n_frames(), 0.0);
    const auto set = gen_pupil_traces(spec, 0, latent, 4);
    REQUIRE(set.truth.size() == 4);
    for (const auto& t : set.truth) CHECK(t.onsets.empty());
    for (const auto& tr : set.traces) CHECK(tr.samples.size() == spec.n_samples());
  }

  TEST_CASE("blink counts follow the latent curve") {
    auto spec = small_spec();
    spec.duration_s = 60.0;
    const std::vector<double> latent(spec.n_frames(), spec.baseline_probability());
    const auto set = gen_pupil_traces(spec, 0, latent, 200);
    std::size_t onsets = 0;
    for (const auto& t : set.truth) {
      onsets += t.onsets.size();
      CHECK(t.onsets.size() == t.offsets.size());
      for (std::size_t i = 0; i < t.onsets.size(); ++i) CHECK(t.offsets[i] > t.onsets[i]);
    }
    // 20 per minute per participant; refractory skips and edge skips take a few.
    const double expected = 200.0 * 20.0;
    CHECK(static_cast<double>(onsets) > 0.9 * expected);
    CHECK(static_cast<double>(onsets) < 1.05 * expected);
  }

  TEST_CASE("spec json round trip and validation") {
    auto spec = small_spec();
    spec.rebound = 0.25;
    const auto back = spec_from_json(spec_to_json(spec));
    CHECK(spec_to_json(back) == spec_to_json(spec));
    auto j = spec_to_json(spec);
    j["nonsense"] = 1;
    CHECK_THROWS_AS(spec_from_json(j), ConfigError);
    spec.fps = 0.0;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
  }

  TEST_CASE("corpus on disk") {
    const auto dir = fs::temp_directory_path() / "blinklight_test_synth_corpus";
    fs::remove_all(dir);
    auto spec = small_spec();
    spec.duration_s = 8.0;
    spec.first_event_s = 2.0;
    spec.last_event_margin_s = 2.0;
    spec.min_event_gap_s = 2.0;
    write_corpus(spec, dir);
    const auto ids = read_corpus_index(dir);
    REQUIRE(ids == std::vector<std::string>{clip_name(0), clip_name(1)});
    CHECK(read_event_frames(dir / ids[0]) == gen_event_frames(spec, 0));
    CHECK(fs::exists(dir / ids[0] / "truth" / "onsets.csv"));
    CHECK(fs::exists(dir / ids[1] / "pupil" / (participant_name(5) + ".csv")));
    const auto seq = pose::read_clip(dir / ids[1]);
    CHECK(seq == gen_clip(spec, 1).pose);
    fs::remove_all(dir);
  }
}
