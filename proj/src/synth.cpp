#include "blinklight/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "blinklight/io.hpp"

namespace blinklight::synth {

using nlohmann::json;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Random streams of one clip.
enum Stream : std::uint64_t { kEvents = 0, kPose = 1, kPupilBase = 1000 };

std::mt19937_64 stream(const SynthSpec& spec, std::size_t clip_index, std::uint64_t which) {
  return std::mt19937_64(mix_seed(mix_seed(spec.seed, clip_index), which));
}

// COCO-18 template, pixels relative to the hip centre (y down) for a skater
// about 340 px tall.
constexpr std::array<std::array<double, 2>, kJointCount> kTemplate{{
    {0, -170},   // nose
    {0, -140},   // neck
    {-35, -140}, // right shoulder
    {-55, -90},  // right elbow
    {-65, -40},  // right wrist
    {35, -140},  // left shoulder
    {55, -90},   // left elbow
    {65, -40},   // left wrist
    {-20, 0},    // right hip
    {-25, 80},   // right knee
    {-25, 160},  // right ankle
    {20, 0},     // left hip
    {25, 80},    // left knee
    {25, 160},   // left ankle
    {-8, -178},  // right eye
    {8, -178},   // left eye
    {-16, -172}, // right ear
    {16, -172},  // left ear
}};

// Extra lift of knees/ankles during a burst (legs tucked).
double lift_gain(std::size_t joint) {
  switch (joint) {
    case 9:
    case 12:
      return 1.15;
    case 10:
    case 13:
      return 1.3;
    default:
      return 1.0;
  }
}

bool is_arm(std::size_t joint) { return joint == 3 || joint == 4 || joint == 6 || joint == 7; }

struct Wave {
  double amplitude;
  double freq;
  double phase;
  double at(double t) const { return amplitude * std::sin(kTwoPi * freq * t + phase); }
};

Wave draw_wave(std::mt19937_64& rng, double amp_lo, double amp_hi, double f_lo, double f_hi) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double a = amp_lo + (amp_hi - amp_lo) * u(rng);
  const double f = f_lo + (f_hi - f_lo) * u(rng);
  const double p = kTwoPi * u(rng);
  return {a, f, p};
}

json spec_json_impl(const SynthSpec& s) {
  return json{{"clip_count", s.clip_count},
              {"duration_s", s.duration_s},
              {"fps", s.fps},
              {"width", s.width},
              {"height", s.height},
              {"n_participants", s.n_participants},
              {"events_min", s.events_min},
              {"events_max", s.events_max},
              {"min_event_gap_s", s.min_event_gap_s},
              {"first_event_s", s.first_event_s},
              {"last_event_margin_s", s.last_event_margin_s},
              {"baseline_rate_per_min", s.baseline_rate_per_min},
              {"suppression_depth", s.suppression_depth},
              {"suppression_lead_s", s.suppression_lead_s},
              {"suppression_min_s", s.suppression_min_s},
              {"recovery_s", s.recovery_s},
              {"rebound_end_s", s.rebound_end_s},
              {"rebound", s.rebound},
              {"burst_duration_s", s.burst_duration_s},
              {"burst_amplitude_px", s.burst_amplitude_px},
              {"pose_noise_px", s.pose_noise_px},
              {"dropout_prob", s.dropout_prob},
              {"absent_prob", s.absent_prob},
              {"audience_prob", s.audience_prob},
              {"pupil_rate_hz", s.pupil_rate_hz},
              {"pupil_baseline", s.pupil_baseline},
              {"pupil_drift", s.pupil_drift},
              {"pupil_noise", s.pupil_noise},
              {"blink_amplitude_sd", s.blink_amplitude_sd},
              {"blink_min_s", s.blink_min_s},
              {"blink_max_s", s.blink_max_s},
              {"refractory_s", s.refractory_s},
              {"invalid_runs_per_min", s.invalid_runs_per_min},
              {"seed", s.seed}};
}

}  // namespace

void SynthSpec::validate() const {
  if (clip_count == 0) throw ConfigError("synth: clip_count must be at least 1");
  if (!(duration_s > 0.0) || !(fps > 0.0) || !(pupil_rate_hz > 0.0)) {
    throw ConfigError("synth: durations and rates must be positive");
  }
  if (width <= 0 || height <= 0) throw ConfigError("synth: image dimensions must be positive");
  if (n_participants == 0) throw ConfigError("synth: n_participants must be at least 1");
  if (events_min > events_max) throw ConfigError("synth: events_min exceeds events_max");
  if (!(suppression_depth >= 0.0 && suppression_depth <= 1.0)) {
    throw ConfigError("synth: suppression_depth must lie in [0, 1]");
  }
  if (!(baseline_rate_per_min > 0.0)) throw ConfigError("synth: baseline_rate_per_min must be positive");
  if (!(suppression_lead_s > 0.0 && suppression_min_s > 0.0 && recovery_s > suppression_min_s &&
        rebound_end_s >= recovery_s)) {
    throw ConfigError("synth: suppression timing must satisfy 0 < min < recovery <= rebound_end");
  }
  if (!(burst_duration_s > 0.0)) throw ConfigError("synth: burst_duration_s must be positive");
  if (!(blink_min_s > 0.0 && blink_max_s >= blink_min_s)) throw ConfigError("synth: bad blink duration range");
  if (!(pupil_noise >= 0.0 && pose_noise_px >= 0.0 && pupil_drift >= 0.0)) {
    throw ConfigError("synth: noise levels must be non-negative");
  }
  for (double p : {dropout_prob, absent_prob, audience_prob}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("synth: probabilities must lie in [0, 1]");
  }
}

std::size_t SynthSpec::n_frames() const { return static_cast<std::size_t>(std::llround(duration_s * fps)); }

std::size_t SynthSpec::n_samples() const {
  return static_cast<std::size_t>(std::llround(duration_s * pupil_rate_hz));
}

nlohmann::json spec_to_json(const SynthSpec& spec) { return spec_json_impl(spec); }

SynthSpec spec_from_json(const nlohmann::json& j) {
  SynthSpec s;
  json merged = spec_json_impl(s);
  for (const auto& [key, value] : j.items()) {
    if (!merged.contains(key)) throw ConfigError(fmt::format("synth: unknown key '{}'", key));
    merged[key] = value;
  }
  try {
    s.clip_count = merged["clip_count"].get<std::size_t>();
    s.duration_s = merged["duration_s"].get<double>();
    s.fps = merged["fps"].get<double>();
    s.width = merged["width"].get<int>();
    s.height = merged["height"].get<int>();
    s.n_participants = merged["n_participants"].get<std::size_t>();
    s.events_min = merged["events_min"].get<std::size_t>();
    s.events_max = merged["events_max"].get<std::size_t>();
    s.min_event_gap_s = merged["min_event_gap_s"].get<double>();
    s.first_event_s = merged["first_event_s"].get<double>();
    s.last_event_margin_s = merged["last_event_margin_s"].get<double>();
    s.baseline_rate_per_min = merged["baseline_rate_per_min"].get<double>();
    s.suppression_depth = merged["suppression_depth"].get<double>();
    s.suppression_lead_s = merged["suppression_lead_s"].get<double>();
    s.suppression_min_s = merged["suppression_min_s"].get<double>();
    s.recovery_s = merged["recovery_s"].get<double>();
    s.rebound_end_s = merged["rebound_end_s"].get<double>();
    s.rebound = merged["rebound"].get<double>();
    s.burst_duration_s = merged["burst_duration_s"].get<double>();
    s.burst_amplitude_px = merged["burst_amplitude_px"].get<double>();
    s.pose_noise_px = merged["pose_noise_px"].get<double>();
    s.dropout_prob = merged["dropout_prob"].get<double>();
    s.absent_prob = merged["absent_prob"].get<double>();
    s.audience_prob = merged["audience_prob"].get<double>();
    s.pupil_rate_hz = merged["pupil_rate_hz"].get<double>();
    s.pupil_baseline = merged["pupil_baseline"].get<double>();
    s.pupil_drift = merged["pupil_drift"].get<double>();
    s.pupil_noise = merged["pupil_noise"].get<double>();
    s.blink_amplitude_sd = merged["blink_amplitude_sd"].get<double>();
    s.blink_min_s = merged["blink_min_s"].get<double>();
    s.blink_max_s = merged["blink_max_s"].get<double>();
    s.refractory_s = merged["refractory_s"].get<double>();
    s.invalid_runs_per_min = merged["invalid_runs_per_min"].get<double>();
    s.seed = merged["seed"].get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("synth: {}", e.what()));
  }
  return s;
}

std::string clip_name(std::size_t clip_index) { return fmt::format("clip_{:03d}", clip_index); }

std::string participant_name(std::size_t participant_index) { return fmt::format("p{:03d}", participant_index); }

std::vector<std::size_t> gen_event_frames(const SynthSpec& spec, std::size_t clip_index) {
  spec.validate();
  auto rng = stream(spec, clip_index, kEvents);
  std::uniform_int_distribution<std::size_t> count_dist(spec.events_min, spec.events_max);
  const std::size_t wanted = count_dist(rng);
  const auto n = spec.n_frames();
  const auto lo = static_cast<std::size_t>(std::ceil(spec.first_event_s * spec.fps));
  const auto margin = static_cast<std::size_t>(std::ceil(spec.last_event_margin_s * spec.fps));
  if (wanted == 0 || n <= lo + margin) return {};
  const std::size_t hi = n - 1 - margin;
  const auto gap = static_cast<std::size_t>(std::ceil(spec.min_event_gap_s * spec.fps));
  std::uniform_int_distribution<std::size_t> frame_dist(lo, hi);
  std::vector<std::size_t> events;
  for (int attempt = 0; attempt < 10000 && events.size() < wanted; ++attempt) {
    const auto f = frame_dist(rng);
    const bool clear = std::all_of(events.begin(), events.end(), [&](std::size_t e) {
      return (f > e ? f - e : e - f) >= gap;
    });
    if (clear) events.push_back(f);
  }
  std::sort(events.begin(), events.end());
  return events;
}

double burst_profile(const SynthSpec& spec, double tau) {
  if (tau < 0.0 || tau > spec.burst_duration_s) return 0.0;
  return std::sin(std::numbers::pi * tau / spec.burst_duration_s);
}

double suppression_factor(const SynthSpec& spec, double tau) {
  const double depth = spec.suppression_depth;
  constexpr double kGradualShare = 0.3;  // part of the dip reached by the event frame
  if (tau < -spec.suppression_lead_s || tau >= spec.rebound_end_s) return 1.0;
  if (tau < 0.0) {
    return 1.0 - depth * kGradualShare * (tau + spec.suppression_lead_s) / spec.suppression_lead_s;
  }
  if (tau < spec.suppression_min_s) {
    return 1.0 - depth * (kGradualShare + (1.0 - kGradualShare) * tau / spec.suppression_min_s);
  }
  if (tau < spec.recovery_s) {
    return 1.0 - depth * (1.0 - (tau - spec.suppression_min_s) / (spec.recovery_s - spec.suppression_min_s));
  }
  const double span = spec.rebound_end_s - spec.recovery_s;
  if (span <= 0.0) return 1.0;
  return 1.0 + spec.rebound * std::sin(std::numbers::pi * (tau - spec.recovery_s) / span);
}

std::vector<double> gen_latent_blink_curve(const SynthSpec& spec, std::span<const std::size_t> event_frames) {
  spec.validate();
  std::vector<double> curve(spec.n_frames(), spec.baseline_probability());
  for (std::size_t f = 0; f < curve.size(); ++f) {
    double factor = 1.0;
    for (auto e : event_frames) {
      factor *= suppression_factor(spec, (static_cast<double>(f) - static_cast<double>(e)) / spec.fps);
    }
    curve[f] = std::clamp(curve[f] * factor, 0.0, 1.0);
  }
  return curve;
}

pose::PoseSequence gen_pose(const SynthSpec& spec, std::size_t clip_index, std::span<const std::size_t> event_frames) {
  spec.validate();
  auto rng = stream(spec, clip_index, kPose);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  const double w = spec.width;
  const double h = spec.height;
  const Wave root_x1 = draw_wave(rng, 0.03 * w, 0.05 * w, 0.02, 0.05);
  const Wave root_x2 = draw_wave(rng, 0.01 * w, 0.02 * w, 0.08, 0.15);
  const Wave root_y1 = draw_wave(rng, 15.0, 25.0, 0.02, 0.06);
  const Wave root_y2 = draw_wave(rng, 5.0, 10.0, 0.1, 0.2);
  const Wave zoom = draw_wave(rng, 0.02, 0.04, 0.01, 0.03);
  std::array<Wave, kJointCount> sway_x{};
  std::array<Wave, kJointCount> sway_y{};
  for (std::size_t j = 0; j < kJointCount; ++j) {
    sway_x[j] = draw_wave(rng, 3.0, 15.0, 0.2, 0.8);
    sway_y[j] = draw_wave(rng, 3.0, 10.0, 0.2, 0.8);
  }
  const double bystander_x = (0.05 + 0.2 * u(rng)) * w;
  const double bystander_y = (0.85 + 0.1 * u(rng)) * h;

  pose::PoseSequence seq{{clip_name(clip_index), spec.fps, spec.width, spec.height}, {}};
  const auto n = spec.n_frames();
  seq.frames.resize(n);
  for (std::size_t f = 0; f < n; ++f) {
    const double t = static_cast<double>(f) / spec.fps;
    double burst = 0.0;
    for (auto e : event_frames) burst += burst_profile(spec, (static_cast<double>(f) - static_cast<double>(e)) / spec.fps);

    const double cx = 0.5 * w + root_x1.at(t) + root_x2.at(t);
    const double cy = 0.62 * h + root_y1.at(t) + root_y2.at(t);
    const double scale = 1.0 + zoom.at(t);

    pose::PersonPose skater;
    for (std::size_t j = 0; j < kJointCount; ++j) {
      double dx = kTemplate[j][0] + sway_x[j].at(t);
      const double dy = kTemplate[j][1] + sway_y[j].at(t);
      if (is_arm(j)) dx *= 1.0 - 0.6 * std::min(burst, 1.0);
      const double noise_x = spec.pose_noise_px * normal(rng);
      const double noise_y = spec.pose_noise_px * normal(rng);
      const bool dropout = u(rng) < spec.dropout_prob;
      const double conf_ok = 0.75 + 0.25 * u(rng);
      const double conf_bad = 0.05 + 0.6 * u(rng);
      const double junk_x = 30.0 * normal(rng);
      const double junk_y = 30.0 * normal(rng);
      auto& k = skater.joints[j];
      k.x = cx + scale * dx + noise_x;
      k.y = cy + scale * dy + noise_y - spec.burst_amplitude_px * lift_gain(j) * burst;
      k.c = conf_ok;
      if (dropout) {
        k.x += junk_x;
        k.y += junk_y;
        k.c = conf_bad;
      }
    }

    const bool absent = u(rng) < spec.absent_prob;
    const bool bystander = u(rng) < spec.audience_prob;
    pose::PersonPose other;
    for (std::size_t j = 0; j < kJointCount; ++j) {
      other.joints[j] = {bystander_x + 0.25 * kTemplate[j][0] + 2.0 * normal(rng),
                         bystander_y + 0.25 * kTemplate[j][1] + 2.0 * normal(rng), 0.7 + 0.3 * u(rng)};
    }
    // The bystander only shows up next to the skater. On its own it would win
    // the largest-person rule and drop a 3 s glitch into every window that
    // contains it, which no stage downstream is meant to repair.
    auto& frame = seq.frames[f];
    if (!absent) {
      if (bystander) frame.push_back(other);
      frame.push_back(skater);
    }
  }
  return seq;
}

PupilSet gen_pupil_traces(const SynthSpec& spec, std::size_t clip_index, std::span<const double> latent,
                          std::size_t n_participants) {
  spec.validate();
  PupilSet out;
  const auto n_samples = spec.n_samples();
  const double rate = spec.pupil_rate_hz;
  for (std::size_t p = 0; p < n_participants; ++p) {
    auto rng = stream(spec, clip_index, kPupilBase + p);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    const Wave slow = draw_wave(rng, spec.pupil_drift, spec.pupil_drift, 0.02, 0.1);
    const Wave faster = draw_wave(rng, 0.5 * spec.pupil_drift, 0.5 * spec.pupil_drift, 0.1, 0.3);
    std::vector<double> base(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
      const double t = static_cast<double>(i) / rate;
      base[i] = spec.pupil_baseline + slow.at(t) + faster.at(t) + spec.pupil_noise * normal(rng);
    }
    double mean = 0.0;
    for (double v : base) mean += v;
    mean /= static_cast<double>(n_samples);
    double ss = 0.0;
    for (double v : base) ss += (v - mean) * (v - mean);
    const double trace_sd = std::sqrt(ss / static_cast<double>(n_samples));
    const double amplitude = spec.blink_amplitude_sd * trace_sd;

    ParticipantTruth truth{participant_name(p), {}, {}};
    std::vector<std::pair<std::size_t, std::size_t>> spans;  // [onset, offset) sample ranges
    double last_offset = -1e9;
    for (std::size_t f = 0; f < latent.size(); ++f) {
      const double draw = u(rng);
      const double jitter = u(rng);
      const double length = spec.blink_min_s + (spec.blink_max_s - spec.blink_min_s) * u(rng);
      if (!(draw < latent[f])) continue;
      const double t = (static_cast<double>(f) + jitter) / spec.fps;
      const auto k = static_cast<std::size_t>(std::llround(t * rate));
      const auto q = k + std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(length * rate)));
      const double onset = static_cast<double>(k) / rate;
      if (k < 1 || q >= n_samples || onset < last_offset + spec.refractory_s) continue;
      for (std::size_t i = k; i < q; ++i) base[i] += amplitude;
      truth.onsets.push_back(onset);
      truth.offsets.push_back(static_cast<double>(q) / rate);
      spans.emplace_back(k, q);
      last_offset = static_cast<double>(q) / rate;
    }

    blink::PupilTrace trace{participant_name(p), clip_name(clip_index), rate, {}};
    trace.samples.assign(base.begin(), base.end());
    std::poisson_distribution<int> runs(spec.invalid_runs_per_min * spec.duration_s / 60.0);
    const int n_runs = runs(rng);
    std::uniform_int_distribution<std::size_t> start_dist(0, n_samples - 1);
    std::uniform_int_distribution<std::size_t> len_dist(2, 6);
    for (int r = 0; r < n_runs; ++r) {
      for (int attempt = 0; attempt < 20; ++attempt) {
        const auto start = start_dist(rng);
        const auto len = len_dist(rng);
        if (start + len >= n_samples) continue;
        const bool clear = std::none_of(spans.begin(), spans.end(), [&](const auto& s) {
          return start < s.second + 4 && s.first < start + len + 4;
        });
        if (!clear) continue;
        for (std::size_t i = start; i < start + len; ++i) trace.samples[i].reset();
        break;
      }
    }
    out.traces.push_back(std::move(trace));
    out.truth.push_back(std::move(truth));
  }
  return out;
}

SynthClip gen_clip(const SynthSpec& spec, std::size_t clip_index) {
  SynthClip clip;
  clip.event_frames = gen_event_frames(spec, clip_index);
  clip.pose = gen_pose(spec, clip_index, clip.event_frames);
  clip.latent = gen_latent_blink_curve(spec, clip.event_frames);
  clip.pupils = gen_pupil_traces(spec, clip_index, clip.latent, spec.n_participants);
  return clip;
}

void write_clip(const SynthClip& clip, const std::filesystem::path& dir) {
  const auto& id = clip.pose.meta.clip_id;
  std::filesystem::create_directories(dir / "keypoints");
  pose::write_clip_meta(dir, clip.pose.meta, clip.pose.frames.size());
  for (std::size_t f = 0; f < clip.pose.frames.size(); ++f) {
    io::write_text(dir / "keypoints" / pose::keypoint_file_name(id, f), pose::serialize_frame(clip.pose.frames[f]));
  }
  for (const auto& trace : clip.pupils.traces) {
    io::write_text(dir / "pupil" / (trace.participant_id + ".csv"), blink::pupil_to_csv(trace));
  }
  io::write_text(dir / "events.json", json{{"event_frames", clip.event_frames}}.dump() + "\n");

  std::string latent = "frame,probability\n";
  for (std::size_t f = 0; f < clip.latent.size(); ++f) latent += fmt::format("{},{}\n", f, io::format_double(clip.latent[f]));
  io::write_text(dir / "truth" / "latent.csv", latent);
  std::string onsets = "participant_id,onset_s,offset_s\n";
  for (const auto& t : clip.pupils.truth) {
    for (std::size_t i = 0; i < t.onsets.size(); ++i) {
      onsets += fmt::format("{},{},{}\n", t.participant_id, io::format_double(t.onsets[i]), io::format_double(t.offsets[i]));
    }
  }
  io::write_text(dir / "truth" / "onsets.csv", onsets);
}

void write_corpus(const SynthSpec& spec, const std::filesystem::path& out_dir, const ExecOptions& exec) {
  spec.validate();
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> ids;
  for (std::size_t c = 0; c < spec.clip_count; ++c) ids.push_back(clip_name(c));
  run_waves(
      spec.clip_count, exec.threads,
      [&](std::size_t c, std::size_t) { write_clip(gen_clip(spec, c), out_dir / ids[c]); },
      [](std::size_t, std::size_t) {});
  io::write_text(out_dir / "corpus.json", json{{"clips", ids}, {"spec", spec_to_json(spec)}}.dump(2) + "\n");
}

std::vector<std::string> read_corpus_index(const std::filesystem::path& corpus_dir) {
  const auto index = corpus_dir / "corpus.json";
  if (std::filesystem::exists(index)) {
    try {
      return json::parse(io::read_text(index)).at("clips").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
      throw SchemaError(fmt::format("{}: {}", index.string(), e.what()));
    }
  }
  if (!std::filesystem::is_directory(corpus_dir)) {
    throw IoError(fmt::format("corpus directory '{}' does not exist", corpus_dir.string()));
  }
  std::vector<std::string> ids;
  for (const auto& entry : std::filesystem::directory_iterator(corpus_dir)) {
    if (entry.is_directory() && std::filesystem::exists(entry.path() / "clip.json")) {
      ids.push_back(entry.path().filename().string());
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<std::size_t> read_event_frames(const std::filesystem::path& clip_dir) {
  const auto path = clip_dir / "events.json";
  if (!std::filesystem::exists(path)) return {};
  try {
    return json::parse(io::read_text(path)).at("event_frames").get<std::vector<std::size_t>>();
  } catch (const json::exception& e) {
    throw SchemaError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

}  // namespace blinklight::synth
