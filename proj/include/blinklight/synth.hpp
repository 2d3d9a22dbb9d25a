#pragma once

// Synthetic corpus with a planted pose -> blink coupling: each event puts a
// vertical burst into the skater's joints and a time-locked suppression dip
// into the viewers' blink probability. Everything is a pure function of the
// master seed and written in the same on-disk formats as real data.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "blinklight/blink.hpp"
#include "blinklight/exec.hpp"
#include "blinklight/pose.hpp"

namespace blinklight::synth {

struct SynthSpec {
  std::size_t clip_count = 12;
  double duration_s = 60.0;
  double fps = 30.0;
  int width = 1920;
  int height = 1080;
  std::size_t n_participants = 100;

  // Event schedule.
  std::size_t events_min = 2;
  std::size_t events_max = 6;
  double min_event_gap_s = 5.0;
  double first_event_s = 5.0;  // earliest event time
  double last_event_margin_s = 4.0;

  // Blink suppression around each event (seconds relative to the event).
  double baseline_rate_per_min = 20.0;
  double suppression_depth = 0.9;
  double suppression_lead_s = 0.5;  // gradual decline starts here (before)
  double suppression_min_s = 0.2;   // deepest point (after)
  double recovery_s = 1.0;          // back at baseline
  double rebound_end_s = 1.5;       // end of the mild overshoot
  double rebound = 0.15;            // overshoot as a fraction of baseline

  // Pose.
  double burst_duration_s = 0.7;
  double burst_amplitude_px = 120.0;
  double pose_noise_px = 2.0;
  double dropout_prob = 0.02;   // per joint, confidence drawn below 0.7
  double absent_prob = 0.003;   // per frame, skater not detected
  double audience_prob = 0.3;   // per visible-skater frame, a small bystander is also detected

  // Pupil traces.
  double pupil_rate_hz = 120.0;
  double pupil_baseline = 3.0;
  double pupil_drift = 0.1;
  double pupil_noise = 0.005;
  double blink_amplitude_sd = 6.0;  // artifact height in baseline-trace sd
  double blink_min_s = 0.15;        // artifact spike-to-dip time range
  double blink_max_s = 0.3;
  double refractory_s = 0.1;
  double invalid_runs_per_min = 3.0;

  std::uint64_t seed = 0;

  void validate() const;
  std::size_t n_frames() const;
  std::size_t n_samples() const;
  /// Per-frame blink-onset probability without suppression.
  double baseline_probability() const { return baseline_rate_per_min / (60.0 * fps); }
};

nlohmann::json spec_to_json(const SynthSpec& spec);
/// Missing keys keep their defaults.
SynthSpec spec_from_json(const nlohmann::json& j);

std::string clip_name(std::size_t clip_index);
std::string participant_name(std::size_t participant_index);

/// Sorted event frames for a clip; spacing and margins per spec.
std::vector<std::size_t> gen_event_frames(const SynthSpec& spec, std::size_t clip_index);

/// Random-number consumption does not depend on `event_frames`, so the same
/// clip generated with and without events differs only by the bursts.
pose::PoseSequence gen_pose(const SynthSpec& spec, std::size_t clip_index, std::span<const std::size_t> event_frames);

/// Vertical burst profile (0..1) at `tau` seconds after an event.
double burst_profile(const SynthSpec& spec, double tau);

/// Multiplicative suppression factor at `tau` seconds from one event.
double suppression_factor(const SynthSpec& spec, double tau);

/// Per-frame blink-onset probability, baseline times the product of all
/// events' suppression factors, clamped to [0, 1].
std::vector<double> gen_latent_blink_curve(const SynthSpec& spec, std::span<const std::size_t> event_frames);

struct ParticipantTruth {
  std::string participant_id;
  std::vector<double> onsets;   // seconds, on the pupil sample grid
  std::vector<double> offsets;  // seconds
};

struct PupilSet {
  std::vector<blink::PupilTrace> traces;
  std::vector<ParticipantTruth> truth;
};

/// Per participant: blink onsets sampled frame by frame with the latent
/// probability, rendered as spike-then-dip artifacts on a drifting baseline.
PupilSet gen_pupil_traces(const SynthSpec& spec, std::size_t clip_index, std::span<const double> latent,
                          std::size_t n_participants);

struct SynthClip {
  pose::PoseSequence pose;
  std::vector<std::size_t> event_frames;
  std::vector<double> latent;
  PupilSet pupils;
};

SynthClip gen_clip(const SynthSpec& spec, std::size_t clip_index);

/// Writes `corpus.json` plus one directory per clip:
///   clip.json, keypoints/<clip>_<frame>_keypoints.json, pupil/<participant>.csv,
///   events.json, truth/latent.csv, truth/onsets.csv
void write_corpus(const SynthSpec& spec, const std::filesystem::path& out_dir, const ExecOptions& exec = {});
void write_clip(const SynthClip& clip, const std::filesystem::path& clip_dir);

/// Corpus index: clip ids in order.
std::vector<std::string> read_corpus_index(const std::filesystem::path& corpus_dir);
/// `events.json` of a clip directory; empty if absent.
std::vector<std::size_t> read_event_frames(const std::filesystem::path& clip_dir);

}  // namespace blinklight::synth
