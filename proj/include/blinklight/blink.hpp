#pragma once

// Blink onsets from pupil-diameter traces, and the per-video-frame fraction of
// participants blinking.

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace blinklight::blink {

struct PupilTrace {
  std::string participant_id;
  std::string clip_id;
  double sample_rate = 120.0;  // Hz
  /// Diameter per sample; nullopt marks an invalid (lost) sample.
  std::vector<std::optional<double>> samples;
};

struct BlinkEvent {
  std::string participant_id;
  double onset_time = 0.0;   // seconds from clip start
  double offset_time = 0.0;  // seconds, end of the rapid decrease

  bool operator==(const BlinkEvent&) const = default;
};

struct DetectParams {
  /// A first difference counts as "rapid" when its z-score exceeds this.
  double deriv_z_threshold = 2.5;
  /// Maximum onset-to-offset time of one blink, seconds.
  double pair_window = 0.5;
};

/// Finds spike-then-dip artifacts:
///  * d_i = s_{i+1} - s_i, timed at sample i+1, valid only if both samples are;
///  * z-scored over the valid differences;
///  * a blink pairs a local-maximum d with z > threshold and the first
///    following local-minimum d with z < -threshold within pair_window;
///  * candidates are consumed greedily left to right.
/// A zero-variance trace yields no events; an all-invalid trace throws
/// UnusableDataError.
std::vector<BlinkEvent> detect_blinks(const PupilTrace& trace, const DetectParams& params = {});

enum class MarkMode {
  /// Frame counts if a blink onset falls inside it.
  OnsetOnly,
  /// Frame counts if its interval intersects [onset, offset].
  Span,
};

struct BlinkRateSeries {
  std::string clip_id;
  double fps = 30.0;
  std::size_t n_participants = 0;
  std::vector<double> values;
  /// Events whose times fell beyond the clip and were clipped to the last frame.
  std::size_t clipped_events = 0;
};

using EventsByParticipant = std::map<std::string, std::vector<BlinkEvent>>;

/// value[f] = (# participants blinking in [f/fps, (f+1)/fps)) / n_participants.
BlinkRateSeries blink_rate_series(const EventsByParticipant& events, std::size_t n_frames, double fps,
                                  MarkMode mode = MarkMode::Span, std::string clip_id = {});

/// Centered moving average (window clipped at the edges). Optional smoothing
/// that the pipeline leaves off by default.
std::vector<double> moving_average(std::span<const double> values, std::size_t window);

/// Pupil CSV: header `time_s,diameter`, an empty diameter marks an invalid
/// sample. The sample rate is inferred from the time column.
PupilTrace read_pupil_csv(const std::filesystem::path& path, std::string participant_id, std::string clip_id);
PupilTrace parse_pupil_csv(std::string_view text, std::string participant_id, std::string clip_id,
                           std::string_view what = "pupil csv");
std::string pupil_to_csv(const PupilTrace& trace);

/// Blink-rate CSV: header `frame,rate`.
std::string rate_to_csv(const BlinkRateSeries& series);
BlinkRateSeries rate_from_csv(std::string_view text, std::string clip_id, double fps, std::size_t n_participants,
                              std::string_view what = "rate csv");

/// Event CSV: header `participant_id,onset_s,offset_s`.
std::string events_to_csv(const EventsByParticipant& events);

}  // namespace blinklight::blink
