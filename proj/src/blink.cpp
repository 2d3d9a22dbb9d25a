#include "blinklight/blink.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "blinklight/common.hpp"
#include "blinklight/io.hpp"

namespace blinklight::blink {
namespace {

// Frame containing time t. The small slack keeps t = f / fps from landing in
// frame f - 1 through rounding.
std::int64_t frame_of(double t, double fps) {
  return static_cast<std::int64_t>(std::floor(t * fps + 1e-9));
}

template <class Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = end + 1;
    ++line_no;
    fn(line_no, line);
  }
}

}  // namespace

std::vector<BlinkEvent> detect_blinks(const PupilTrace& trace, const DetectParams& params) {
  const auto& s = trace.samples;
  if (s.size() < 2) throw ConfigError(fmt::format("pupil trace '{}' needs at least 2 samples", trace.participant_id));
  if (!(trace.sample_rate > 0.0)) throw ConfigError("sample rate must be positive");
  if (std::none_of(s.begin(), s.end(), [](const auto& v) { return v.has_value(); })) {
    throw UnusableDataError(fmt::format("pupil trace '{}' has no valid samples", trace.participant_id));
  }

  const std::size_t n = s.size() - 1;
  std::vector<double> d(n, 0.0);
  std::vector<bool> valid(n, false);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (s[i] && s[i + 1]) {
      d[i] = *s[i + 1] - *s[i];
      valid[i] = true;
      sum += d[i];
      ++count;
    }
  }
  if (count == 0) return {};
  const double mean = sum / static_cast<double>(count);
  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (valid[i]) var += (d[i] - mean) * (d[i] - mean);
  }
  const double sd = std::sqrt(var / static_cast<double>(count));
  if (!(sd > 0.0)) return {};

  std::vector<double> z(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (valid[i]) z[i] = (d[i] - mean) / sd;
  }
  const double thr = params.deriv_z_threshold;
  // Plateaus count once, at their first sample.
  auto is_peak = [&](std::size_t i) {
    if (!valid[i] || !(z[i] > thr)) return false;
    const bool left = i == 0 || !valid[i - 1] || d[i] > d[i - 1];
    const bool right = i + 1 == n || !valid[i + 1] || d[i] >= d[i + 1];
    return left && right;
  };
  auto is_trough = [&](std::size_t i) {
    if (!valid[i] || !(z[i] < -thr)) return false;
    const bool left = i == 0 || !valid[i - 1] || d[i] < d[i - 1];
    const bool right = i + 1 == n || !valid[i + 1] || d[i] <= d[i + 1];
    return left && right;
  };
  auto time_of = [&](std::size_t i) { return static_cast<double>(i + 1) / trace.sample_rate; };

  std::vector<std::size_t> troughs;
  for (std::size_t i = 0; i < n; ++i) {
    if (is_trough(i)) troughs.push_back(i);
  }

  std::vector<BlinkEvent> events;
  std::size_t next_trough = 0;
  std::optional<std::size_t> last_end;
  for (std::size_t p = 0; p < n; ++p) {
    if (last_end && p <= *last_end) continue;
    if (!is_peak(p)) continue;
    while (next_trough < troughs.size() && troughs[next_trough] <= p) ++next_trough;
    if (next_trough == troughs.size()) break;
    const std::size_t q = troughs[next_trough];
    if (time_of(q) - time_of(p) > params.pair_window) continue;
    events.push_back({trace.participant_id, time_of(p), time_of(q)});
    last_end = q;
  }
  return events;
}

BlinkRateSeries blink_rate_series(const EventsByParticipant& events, std::size_t n_frames, double fps,
                                  MarkMode mode, std::string clip_id) {
  if (n_frames == 0) throw ConfigError("blink rate series needs at least one frame");
  if (events.empty()) throw ConfigError("blink rate series needs at least one participant");
  if (!(fps > 0.0)) throw ConfigError("fps must be positive");

  BlinkRateSeries out{std::move(clip_id), fps, events.size(), std::vector<double>(n_frames, 0.0), 0};
  std::vector<std::size_t> counts(n_frames, 0);
  std::vector<char> marked(n_frames);
  const auto last = static_cast<std::int64_t>(n_frames) - 1;

  for (const auto& [participant, list] : events) {
    std::fill(marked.begin(), marked.end(), 0);
    for (const auto& e : list) {
      const auto onset_frame = frame_of(e.onset_time, fps);
      const auto offset_frame = mode == MarkMode::Span ? frame_of(e.offset_time, fps) : onset_frame;
      if (offset_frame > last || onset_frame > last) ++out.clipped_events;
      const auto first = std::clamp<std::int64_t>(onset_frame, 0, last);
      const auto final_frame = std::clamp<std::int64_t>(offset_frame, first, last);
      for (auto f = first; f <= final_frame; ++f) marked[static_cast<std::size_t>(f)] = 1;
    }
    for (std::size_t f = 0; f < n_frames; ++f) counts[f] += marked[f] ? 1 : 0;
  }
  const double n = static_cast<double>(events.size());
  for (std::size_t f = 0; f < n_frames; ++f) out.values[f] = static_cast<double>(counts[f]) / n;
  return out;
}

std::vector<double> moving_average(std::span<const double> values, std::size_t window) {
  if (window <= 1) return {values.begin(), values.end()};
  const std::size_t half = window / 2;
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(values.size() - 1, i + (window - 1 - half));
    double sum = 0.0;
    for (std::size_t k = lo; k <= hi; ++k) sum += values[k];
    out[i] = sum / static_cast<double>(hi - lo + 1);
  }
  return out;
}

PupilTrace parse_pupil_csv(std::string_view text, std::string participant_id, std::string clip_id,
                           std::string_view what) {
  PupilTrace trace{std::move(participant_id), std::move(clip_id), 120.0, {}};
  std::vector<double> times;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    if (line_no == 1) {
      if (line != "time_s,diameter") {
        throw SchemaError(fmt::format("{}: expected header 'time_s,diameter', got '{}'", what, line));
      }
      return;
    }
    if (line.empty()) return;
    const auto fields = io::split_csv_line(line);
    if (fields.size() != 2) {
      throw SchemaError(fmt::format("{}: line {} has {} fields, expected 2", what, line_no, fields.size()));
    }
    const auto ctx = fmt::format("{} line {}", what, line_no);
    times.push_back(io::parse_double(fields[0], ctx));
    if (fields[1].empty()) {
      trace.samples.emplace_back();
    } else {
      trace.samples.emplace_back(io::parse_double(fields[1], ctx));
    }
  });
  if (trace.samples.empty()) throw SchemaError(fmt::format("{}: no samples", what));
  if (times.size() >= 2) {
    const double span = times.back() - times.front();
    if (!(span > 0.0)) throw SchemaError(fmt::format("{}: time column is not increasing", what));
    const double rate = static_cast<double>(times.size() - 1) / span;
    trace.sample_rate = std::round(rate * 1e6) / 1e6;
  }
  return trace;
}

PupilTrace read_pupil_csv(const std::filesystem::path& path, std::string participant_id, std::string clip_id) {
  return parse_pupil_csv(io::read_text(path), std::move(participant_id), std::move(clip_id), path.string());
}

std::string pupil_to_csv(const PupilTrace& trace) {
  std::string out = "time_s,diameter\n";
  for (std::size_t i = 0; i < trace.samples.size(); ++i) {
    out += io::format_double(static_cast<double>(i) / trace.sample_rate);
    out += ',';
    if (trace.samples[i]) out += io::format_double(*trace.samples[i]);
    out += '\n';
  }
  return out;
}

std::string rate_to_csv(const BlinkRateSeries& series) {
  std::string out = "frame,rate\n";
  for (std::size_t f = 0; f < series.values.size(); ++f) {
    out += fmt::format("{},{}\n", f, io::format_double(series.values[f]));
  }
  return out;
}

BlinkRateSeries rate_from_csv(std::string_view text, std::string clip_id, double fps, std::size_t n_participants,
                              std::string_view what) {
  BlinkRateSeries out{std::move(clip_id), fps, n_participants, {}, 0};
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    if (line_no == 1 || line.empty()) return;
    const auto fields = io::split_csv_line(line);
    if (fields.size() != 2) {
      throw SchemaError(fmt::format("{}: line {} has {} fields, expected 2", what, line_no, fields.size()));
    }
    const auto ctx = fmt::format("{} line {}", what, line_no);
    const auto frame = io::parse_double(fields[0], ctx);
    if (frame != static_cast<double>(out.values.size())) {
      throw SchemaError(fmt::format("{}: frames must be consecutive from 0", ctx));
    }
    out.values.push_back(io::parse_double(fields[1], ctx));
  });
  return out;
}

std::string events_to_csv(const EventsByParticipant& events) {
  std::string out = "participant_id,onset_s,offset_s\n";
  for (const auto& [participant, list] : events) {
    for (const auto& e : list) {
      out += fmt::format("{},{},{}\n", participant, io::format_double(e.onset_time), io::format_double(e.offset_time));
    }
  }
  return out;
}

}  // namespace blinklight::blink
