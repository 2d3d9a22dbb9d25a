#include "blinklight/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <optional>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "blinklight/dataset.hpp"
#include "blinklight/io.hpp"

#ifndef BLINKLIGHT_VERSION
#define BLINKLIGHT_VERSION "0.0.0"
#endif

namespace blinklight::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view tool_version() { return BLINKLIGHT_VERSION; }

namespace {

const std::vector<std::string> kStages{"synth", "ingest", "blinks", "dataset",
                                       "train", "predict", "stats", "highlights"};

// Upstream stages of each stage, in verification order.
std::vector<std::string> upstream_of(std::string_view stage) {
  if (stage == "ingest" || stage == "blinks") return {"synth"};
  if (stage == "dataset") return {"ingest", "blinks"};
  if (stage == "train") return {"dataset"};
  if (stage == "predict") return {"train", "ingest"};
  if (stage == "stats") return {"predict", "blinks", "synth"};
  if (stage == "highlights") return {"predict", "ingest"};
  return {};
}

std::string activation_name(cnn::Activation a) { return a == cnn::Activation::Identity ? "identity" : "relu"; }
cnn::Activation activation_from(const std::string& s) {
  if (s == "relu") return cnn::Activation::Rectifier;
  if (s == "identity") return cnn::Activation::Identity;
  throw ConfigError(fmt::format("model.activation: expected 'relu' or 'identity', got '{}'", s));
}
std::string mark_name(blink::MarkMode m) { return m == blink::MarkMode::OnsetOnly ? "onset" : "span"; }
blink::MarkMode mark_from(const std::string& s) {
  if (s == "span") return blink::MarkMode::Span;
  if (s == "onset") return blink::MarkMode::OnsetOnly;
  throw ConfigError(fmt::format("blinks.mark_mode: expected 'span' or 'onset', got '{}'", s));
}
std::string run_mode_name(highlight::RunMode m) {
  return m == highlight::RunMode::WindowMean ? "window_mean" : "all_frames";
}
highlight::RunMode run_mode_from(const std::string& s) {
  if (s == "all_frames") return highlight::RunMode::AllFrames;
  if (s == "window_mean") return highlight::RunMode::WindowMean;
  throw ConfigError(fmt::format("highlights.mode: expected 'all_frames' or 'window_mean', got '{}'", s));
}

// Overlays `patch` onto `base`, rejecting keys that `base` does not have.
void merge_checked(json& base, const json& patch, const std::string& where) {
  if (!patch.is_object()) throw ConfigError(fmt::format("config{}: expected an object", where));
  for (const auto& [key, value] : patch.items()) {
    const auto path = where + "." + key;
    if (!base.contains(key)) throw ConfigError(fmt::format("config: unknown key '{}'", path.substr(1)));
    if (base[key].is_object()) {
      merge_checked(base[key], value, path);
    } else {
      base[key] = value;
    }
  }
}

json stage_params(const PipelineConfig& c, std::string_view stage) {
  const json all = config_to_json(c);
  const auto seeds = derive_seeds(c.seed);
  if (stage == "synth") return json{{"synth", all["synth"]}, {"seed", seeds.synth}};
  if (stage == "ingest") return all["ingest"];
  if (stage == "blinks") return all["blinks"];
  if (stage == "dataset") return json{{"window", c.model.window}, {"stride", c.train_stride}};
  if (stage == "train") return json{{"model", all["model"]}, {"train", all["train"]}, {"init", seeds.init},
                                    {"shuffle", seeds.shuffle}};
  if (stage == "predict") return all["model"];
  if (stage == "stats") return json{{"stats", all["stats"]}, {"seed", seeds.stats}};
  if (stage == "highlights") return all["highlights"];
  throw ConfigError(fmt::format("unknown stage '{}'", stage));
}

// Makes `dir` ready for a fresh run of `stage`: a previous run of the same
// stage is replaced, anything else non-empty is left alone and rejected.
// Present while a stage is writing; an interrupted run leaves it behind so the
// next run of the same stage may clear the directory.
constexpr std::string_view kPartialMarker = ".partial";

void prepare_stage_dir(const fs::path& dir, std::string_view stage) {
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    const auto manifest = dir / kManifestName;
    const auto marker = dir / kPartialMarker;
    bool ours = false;
    if (fs::exists(marker)) {
      ours = io::read_text(marker) == stage;
    } else if (fs::exists(manifest)) {
      try {
        ours = json::parse(io::read_text(manifest)).value("stage", "") == stage;
      } catch (const json::exception&) {
        ours = false;
      }
    }
    if (!ours) {
      throw ConfigError(fmt::format("refusing to overwrite '{}': it is not the output of a previous '{}' run",
                                    dir.string(), stage));
    }
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
  io::write_text(dir / kPartialMarker, std::string(stage));
}

StageResult finish_stage(const PipelineConfig& config, std::string_view stage, const fs::path& dir,
                         std::map<std::string, std::string> inputs, const std::vector<std::string>& outputs,
                         std::vector<std::string> volatile_outputs, std::string summary) {
  Manifest m;
  m.stage = std::string(stage);
  m.tool_version = std::string(tool_version());
  m.config_hash = stage_config_hash(config, stage);
  m.inputs = std::move(inputs);
  for (const auto& rel : outputs) m.outputs[rel] = hash_path(dir / rel);
  m.volatile_outputs = std::move(volatile_outputs);
  io::write_text(dir / kManifestName, manifest_to_json(m).dump(2) + "\n");
  fs::remove(dir / kPartialMarker);
  spdlog::info("{}: {}", stage, summary);
  return {std::string(stage), dir, std::move(m), std::move(summary)};
}

// Verifies every upstream stage and returns their manifest hashes. A corpus
// without a manifest (real data) is hashed as a directory instead.
std::map<std::string, std::string> verify_upstream(const PipelineConfig& config, std::string_view stage) {
  std::map<std::string, std::string> inputs;
  for (const auto& up : upstream_of(stage)) {
    const auto dir = config.stage_dir(up);
    if (up == "synth" && !fs::exists(dir / kManifestName)) {
      if (!fs::is_directory(dir)) {
        throw MissingStageError(up, fmt::format("corpus directory '{}' not found; run `blinklight synth` first "
                                                "or point --corpus at an existing corpus",
                                                dir.string()));
      }
      inputs["corpus"] = hash_path(dir);
      continue;
    }
    inputs[up] = verify_stage(dir, up);
  }
  return inputs;
}

std::size_t clip_frame_count(const fs::path& clip_dir) {
  const auto path = clip_dir / "clip.json";
  try {
    const auto j = json::parse(io::read_text(path));
    if (j.contains("n_frames")) return j.at("n_frames").get<std::size_t>();
  } catch (const json::exception& e) {
    throw SchemaError(fmt::format("{}: {}", path.string(), e.what()));
  }
  std::size_t n = 0;
  for (const auto& entry : fs::directory_iterator(clip_dir / "keypoints")) {
    if (entry.path().filename().string().ends_with("_keypoints.json")) ++n;
  }
  return n;
}

json read_index(const PipelineConfig& config, std::string_view stage) {
  const auto path = config.stage_dir(stage) / "index.json";
  if (!fs::exists(path)) {
    throw MissingStageError(std::string(stage),
                            fmt::format("'{}' is missing; run `blinklight {}` first", path.string(), stage));
  }
  try {
    return json::parse(io::read_text(path));
  } catch (const json::exception& e) {
    throw SchemaError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

const json& index_entry(const json& index, const std::string& clip_id, std::string_view stage) {
  for (const auto& e : index.at("clips")) {
    if (e.at("clip_id").get<std::string>() == clip_id) return e;
  }
  throw SchemaError(fmt::format("clip '{}' is not listed in the {} index", clip_id, stage));
}

pose::JointMatrix read_joints(const PipelineConfig& config, const json& ingest_index, const std::string& clip_id) {
  const auto& e = index_entry(ingest_index, clip_id, "ingest");
  const auto path = config.stage_dir("ingest") / (clip_id + ".csv");
  return pose::joints_from_csv(io::read_text(path), clip_id, e.at("fps").get<double>(), path.string());
}

std::string fold_stem(const std::string& clip_id) { return "fold_" + clip_id; }

// ---- stages -------------------------------------------------------------

StageResult stage_synth(const PipelineConfig& config) {
  const auto dir = config.corpus();
  prepare_stage_dir(dir, "synth");
  auto spec = config.synth;
  spec.seed = derive_seeds(config.seed).synth;
  synth::write_corpus(spec, dir, config.exec());
  std::vector<std::string> outputs{"corpus.json"};
  std::size_t events = 0;
  for (std::size_t c = 0; c < spec.clip_count; ++c) {
    outputs.push_back(synth::clip_name(c));
    events += synth::read_event_frames(dir / synth::clip_name(c)).size();
  }
  return finish_stage(config, "synth", dir, {}, outputs, {},
                      fmt::format("{} clips x {} frames, {} participants, {} events", spec.clip_count,
                                  spec.n_frames(), spec.n_participants, events));
}

StageResult stage_ingest(const PipelineConfig& config) {
  auto inputs = verify_upstream(config, "ingest");
  const auto dir = config.stage_dir("ingest");
  prepare_stage_dir(dir, "ingest");
  const auto corpus = config.corpus();
  const auto ids = synth::read_corpus_index(corpus);
  if (ids.empty()) throw UnusableDataError(fmt::format("corpus '{}' lists no clips", corpus.string()));

  std::vector<json> entries(ids.size());
  run_waves(
      ids.size(), config.threads,
      [&](std::size_t i, std::size_t) {
        const auto seq = pose::read_clip(corpus / ids[i]);
        pose::IngestStats st;
        const auto joints = pose::ingest(seq, config.confidence_threshold, &st);
        io::write_text(dir / (ids[i] + ".csv"), pose::joints_to_csv(joints));
        entries[i] = json{{"clip_id", ids[i]},
                          {"fps", seq.meta.fps},
                          {"width", seq.meta.width},
                          {"height", seq.meta.height},
                          {"n_frames", joints.n_frames()},
                          {"absent_frames", st.absent_frames},
                          {"masked_joints", st.masked_joints}};
      },
      [](std::size_t, std::size_t) {});
  io::write_text(dir / "index.json", json{{"clips", entries}}.dump(2) + "\n");

  std::vector<std::string> outputs{"index.json"};
  std::size_t frames = 0;
  std::size_t absent = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    outputs.push_back(ids[i] + ".csv");
    frames += entries[i]["n_frames"].get<std::size_t>();
    absent += entries[i]["absent_frames"].get<std::size_t>();
  }
  return finish_stage(config, "ingest", dir, std::move(inputs), outputs, {},
                      fmt::format("{} clips, {} frames, {} without a detected person", ids.size(), frames, absent));
}

StageResult stage_blinks(const PipelineConfig& config) {
  auto inputs = verify_upstream(config, "blinks");
  const auto dir = config.stage_dir("blinks");
  prepare_stage_dir(dir, "blinks");
  const auto corpus = config.corpus();
  const auto ids = synth::read_corpus_index(corpus);

  std::vector<json> entries(ids.size());
  run_waves(
      ids.size(), config.threads,
      [&](std::size_t i, std::size_t) {
        const auto clip_dir = corpus / ids[i];
        const auto meta = pose::read_clip_meta(clip_dir);
        const auto n_frames = clip_frame_count(clip_dir);
        std::vector<fs::path> files;
        if (fs::is_directory(clip_dir / "pupil")) {
          for (const auto& entry : fs::directory_iterator(clip_dir / "pupil")) {
            if (entry.path().extension() == ".csv") files.push_back(entry.path());
          }
        }
        std::sort(files.begin(), files.end());
        blink::EventsByParticipant events;
        std::size_t n_events = 0;
        for (const auto& f : files) {
          const auto pid = f.stem().string();
          try {
            auto found = blink::detect_blinks(blink::read_pupil_csv(f, pid, ids[i]), config.blink);
            n_events += found.size();
            events[pid] = std::move(found);
          } catch (const UnusableDataError& e) {
            spdlog::warn("clip '{}': participant '{}' skipped: {}", ids[i], pid, e.what());
          }
        }
        if (events.empty()) {
          throw UnusableDataError(fmt::format("clip '{}' has no usable pupil trace", ids[i]));
        }
        const auto rate = blink::blink_rate_series(events, n_frames, meta.fps, config.mark_mode, ids[i]);
        io::write_text(dir / (ids[i] + ".csv"), blink::rate_to_csv(rate));
        io::write_text(dir / (ids[i] + "_events.csv"), blink::events_to_csv(events));
        entries[i] = json{{"clip_id", ids[i]},       {"fps", meta.fps},
                          {"n_frames", n_frames},    {"n_participants", events.size()},
                          {"n_events", n_events},    {"clipped_events", rate.clipped_events}};
      },
      [](std::size_t, std::size_t) {});
  io::write_text(dir / "index.json", json{{"clips", entries}}.dump(2) + "\n");

  std::vector<std::string> outputs{"index.json"};
  std::size_t total = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    outputs.push_back(ids[i] + ".csv");
    outputs.push_back(ids[i] + "_events.csv");
    total += entries[i]["n_events"].get<std::size_t>();
  }
  return finish_stage(config, "blinks", dir, std::move(inputs), outputs, {},
                      fmt::format("{} clips, {} blinks detected", ids.size(), total));
}

StageResult stage_dataset(const PipelineConfig& config) {
  auto inputs = verify_upstream(config, "dataset");
  const auto dir = config.stage_dir("dataset");
  prepare_stage_dir(dir, "dataset");
  const auto ingest_index = read_index(config, "ingest");

  std::vector<dataset::WindowSample> samples;
  json entries = json::array();
  for (const auto& e : ingest_index.at("clips")) {
    const auto id = e.at("clip_id").get<std::string>();
    const auto joints = read_joints(config, ingest_index, id);
    const auto rate = read_rate(config, id);
    dataset::BuildStats st;
    auto windows = dataset::build_windows(joints, rate, config.model.window, config.train_stride, &st);
    if (st.too_short) spdlog::warn("clip '{}' is shorter than one window and contributes no samples", id);
    entries.push_back({{"clip_id", id}, {"n_windows", windows.size()}});
    std::move(windows.begin(), windows.end(), std::back_inserter(samples));
  }
  dataset::DatasetHeader header;
  header.window = static_cast<std::uint32_t>(config.model.window);
  header.stride = static_cast<std::uint32_t>(config.train_stride);
  dataset::save_dataset(dir / "dataset.bin", header, samples);
  io::write_text(dir / "index.json",
                 json{{"clips", entries}, {"window", config.model.window}, {"stride", config.train_stride}}.dump(2) +
                     "\n");
  return finish_stage(config, "dataset", dir, std::move(inputs), {"dataset.bin", "index.json"}, {},
                      fmt::format("{} windows from {} clips", samples.size(), entries.size()));
}

StageResult stage_train(const PipelineConfig& config) {
  auto inputs = verify_upstream(config, "train");
  const auto dir = config.stage_dir("train");
  prepare_stage_dir(dir, "train");
  const auto index = read_index(config, "dataset");
  dataset::DatasetHeader header;
  const auto samples = dataset::load_dataset(config.stage_dir("dataset") / "dataset.bin", &header);
  if (header.window != config.model.window) {
    throw ConfigError(fmt::format("dataset windows have {} frames but the model expects {}", header.window,
                                  config.model.window));
  }

  std::vector<std::string> ids;
  for (const auto& e : index.at("clips")) ids.push_back(e.at("clip_id").get<std::string>());
  const auto plan = dataset::loocv_splits(ids);
  const auto seeds = derive_seeds(config.seed);

  std::vector<std::string> outputs;
  std::vector<std::string> volatile_outputs;
  json folds = json::array();
  for (std::size_t f = 0; f < plan.folds.size(); ++f) {
    const auto& fold = plan.folds[f];
    std::vector<cnn::WindowView> views;
    std::vector<double> targets;
    for (const auto& s : samples) {
      if (s.clip_id == fold.test_clip_id) continue;
      views.push_back(s.view());
      targets.push_back(s.target);
    }
    if (views.empty()) throw UnusableDataError(fmt::format("fold {} has no training windows", f));
    auto tc = config.train;
    tc.shuffle_seed = mix_seed(seeds.shuffle, f);
    spdlog::info("train: fold {}/{} (held out '{}'), {} windows", f + 1, plan.folds.size(), fold.test_clip_id,
                 views.size());
    std::optional<train::TrainResult> trained;
    try {
      trained = train::train(views, targets, config.model, tc, mix_seed(seeds.init, f), config.exec(),
                            [&](const train::EpochRecord& r) {
                              spdlog::debug("fold {} epoch {} rmse {:.6f} ({:.0f} ms)", f, r.epoch, r.rmse,
                                            r.wall_ms);
                            });
    } catch (const NumericError& e) {
      throw NumericError(fmt::format("fold {} (held out '{}'): {}", f, fold.test_clip_id, e.what()));
    }
    const auto& result = *trained;
    const auto stem = fold_stem(fold.test_clip_id);
    cnn::save_params(result.params, dir / (stem + ".ckpt"));
    std::string log = "epoch,rmse,wall_ms\n";
    for (const auto& r : result.history) {
      log += fmt::format("{},{},{}\n", r.epoch, io::format_double(r.rmse), io::format_double(r.wall_ms));
    }
    io::write_text(dir / (stem + "_log.csv"), log);
    outputs.push_back(stem + ".ckpt");
    volatile_outputs.push_back(stem + "_log.csv");
    folds.push_back({{"fold", f},
                     {"test_clip_id", fold.test_clip_id},
                     {"checkpoint", stem + ".ckpt"},
                     {"n_train_windows", views.size()},
                     {"final_rmse", result.history.empty() ? 0.0 : result.history.back().rmse}});
  }
  io::write_text(dir / "folds.json", json{{"folds", folds}}.dump(2) + "\n");
  outputs.push_back("folds.json");
  return finish_stage(config, "train", dir, std::move(inputs), outputs, std::move(volatile_outputs),
                      fmt::format("{} folds trained, {} epochs each", plan.folds.size(), config.train.max_epochs));
}

StageResult stage_predict(const PipelineConfig& config) {
  auto inputs = verify_upstream(config, "predict");
  const auto dir = config.stage_dir("predict");
  prepare_stage_dir(dir, "predict");
  const auto ingest_index = read_index(config, "ingest");
  const auto folds = json::parse(io::read_text(config.stage_dir("train") / "folds.json"));
  std::vector<std::string> outputs;
  for (const auto& f : folds.at("folds")) {
    const auto id = f.at("test_clip_id").get<std::string>();
    const auto params = cnn::load_params(config.stage_dir("train") / f.at("checkpoint").get<std::string>(),
                                         config.model);
    const auto joints = read_joints(config, ingest_index, id);
    const auto pred = train::predict_clip(params, joints, config.exec());
    io::write_text(dir / (id + ".csv"), train::predicted_to_csv(pred));
    outputs.push_back(id + ".csv");
  }
  return finish_stage(config, "predict", dir, std::move(inputs), outputs, {},
                      fmt::format("{} held-out clips predicted", outputs.size()));
}

StageResult stage_stats(const PipelineConfig& config) {
  auto inputs = verify_upstream(config, "stats");
  const auto dir = config.stage_dir("stats");
  prepare_stage_dir(dir, "stats");
  const auto ids = clip_ids(config);
  const auto seeds = derive_seeds(config.seed);
  const auto& sc = config.stats;

  std::vector<stats::CorrelationReport> reports;
  std::vector<stats::CorrelationReport> event_reports;
  stats::EventSlices slices;
  stats::AlignParams ap{sc.pre_window, sc.post_window, sc.n_shuffles, 0, sc.alpha};
  std::size_t dropped = 0;
  for (std::size_t c = 0; c < ids.size(); ++c) {
    const auto pred = read_prediction(config, ids[c]);
    const auto rate = read_rate(config, ids[c]);
    const auto actual = stats::aligned_actual(pred, rate);
    const stats::SurrogateParams sp{sc.n_shuffles, mix_seed(seeds.stats, c), sc.alpha, ids.size()};
    try {
      reports.push_back(stats::surrogate_test(pred.values, actual, sp, ids[c]));
    } catch (const UndefinedStatisticError& e) {
      spdlog::warn("clip '{}': {}", ids[c], e.what());
      stats::CorrelationReport r;
      r.series_id = ids[c];
      r.r = r.null_mean = r.null_sd = r.z = std::numeric_limits<double>::quiet_NaN();
      r.p = 1.0;
      r.alpha_corrected = sc.alpha / static_cast<double>(ids.size());
      reports.push_back(r);
    }

    const auto events = synth::read_event_frames(config.corpus() / ids[c]);
    if (events.empty()) continue;
    stats::collect_event_slices(pred, rate, events, ap, slices, &dropped);
    ap.seed = mix_seed(mix_seed(seeds.stats, ids.size()), c);
    try {
      auto aligned = stats::align_events(pred, rate, events, ap);
      std::move(aligned.event_reports.begin(), aligned.event_reports.end(), std::back_inserter(event_reports));
    } catch (const UnusableDataError& e) {
      spdlog::warn("{}", e.what());
    }
  }
  io::write_text(dir / "reports.csv", stats::reports_to_csv(reports));
  std::vector<std::string> outputs{"reports.csv"};
  if (!slices.pred.empty()) {
    io::write_text(dir / "curves.csv", stats::curves_to_csv(stats::average_slices(slices, ap)));
    io::write_text(dir / "event_reports.csv", stats::reports_to_csv(event_reports));
    outputs.push_back("curves.csv");
    outputs.push_back("event_reports.csv");
  }
  const auto significant = std::count_if(reports.begin(), reports.end(), [](const auto& r) { return r.significant; });
  return finish_stage(config, "stats", dir, std::move(inputs), outputs, {},
                      fmt::format("{}/{} clips significant at alpha {}/{}; {} events aligned, {} dropped",
                                  significant, reports.size(), sc.alpha, ids.size(), slices.pred.size(), dropped));
}

StageResult stage_highlights(const PipelineConfig& config) {
  auto inputs = verify_upstream(config, "highlights");
  const auto dir = config.stage_dir("highlights");
  prepare_stage_dir(dir, "highlights");
  const auto ids = clip_ids(config);
  const auto ingest_index = read_index(config, "ingest");
  const auto& hc = config.highlights;

  std::vector<highlight::HighlightSegment> all;
  std::vector<std::string> outputs{"segments.json", "summary.csv"};
  for (const auto& id : ids) {
    const auto pred = read_prediction(config, id);
    const auto& e = index_entry(ingest_index, id, "ingest");
    const double fps = e.at("fps").get<double>();
    const double duration = static_cast<double>(e.at("n_frames").get<std::size_t>()) / fps;
    auto segs = highlight::export_clip_bounds(highlight::detect(pred, hc.detect), hc.pad_s, fps, duration);
    std::move(segs.begin(), segs.end(), std::back_inserter(all));
    io::write_text(dir / "plot" / (id + ".csv"), highlight::plot_csv(pred, hc.detect));
    outputs.push_back("plot/" + id + ".csv");
  }
  const auto summary = highlight::summarize(ids, all);
  io::write_text(dir / "segments.json", highlight::segments_to_json(all));
  io::write_text(dir / "summary.csv", highlight::summary_to_csv(summary));
  return finish_stage(config, "highlights", dir, std::move(inputs), outputs, {},
                      fmt::format("{} segments, {:.2f} +/- {:.2f} per clip", all.size(), summary.mean, summary.sd));
}

double json_number(const json& j, const char* key) { return j.at(key).get<double>(); }

}  // namespace

// ---- configuration ------------------------------------------------------

void PipelineConfig::validate() const {
  if (out_dir.empty()) throw ConfigError("out directory must not be empty");
  if (threads == 0) throw ConfigError("threads must be at least 1");
  synth.validate();
  if (!(confidence_threshold >= 0.0 && confidence_threshold <= 1.0)) {
    throw ConfigError("ingest.confidence_threshold must lie in [0, 1]");
  }
  if (!(blink.deriv_z_threshold > 0.0)) throw ConfigError("blinks.deriv_z_threshold must be positive");
  if (!(blink.pair_window > 0.0)) throw ConfigError("blinks.pair_window_s must be positive");
  if (train_stride == 0) throw ConfigError("dataset.stride must be at least 1");
  if (model.in_channels != kChannelCount) {
    throw ConfigError(fmt::format("model input must have {} channels", kChannelCount));
  }
  model.validate();
  train.validate();
  if (!(stats.alpha > 0.0 && stats.alpha < 1.0)) throw ConfigError("stats.alpha must lie in (0, 1)");
  if (stats.n_shuffles < 2) throw ConfigError("stats.n_shuffles must be at least 2");
  if (!(highlights.detect.k >= 0.0)) throw ConfigError("highlights.k must be non-negative");
  if (highlights.detect.min_run == 0) throw ConfigError("highlights.min_run must be at least 1");
  if (!(highlights.pad_s >= 0.0)) throw ConfigError("highlights.pad_s must be non-negative");
}

fs::path PipelineConfig::corpus() const { return corpus_dir.empty() ? out_dir / "corpus" : corpus_dir; }

fs::path PipelineConfig::stage_dir(std::string_view stage) const {
  if (stage == "synth") return corpus();
  if (std::find(kStages.begin(), kStages.end(), stage) == kStages.end()) {
    throw ConfigError(fmt::format("unknown stage '{}'", stage));
  }
  return out_dir / std::string(stage);
}

Seeds derive_seeds(std::uint64_t master) {
  return {mix_seed(master, 0), mix_seed(master, 1), mix_seed(master, 2), mix_seed(master, 3)};
}

json config_to_json(const PipelineConfig& c) {
  auto synth = synth::spec_to_json(c.synth);
  synth.erase("seed");  // derived from the master seed
  return json{
      {"out", c.out_dir.string()},
      {"corpus", c.corpus_dir.string()},
      {"seed", c.seed},
      {"threads", c.threads},
      {"synth", synth},
      {"ingest", {{"confidence_threshold", c.confidence_threshold}}},
      {"blinks",
       {{"deriv_z_threshold", c.blink.deriv_z_threshold},
        {"pair_window_s", c.blink.pair_window},
        {"mark_mode", mark_name(c.mark_mode)}}},
      {"dataset", {{"stride", c.train_stride}}},
      {"model",
       {{"filters", c.model.filters},
        {"kernel_size", c.model.kernel_size},
        {"window", c.model.window},
        {"activation", activation_name(c.model.activation)}}},
      {"train",
       {{"learning_rate", c.train.learning_rate},
        {"beta1", c.train.beta1},
        {"beta2", c.train.beta2},
        {"epsilon", c.train.epsilon},
        {"batch_size", c.train.batch_size},
        {"max_epochs", c.train.max_epochs},
        {"standardize_inputs", c.train.standardize_inputs}}},
      {"stats",
       {{"alpha", c.stats.alpha},
        {"n_shuffles", c.stats.n_shuffles},
        {"pre_window", c.stats.pre_window},
        {"post_window", c.stats.post_window}}},
      {"highlights",
       {{"k", c.highlights.detect.k},
        {"min_run", c.highlights.detect.min_run},
        {"mode", run_mode_name(c.highlights.detect.mode)},
        {"pad_s", c.highlights.pad_s}}},
  };
}

PipelineConfig config_from_json(const json& patch) {
  PipelineConfig c;
  json j = config_to_json(c);
  merge_checked(j, patch, "");
  try {
    c.out_dir = j.at("out").get<std::string>();
    c.corpus_dir = j.at("corpus").get<std::string>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.threads = j.at("threads").get<std::size_t>();
    c.synth = synth::spec_from_json(j.at("synth"));
    c.confidence_threshold = json_number(j["ingest"], "confidence_threshold");
    const auto& b = j.at("blinks");
    c.blink.deriv_z_threshold = json_number(b, "deriv_z_threshold");
    c.blink.pair_window = json_number(b, "pair_window_s");
    c.mark_mode = mark_from(b.at("mark_mode").get<std::string>());
    c.train_stride = j.at("dataset").at("stride").get<std::size_t>();
    const auto& m = j.at("model");
    c.model.filters = m.at("filters").get<std::array<std::size_t, cnn::kLayerCount>>();
    c.model.kernel_size = m.at("kernel_size").get<std::size_t>();
    c.model.window = m.at("window").get<std::size_t>();
    c.model.activation = activation_from(m.at("activation").get<std::string>());
    const auto& t = j.at("train");
    c.train.learning_rate = json_number(t, "learning_rate");
    c.train.beta1 = json_number(t, "beta1");
    c.train.beta2 = json_number(t, "beta2");
    c.train.epsilon = json_number(t, "epsilon");
    c.train.batch_size = t.at("batch_size").get<std::size_t>();
    c.train.max_epochs = t.at("max_epochs").get<std::size_t>();
    c.train.standardize_inputs = t.at("standardize_inputs").get<bool>();
    const auto& s = j.at("stats");
    c.stats.alpha = json_number(s, "alpha");
    c.stats.n_shuffles = s.at("n_shuffles").get<std::size_t>();
    c.stats.pre_window = s.at("pre_window").get<std::size_t>();
    c.stats.post_window = s.at("post_window").get<std::size_t>();
    const auto& h = j.at("highlights");
    c.highlights.detect.k = json_number(h, "k");
    c.highlights.detect.min_run = h.at("min_run").get<std::size_t>();
    c.highlights.detect.mode = run_mode_from(h.at("mode").get<std::string>());
    c.highlights.pad_s = json_number(h, "pad_s");
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("config: {}", e.what()));
  }
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError(fmt::format("config file '{}' does not exist", path.string()));
  json j;
  try {
    j = json::parse(io::read_text(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return config_from_json(j);
}

std::string stage_config_hash(const PipelineConfig& config, std::string_view stage) {
  return io::sha256_hex(stage_params(config, stage).dump());
}

// ---- manifests ----------------------------------------------------------

json manifest_to_json(const Manifest& m) {
  return json{{"stage", m.stage},   {"tool_version", m.tool_version}, {"config_hash", m.config_hash},
              {"inputs", m.inputs}, {"outputs", m.outputs},           {"volatile_outputs", m.volatile_outputs}};
}

Manifest manifest_from_json(const json& j) {
  try {
    Manifest m;
    m.stage = j.at("stage").get<std::string>();
    m.tool_version = j.at("tool_version").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
    m.volatile_outputs = j.value("volatile_outputs", std::vector<std::string>{});
    return m;
  } catch (const json::exception& e) {
    throw SchemaError(fmt::format("manifest: {}", e.what()));
  }
}

std::string hash_path(const fs::path& path) {
  if (fs::is_regular_file(path)) return io::sha256_file(path);
  if (!fs::is_directory(path)) throw IoError(fmt::format("'{}' does not exist", path.string()));
  std::vector<std::pair<std::string, fs::path>> files;
  for (const auto& entry : fs::recursive_directory_iterator(path)) {
    if (!entry.is_regular_file() || entry.path().filename() == kManifestName) continue;
    files.emplace_back(fs::relative(entry.path(), path).generic_string(), entry.path());
  }
  std::sort(files.begin(), files.end());
  std::string listing;
  for (const auto& [rel, full] : files) {
    listing += rel;
    listing += '\0';
    listing += io::sha256_file(full);
    listing += '\n';
  }
  return io::sha256_hex(listing);
}

std::string verify_stage(const fs::path& dir, std::string_view stage) {
  const auto path = dir / kManifestName;
  if (!fs::exists(path)) {
    throw MissingStageError(std::string(stage), fmt::format("stage '{}' has no output in '{}'; run `blinklight {}` first",
                                                            stage, dir.string(), stage));
  }
  const auto text = io::read_text(path);
  Manifest m;
  try {
    m = manifest_from_json(json::parse(text));
  } catch (const json::parse_error& e) {
    throw ProvenanceError(fmt::format("{}: unreadable manifest: {}", path.string(), e.what()));
  }
  if (m.stage != stage) {
    throw ProvenanceError(fmt::format("{}: manifest belongs to stage '{}', expected '{}'", path.string(), m.stage,
                                      stage));
  }
  for (const auto& [rel, expected] : m.outputs) {
    const auto file = dir / rel;
    if (!fs::exists(file)) {
      throw ProvenanceError(fmt::format("stage '{}': artifact '{}' listed in the manifest is missing", stage, rel));
    }
    const auto actual = hash_path(file);
    if (actual != expected) {
      throw ProvenanceError(fmt::format("stage '{}': artifact '{}' does not match its manifest hash "
                                        "(expected {}, found {}); rerun `blinklight {}`",
                                        stage, rel, expected, actual, stage));
    }
  }
  return io::sha256_hex(text);
}

// ---- commands -----------------------------------------------------------

StageResult cmd_synth(const PipelineConfig& config) {
  config.validate();
  return stage_synth(config);
}
StageResult cmd_ingest(const PipelineConfig& config) {
  config.validate();
  return stage_ingest(config);
}
StageResult cmd_blinks(const PipelineConfig& config) {
  config.validate();
  return stage_blinks(config);
}
StageResult cmd_dataset(const PipelineConfig& config) {
  config.validate();
  return stage_dataset(config);
}
StageResult cmd_train(const PipelineConfig& config) {
  config.validate();
  return stage_train(config);
}
StageResult cmd_predict(const PipelineConfig& config) {
  config.validate();
  return stage_predict(config);
}
StageResult cmd_stats(const PipelineConfig& config) {
  config.validate();
  return stage_stats(config);
}
StageResult cmd_highlights(const PipelineConfig& config) {
  config.validate();
  return stage_highlights(config);
}

StageResult run_stage(std::string_view stage, const PipelineConfig& config) {
  if (stage == "synth") return cmd_synth(config);
  if (stage == "ingest") return cmd_ingest(config);
  if (stage == "blinks") return cmd_blinks(config);
  if (stage == "dataset") return cmd_dataset(config);
  if (stage == "train") return cmd_train(config);
  if (stage == "predict") return cmd_predict(config);
  if (stage == "stats") return cmd_stats(config);
  if (stage == "highlights") return cmd_highlights(config);
  throw ConfigError(fmt::format("unknown stage '{}'", stage));
}

std::vector<std::string> stage_plan(std::string_view command, const PipelineConfig&) {
  if (command == "reproduce") return kStages;
  if (std::find(kStages.begin(), kStages.end(), command) != kStages.end()) return {std::string(command)};
  throw ConfigError(fmt::format("unknown command '{}'", command));
}

std::string describe_plan(std::string_view command, const PipelineConfig& config) {
  std::string out;
  std::size_t n = 0;
  for (const auto& stage : stage_plan(command, config)) {
    const auto up = upstream_of(stage);
    out += fmt::format("{}. {:<10} -> {}  (reads: {})\n", ++n, stage, config.stage_dir(stage).string(),
                       up.empty() ? std::string("nothing") : fmt::format("{}", fmt::join(up, ", ")));
  }
  if (command == "reproduce") out += fmt::format("{}. acceptance -> {}\n", ++n, (config.out_dir / "reproduce").string());
  return out;
}

// ---- readers ------------------------------------------------------------

std::vector<std::string> clip_ids(const PipelineConfig& config) {
  const auto index = read_index(config, "ingest");
  std::vector<std::string> ids;
  for (const auto& e : index.at("clips")) ids.push_back(e.at("clip_id").get<std::string>());
  return ids;
}

train::PredictedSeries read_prediction(const PipelineConfig& config, const std::string& clip_id) {
  const auto path = config.stage_dir("predict") / (clip_id + ".csv");
  if (!fs::exists(path)) {
    throw MissingStageError("predict", fmt::format("'{}' is missing; run `blinklight predict` first", path.string()));
  }
  const auto index = read_index(config, "ingest");
  const double fps = index_entry(index, clip_id, "ingest").at("fps").get<double>();
  return train::predicted_from_csv(io::read_text(path), clip_id, fps, path.string());
}

blink::BlinkRateSeries read_rate(const PipelineConfig& config, const std::string& clip_id) {
  const auto index = read_index(config, "blinks");
  const auto& e = index_entry(index, clip_id, "blinks");
  const auto path = config.stage_dir("blinks") / (clip_id + ".csv");
  return blink::rate_from_csv(io::read_text(path), clip_id, e.at("fps").get<double>(),
                              e.at("n_participants").get<std::size_t>(), path.string());
}

blink::EventsByParticipant read_blink_events(const PipelineConfig& config, const std::string& clip_id) {
  const auto path = config.stage_dir("blinks") / (clip_id + "_events.csv");
  const auto text = io::read_text(path);
  blink::EventsByParticipant out;
  std::size_t pos = text.find('\n');
  if (pos == std::string::npos) throw ParseError(fmt::format("{}: missing header", path.string()));
  std::size_t line_no = 1;
  while (++pos < text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    const std::string_view line(text.data() + pos, end - pos);
    ++line_no;
    pos = end;
    if (line.empty()) continue;
    const auto fields = io::split_csv_line(line);
    const auto where = fmt::format("{}:{}", path.string(), line_no);
    if (fields.size() != 3) throw ParseError(fmt::format("{}: expected 3 fields", where));
    const std::string pid(fields[0]);
    out[pid].push_back({pid, io::parse_double(fields[1], where), io::parse_double(fields[2], where)});
  }
  return out;
}

std::vector<stats::CorrelationReport> read_reports(const fs::path& csv) {
  const auto text = io::read_text(csv);
  std::vector<stats::CorrelationReport> out;
  std::size_t pos = text.find('\n');
  std::size_t line_no = 1;
  while (pos != std::string::npos && ++pos < text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    const std::string_view line(text.data() + pos, end - pos);
    ++line_no;
    pos = end;
    if (line.empty()) continue;
    const auto f = io::split_csv_line(line);
    const auto where = fmt::format("{}:{}", csv.string(), line_no);
    if (f.size() != 7) throw ParseError(fmt::format("{}: expected 7 fields", where));
    stats::CorrelationReport r;
    r.series_id = std::string(f[0]);
    r.r = io::parse_double(f[1], where);
    r.null_mean = io::parse_double(f[2], where);
    r.null_sd = io::parse_double(f[3], where);
    r.z = io::parse_double(f[4], where);
    r.p = io::parse_double(f[5], where);
    r.significant = f[6] == "1";
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace blinklight::pipeline
