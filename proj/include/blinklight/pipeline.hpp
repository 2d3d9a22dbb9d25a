#pragma once

// Stage-per-directory pipeline: synth -> ingest/blinks -> dataset -> train ->
// predict -> stats/highlights. Each stage writes its artifacts plus a
// manifest.json with the hashes of what it read and wrote, and checks the
// manifests of the stages it reads from before trusting their files.

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "blinklight/blink.hpp"
#include "blinklight/cnn.hpp"
#include "blinklight/highlight.hpp"
#include "blinklight/stats.hpp"
#include "blinklight/synth.hpp"
#include "blinklight/trainer.hpp"

namespace blinklight::pipeline {

std::string_view tool_version();

/// An upstream stage has not been run (or its directory was removed).
class MissingStageError : public IoError {
 public:
  MissingStageError(std::string stage, const std::string& message) : IoError(message), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct StatsConfig {
  double alpha = 0.05;
  std::size_t n_shuffles = 1000;
  std::size_t pre_window = 30;   // frames before each event
  std::size_t post_window = 90;  // frames after
};

struct HighlightConfig {
  highlight::DetectParams detect;
  double pad_s = 1.0;
};

inline train::TrainConfig pipeline_train_defaults() {
  train::TrainConfig t;
  t.batch_size = 64;
  t.max_epochs = 20;
  t.standardize_inputs = true;
  return t;
}

struct PipelineConfig {
  std::filesystem::path out_dir = "out";
  /// Empty: the synthetic corpus under <out>/corpus.
  std::filesystem::path corpus_dir;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  synth::SynthSpec synth;
  double confidence_threshold = pose::kDefaultConfidenceThreshold;
  blink::DetectParams blink;
  blink::MarkMode mark_mode = blink::MarkMode::Span;
  /// Stride of the stored training windows; predictions are always dense.
  std::size_t train_stride = 6;
  cnn::ModelConfig model;
  /// Smaller batches and fewer epochs than TrainConfig's defaults, so that
  /// 12 folds train in about a quarter of an hour on one core.
  train::TrainConfig train = pipeline_train_defaults();
  StatsConfig stats;
  HighlightConfig highlights;

  void validate() const;
  std::filesystem::path corpus() const;
  std::filesystem::path stage_dir(std::string_view stage) const;
  ExecOptions exec() const { return {threads}; }
};

/// Sub-seeds of the master seed, one per random consumer.
struct Seeds {
  std::uint64_t synth;
  std::uint64_t init;
  std::uint64_t shuffle;
  std::uint64_t stats;
};
Seeds derive_seeds(std::uint64_t master);

nlohmann::json config_to_json(const PipelineConfig& config);
/// Keys absent from `j` keep their defaults; unknown keys throw ConfigError.
PipelineConfig config_from_json(const nlohmann::json& j);
PipelineConfig load_config(const std::filesystem::path& path);

/// Hash of the parameters that influence `stage`'s outputs (paths and
/// thread count excluded).
std::string stage_config_hash(const PipelineConfig& config, std::string_view stage);

inline constexpr std::string_view kManifestName = "manifest.json";

struct Manifest {
  std::string stage;
  std::string tool_version;
  std::string config_hash;
  /// Upstream manifest hashes, keyed by stage name.
  std::map<std::string, std::string> inputs;
  /// sha256 of every artifact, keyed by path relative to the stage directory.
  /// Directories hash as the sorted list of their files' paths and hashes.
  std::map<std::string, std::string> outputs;
  /// Artifacts that legitimately differ between identical runs (timings).
  std::vector<std::string> volatile_outputs;
};

nlohmann::json manifest_to_json(const Manifest& m);
Manifest manifest_from_json(const nlohmann::json& j);

/// File: sha256 of the bytes. Directory: sha256 over "relpath\0hash\n" of
/// every regular file below it, sorted by path, skipping manifest.json.
std::string hash_path(const std::filesystem::path& path);

/// Loads and checks a stage's manifest against the files on disk. Throws
/// MissingStageError if the stage was never run and ProvenanceError on any
/// mismatch. Returns the manifest's own hash.
std::string verify_stage(const std::filesystem::path& dir, std::string_view stage);

struct StageResult {
  std::string stage;
  std::filesystem::path dir;
  Manifest manifest;
  std::string summary;
};

StageResult cmd_synth(const PipelineConfig& config);
StageResult cmd_ingest(const PipelineConfig& config);
StageResult cmd_blinks(const PipelineConfig& config);
StageResult cmd_dataset(const PipelineConfig& config);
StageResult cmd_train(const PipelineConfig& config);
StageResult cmd_predict(const PipelineConfig& config);
StageResult cmd_stats(const PipelineConfig& config);
StageResult cmd_highlights(const PipelineConfig& config);

/// Stages run by a subcommand, in order ("reproduce" lists them all).
std::vector<std::string> stage_plan(std::string_view command, const PipelineConfig& config);
/// Human-readable plan for --dry-run: stage, directory, upstream stages.
std::string describe_plan(std::string_view command, const PipelineConfig& config);

StageResult run_stage(std::string_view stage, const PipelineConfig& config);

// Readers for stage outputs, used by the acceptance checks and bindings.
std::vector<std::string> clip_ids(const PipelineConfig& config);
train::PredictedSeries read_prediction(const PipelineConfig& config, const std::string& clip_id);
blink::BlinkRateSeries read_rate(const PipelineConfig& config, const std::string& clip_id);
blink::EventsByParticipant read_blink_events(const PipelineConfig& config, const std::string& clip_id);
std::vector<stats::CorrelationReport> read_reports(const std::filesystem::path& csv);

}  // namespace blinklight::pipeline
