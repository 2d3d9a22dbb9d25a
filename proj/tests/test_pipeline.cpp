#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "blinklight/io.hpp"
#include "blinklight/pipeline.hpp"

using namespace blinklight;
using namespace blinklight::pipeline;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

PipelineConfig tiny(const std::string& name) {
  PipelineConfig c;
  c.out_dir = fs::temp_directory_path() / ("blinklight_test_" + name);
  c.seed = 3;
  c.synth.clip_count = 3;
  c.synth.duration_s = 12.0;
  c.synth.n_participants = 5;
  c.synth.events_min = 1;
  c.synth.events_max = 1;
  c.synth.first_event_s = 3.0;
  c.synth.last_event_margin_s = 4.0;
  c.model.filters = {4, 6, 4};
  c.model.kernel_size = 3;
  c.model.window = 20;
  c.train.batch_size = 64;
  c.train.max_epochs = 2;
  c.train_stride = 4;
  c.stats.n_shuffles = 20;
  c.stats.pre_window = 10;
  c.stats.post_window = 20;
  return c;
}

const std::vector<std::string> kStages{"synth", "ingest", "blinks", "dataset", "train", "predict", "stats", "highlights"};

// Runs every stage once into a shared directory that the read-only tests reuse.
const PipelineConfig& finished_run() {
  static const PipelineConfig config = [] {
    auto c = tiny("shared");
    fs::remove_all(c.out_dir);
    for (const auto& s : kStages) run_stage(s, c);
    return c;
  }();
  return config;
}

json manifest_of(const PipelineConfig& c, const std::string& stage) {
  return json::parse(io::read_text(c.stage_dir(stage) / kManifestName));
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("config json round trip") {
    auto c = tiny("cfg");
    c.highlights.detect.k = 2.5;
    c.mark_mode = blink::MarkMode::OnsetOnly;
    const auto j = config_to_json(c);
    const auto back = config_from_json(j);
    CHECK(config_to_json(back) == j);
    CHECK(back.highlights.detect.k == 2.5);
    CHECK(back.mark_mode == blink::MarkMode::OnsetOnly);
  }

  TEST_CASE("config rejects unknown and invalid keys") {
    CHECK_THROWS_AS(config_from_json(json{{"trian", json::object()}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(json{{"train", {{"lr", 0.1}}}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(json{{"model", {{"activation", "tanh"}}}}), ConfigError);
    auto c = tiny("bad");
    c.synth.clip_count = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }

  TEST_CASE("seeds are distinct and stable") {
    const auto a = derive_seeds(0);
    const auto b = derive_seeds(0);
    CHECK(a.synth == b.synth);
    CHECK(a.synth != a.init);
    CHECK(a.init != a.shuffle);
    CHECK(a.shuffle != a.stats);
    CHECK(derive_seeds(1).synth != a.synth);
  }

  TEST_CASE("stage hashes ignore paths and threads") {
    auto a = tiny("h1");
    auto b = tiny("h2");
    b.threads = 4;
    CHECK(stage_config_hash(a, "train") == stage_config_hash(b, "train"));
    b.train.max_epochs = 3;
    CHECK(stage_config_hash(a, "train") != stage_config_hash(b, "train"));
    CHECK(stage_config_hash(a, "synth") == stage_config_hash(b, "synth"));
  }

  TEST_CASE("missing upstream stage") {
    auto c = tiny("missing");
    fs::remove_all(c.out_dir);
    try {
      run_stage("dataset", c);
      FAIL("expected MissingStageError");
    } catch (const MissingStageError& e) {
      CHECK(e.stage() == "ingest");
    }
  }

  TEST_CASE("dry-run plan lists stages without touching disk") {
    auto c = tiny("plan");
    fs::remove_all(c.out_dir);
    CHECK(stage_plan("reproduce", c) == kStages);
    CHECK(stage_plan("train", c) == std::vector<std::string>{"train"});
    const auto text = describe_plan("stats", c);
    CHECK(text.find("predict") != std::string::npos);
    CHECK_FALSE(fs::exists(c.out_dir));
  }

  TEST_CASE("full tiny run writes every stage") {
    const auto& c = finished_run();
    for (const auto& s : kStages) CHECK_NOTHROW(verify_stage(c.stage_dir(s), s));
    const auto ids = clip_ids(c);
    REQUIRE(ids.size() == 3);
    for (const auto& id : ids) {
      CHECK(fs::exists(c.stage_dir("train") / ("fold_" + id + ".ckpt")));
      CHECK(fs::exists(c.stage_dir("train") / ("fold_" + id + "_log.csv")));
      CHECK(fs::exists(c.stage_dir("highlights") / "plot" / (id + ".csv")));
      const auto pred = read_prediction(c, id);
      CHECK(pred.first_valid_frame == c.model.window - 1);
      CHECK(pred.values.size() == c.synth.n_frames() - c.model.window + 1);
    }
    const auto reports = read_reports(c.stage_dir("stats") / "reports.csv");
    CHECK(reports.size() == 3);
    const auto train = manifest_of(c, "train");
    CHECK(train["volatile_outputs"].size() == 3);
  }

  TEST_CASE("tampered checkpoint is caught downstream") {
    auto c = tiny("tamper");
    fs::remove_all(c.out_dir);
    fs::copy(finished_run().out_dir, c.out_dir, fs::copy_options::recursive);
    const auto ckpt = c.stage_dir("train") / ("fold_" + clip_ids(c)[0] + ".ckpt");
    {
      std::fstream f(ckpt, std::ios::in | std::ios::out | std::ios::binary);
      f.seekp(40);
      f.put('\x5a');
    }
    CHECK_THROWS_AS(run_stage("predict", c), ProvenanceError);
    fs::remove_all(c.out_dir);
  }

  TEST_CASE("rerunning a stage reproduces its manifest") {
    auto c = tiny("rerun");
    fs::remove_all(c.out_dir);
    fs::copy(finished_run().out_dir, c.out_dir, fs::copy_options::recursive);
    const auto before = manifest_of(c, "dataset");
    run_stage("dataset", c);
    CHECK(manifest_of(c, "dataset") == before);
    fs::remove_all(c.out_dir);
  }

  TEST_CASE("foreign directories are not overwritten") {
    auto c = tiny("foreign");
    fs::remove_all(c.out_dir);
    fs::create_directories(c.stage_dir("synth"));
    io::write_text(c.stage_dir("synth") / "notes.txt", "mine");
    CHECK_THROWS_AS(run_stage("synth", c), ConfigError);
    CHECK(io::read_text(c.stage_dir("synth") / "notes.txt") == "mine");
    fs::remove_all(c.out_dir);
  }

  TEST_CASE("interrupted stage directory can be replaced") {
    auto c = tiny("partial");
    fs::remove_all(c.out_dir);
    fs::create_directories(c.stage_dir("synth"));
    io::write_text(c.stage_dir("synth") / ".partial", "synth");
    io::write_text(c.stage_dir("synth") / "half.json", "{");
    CHECK_NOTHROW(run_stage("synth", c));
    CHECK_FALSE(fs::exists(c.stage_dir("synth") / ".partial"));
    CHECK_FALSE(fs::exists(c.stage_dir("synth") / "half.json"));
    fs::remove_all(c.out_dir);
  }
}
