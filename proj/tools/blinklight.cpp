// blinklight command-line tool.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "blinklight/acceptance.hpp"
#include "blinklight/pipeline.hpp"

namespace bp = blinklight::pipeline;

namespace {

struct GlobalFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::optional<std::string> out;
  std::optional<std::string> corpus;
  bool dry_run = false;
};

bp::PipelineConfig resolve(const GlobalFlags& g) {
  auto config = g.config_path.empty() ? bp::PipelineConfig{} : bp::load_config(g.config_path);
  if (g.seed) config.seed = *g.seed;
  if (g.threads) config.threads = *g.threads;
  if (g.out) config.out_dir = *g.out;
  if (g.corpus) config.corpus_dir = *g.corpus;
  config.validate();
  return config;
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("blinklight");
  logger->set_pattern("[%H:%M:%S] [%^%l%$] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* level = std::getenv("BLINKLIGHT_LOG")) spdlog::set_level(spdlog::level::from_str(level));
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Blink-suppression highlight detection from skater pose"};
  app.set_version_flag("--version", std::string(bp::tool_version()));
  app.require_subcommand(1);

  GlobalFlags g;
  app.add_option("--config", g.config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--threads", g.threads, "Worker cap")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--corpus", g.corpus, "Corpus directory (default: <out>/corpus)");
  app.add_flag("--dry-run", g.dry_run, "Print the stage plan and exit");

  const std::vector<std::pair<std::string, std::string>> stages{
      {"synth", "Generate the synthetic corpus"},
      {"ingest", "Keypoint documents -> normalized joint series"},
      {"blinks", "Pupil traces -> blink events and per-frame blink rate"},
      {"dataset", "Sliding windows for training"},
      {"train", "Leave-one-clip-out training, one checkpoint per fold"},
      {"predict", "Per-frame predictions for every held-out clip"},
      {"stats", "Surrogate correlation tests and event-aligned curves"},
      {"highlights", "Highlight segments, summary and plot data"},
  };
  for (const auto& [name, help] : stages) app.add_subcommand(name, help);
  auto* reproduce = app.add_subcommand("reproduce", "Full pipeline on synthetic data plus the acceptance report");
  std::optional<std::size_t> verify_threads;
  reproduce->add_option("--verify-threads", verify_threads,
                        "Thread count of the second run in the determinism check")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  const auto* sub = app.get_subcommands().front();
  const std::string command = sub->get_name();
  try {
    auto config = resolve(g);
    if (g.dry_run) {
      std::cout << bp::describe_plan(command, config);
      return EXIT_SUCCESS;
    }
    if (command == "reproduce") {
      blinklight::acceptance::ReproduceOptions opts;
      if (verify_threads) opts.verify_threads = *verify_threads;
      const auto report = blinklight::acceptance::reproduce(config, opts, [](const blinklight::acceptance::CriterionResult& r) {
        std::cout << blinklight::acceptance::format_line(r) << std::endl;
      });
      std::cout << fmt::format("{}/{} criteria passed; report in {}\n", report.passed(), report.results.size(),
                               report.path.string());
      if (!report.all_passed()) {
        for (const auto& r : report.results) {
          if (!r.passed) std::cerr << fmt::format("failed: criterion {} ({})\n", r.id, r.name);
        }
        return 2;
      }
      return EXIT_SUCCESS;
    }
    const auto result = bp::run_stage(command, config);
    std::cout << fmt::format("{}: {} -> {}\n", result.stage, result.summary, result.dir.string());
    return EXIT_SUCCESS;
  } catch (const bp::MissingStageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const blinklight::ConfigError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 64;
  } catch (const blinklight::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 70;
  }
}
