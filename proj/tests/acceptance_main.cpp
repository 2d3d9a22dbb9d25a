// Runs the whole pipeline on a fresh synthetic corpus and prints one
// PASS/FAIL line per acceptance criterion. Exit status 0 only if all pass.

#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "blinklight/acceptance.hpp"
#include "blinklight/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"blinklight acceptance run"};
  std::string config_path;
  std::string out = "acceptance_out";
  std::size_t threads = 1;
  app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--out", out, "Work directory (replaced)");
  app.add_option("--threads", threads, "Worker cap")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  try {
    auto config = config_path.empty() ? blinklight::pipeline::PipelineConfig{}
                                      : blinklight::pipeline::load_config(config_path);
    config.out_dir = out;
    config.threads = threads;
    config.validate();
    const auto report = blinklight::acceptance::reproduce(config, {}, [](const auto& r) {
      std::cout << blinklight::acceptance::format_line(r) << std::endl;
    });
    std::cout << fmt::format("{}/{} criteria passed\n", report.passed(), report.results.size());
    return report.all_passed() ? EXIT_SUCCESS : EXIT_FAILURE;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return EXIT_FAILURE;
  }
}
