// usbinject: run scenarios, sweep vulnerability matrices, inspect traces.
//
// Exit status: 0 expectation met, 2 expectation violated, 1 error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "usbinject/analyzer.hpp"
#include "usbinject/error.hpp"
#include "usbinject/scenario.hpp"

namespace fs = std::filesystem;
using namespace usbinject;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitViolated = 2;

struct Common {
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> duration_ms;
  std::string out_dir;
};

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw UsbError(Errc::Io, "cannot write " + path.string());
  f << text;
}

int cmd_run(const std::string& path, const Common& opt) {
  ScenarioConfig config = load_scenario(path);
  if (opt.seed) config.seed = *opt.seed;
  if (opt.duration_ms) config.duration = SimTime{*opt.duration_ms * 1'000'000};
  const RunResult result = run_scenario(config);
  std::cout << render_run_text(result);
  if (!opt.out_dir.empty()) write_run_outputs(config, result, opt.out_dir);
  return result.expectation_met ? kExitOk : kExitViolated;
}

int cmd_matrix(const std::string& path, const Common& opt, int jobs) {
  MatrixSpec spec = load_matrix_spec(path);
  if (opt.seed) spec.seed = *opt.seed;
  if (opt.duration_ms) spec.duration = SimTime{*opt.duration_ms * 1'000'000};
  const MatrixResult result = run_matrix(spec, jobs);
  const std::string text = render_matrix_text(result);
  std::cout << text;
  if (!opt.out_dir.empty()) {
    fs::create_directories(opt.out_dir);
    write_file(fs::path(opt.out_dir) / (spec.name + ".txt"), text);
    write_file(fs::path(opt.out_dir) / (spec.name + ".json"), render_matrix_json(result));
  }
  return result.all_match ? kExitOk : kExitViolated;
}

int cmd_analyze(const std::string& path, const Common& opt) {
  const TraceSummary summary = summarize_trace(import_trace_file(path));
  std::cout << render_trace_summary_text(summary);
  if (!opt.out_dir.empty()) {
    fs::create_directories(opt.out_dir);
    write_file(fs::path(opt.out_dir) / "analysis.json", render_trace_summary_json(summary));
  }
  return summary.undecodable == 0 ? kExitOk : kExitViolated;
}

int cmd_validate(const std::string& path) {
  const ScenarioConfig config = load_scenario(path);
  std::cout << "ok " << config.name << ": " << config.topology.size() << " nodes\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"USB bus injection simulator"};
  app.require_subcommand(1);
  Common opt;
  int jobs = 1;
  std::string target;

  auto add_common = [&opt](CLI::App* sub) {
    sub->add_option("--seed", opt.seed, "Override the scenario seed");
    sub->add_option("--duration-ms", opt.duration_ms, "Override the simulated duration")
        ->check(CLI::PositiveNumber);
    sub->add_option("--out-dir", opt.out_dir, "Directory for trace and report files");
  };

  CLI::App* run = app.add_subcommand("run", "Run one scenario");
  run->add_option("config", target, "Scenario JSON")->required();
  add_common(run);

  CLI::App* matrix = app.add_subcommand("matrix", "Run a matrix sweep");
  matrix->add_option("spec", target, "Matrix spec JSON")->required();
  matrix->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  add_common(matrix);

  CLI::App* analyze = app.add_subcommand("analyze", "Summarize a trace file");
  analyze->add_option("trace", target, "Trace file")->required();
  add_common(analyze);

  CLI::App* validate = app.add_subcommand("validate", "Check a scenario without running it");
  validate->add_option("config", target, "Scenario JSON")->required();
  add_common(validate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    if (*run) return cmd_run(target, opt);
    if (*matrix) return cmd_matrix(target, opt, jobs);
    if (*analyze) return cmd_analyze(target, opt);
    if (*validate) return cmd_validate(target);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
