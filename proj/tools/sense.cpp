// sense: batch front end for the floqsense experiments.
//
//   sense run <config> [--jobs N] [--seed S] [--out DIR]
//   sense validate <config>
//   sense fit <csv> --x <col> --y <col>
//
// Exit codes: 0 success, 1 usage or schema error, 2 some tasks failed.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "floqsense/experiment.hpp"

namespace fs = std::filesystem;
namespace ex = floqsense::experiment;

namespace {

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("sense");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("SENSE_LOG");
  auto level = spdlog::level::info;
  if (env != nullptr && *env != '\0') {
    level = spdlog::level::from_str(env);
    // from_str maps unknown names to off; keep "off" meaning off.
    if (level == spdlog::level::off && std::string(env) != "off") {
      level = spdlog::level::info;
      spdlog::warn("SENSE_LOG='{}' is not a level (trace, debug, info, warn, error, off)", env);
    }
  }
  spdlog::set_level(level);
}

int cmd_validate(const std::string& config) {
  const auto cfg = ex::load_config(config);
  const auto tasks = ex::validate_config(cfg);
  std::cout << "ok: " << ex::to_string(cfg.kind) << " '" << cfg.name << "', " << ex::grid_points(cfg).size()
            << " grid point(s), " << tasks << " task(s), " << ex::config_hash(cfg.document) << "\n";
  return 0;
}

int cmd_run(const std::string& config, int jobs, const std::optional<std::uint64_t>& seed,
            const std::optional<fs::path>& out) {
  ex::RunOptions opt;
  opt.jobs = jobs;
  opt.seed = seed;
  opt.out = out;
  opt.info = [](const std::string& m) { spdlog::debug("{}", m); };
  opt.warn = [](const std::string& m) { spdlog::warn("{}", m); };
  const auto summary = ex::run_experiment(ex::load_config(config), opt);
  spdlog::info("wrote {} ({} task(s))", summary.results.string(), summary.tasks);
  spdlog::info("manifest {}", summary.manifest.string());
  if (!summary.failed.empty()) {
    spdlog::error("{} of {} task(s) failed; see the manifest", summary.failed.size(), summary.tasks);
    return 2;
  }
  return 0;
}

int cmd_fit(const std::string& csv, const std::string& x, const std::string& y) {
  const auto table = ex::read_table(csv);
  const auto fit = ex::fit_table(table, x, y);
  std::ostringstream line;
  line << "fit " << y << " ~ " << x << "^p: p = " << ex::format_number(fit.exponent)
       << " +- " << ex::format_number(fit.stderr_exponent) << ", prefactor = " << ex::format_number(fit.prefactor)
       << ", r2 = " << ex::format_number(fit.r_squared) << ", points = " << fit.points;
  std::cout << line.str() << "\n";
  const auto log = fs::path(csv).parent_path() / "analysis.txt";
  std::ofstream(log, std::ios::app) << fs::path(csv).filename().string() << ": " << line.str() << "\n";
  spdlog::debug("appended to {}", log.string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"sense: Floquet sensing experiments"};
  app.set_version_flag("--version", std::string("sense ") + FLOQSENSE_VERSION);
  app.require_subcommand(1);

  std::string config, csv, xcol, ycol;
  int jobs = floqsense::default_jobs();
  std::uint64_t seed = 0;
  std::string out;

  auto* run = app.add_subcommand("run", "Run every grid point and realization of a config");
  run->add_option("config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--jobs,-j", jobs, "Worker threads (default: available cores)")->check(CLI::PositiveNumber);
  auto* seed_opt = run->add_option("--seed", seed, "Override the base seed");
  auto* out_opt = run->add_option("--out", out, "Override the output directory");

  auto* val = app.add_subcommand("validate", "Check a config without running it");
  val->add_option("config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);

  auto* fit = app.add_subcommand("fit", "Power-law fit of one result column against another");
  fit->add_option("csv", csv, "Result table")->required()->check(CLI::ExistingFile);
  fit->add_option("--x", xcol, "Abscissa column")->required();
  fit->add_option("--y", ycol, "Ordinate column")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run) {
      return cmd_run(config, jobs, *seed_opt ? std::optional<std::uint64_t>(seed) : std::nullopt,
                     *out_opt ? std::optional<fs::path>(out) : std::nullopt);
    }
    if (*val) return cmd_validate(config);
    if (*fit) return cmd_fit(csv, xcol, ycol);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 1;
}
