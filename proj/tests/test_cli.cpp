#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "floqsense/experiment.hpp"

using namespace floqsense;
using namespace floqsense::experiment;
namespace fs = std::filesystem;

namespace {

json base_sensitivity() {
  return json::parse(R"({
    "spec_version": 1,
    "experiment": "sensitivity",
    "name": "s",
    "sensitivity": {"regime": "sql", "N": 10, "T": 100, "T2_eff": 10, "J": 1}
  })");
}

json small_parity() {
  return json::parse(R"({
    "spec_version": 1,
    "experiment": "parity-protocol",
    "name": "p",
    "seed": 5,
    "realizations": 2,
    "chain": {"N": 4, "disorder": {"W_omega": 0.05, "W_theta": 0.02}},
    "schedule": {"T_p": 20, "T_s": 4, "omega_init": 1.0, "initial_state": "ground", "max_step": 0.005,
                 "bias_phase": 1.5707963267948966},
    "signal": {"B": 0.01, "omega_s": 25},
    "shots": {"k": 50},
    "sweep": [{"param": "schedule.T_s", "values": [2, 4]},
              {"param": "signal.B", "values": [0.0, 0.01, 0.02]}]
  })");
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("floqsense_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string field_of(const json& doc) {
  try {
    validate_config(parse_config(doc));
  } catch (const SchemaError& e) {
    return e.field();
  }
  return "";
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(SENSE_EXE) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, MinimalConfigParses) {
  const auto cfg = parse_config(base_sensitivity());
  EXPECT_EQ(cfg.kind, Kind::sensitivity);
  EXPECT_EQ(cfg.realizations, 1);
  EXPECT_EQ(validate_config(cfg), 1u);
}

TEST(Config, ErrorsNameTheField) {
  auto doc = base_sensitivity();
  doc["sensitivity"]["colour"] = 1;
  EXPECT_EQ(field_of(doc), "sensitivity.colour");

  doc = base_sensitivity();
  doc.erase("spec_version");
  EXPECT_EQ(field_of(doc), "spec_version");

  doc = base_sensitivity();
  doc["spec_version"] = 2;
  EXPECT_EQ(field_of(doc), "spec_version");

  doc = base_sensitivity();
  doc["sensitivity"]["regime"] = "magic";
  EXPECT_EQ(field_of(doc), "sensitivity.regime");

  doc = base_sensitivity();
  doc["realizations"] = 0;
  EXPECT_EQ(field_of(doc), "realizations");

  doc = small_parity();
  doc["schedule"]["T_p"] = "long";
  EXPECT_EQ(field_of(doc), "schedule.T_p");

  doc = small_parity();
  doc["chain"]["N"] = 3.5;
  EXPECT_EQ(field_of(doc), "chain.N");
}

TEST(Config, ExcitationProtocolMustStayParamagnetic) {
  auto doc = small_parity();
  doc["experiment"] = "excitation-protocol";
  doc["schedule"]["omega_stop"] = 0.3;
  EXPECT_EQ(field_of(doc), "schedule.omega_stop");
}

TEST(Config, CoherenceBudgetIsChecked) {
  auto doc = small_parity();
  doc["noise"] = {{"T2_single", 10.0}};
  EXPECT_EQ(field_of(doc), "schedule");
  doc["noise"]["T2_single"] = 1e4;
  EXPECT_EQ(field_of(doc), "");
}

TEST(Sweep, LinearAndLogGrids) {
  auto doc = base_sensitivity();
  doc["sweep"] = json::parse(R"([{"param": "sensitivity.N", "grid": "log", "from": 10, "to": 1000, "count": 3},
                                  {"param": "sensitivity.T", "grid": "linear", "from": 1, "to": 2, "count": 5}])");
  const auto cfg = parse_config(doc);
  EXPECT_EQ(cfg.sweep[0].values, (std::vector<double>{10, 100, 1000}));
  EXPECT_EQ(cfg.sweep[1].values, (std::vector<double>{1, 1.25, 1.5, 1.75, 2}));
  const auto pts = grid_points(cfg);
  ASSERT_EQ(pts.size(), 15u);
  EXPECT_EQ(pts[1], (std::vector<double>{10, 1.25}));  // last axis fastest
  EXPECT_EQ(pts[5], (std::vector<double>{100, 1}));
  EXPECT_DOUBLE_EQ(point_document(cfg, pts[7])["sensitivity"]["T"].get<double>(), 1.5);
}

TEST(Sweep, EmptyOrMalformedGridIsRejected) {
  auto doc = base_sensitivity();
  doc["sweep"] = json::parse(R"([{"param": "sensitivity.N", "values": []}])");
  EXPECT_EQ(field_of(doc), "sweep[0].values");
  doc["sweep"] = json::parse(R"([{"param": "sensitivity.N", "grid": "linear", "from": 1, "to": 2, "count": 0}])");
  EXPECT_EQ(field_of(doc), "sweep[0].count");
  doc["sweep"] = json::parse(R"([{"param": "sensitivity.N", "grid": "log", "from": 0, "to": 2, "count": 3}])");
  EXPECT_EQ(field_of(doc), "sweep[0]");
  doc["sweep"] = json::parse(R"([{"param": "sensitivity.N", "values": [1]}, {"param": "sensitivity.N", "values": [2]}])");
  EXPECT_EQ(field_of(doc), "sweep[1].param");
}

TEST(Sweep, BadGridPointIsReportedWithItsCoordinates) {
  auto doc = base_sensitivity();
  doc["sweep"] = json::parse(R"([{"param": "sensitivity.N", "values": [10, -1]}])");
  try {
    validate_config(parse_config(doc));
    FAIL() << "expected a schema error";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("sensitivity.N=-1"), std::string::npos) << e.what();
  }
}

TEST(Tasks, SeedsDependOnRealizationOnly) {
  const auto cfg = parse_config(small_parity());
  const auto tasks = make_tasks(cfg, grid_points(cfg).size());
  ASSERT_EQ(tasks.size(), 12u);
  for (const auto& t : tasks) {
    EXPECT_EQ(t.seed, derive_seed(5, static_cast<std::uint64_t>(t.realization)));
  }
  EXPECT_NE(tasks[0].seed, tasks[1].seed);
}

TEST(ConfigHash, StableUnderKeyOrder) {
  const auto a = json::parse(R"({"b": 1, "a": [1, 2]})");
  const auto b = json::parse(R"({"a": [1, 2], "b": 1})");
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_NE(config_hash(a), config_hash(json::parse(R"({"a": [2, 1], "b": 1})")));
  EXPECT_EQ(config_hash(a).rfind("fnv1a64:", 0), 0u);
}

TEST(Run, RerunIsByteIdenticalForAnyJobCount) {
  const auto dir = scratch("rerun");
  RunOptions one;
  one.out = dir / "a";
  RunOptions many;
  many.jobs = 5;
  many.out = dir / "b";
  const auto a = run_experiment(parse_config(small_parity()), one);
  const auto b = run_experiment(parse_config(small_parity()), many);
  EXPECT_TRUE(a.failed.empty());
  const auto text = slurp(a.results);
  EXPECT_EQ(text, slurp(b.results));
  EXPECT_EQ(text.rfind("# sense ", 0), 0u);
  EXPECT_NE(text.find("# config_hash: fnv1a64:"), std::string::npos);

  const auto table = read_table(a.results);
  EXPECT_EQ(table.rows.size(), 12u);
  const auto b_col = table.numbers("signal.B");
  const auto parity = table.numbers("parity");
  for (std::size_t i = 0; i < parity.size(); ++i) {
    if (b_col[i] == 0.0) EXPECT_NEAR(parity[i], 0.0, 0.05);  // quarter-fringe bias
  }

  const auto manifest = json::parse(slurp(a.manifest));
  EXPECT_EQ(manifest["status"], "complete");
  EXPECT_EQ(manifest["tasks"].size(), 12u);
  EXPECT_EQ(manifest["tasks"][1]["seed"].get<std::uint64_t>(), derive_seed(5, 1));
  EXPECT_EQ(manifest["config_hash"], a.config_hash);
}

TEST(Run, SeedOverrideChangesDisorder) {
  const auto dir = scratch("seed");
  RunOptions a, b;
  a.out = dir / "a";
  b.out = dir / "b";
  b.seed = 6;
  const auto ra = run_experiment(parse_config(small_parity()), a);
  const auto rb = run_experiment(parse_config(small_parity()), b);
  EXPECT_NE(read_table(ra.results).numbers("parity"), read_table(rb.results).numbers("parity"));
  EXPECT_NE(ra.config_hash, rb.config_hash);
}

TEST(Run, FailedTaskLeavesPartialManifest) {
  const auto dir = scratch("partial");
  const auto doc = json::parse(R"({
    "spec_version": 1, "experiment": "kz", "name": "k",
    "chain": {"N": 20},
    "kz": {"T_p": 5.0, "omega_from": 2.0},
    "sweep": [{"param": "kz.omega_to", "values": [0.0, 0.8]}]
  })");
  RunOptions opt;
  opt.out = dir;
  const auto s = run_experiment(parse_config(doc), opt);
  ASSERT_EQ(s.failed, (std::vector<std::size_t>{1}));
  EXPECT_EQ(read_table(s.results).rows.size(), 1u);
  const auto manifest = json::parse(slurp(s.manifest));
  EXPECT_EQ(manifest["status"], "partial");
  EXPECT_EQ(manifest["tasks"][1]["status"], "failed");
  EXPECT_FALSE(manifest["tasks"][1]["error"].get<std::string>().empty());
  EXPECT_EQ(manifest["tasks"][0]["status"], "done");
}

TEST(Fit, RecoversSyntheticPowerLaw) {
  const auto dir = scratch("fit");
  {
    std::ofstream out(dir / "t.csv");
    out.precision(17);
    out << "# synthetic\nx,y,z\n";
    for (double x : {1.0, 2.0, 4.0, 8.0, 16.0}) out << x << "," << 3.0 * std::sqrt(x) << ",0\n";
  }
  const auto table = read_table(dir / "t.csv");
  const auto fit = fit_table(table, "x", "y");
  EXPECT_NEAR(fit.exponent, 0.5, 1e-12);
  EXPECT_NEAR(fit.prefactor, 3.0, 1e-12);
  EXPECT_THROW(fit_table(table, "x", "missing"), ParameterError);
}

TEST(Binary, ExitCodes) {
  const auto dir = scratch("binary");
  {
    std::ofstream(dir / "ok.json") << small_parity().dump();
    auto bad = small_parity();
    bad["schedule"]["colour"] = 1;
    std::ofstream(dir / "bad.json") << bad.dump();
    std::ofstream(dir / "broken.json") << "{ not json";
  }
  const std::string d = dir.string();
  EXPECT_EQ(run_cli("validate " + d + "/ok.json"), 0);
  EXPECT_EQ(run_cli("validate " + d + "/bad.json"), 1);
  EXPECT_EQ(run_cli("validate " + d + "/broken.json"), 1);
  EXPECT_EQ(run_cli("validate " + d + "/absent.json"), 1);
  EXPECT_EQ(run_cli("frobnicate"), 1);
  EXPECT_EQ(run_cli("run " + d + "/ok.json --jobs 2 --seed 3 --out " + d + "/out"), 0);
  EXPECT_TRUE(fs::exists(dir / "out" / "p.csv"));
  EXPECT_TRUE(fs::exists(dir / "out" / "manifest.json"));
  EXPECT_EQ(json::parse(slurp(dir / "out" / "manifest.json"))["base_seed"], 3);
  EXPECT_EQ(run_cli("fit " + d + "/out/p.csv --x schedule.T_s --y shots"), 0);
  EXPECT_TRUE(fs::exists(dir / "out" / "analysis.txt"));
  EXPECT_EQ(run_cli("fit " + d + "/out/p.csv --x schedule.T_s --y nope"), 1);
  EXPECT_EQ(run_cli("run " + d + "/ok.json --jobs 0"), 1);
}

TEST(Binary, LogLevelFromEnvironment) {
  const auto dir = scratch("log");
  std::ofstream(dir / "ok.json") << base_sensitivity().dump();
  const std::string cmd = std::string(SENSE_EXE) + " run " + (dir / "ok.json").string() + " --out " +
                          (dir / "o").string() + " 2>" + (dir / "err.txt").string();
  ASSERT_EQ(std::system(("SENSE_LOG=debug " + cmd).c_str()), 0);
  EXPECT_NE(slurp(dir / "err.txt").find("[debug]"), std::string::npos);
  ASSERT_EQ(std::system(("SENSE_LOG=error " + cmd).c_str()), 0);
  EXPECT_EQ(slurp(dir / "err.txt"), "");
}
