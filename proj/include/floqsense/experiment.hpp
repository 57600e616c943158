#ifndef FLOQSENSE_EXPERIMENT_HPP
#define FLOQSENSE_EXPERIMENT_HPP

// Batch experiments: JSON config, sweep grid, task farming, CSV and manifest.
// Column definitions live in docs/schema.md.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "floqsense/errors.hpp"
#include "floqsense/freefermion.hpp"
#include "floqsense/model.hpp"
#include "floqsense/parallel.hpp"
#include "floqsense/protocol.hpp"
#include "floqsense/scaling.hpp"

#ifndef FLOQSENSE_VERSION
#define FLOQSENSE_VERSION "dev"
#endif

namespace floqsense::experiment {

using json = nlohmann::json;

inline constexpr int kSpecVersion = 1;

/// Config does not match the schema; the message names the offending field.
class SchemaError : public ParameterError {
 public:
  SchemaError(const std::string& field, const std::string& what)
      : ParameterError("field '" + field + "': " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

enum class Kind { parity_protocol, excitation_protocol, ipr, kz, dispersion, sensitivity, imager };

inline const std::vector<std::pair<Kind, std::string>>& kind_names() {
  static const std::vector<std::pair<Kind, std::string>> names{
      {Kind::parity_protocol, "parity-protocol"}, {Kind::excitation_protocol, "excitation-protocol"},
      {Kind::ipr, "ipr"},                         {Kind::kz, "kz"},
      {Kind::dispersion, "dispersion"},           {Kind::sensitivity, "sensitivity"},
      {Kind::imager, "imager"}};
  return names;
}

inline std::string to_string(Kind k) {
  for (const auto& [kind, name] : kind_names()) {
    if (kind == k) return name;
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Strict field access
// ---------------------------------------------------------------------------

namespace detail {

inline std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

inline void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw SchemaError(path.empty() ? "<root>" : path, "expected an object");
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw SchemaError(join(path, key), "unknown field");
    }
  }
}

inline const json* find(const json& obj, const char* key) {
  const auto it = obj.find(key);
  return it == obj.end() || it->is_null() ? nullptr : &*it;
}

inline double number(const json& obj, const std::string& path, const char* key, double fallback) {
  const json* v = find(obj, key);
  if (v == nullptr) return fallback;
  if (!v->is_number()) throw SchemaError(join(path, key), "expected a number");
  return v->get<double>();
}

inline double required_number(const json& obj, const std::string& path, const char* key) {
  if (find(obj, key) == nullptr) throw SchemaError(join(path, key), "missing required field");
  return number(obj, path, key, 0.0);
}

inline std::int64_t integer(const json& obj, const std::string& path, const char* key, std::int64_t fallback) {
  const json* v = find(obj, key);
  if (v == nullptr) return fallback;
  if (!v->is_number()) throw SchemaError(join(path, key), "expected an integer");
  const double d = v->get<double>();
  if (d != std::floor(d) || std::abs(d) > 9.0e15) throw SchemaError(join(path, key), "expected an integer");
  return static_cast<std::int64_t>(d);
}

inline bool boolean(const json& obj, const std::string& path, const char* key, bool fallback) {
  const json* v = find(obj, key);
  if (v == nullptr) return fallback;
  if (!v->is_boolean()) throw SchemaError(join(path, key), "expected true or false");
  return v->get<bool>();
}

inline std::string text(const json& obj, const std::string& path, const char* key, const std::string& fallback,
                        std::initializer_list<const char*> choices = {}) {
  const json* v = find(obj, key);
  if (v == nullptr) return fallback;
  if (!v->is_string()) throw SchemaError(join(path, key), "expected a string");
  auto s = v->get<std::string>();
  if (choices.size() > 0 && std::none_of(choices.begin(), choices.end(), [&](const char* c) { return s == c; })) {
    std::string list;
    for (const char* c : choices) list += (list.empty() ? "" : ", ") + std::string(c);
    throw SchemaError(join(path, key), "'" + s + "' is not one of: " + list);
  }
  return s;
}

inline const json& section(const json& root, const char* key) {
  static const json empty = json::object();
  const json* v = find(root, key);
  return v == nullptr ? empty : *v;
}

/// Rethrows library validation failures against the section they came from.
template <class F>
void check(const std::string& path, F&& f) {
  try {
    f();
  } catch (const SchemaError&) {
    throw;
  } catch (const Error& e) {
    throw SchemaError(path, e.what());
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Typed parameters of one grid point
// ---------------------------------------------------------------------------

struct ShotSpec {
  int k = 0;  // 0: expectation values only
};

struct NoiseBudget {
  double T2_single = 0.0;  // 0: no budget check
  NoiseCorrelation model = NoiseCorrelation::independent;
};

struct PointSpec {
  SpinEnsembleSpec chain;
  ProtocolSchedule schedule;
  SignalSpec signal;
  ShotSpec shots;
  NoiseBudget noise;
  std::string protocol = "ghz";  // ghz | product
  bool calibrate = false;
  double calibrate_lo = 0.5, calibrate_hi = 1.5;

  double ipr_W = 0.0;
  IprOptions ipr;

  double kz_T_p = 10.0;
  KzPath kz_path;

  double dispersion_omega = 0.5;

  Regime regime = Regime::sql;
  SensitivityInput sensitivity;

  std::vector<double> densities;
  double lambda_nm = 500.0;
  double imager_T2 = 3e-3;
  double imager_J0 = 0.0;  // 0: NV constant
};

inline RampShape parse_shape(const std::string& s) { return s == "linear" ? RampShape::linear : RampShape::smooth; }

inline DriveSpec parse_drive(const json& obj, const std::string& path, DriveSpec fallback) {
  const json* v = detail::find(obj, path.substr(path.rfind('.') + 1).c_str());
  if (v == nullptr) return fallback;
  detail::check_keys(*v, path, {"omega_0", "enabled"});
  fallback.omega_0 = detail::number(*v, path, "omega_0", fallback.omega_0);
  fallback.enabled = detail::boolean(*v, path, "enabled", fallback.enabled);
  return fallback;
}

inline CriticalExponents parse_exponents(const std::string& name) {
  return name == "dipolar_2d" ? CriticalExponents::dipolar_2d_mean_field() : CriticalExponents::ising_1d();
}

/// Parses every section of one grid-point document. Unknown fields are errors.
inline PointSpec parse_point(const json& doc, Kind kind) {
  using namespace detail;
  PointSpec p;

  const json& c = section(doc, "chain");
  check_keys(c, "chain", {"N", "J", "dimension", "boundary", "profile", "couplings", "disorder"});
  p.chain.N = static_cast<int>(integer(c, "chain", "N", p.chain.N));
  p.chain.J = number(c, "chain", "J", p.chain.J);
  p.chain.dimension = static_cast<int>(integer(c, "chain", "dimension", 1));
  p.chain.boundary = text(c, "chain", "boundary", "periodic", {"periodic", "open"}) == "open" ? Boundary::open
                                                                                              : Boundary::periodic;
  if (text(c, "chain", "profile", "nearest_neighbor", {"nearest_neighbor", "explicit_matrix"}) == "explicit_matrix") {
    p.chain.profile = CouplingProfile::explicit_matrix;
    const json* m = find(c, "couplings");
    if (m == nullptr || !m->is_array()) throw SchemaError("chain.couplings", "expected an array of N*N numbers");
    for (const auto& x : *m) {
      if (!x.is_number()) throw SchemaError("chain.couplings", "expected numbers");
      p.chain.couplings.push_back(x.get<double>());
    }
  }
  const json& d = section(c, "disorder");
  check_keys(d, "chain.disorder", {"W_omega", "W_J", "W_theta"});
  p.chain.disorder.W_omega = number(d, "chain.disorder", "W_omega", 0.0);
  p.chain.disorder.W_J = number(d, "chain.disorder", "W_J", 0.0);
  p.chain.disorder.W_theta = number(d, "chain.disorder", "W_theta", 0.0);
  check("chain", [&] { validate(p.chain); });

  const json& s = section(doc, "schedule");
  check_keys(s, "schedule", {"T_p", "T_s", "T_r", "ramp", "omega_init", "omega_stop", "prep_drive", "measure_drive",
                             "readout_drive", "detuning", "bias_phase", "initial_state", "max_step",
                             "coherence_time"});
  auto& sch = p.schedule;
  sch.T_p = number(s, "schedule", "T_p", sch.T_p);
  sch.T_s = number(s, "schedule", "T_s", sch.T_s);
  sch.T_r = number(s, "schedule", "T_r", sch.T_r);
  sch.ramp = parse_shape(text(s, "schedule", "ramp", "smooth", {"smooth", "linear"}));
  sch.omega_init = number(s, "schedule", "omega_init", sch.omega_init);
  sch.omega_stop = number(s, "schedule", "omega_stop", sch.omega_stop);
  sch.prep_drive = parse_drive(s, "schedule.prep_drive", sch.prep_drive);
  sch.measure_drive = parse_drive(s, "schedule.measure_drive", sch.measure_drive);
  sch.readout_drive = parse_drive(s, "schedule.readout_drive", sch.readout_drive);
  sch.detuning = number(s, "schedule", "detuning", sch.detuning);
  sch.bias_phase = number(s, "schedule", "bias_phase", sch.bias_phase);
  sch.initial_state = text(s, "schedule", "initial_state", "x_polarized", {"x_polarized", "ground"}) == "ground"
                          ? InitialState::ground
                          : InitialState::x_polarized;
  sch.max_step = number(s, "schedule", "max_step", sch.max_step);
  if (find(s, "coherence_time") != nullptr) sch.coherence_time = number(s, "schedule", "coherence_time", 0.0);
  check("schedule", [&] { validate(sch); });

  const json& g = section(doc, "signal");
  check_keys(g, "signal", {"B", "omega_s", "phase0"});
  p.signal.B = number(g, "signal", "B", 0.0);
  p.signal.omega_s = number(g, "signal", "omega_s", 25.0);
  p.signal.phase0 = number(g, "signal", "phase0", 0.0);
  check("signal", [&] { validate(p.signal); });

  const json& sh = section(doc, "shots");
  check_keys(sh, "shots", {"k"});
  p.shots.k = static_cast<int>(integer(sh, "shots", "k", 0));
  if (p.shots.k < 0) throw SchemaError("shots.k", "must be non-negative");

  const json& n = section(doc, "noise");
  check_keys(n, "noise", {"T2_single", "model"});
  p.noise.T2_single = number(n, "noise", "T2_single", 0.0);
  p.noise.model = text(n, "noise", "model", "independent", {"independent", "dipolar_correlated"}) == "independent"
                      ? NoiseCorrelation::independent
                      : NoiseCorrelation::dipolar_correlated;
  if (p.noise.T2_single < 0.0) throw SchemaError("noise.T2_single", "must be non-negative");

  const json& pr = section(doc, "protocol");
  check_keys(pr, "protocol", {"state", "calibrate", "calibrate_lo", "calibrate_hi"});
  p.protocol = text(pr, "protocol", "state", "ghz", {"ghz", "product"});
  p.calibrate = boolean(pr, "protocol", "calibrate", false);
  p.calibrate_lo = number(pr, "protocol", "calibrate_lo", p.calibrate_lo);
  p.calibrate_hi = number(pr, "protocol", "calibrate_hi", p.calibrate_hi);
  if (!(0.0 < p.calibrate_lo && p.calibrate_lo < p.calibrate_hi)) {
    throw SchemaError("protocol.calibrate_lo", "calibration bracket must satisfy 0 < lo < hi");
  }

  const json& ip = section(doc, "ipr");
  check_keys(ip, "ipr", {"W", "n_states", "n_realizations", "omega"});
  p.ipr_W = number(ip, "ipr", "W", 0.0);
  p.ipr.n_states = static_cast<int>(integer(ip, "ipr", "n_states", 50));
  p.ipr.n_realizations = static_cast<int>(integer(ip, "ipr", "n_realizations", 50));
  p.ipr.omega = number(ip, "ipr", "omega", std::numeric_limits<double>::quiet_NaN());
  if (p.ipr_W < 0.0) throw SchemaError("ipr.W", "must be non-negative");

  const json& kz = section(doc, "kz");
  check_keys(kz, "kz", {"T_p", "omega_from", "omega_to", "shape"});
  p.kz_T_p = number(kz, "kz", "T_p", p.kz_T_p);
  p.kz_path.omega_from = number(kz, "kz", "omega_from", std::numeric_limits<double>::quiet_NaN());
  p.kz_path.omega_to = number(kz, "kz", "omega_to", 0.0);
  p.kz_path.shape = parse_shape(text(kz, "kz", "shape", "linear", {"linear", "smooth"}));
  if (p.kz_T_p < 0.0) throw SchemaError("kz.T_p", "must be non-negative");

  const json& ds = section(doc, "dispersion");
  check_keys(ds, "dispersion", {"omega"});
  p.dispersion_omega = number(ds, "dispersion", "omega", 0.5 * p.chain.J);

  const json& se = section(doc, "sensitivity");
  check_keys(se, "sensitivity",
             {"regime", "N", "T", "T2_eff", "J", "d", "exponents", "T_p", "T_s", "T_r", "xi"});
  p.regime = regime_from_string(
      text(se, "sensitivity", "regime", "sql", {"sql", "heisenberg", "correlated", "correlated_optimal", "no_parity"}));
  auto& in = p.sensitivity;
  in.N = number(se, "sensitivity", "N", 1.0);
  in.T = number(se, "sensitivity", "T", 1.0);
  in.T2_eff = number(se, "sensitivity", "T2_eff", 1.0);
  in.J = number(se, "sensitivity", "J", 1.0);
  in.d = static_cast<int>(integer(se, "sensitivity", "d", 1));
  in.exponents = parse_exponents(text(se, "sensitivity", "exponents", "ising_1d", {"ising_1d", "dipolar_2d"}));
  in.T_p = number(se, "sensitivity", "T_p", 0.0);
  in.T_s = number(se, "sensitivity", "T_s", 0.0);
  in.T_r = number(se, "sensitivity", "T_r", 0.0);
  if (find(se, "xi") != nullptr) in.xi = number(se, "sensitivity", "xi", 1.0);
  if (kind == Kind::sensitivity) {
    if (!(in.N > 0 && in.T > 0 && in.T2_eff > 0 && in.J > 0 && in.d >= 1)) {
      throw SchemaError("sensitivity", "N, T, T2_eff, J and d must be positive");
    }
  }

  const json& im = section(doc, "imager");
  check_keys(im, "imager", {"density", "densities", "lambda_nm", "T2", "J0"});
  if (const json* one = find(im, "density")) {
    if (!one->is_number()) throw SchemaError("imager.density", "expected a number");
    p.densities.push_back(one->get<double>());
  }
  if (const json* many = find(im, "densities")) {
    if (!many->is_array() || many->empty()) throw SchemaError("imager.densities", "expected a non-empty array");
    for (const auto& x : *many) {
      if (!x.is_number()) throw SchemaError("imager.densities", "expected numbers");
      p.densities.push_back(x.get<double>());
    }
  }
  p.lambda_nm = number(im, "imager", "lambda_nm", p.lambda_nm);
  p.imager_T2 = number(im, "imager", "T2", p.imager_T2);
  p.imager_J0 = number(im, "imager", "J0", 0.0);
  if (kind == Kind::imager) {
    if (p.densities.empty()) throw SchemaError("imager.densities", "at least one density is required");
    for (double x : p.densities) {
      if (!(x > 0.0)) throw SchemaError("imager.densities", "densities must be positive");
    }
  }

  // Kind-specific preconditions that can be checked without running.
  const bool protocol_kind = kind == Kind::parity_protocol || kind == Kind::excitation_protocol;
  if (protocol_kind) {
    check("chain", [&] { check_size(p.chain.N); });
    if (kind == Kind::excitation_protocol && !(sch.omega_stop > 0.5 * p.chain.J)) {
      throw SchemaError("schedule.omega_stop", "excitation protocol needs omega_stop above the critical field J/2");
    }
    if (p.shots.k > 0 && kind == Kind::parity_protocol && std::abs(std::sin(sch.bias_phase)) < 1e-6) {
      throw SchemaError("schedule.bias_phase", "signal estimation needs a bias with non-zero fringe slope");
    }
    if (p.noise.T2_single > 0.0) {
      const double xi = kibble_zurek_xi(p.chain.J > 0 ? p.chain.J : 1.0, sch.T_p, CriticalExponents::ising_1d(),
                                        static_cast<double>(p.chain.N))
                            .xi;
      double t2bar = 0.0;
      check("noise", [&] { t2bar = effective_T2(p.noise.T2_single, xi, p.chain.dimension, p.noise.model); });
      if (sch.T_p + sch.T_s + sch.T_r > t2bar) {
        throw SchemaError("schedule", "T_p + T_s + T_r = " + std::to_string(sch.T_p + sch.T_s + sch.T_r) +
                                          " exceeds the coherence budget T2bar = " + std::to_string(t2bar));
      }
    }
  }
  if (kind == Kind::ipr || kind == Kind::kz || kind == Kind::dispersion) {
    if (p.chain.N < 2 || p.chain.N % 2 != 0) throw SchemaError("chain.N", "free-fermion engine needs an even N >= 2");
  }
  if (kind == Kind::ipr && (p.ipr.n_states < 1 || p.ipr.n_states > p.chain.N || p.ipr.n_realizations < 1)) {
    throw SchemaError("ipr.n_states", "n_states must lie in [1, N] and n_realizations must be positive");
  }
  return p;
}

// ---------------------------------------------------------------------------
// Config and sweep grid
// ---------------------------------------------------------------------------

struct SweepAxis {
  std::string param;  // dotted path into the config document
  std::vector<double> values;
};

struct ExperimentConfig {
  int spec_version = kSpecVersion;
  Kind kind = Kind::ipr;
  std::string name;
  std::uint64_t seed = 1;
  int realizations = 1;
  std::string output = "results";
  std::vector<SweepAxis> sweep;
  json document;  // full config, used as the base for every grid point
};

namespace detail {

inline std::vector<double> axis_values(const json& a, const std::string& path) {
  check_keys(a, path, {"param", "values", "grid", "from", "to", "count"});
  std::vector<double> out;
  if (const json* v = find(a, "values")) {
    if (!v->is_array()) throw SchemaError(path + ".values", "expected an array");
    for (const auto& x : *v) {
      if (!x.is_number()) throw SchemaError(path + ".values", "expected numbers");
      out.push_back(x.get<double>());
    }
    if (out.empty()) throw SchemaError(path + ".values", "sweep grid is empty");
    return out;
  }
  const std::string grid = text(a, path, "grid", "", {"linear", "log"});
  if (grid.empty()) throw SchemaError(path, "needs either 'values' or 'grid' with from/to/count");
  const double from = required_number(a, path, "from"), to = required_number(a, path, "to");
  const auto count = integer(a, path, "count", 0);
  if (count < 1) throw SchemaError(path + ".count", "sweep grid is empty");
  if (grid == "log" && !(from > 0.0 && to > 0.0)) throw SchemaError(path, "log grid needs positive from and to");
  for (std::int64_t i = 0; i < count; ++i) {
    const double t = count == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(count - 1);
    const double v = grid == "log" ? from * std::pow(to / from, t) : from + (to - from) * t;
    // Round off the last-bit noise of pow so 10^2 prints as 100.
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.15g", v);
    out.push_back(std::strtod(buf, nullptr));
  }
  return out;
}

/// Sets the scalar at a dotted path, creating intermediate objects.
inline void set_path(json& doc, const std::string& dotted, double value) {
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = dotted.find('.', start);
    const std::string key = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw SchemaError(dotted, "malformed parameter path");
    if (!node->is_object()) throw SchemaError(dotted, "parameter path does not lead through objects");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& doc) {
  using namespace detail;
  check_keys(doc, "", {"spec_version", "experiment", "name", "seed", "realizations", "output", "sweep", "chain",
                       "schedule", "signal", "shots", "noise", "protocol", "ipr", "kz", "dispersion",
                       "sensitivity", "imager"});
  ExperimentConfig cfg;
  cfg.document = doc;
  if (find(doc, "spec_version") == nullptr) throw SchemaError("spec_version", "missing required field");
  cfg.spec_version = static_cast<int>(integer(doc, "", "spec_version", 0));
  if (cfg.spec_version != kSpecVersion) {
    throw SchemaError("spec_version", "unsupported version " + std::to_string(cfg.spec_version) + " (expected " +
                                          std::to_string(kSpecVersion) + ")");
  }
  if (find(doc, "experiment") == nullptr) throw SchemaError("experiment", "missing required field");
  const std::string kind = text(doc, "", "experiment", "",
                                {"parity-protocol", "excitation-protocol", "ipr", "kz", "dispersion", "sensitivity",
                                 "imager"});
  for (const auto& [k, n] : kind_names()) {
    if (n == kind) cfg.kind = k;
  }
  cfg.name = text(doc, "", "name", kind);
  if (cfg.name.empty() || cfg.name.find_first_of("/\\ ") != std::string::npos) {
    throw SchemaError("name", "must be a non-empty file-name-safe string");
  }
  const auto seed = integer(doc, "", "seed", 1);
  if (seed < 0) throw SchemaError("seed", "must be non-negative");
  cfg.seed = static_cast<std::uint64_t>(seed);
  cfg.realizations = static_cast<int>(integer(doc, "", "realizations", 1));
  if (cfg.realizations < 1) throw SchemaError("realizations", "must be at least 1");
  cfg.output = text(doc, "", "output", "results");

  if (const json* sw = find(doc, "sweep")) {
    if (!sw->is_array()) throw SchemaError("sweep", "expected an array of axes");
    for (std::size_t i = 0; i < sw->size(); ++i) {
      const std::string path = "sweep[" + std::to_string(i) + "]";
      const json& a = (*sw)[i];
      if (!a.is_object()) throw SchemaError(path, "expected an object");
      const std::string param = text(a, path, "param", "");
      if (param.empty()) throw SchemaError(path + ".param", "missing required field");
      for (const auto& prev : cfg.sweep) {
        if (prev.param == param) throw SchemaError(path + ".param", "axis '" + param + "' appears twice");
      }
      cfg.sweep.push_back({param, axis_values(a, path)});
    }
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ParameterError("cannot read config '" + file.string() + "'");
  json doc;
  try {
    doc = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw SchemaError("<document>", std::string("not valid JSON: ") + e.what());
  }
  return parse_config(doc);
}

/// Grid points in row-major order over the axes (last axis fastest).
inline std::vector<std::vector<double>> grid_points(const ExperimentConfig& cfg) {
  std::vector<std::vector<double>> points{{}};
  for (const auto& axis : cfg.sweep) {
    std::vector<std::vector<double>> next;
    for (const auto& p : points) {
      for (double v : axis.values) {
        auto q = p;
        q.push_back(v);
        next.push_back(std::move(q));
      }
    }
    points = std::move(next);
  }
  return points;
}

inline json point_document(const ExperimentConfig& cfg, const std::vector<double>& point) {
  json doc = cfg.document;
  for (std::size_t a = 0; a < cfg.sweep.size(); ++a) detail::set_path(doc, cfg.sweep[a].param, point[a]);
  return doc;
}

struct Task {
  std::size_t id = 0;
  std::size_t point = 0;
  int realization = 0;
  /// derive_seed(base, realization): every grid point sees the same draws.
  std::uint64_t seed = 0;
};

inline std::vector<Task> make_tasks(const ExperimentConfig& cfg, std::size_t n_points) {
  std::vector<Task> tasks;
  for (std::size_t p = 0; p < n_points; ++p) {
    for (int r = 0; r < cfg.realizations; ++r) {
      tasks.push_back({tasks.size(), p, r, derive_seed(cfg.seed, static_cast<std::uint64_t>(r))});
    }
  }
  return tasks;
}

/// Parses every grid point; returns the number of tasks.
inline std::size_t validate_config(const ExperimentConfig& cfg) {
  const auto points = grid_points(cfg);
  for (const auto& p : points) {
    try {
      parse_point(point_document(cfg, p), cfg.kind);
    } catch (const SchemaError& e) {
      if (cfg.sweep.empty()) throw;
      std::string where;
      for (std::size_t a = 0; a < p.size(); ++a) where += " " + cfg.sweep[a].param + "=" + std::to_string(p[a]);
      throw SchemaError(e.field(), std::string(e.what()) + " (at grid point" + where + ")");
    }
  }
  return points.size() * static_cast<std::size_t>(cfg.realizations);
}

/// FNV-1a, 64 bit, over the canonical (key-sorted, compact) JSON dump.
inline std::string config_hash(const json& doc) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : doc.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string("fnv1a64:") + buf;
}

// ---------------------------------------------------------------------------
// Result tables
// ---------------------------------------------------------------------------

struct Column {
  std::string name;
  std::string unit;
};

/// Shortest round-trip decimal form; identical bytes for identical doubles.
inline std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline std::vector<Column> result_columns(Kind kind) {
  switch (kind) {
    case Kind::parity_protocol:
      return {{"parity", "1"},     {"phase", "rad"},  {"ghz_fidelity", "1"}, {"excitations", "1"},
              {"B_hat", "J"},      {"dB_hat", "J"},   {"shots", "1"}};
    case Kind::excitation_protocol:
      return {{"detuning", "J"},   {"gap_estimate", "J"}, {"excitations", "1"}, {"excitation_variance", "1"},
              {"parity", "1"},     {"count_mean", "1"},   {"shots", "1"}};
    case Kind::ipr:
      return {{"W", "J"}, {"ipr_mean", "1"}, {"ipr_stderr", "1"}, {"n_states", "1"}, {"n_realizations", "1"}};
    case Kind::kz:
      return {{"T_p", "1/J"}, {"defect_density", "1/site"}, {"xi", "sites"}};
    case Kind::dispersion:
      return {{"k", "rad/site"}, {"energy", "J"}};
    case Kind::sensitivity:
      return {{"delta_B_inv", "prefactor-1"}, {"sql_ratio", "1"}, {"beta", "1"}, {"xi", "sites"},
              {"chi", "spins"},               {"T2_eff", "1/J"},  {"bandwidth", "J"}};
    case Kind::imager:
      return {{"density", "1/nm^2"},     {"spacing", "nm"},      {"n_probe", "spins"},
              {"J_dd", "rad/s"},         {"T2_conventional", "s"}, {"regime", "1"},
              {"chi", "spins"},          {"sql_gain", "1"},      {"uncorrelated_gain", "1"},
              {"protocol_gain", "1"}};
  }
  return {};
}

using Rows = std::vector<std::vector<double>>;

/// Runs one task; returns rows of result_columns(kind).
inline Rows run_point(const PointSpec& p, Kind kind, std::uint64_t seed, int inner_jobs,
                      std::vector<std::string>* warnings = nullptr) {
  SpinEnsembleSpec chain = p.chain;
  chain.disorder.seed = seed;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  auto note = [&](const std::vector<std::string>& w) {
    if (warnings != nullptr) warnings->insert(warnings->end(), w.begin(), w.end());
  };
  switch (kind) {
    case Kind::parity_protocol: {
      const auto r = sample_disorder(chain);
      const bool ghz = p.protocol == "ghz";
      const auto res = ghz ? run_parity_protocol(r, p.schedule, p.signal)
                           : run_product_protocol(chain.N, p.schedule, p.signal, r.pulse_errors);
      note(res.warnings);
      double b = nan, db = nan;
      if (p.shots.k > 0) {
        const auto rec = simulate_shots(res, p.shots.k, derive_seed(seed, 1));
        const auto est = estimate_signal(rec, fringe_model(res.kind, chain.N, p.schedule, p.signal));
        b = est.B;
        db = est.delta_B;
      }
      return {{res.parity, res.phase_estimate, ghz ? res.ghz_fidelity : nan, res.excitations, b, db,
               static_cast<double>(p.shots.k)}};
    }
    case Kind::excitation_protocol: {
      const auto r = sample_disorder(chain);
      ProtocolSchedule sch = p.schedule;
      double gap = nan;
      if (p.calibrate) {
        const auto cal = calibrate_resonance(r, sch, p.signal, p.calibrate_lo, p.calibrate_hi);
        sch.detuning = cal.detuning;
        gap = cal.gap_estimate;
      }
      const auto res = run_excitation_protocol(r, sch, p.signal);
      note(res.warnings);
      double counts = nan;
      if (p.shots.k > 0) counts = simulate_shots(res, p.shots.k, derive_seed(seed, 1)).mean();
      return {{sch.detuning, gap, res.excitations, res.excitation_variance, res.parity, counts,
               static_cast<double>(p.shots.k)}};
    }
    case Kind::ipr: {
      chain.disorder.W_omega = p.ipr_W;
      chain.disorder.W_J = p.ipr_W;
      IprOptions opt = p.ipr;
      opt.jobs = inner_jobs;
      const auto res = ipr_average(chain, opt);
      return {{p.ipr_W, res.mean, res.stderr_mean, static_cast<double>(opt.n_states),
               static_cast<double>(opt.n_realizations)}};
    }
    case Kind::kz: {
      const auto res = kz_ramp(chain, p.kz_T_p, p.kz_path, inner_jobs);
      return {{p.kz_T_p, res.defect_density, res.xi}};
    }
    case Kind::dispersion: {
      Rows rows;
      for (const auto& m : dispersion(sample_disorder(chain), p.dispersion_omega)) rows.push_back({m.k, m.energy});
      return rows;
    }
    case Kind::sensitivity: {
      const auto rep = sensitivity(p.regime, p.sensitivity);
      const double sql = sensitivity(Regime::sql, p.sensitivity).delta_B_inv;
      return {{rep.delta_B_inv, rep.delta_B_inv / sql, rep.beta, rep.xi, rep.chi_cluster, rep.T2_eff,
               rep.bandwidth}};
    }
    case Kind::imager: {
      Rows rows;
      const double J0 = p.imager_J0 > 0.0 ? p.imager_J0 : nv_dipolar_constant();
      for (const auto& pt : imager_budget(p.densities, p.lambda_nm, p.imager_T2, J0)) {
        rows.push_back({pt.density, pt.spacing, pt.n_probe, pt.J_dd, pt.T2_conventional,
                        static_cast<double>(pt.regime), pt.chi, pt.sql_gain, pt.uncorrelated_gain,
                        pt.protocol_gain});
      }
      return rows;
    }
  }
  return {};
}

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

struct RunOptions {
  int jobs = 1;
  std::optional<std::uint64_t> seed;        // overrides the config seed
  std::optional<std::filesystem::path> out; // overrides the config output directory
  std::function<void(const std::string&)> info;
  std::function<void(const std::string&)> warn;
};

struct RunSummary {
  std::filesystem::path results;
  std::filesystem::path manifest;
  std::size_t tasks = 0;
  std::vector<std::size_t> failed;
  std::string config_hash;
};

namespace detail {

inline void write_atomic(const std::filesystem::path& file, const std::string& content) {
  auto tmp = file;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out << content;
  }
  std::filesystem::rename(tmp, file);
}

inline std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace detail

/// Runs every grid point x realization. The manifest is written before any
/// task starts and rewritten atomically as tasks finish; rows are emitted in
/// task order once all tasks are done.
inline RunSummary run_experiment(ExperimentConfig cfg, const RunOptions& opt) {
  if (opt.seed) {
    cfg.seed = *opt.seed;
    cfg.document["seed"] = *opt.seed;
  }
  validate_config(cfg);
  const auto points = grid_points(cfg);
  const auto tasks = make_tasks(cfg, points.size());
  std::vector<PointSpec> specs;
  for (const auto& p : points) specs.push_back(parse_point(point_document(cfg, p), cfg.kind));

  RunSummary summary;
  summary.tasks = tasks.size();
  summary.config_hash = config_hash(cfg.document);
  const std::filesystem::path dir = opt.out ? *opt.out : std::filesystem::path(cfg.output);
  std::filesystem::create_directories(dir);
  summary.results = dir / (cfg.name + ".csv");
  summary.manifest = dir / "manifest.json";

  json manifest;
  manifest["tool"] = "sense";
  manifest["version"] = FLOQSENSE_VERSION;
  manifest["spec_version"] = cfg.spec_version;
  manifest["experiment"] = to_string(cfg.kind);
  manifest["name"] = cfg.name;
  manifest["config_hash"] = summary.config_hash;
  manifest["base_seed"] = cfg.seed;
  manifest["results"] = summary.results.filename().string();
  manifest["started_utc"] = detail::utc_now();
  manifest["status"] = "running";
  json task_list = json::array();
  for (const auto& t : tasks) {
    json jt;
    jt["id"] = t.id;
    jt["point"] = t.point;
    jt["realization"] = t.realization;
    jt["seed"] = t.seed;
    json params = json::object();
    for (std::size_t a = 0; a < cfg.sweep.size(); ++a) params[cfg.sweep[a].param] = points[t.point][a];
    jt["params"] = params;
    jt["status"] = "pending";
    task_list.push_back(jt);
  }
  manifest["tasks"] = task_list;
  std::mutex sink;
  detail::write_atomic(summary.manifest, manifest.dump(2) + "\n");
  if (opt.info) opt.info("running " + std::to_string(tasks.size()) + " task(s) of " + to_string(cfg.kind));

  const auto t0 = std::chrono::steady_clock::now();
  const int jobs = std::max(1, opt.jobs);
  const int outer = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(jobs), tasks.size()));
  const int inner = std::max(1, jobs / std::max(1, outer));
  std::vector<Rows> rows(tasks.size());
  const auto errors = parallel_for(tasks.size(), outer, [&](std::size_t i) {
    const Task& t = tasks[i];
    std::vector<std::string> warnings;
    try {
      rows[i] = run_point(specs[t.point], cfg.kind, t.seed, inner, &warnings);
    } catch (const std::exception& e) {
      std::lock_guard lock(sink);
      manifest["tasks"][i]["status"] = "failed";
      manifest["tasks"][i]["error"] = e.what();
      detail::write_atomic(summary.manifest, manifest.dump(2) + "\n");
      throw;
    }
    std::lock_guard lock(sink);
    manifest["tasks"][i]["status"] = "done";
    if (!warnings.empty()) manifest["tasks"][i]["warnings"] = warnings;
    detail::write_atomic(summary.manifest, manifest.dump(2) + "\n");
    if (opt.warn) {
      for (const auto& w : warnings) opt.warn("task " + std::to_string(i) + ": " + w);
    }
    if (opt.info) opt.info("task " + std::to_string(i) + " done");
  });
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i]) continue;
    summary.failed.push_back(i);
    if (opt.warn) {
      try {
        std::rethrow_exception(errors[i]);
      } catch (const std::exception& e) {
        opt.warn("task " + std::to_string(i) + " failed: " + e.what());
      }
    }
  }

  // Result table: header block, then rows sorted by task id.
  const auto cols = result_columns(cfg.kind);
  std::ostringstream csv;
  csv << "# sense " << FLOQSENSE_VERSION << "\n";
  csv << "# experiment: " << to_string(cfg.kind) << "\n";
  csv << "# name: " << cfg.name << "\n";
  csv << "# config_hash: " << summary.config_hash << "\n";
  csv << "# base_seed: " << cfg.seed << "\n";
  csv << "# units:";
  for (const auto& a : cfg.sweep) csv << " " << a.param << "=config";
  for (const auto& c : cols) csv << " " << c.name << "=" << c.unit;
  csv << "\n";
  csv << "task,point,realization,seed";
  for (const auto& a : cfg.sweep) csv << "," << a.param;
  for (const auto& c : cols) csv << "," << c.name;
  csv << "\n";
  for (const auto& t : tasks) {
    if (errors[t.id]) continue;
    for (const auto& row : rows[t.id]) {
      csv << t.id << "," << t.point << "," << t.realization << "," << t.seed;
      for (double v : points[t.point]) csv << "," << format_number(v);
      for (double v : row) csv << "," << format_number(v);
      csv << "\n";
    }
  }
  detail::write_atomic(summary.results, csv.str());

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  manifest["wall_seconds"] = wall;
  manifest["finished_utc"] = detail::utc_now();
  manifest["status"] = summary.failed.empty() ? "complete" : "partial";
  manifest["failed_tasks"] = summary.failed;
  detail::write_atomic(summary.manifest, manifest.dump(2) + "\n");
  return summary;
}

// ---------------------------------------------------------------------------
// Reading tables back
// ---------------------------------------------------------------------------

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ParameterError("no column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  }

  std::vector<double> numbers(const std::string& name) const {
    const auto c = column(name);
    std::vector<double> out;
    for (const auto& r : rows) {
      double v = 0.0;
      const auto& cell = r.at(c);
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc{}) throw DomainError("column '" + name + "' holds non-numeric value '" + cell + "'");
      out.push_back(v);
    }
    return out;
  }
};

inline Table read_table(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ParameterError("cannot read table '" + file.string() + "'");
  Table t;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  };
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (t.header.empty()) {
      t.header = split(line);
    } else {
      t.rows.push_back(split(line));
      if (t.rows.back().size() != t.header.size()) throw DomainError("ragged row in '" + file.string() + "'");
    }
  }
  if (t.header.empty()) throw DomainError("table '" + file.string() + "' has no header row");
  return t;
}

/// Power-law fit of y on x from a result table.
inline PowerLawFit fit_table(const Table& t, const std::string& x, const std::string& y) {
  return fit_power_law(t.numbers(x), t.numbers(y));
}

}  // namespace floqsense::experiment

#endif
