#ifndef FLOQSENSE_PROTOCOL_HPP
#define FLOQSENSE_PROTOCOL_HPP

// End-to-end sensing protocols on the state-vector engine, shot sampling and
// signal estimation.
//
// Phase convention: the parity readout is <P> = cos(phi) with
// phi = bias + N Bbar T_s, where Bbar is the toggling-frame signal average.
// The quarter-fringe bias is phi_bias = pi/2.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/tools/minima.hpp>

#include "floqsense/errors.hpp"
#include "floqsense/model.hpp"
#include "floqsense/random.hpp"
#include "floqsense/scaling.hpp"
#include "floqsense/statevector.hpp"

namespace floqsense {

inline constexpr double kQuarterFringeBias = kPi / 2;

enum class ProtocolKind { parity, product, excitation };

inline std::string to_string(ProtocolKind k) {
  switch (k) {
    case ProtocolKind::parity: return "parity";
    case ProtocolKind::product: return "product";
    case ProtocolKind::excitation: return "excitation";
  }
  return "unknown";
}

struct StageReport {
  std::string name;
  double duration = 0.0;
  double omega_0 = 0.0;  // drive frequency, 0 when undriven
  int pulses = 0;
  long steps = 0;
  double norm_drift = 0.0;
};

struct ProtocolResult {
  ProtocolKind kind = ProtocolKind::parity;
  int N = 0;
  /// Parity protocol: <P>. Product protocol: single-spin <2 S^x> averaged over sites.
  double parity = 1.0;
  double excitations = 0.0;
  double excitation_variance = 0.0;
  /// P(n spins flipped relative to +x), excitation protocol only.
  std::vector<double> excitation_distribution;
  double ghz_fidelity = 0.0;
  /// acos(<P>), folded into [0, pi].
  double phase_estimate = 0.0;
  std::vector<StageReport> stages;
  std::vector<std::string> warnings;

  /// Independent binary readouts per protocol run.
  int readouts_per_shot() const { return kind == ProtocolKind::product ? N : 1; }
};

namespace detail {

inline StageReport stage(std::string name, double duration, const DriveSpec* drive, const EvolutionReport& r) {
  return {std::move(name), duration, drive != nullptr && drive->enabled ? drive->omega_0 : 0.0, r.pulses, r.steps,
          r.norm_drift};
}

inline void check_budget(const ProtocolSchedule& s, std::vector<std::string>& warnings) {
  if (!s.coherence_time) return;
  const double total = s.T_p + s.T_s + s.T_r;
  if (total > *s.coherence_time) {
    warnings.push_back("stage budget T_p + T_s + T_r = " + std::to_string(total) + " exceeds T2bar = " +
                       std::to_string(*s.coherence_time));
  }
}

inline double readout_duration(const ProtocolSchedule& s) { return s.T_r > 0.0 ? s.T_r : s.T_p; }

}  // namespace detail

// ---------------------------------------------------------------------------
// Parity protocol
// ---------------------------------------------------------------------------

/// Ramp down to omega_stop under the preparation drive, apply the known bias
/// phase, accumulate signal for T_s under the measurement drive, ramp back up
/// under the readout drive and read out parity. The signal clock starts at
/// the beginning of the measurement window. A zero T_r reuses T_p.
inline ProtocolResult run_parity_protocol(const DisorderRealization& r, const ProtocolSchedule& schedule,
                                          const SignalSpec& signal) {
  validate(schedule);
  validate(signal);
  ProtocolResult out;
  out.kind = ProtocolKind::parity;
  out.N = r.N;
  detail::check_budget(schedule, out.warnings);

  auto ramp = run_adiabatic_ramp(r, schedule, signal);
  out.warnings.insert(out.warnings.end(), ramp.warnings.begin(), ramp.warnings.end());
  out.ghz_fidelity = ramp.ghz_fidelity;
  out.stages.push_back(detail::stage("initialization", schedule.T_p, &schedule.prep_drive, ramp.report));
  QuantumState psi = std::move(ramp.state);

  if (schedule.bias_phase != 0.0) apply_z_rotation(psi, schedule.bias_phase / r.N);

  const ChainSimulator sim(r);
  EvolutionSegment meas;
  meas.duration = schedule.T_s;
  if (schedule.omega_stop != 0.0) {
    const double w = schedule.omega_stop;
    meas.transverse = [w](double) { return w; };
  }
  meas.signal = lab_signal(signal, 0.0);
  meas.max_step = schedule.max_step;
  out.stages.push_back(
      detail::stage("measurement", schedule.T_s, &schedule.measure_drive, sim.evolve(psi, meas, &schedule.measure_drive)));

  const double t_r = detail::readout_duration(schedule);
  if (auto w = detuning_warning(schedule.readout_drive, signal, schedule.omega_init, r.J_nominal, "readout")) {
    out.warnings.push_back(*w);
  }
  EvolutionSegment up;
  up.duration = t_r;
  up.transverse = ramp_profile(schedule.ramp, schedule.omega_stop, schedule.omega_init, t_r);
  up.signal = lab_signal(signal, schedule.T_s);
  up.max_step = schedule.max_step;
  out.stages.push_back(
      detail::stage("readout", t_r, &schedule.readout_drive, sim.evolve(psi, up, &schedule.readout_drive)));

  out.parity = std::clamp(parity_expectation(psi), -1.0, 1.0);
  out.phase_estimate = std::acos(std::clamp(out.parity, -1.0, 1.0));
  out.excitations = excitation_number(psi);
  return out;
}

inline ProtocolResult run_parity_protocol(const SpinEnsembleSpec& spec, const ProtocolSchedule& schedule,
                                          const SignalSpec& signal) {
  return run_parity_protocol(sample_disorder(spec), schedule, signal);
}

/// Reference protocol without entanglement: N non-interacting spins in +x,
/// bias phase per spin, same measurement window, each spin read out along x.
inline ProtocolResult run_product_protocol(int N, const ProtocolSchedule& schedule, const SignalSpec& signal,
                                           std::span<const double> pulse_errors = {}) {
  validate(schedule);
  validate(signal);
  auto r = DisorderRealization::noninteracting(N);
  for (int i = 0; i < N && i < static_cast<int>(pulse_errors.size()); ++i) r.pulse_errors[i] = pulse_errors[i];
  ProtocolResult out;
  out.kind = ProtocolKind::product;
  out.N = N;
  QuantumState psi = QuantumState::x_polarized(N);
  if (schedule.bias_phase != 0.0) apply_z_rotation(psi, schedule.bias_phase);
  EvolutionSegment meas;
  meas.duration = schedule.T_s;
  meas.signal = lab_signal(signal, 0.0);
  meas.max_step = schedule.max_step;
  out.stages.push_back(detail::stage("measurement", schedule.T_s, &schedule.measure_drive,
                                     ChainSimulator(r).evolve(psi, meas, &schedule.measure_drive)));
  out.parity = std::clamp(2.0 * total_sx(psi) / N, -1.0, 1.0);
  out.phase_estimate = std::acos(std::clamp(out.parity, -1.0, 1.0));
  return out;
}

// ---------------------------------------------------------------------------
// Excitation (no-parity) protocol
// ---------------------------------------------------------------------------

/// E0(odd) - E0(even) at field omega.
inline double excitation_gap(const DisorderRealization& r, double omega) {
  return ground_state(r, omega, -1).energy - ground_state(r, omega, +1).energy;
}

/// Start in the vacuum (exact ground state) at omega_init, ramp down to
/// omega_stop > Omega_c without crossing, hold for T_s with a measurement drive
/// at omega_0 = 2 (omega_s - detuning), ramp back and count quasiparticles.
inline ProtocolResult run_excitation_protocol(const DisorderRealization& r, const ProtocolSchedule& schedule,
                                              const SignalSpec& signal,
                                              const CriticalExponents& exponents = CriticalExponents::ising_1d()) {
  validate(schedule);
  validate(signal);
  const double omega_c = r.critical_field();
  if (schedule.omega_stop <= omega_c || schedule.omega_init <= omega_c) {
    throw ProtocolViolation("excitation protocol must stay on the paramagnetic side: omega_stop = " +
                            std::to_string(schedule.omega_stop) + ", Omega_c = " + std::to_string(omega_c));
  }
  if (schedule.omega_init < schedule.omega_stop) {
    throw ProtocolViolation("excitation protocol ramps the field down; omega_init < omega_stop");
  }
  ProtocolResult out;
  out.kind = ProtocolKind::excitation;
  out.N = r.N;
  detail::check_budget(schedule, out.warnings);
  if (schedule.T_p > 0.0) {
    const double bound = freezing_detuning(omega_c, r.J_nominal, schedule.T_p, exponents);
    if (schedule.omega_stop - omega_c < bound) {
      out.warnings.push_back("omega_stop - Omega_c = " + std::to_string(schedule.omega_stop - omega_c) +
                             " is inside the freezing region " + std::to_string(bound));
    }
  }

  DriveSpec measure = schedule.measure_drive;
  measure.omega_0 = 2.0 * (signal.omega_s - schedule.detuning);
  if (!(measure.omega_0 > 0.0)) throw ParameterError("detuning leaves a non-positive measurement drive frequency");

  ProtocolSchedule prep = schedule;
  prep.initial_state = InitialState::ground;
  auto ramp = run_adiabatic_ramp(r, prep, signal);
  out.warnings.insert(out.warnings.end(), ramp.warnings.begin(), ramp.warnings.end());
  out.ghz_fidelity = ramp.ghz_fidelity;
  out.stages.push_back(detail::stage("initialization", schedule.T_p, &schedule.prep_drive, ramp.report));
  QuantumState psi = std::move(ramp.state);

  const ChainSimulator sim(r);
  EvolutionSegment meas;
  meas.duration = schedule.T_s;
  const double w = schedule.omega_stop;
  meas.transverse = [w](double) { return w; };
  meas.signal = lab_signal(signal, 0.0);
  meas.max_step = schedule.max_step;
  out.stages.push_back(detail::stage("measurement", schedule.T_s, &measure, sim.evolve(psi, meas, &measure)));

  const double t_r = detail::readout_duration(schedule);
  EvolutionSegment up;
  up.duration = t_r;
  up.transverse = ramp_profile(schedule.ramp, schedule.omega_stop, schedule.omega_init, t_r);
  up.signal = lab_signal(signal, schedule.T_s);
  up.max_step = schedule.max_step;
  out.stages.push_back(
      detail::stage("readout", t_r, &schedule.readout_drive, sim.evolve(psi, up, &schedule.readout_drive)));

  // Quasiparticles above the vacuum at omega_init, counted by sector: odd
  // weight carries one, even weight outside the vacuum carries a pair.
  const double p_vac = fidelity(ground_state(r, schedule.omega_init, +1).state, psi);
  out.parity = std::clamp(parity_expectation(psi), -1.0, 1.0);
  const double w_odd = 0.5 * (1.0 - out.parity);
  const double w_pair = std::max(0.0, 1.0 - p_vac - w_odd);
  out.excitation_distribution = {std::max(0.0, 1.0 - w_odd - w_pair), w_odd, w_pair};
  out.excitations = std::clamp(w_odd + 2.0 * w_pair, 0.0, static_cast<double>(r.N));
  out.excitation_variance = std::max(0.0, w_odd + 4.0 * w_pair - out.excitations * out.excitations);
  out.phase_estimate = std::acos(std::clamp(out.parity, -1.0, 1.0));
  return out;
}

struct ResonanceCalibration {
  double detuning = 0.0;
  double response = 0.0;
  double gap_estimate = 0.0;
  int evaluations = 0;
};

/// Maximizes <N_e> over the detuning in [lo, hi] x gap by Brent's method,
/// where gap = excitation_gap(r, omega_stop).
inline ResonanceCalibration calibrate_resonance(const DisorderRealization& r, const ProtocolSchedule& schedule,
                                                const SignalSpec& signal, double lo = 0.5, double hi = 1.5,
                                                int max_iterations = 30) {
  require(0.0 < lo && lo < hi, "calibration bracket must satisfy 0 < lo < hi");
  ResonanceCalibration cal;
  cal.gap_estimate = excitation_gap(r, schedule.omega_stop);
  auto neg = [&](double dw) {
    ProtocolSchedule s = schedule;
    s.detuning = dw;
    ++cal.evaluations;
    return -run_excitation_protocol(r, s, signal).excitations;
  };
  std::uintmax_t iters = static_cast<std::uintmax_t>(max_iterations);
  const auto best = boost::math::tools::brent_find_minima(neg, lo * cal.gap_estimate, hi * cal.gap_estimate, 30, iters);
  cal.detuning = best.first;
  cal.response = -best.second;
  return cal;
}

// ---------------------------------------------------------------------------
// Shots and estimation
// ---------------------------------------------------------------------------

struct MeasurementRecord {
  ProtocolKind kind = ProtocolKind::parity;
  /// +1/-1 for parity readouts, flip counts for the excitation protocol.
  std::vector<int> outcomes;
  int k = 0;
  std::uint64_t seed = 0;

  double mean() const {
    double s = 0.0;
    for (int o : outcomes) s += o;
    return outcomes.empty() ? 0.0 : s / static_cast<double>(outcomes.size());
  }
  double variance() const {
    if (outcomes.size() < 2) return 0.0;
    const double m = mean();
    double s = 0.0;
    for (int o : outcomes) s += (o - m) * (o - m);
    return s / static_cast<double>(outcomes.size() - 1);
  }
};

/// k protocol repetitions, each contributing readouts_per_shot() outcomes.
inline MeasurementRecord simulate_shots(const ProtocolResult& result, int k, std::uint64_t seed) {
  require(k >= 1, "shot count k must be at least 1");
  MeasurementRecord rec;
  rec.kind = result.kind;
  rec.k = k;
  rec.seed = seed;
  Engine rng(seed);
  const std::size_t total = static_cast<std::size_t>(k) * result.readouts_per_shot();
  rec.outcomes.reserve(total);
  if (result.kind == ProtocolKind::excitation) {
    const auto& p = result.excitation_distribution;
    require(!p.empty(), "excitation record needs a flip distribution");
    for (std::size_t s = 0; s < total; ++s) {
      double u = uniform01(rng), acc = 0.0;
      int n = static_cast<int>(p.size()) - 1;
      for (std::size_t j = 0; j < p.size(); ++j) {
        acc += p[j];
        if (u < acc) {
          n = static_cast<int>(j);
          break;
        }
      }
      rec.outcomes.push_back(n);
    }
  } else {
    const double p_plus = 0.5 * (1.0 + result.parity);
    for (std::size_t s = 0; s < total; ++s) rec.outcomes.push_back(uniform01(rng) < p_plus ? 1 : -1);
  }
  return rec;
}

/// <P>(B) = cos(bias + n_phase * gain * B * T_s), gain = Bbar / B.
struct FringeModel {
  int n_phase = 1;
  double gain = 2.0 / kPi;
  double T_s = 1.0;
  double bias = kQuarterFringeBias;

  double phase(double B) const { return bias + n_phase * gain * B * T_s; }
  double expectation(double B) const { return std::cos(phase(B)); }
  double slope(double B) const { return -std::sin(phase(B)) * n_phase * gain * T_s; }
};

/// Fringe of the parity (n_phase = N) or product (n_phase = 1) protocol.
inline FringeModel fringe_model(ProtocolKind kind, int N, const ProtocolSchedule& schedule, SignalSpec signal) {
  require(kind != ProtocolKind::excitation, "no fringe model for the excitation protocol");
  signal.B = 1.0;
  return {kind == ProtocolKind::parity ? N : 1, effective_signal_average(signal, schedule.measure_drive).value,
          schedule.T_s, schedule.bias_phase};
}

struct SignalEstimate {
  double B = 0.0;
  double delta_B = 0.0;
};

/// Inverts the fringe at mean readout m on the branch containing the bias
/// point; shot-noise error sqrt((1 - m^2) / n_readouts) through the local slope.
inline SignalEstimate invert_fringe(double m, double n_readouts, const FringeModel& model) {
  require(model.n_phase >= 1 && model.T_s > 0.0, "fringe model needs n_phase >= 1 and T_s > 0");
  require(n_readouts >= 1.0, "at least one readout is needed");
  if (std::abs(std::sin(model.bias)) < 1e-6 || model.gain == 0.0) {
    throw UnidentifiableSignal("fringe slope vanishes at the bias point; choose a non-zero bias");
  }
  m = std::clamp(m, -1.0, 1.0);
  const double scale = model.n_phase * model.gain * model.T_s;
  const double base = std::floor(model.bias / kPi);
  const bool rising = static_cast<long>(base) % 2 != 0;
  const double phi = base * kPi + (rising ? kPi - std::acos(m) : std::acos(m));
  SignalEstimate est;
  est.B = (phi - model.bias) / scale;
  const double slope = std::abs(model.slope(est.B));
  if (slope < 1e-12 * std::abs(scale)) throw UnidentifiableSignal("readout sits on a fringe extremum");
  est.delta_B = std::sqrt(std::max(0.0, 1.0 - m * m) / n_readouts) / slope;
  return est;
}

inline SignalEstimate estimate_signal(const MeasurementRecord& record, const FringeModel& model) {
  require(!record.outcomes.empty(), "measurement record is empty");
  require(record.kind != ProtocolKind::excitation, "excitation records have no fringe to invert");
  return invert_fringe(record.mean(), static_cast<double>(record.outcomes.size()), model);
}

}  // namespace floqsense

#endif
