#ifndef FLOQSENSE_MODEL_HPP
#define FLOQSENSE_MODEL_HPP

// Domain types shared by the dense and free-fermion engines.
//
// Units: hbar = 1, energies are angular frequencies, and the Ising scale J = 1
// fixes the time unit. Spin operators are half Pauli matrices, which puts the
// nearest-neighbour critical point at Omega_c = J / 2.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <boost/rational.hpp>

#include "floqsense/errors.hpp"
#include "floqsense/random.hpp"

namespace floqsense {

inline constexpr double kPi = std::numbers::pi;

enum class Boundary { open, periodic };
enum class CouplingProfile { nearest_neighbor, explicit_matrix };
enum class RampShape { linear, smooth };
enum class NoiseCorrelation { independent, dipolar_correlated };
enum class InitialState { x_polarized, ground };

// ---------------------------------------------------------------------------
// Ensemble and disorder
// ---------------------------------------------------------------------------

/// Disorder widths: field offsets uniform on
/// [-W_omega/2, W_omega/2], bond offsets uniform on [-W_J, W_J], pulse-angle
/// errors uniform on [-W_theta/2, W_theta/2].
struct DisorderSpec {
  double W_omega = 0.0;
  double W_J = 0.0;
  double W_theta = 0.0;
  std::uint64_t seed = 0;
};

struct SpinEnsembleSpec {
  int N = 2;
  int dimension = 1;
  double J = 1.0;
  CouplingProfile profile = CouplingProfile::nearest_neighbor;
  /// Row-major N x N coupling matrix, used only for explicit_matrix.
  std::vector<double> couplings;
  Boundary boundary = Boundary::periodic;
  DisorderSpec disorder;
};

inline void validate(const SpinEnsembleSpec& spec) {
  require(spec.N >= 1, "N must be positive");
  require(spec.dimension >= 1 && spec.dimension <= 3, "dimension must be 1, 2 or 3");
  require(spec.J >= 0.0, "J must be non-negative (ferromagnetic)");
  require(spec.disorder.W_omega >= 0.0 && spec.disorder.W_J >= 0.0 &&
              spec.disorder.W_theta >= 0.0,
          "disorder widths must be non-negative");
  if (spec.profile == CouplingProfile::explicit_matrix) {
    const auto n = static_cast<std::size_t>(spec.N);
    require(spec.couplings.size() == n * n, "coupling matrix must be N x N");
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double jij = spec.couplings[i * n + j];
        require(jij >= 0.0, "J_ij must be non-negative");
        require(jij == spec.couplings[j * n + i], "J_ij must be symmetric");
      }
    }
  }
}

struct Bond {
  int i = 0;
  int j = 0;
  double J = 0.0;
};

/// One frozen draw of the disordered ensemble. Immutable once sampled.
struct DisorderRealization {
  int N = 0;
  Boundary boundary = Boundary::periodic;
  bool nearest_neighbor = true;
  double J_nominal = 1.0;
  std::vector<Bond> bonds;
  std::vector<double> field_offsets;  // delta Omega_i
  std::vector<double> pulse_errors;   // delta theta_i

  double field(int site, double omega) const { return omega + field_offsets[site]; }

  /// Critical transverse field of the clean nearest-neighbour chain.
  double critical_field() const { return 0.5 * J_nominal; }

  /// N decoupled spins, no disorder.
  static DisorderRealization noninteracting(int n) {
    DisorderRealization r;
    r.N = n;
    r.boundary = Boundary::open;
    r.nearest_neighbor = true;
    r.J_nominal = 0.0;
    r.field_offsets.assign(n, 0.0);
    r.pulse_errors.assign(n, 0.0);
    return r;
  }
};

/// Draws field offsets, then bond offsets, then pulse errors from one
/// mt19937_64 stream seeded with `disorder.seed`. Every draw is consumed even
/// at zero width, so sweeps over W reuse the same underlying uniforms.
inline DisorderRealization sample_disorder(const SpinEnsembleSpec& spec) {
  validate(spec);
  const auto& dis = spec.disorder;
  if (dis.W_J > 0.0 && dis.W_J >= spec.J) {
    throw ParameterError("W_J >= J allows bond sign flips (non-ferromagnetic bonds)");
  }

  DisorderRealization r;
  r.N = spec.N;
  r.boundary = spec.boundary;
  r.nearest_neighbor = spec.profile == CouplingProfile::nearest_neighbor;
  r.J_nominal = spec.J;

  if (r.nearest_neighbor) {
    const int n_bonds = spec.boundary == Boundary::periodic && spec.N > 2 ? spec.N : spec.N - 1;
    for (int b = 0; b < n_bonds; ++b) r.bonds.push_back({b, (b + 1) % spec.N, spec.J});
  } else {
    const auto n = static_cast<std::size_t>(spec.N);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const double jij = spec.couplings[i * n + j];
        if (jij > 0.0) r.bonds.push_back({static_cast<int>(i), static_cast<int>(j), jij});
      }
    }
  }

  Engine engine(dis.seed);
  r.field_offsets.resize(spec.N);
  for (auto& d : r.field_offsets) d = uniform(engine, -0.5 * dis.W_omega, 0.5 * dis.W_omega);
  for (auto& bond : r.bonds) bond.J += uniform(engine, -dis.W_J, dis.W_J);
  r.pulse_errors.resize(spec.N);
  for (auto& d : r.pulse_errors) d = uniform(engine, -0.5 * dis.W_theta, 0.5 * dis.W_theta);
  return r;
}

// ---------------------------------------------------------------------------
// Signal, drive and schedule
// ---------------------------------------------------------------------------

struct SignalSpec {
  double B = 0.0;
  double omega_s = 1.0;
  double phase0 = 0.0;
};

inline void validate(const SignalSpec& s) {
  require(s.B >= 0.0, "signal amplitude B must be non-negative");
  require(s.omega_s > 0.0, "signal frequency omega_s must be positive");
}

/// Global pi-pulse train about x. Pulse errors come from the realization.
struct DriveSpec {
  double omega_0 = 1.0;
  bool enabled = true;

  double period() const { return 2.0 * kPi / omega_0; }
};

inline void validate(const DriveSpec& d) {
  require(d.omega_0 > 0.0, "Floquet frequency omega_0 must be positive");
}

/// Transverse-field ramp from `from` to `to` over `duration`.
inline std::function<double(double)> ramp_profile(RampShape shape, double from, double to,
                                                  double duration) {
  if (duration <= 0.0) return [to](double) { return to; };
  if (shape == RampShape::linear) {
    return [=](double t) {
      const double s = std::clamp(t / duration, 0.0, 1.0);
      return from + (to - from) * s;
    };
  }
  return [=](double t) {
    const double s = std::clamp(t / duration, 0.0, 1.0);
    return to + (from - to) * 0.5 * (1.0 + std::cos(kPi * s));
  };
}

struct ProtocolSchedule {
  double T_p = 0.0;
  double T_s = 0.0;
  double T_r = 0.0;
  RampShape ramp = RampShape::smooth;
  double omega_init = 4.0;
  double omega_stop = 0.0;
  DriveSpec prep_drive{150.0};
  DriveSpec measure_drive{50.0};
  DriveSpec readout_drive{150.0};
  /// omega_s - omega_0 / 2 for the excitation protocol.
  double detuning = 0.0;
  /// Known collective phase offset injected before the measurement window.
  double bias_phase = 0.0;
  InitialState initial_state = InitialState::x_polarized;
  double max_step = 2e-3;
  /// Coherence budget T2bar; when set, T_p + T_s + T_r is checked against it.
  std::optional<double> coherence_time;
};

inline void validate(const ProtocolSchedule& s) {
  require(s.T_p >= 0.0 && s.T_s >= 0.0 && s.T_r >= 0.0, "stage durations must be non-negative");
  require(s.max_step > 0.0, "max_step must be positive");
  validate(s.prep_drive);
  validate(s.measure_drive);
  validate(s.readout_drive);
}

// ---------------------------------------------------------------------------
// Critical exponents and noise
// ---------------------------------------------------------------------------

using Rational = boost::rational<std::int64_t>;

inline double to_double(const Rational& r) {
  return static_cast<double>(r.numerator()) / static_cast<double>(r.denominator());
}

struct CriticalExponents {
  Rational nu{1};
  Rational z{1};
  Rational eta{3, 8};
  double mu = 1.49;

  /// Nearest-neighbour transverse-field Ising chain.
  static CriticalExponents ising_1d() { return {Rational{1}, Rational{1}, Rational{3, 8}, 1.49}; }
  /// Mean-field description of the 2D dipolar array. eta is not used there.
  static CriticalExponents dipolar_2d_mean_field() {
    return {Rational{1}, Rational{1, 2}, Rational{3, 8}, 1.49};
  }
};

inline void validate(const CriticalExponents& e) {
  require(e.nu > 0 && e.z > 0 && e.eta > 0 && e.mu > 0.0, "critical exponents must be positive");
}

struct NoiseSpec {
  double A0 = 0.0;
  double alpha = 0.0;
  double T2_single = 1.0;
  NoiseCorrelation model = NoiseCorrelation::independent;
};

inline void validate(const NoiseSpec& n) {
  require(n.T2_single > 0.0, "single-spin T2 must be positive");
}

// ---------------------------------------------------------------------------
// Toggling-frame signal
// ---------------------------------------------------------------------------

/// +1 on the first Floquet period, then alternating at every pulse.
inline double toggle_sign(const DriveSpec& drive, double t) {
  if (!drive.enabled) return 1.0;
  const auto n = static_cast<std::int64_t>(std::floor(t / drive.period()));
  return (n % 2 == 0) ? 1.0 : -1.0;
}

inline double toggling_signal(const SignalSpec& signal, const DriveSpec& drive, double t) {
  return signal.B * std::sin(signal.omega_s * t + signal.phase0) * toggle_sign(drive, t);
}

struct SignalAverage {
  double value = 0.0;
  /// Averaging window (least common period when commensurate).
  double window = 0.0;
  /// Upper bound on |value - exact long-time mean|; 0 when commensurate.
  double truncation_bound = 0.0;
  bool commensurate = true;
};

namespace detail {

// Best rational approximation p/q of x with q <= max_den, or nullopt.
inline std::optional<std::pair<std::int64_t, std::int64_t>> rationalize(double x, double rel_tol,
                                                                        std::int64_t max_den) {
  std::int64_t h0 = 0, h1 = 1, k0 = 1, k1 = 0;
  double v = x;
  for (int iter = 0; iter < 64; ++iter) {
    const double a_f = std::floor(v);
    const auto a = static_cast<std::int64_t>(a_f);
    const std::int64_t h2 = a * h1 + h0;
    const std::int64_t k2 = a * k1 + k0;
    if (k2 > max_den) break;
    h0 = h1;
    h1 = h2;
    k0 = k1;
    k1 = k2;
    const double approx = static_cast<double>(h1) / static_cast<double>(k1);
    if (std::abs(approx - x) <= rel_tol * std::abs(x)) return std::make_pair(h1, k1);
    const double frac = v - a_f;
    if (frac < 1e-300) break;
    v = 1.0 / frac;
  }
  return std::nullopt;
}

// Exact integral of B sin(w t + phi) * sign over consecutive pulse intervals.
inline double toggled_integral(const SignalSpec& s, double tau, std::int64_t n_intervals) {
  double total = 0.0;
  for (std::int64_t n = 0; n < n_intervals; ++n) {
    const double a = static_cast<double>(n) * tau;
    const double b = a + tau;
    const double sign = (n % 2 == 0) ? 1.0 : -1.0;
    total += sign * (std::cos(s.omega_s * a + s.phase0) - std::cos(s.omega_s * b + s.phase0));
  }
  return s.B * total / s.omega_s;
}

}  // namespace detail

/// Time average of toggling_signal. At resonance (omega_0 = 2 omega_s) the
/// closed form (2/pi) B cos(phase0) is returned; for other commensurate ratios
/// the signal is integrated exactly interval by interval over the least common
/// period. Incommensurate ratios are averaged over 2e5 pulse intervals and the
/// truncation bound 2 B max(T_signal, 2 tau) / window is reported.
inline SignalAverage effective_signal_average(const SignalSpec& signal, const DriveSpec& drive) {
  validate(signal);
  validate(drive);
  if (!drive.enabled) {
    return {0.0, 2.0 * kPi / signal.omega_s, 0.0, true};
  }
  const double tau = drive.period();
  const double ratio = drive.omega_0 / (2.0 * signal.omega_s);  // T_signal / (2 tau)
  if (std::abs(ratio - 1.0) < 1e-13) {
    return {2.0 / kPi * signal.B * std::cos(signal.phase0), 2.0 * tau, 0.0, true};
  }
  if (const auto pq = detail::rationalize(ratio, 1e-12, 20000)) {
    // q signal periods = p toggle periods = 2p pulse intervals.
    const auto [p, q] = *pq;
    const double window = 2.0 * static_cast<double>(p) * tau;
    const double integral = detail::toggled_integral(signal, tau, 2 * p);
    (void)q;
    return {integral / window, window, 0.0, true};
  }
  constexpr std::int64_t intervals = 200000;
  const double window = static_cast<double>(intervals) * tau;
  const double integral = detail::toggled_integral(signal, tau, intervals);
  const double bound = 2.0 * signal.B * std::max(2.0 * kPi / signal.omega_s, 2.0 * tau) / window;
  return {integral / window, window, bound, false};
}

}  // namespace floqsense

#endif
