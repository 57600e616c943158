#ifndef FLOQSENSE_SCALING_HPP
#define FLOQSENSE_SCALING_HPP

// Closed-form scaling laws. Every "~" relation is evaluated with prefactor 1,
// so only exponents and ratios are meaningful.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

#include "floqsense/errors.hpp"
#include "floqsense/model.hpp"

namespace floqsense {

enum class Regime { sql, heisenberg, correlated, correlated_optimal, no_parity };

inline std::string to_string(Regime r) {
  switch (r) {
    case Regime::sql: return "sql";
    case Regime::heisenberg: return "heisenberg";
    case Regime::correlated: return "correlated";
    case Regime::correlated_optimal: return "correlated_optimal";
    case Regime::no_parity: return "no_parity";
  }
  return "unknown";
}

inline Regime regime_from_string(const std::string& s) {
  for (Regime r : {Regime::sql, Regime::heisenberg, Regime::correlated, Regime::correlated_optimal,
                   Regime::no_parity}) {
    if (to_string(r) == s) return r;
  }
  throw ParameterError("unknown regime tag '" + s + "'");
}

// ---------------------------------------------------------------------------
// Correlation length and stage split
// ---------------------------------------------------------------------------

/// nu / (1 + z nu)
inline Rational kz_exponent(const CriticalExponents& e) { return e.nu / (Rational{1} + e.z * e.nu); }

struct KzLength {
  double xi = 1.0;
  bool clamped = false;  // J T_p < 1, xi set to one lattice spacing
  bool capped = false;   // limited by the linear system size
};

inline KzLength kibble_zurek_xi(double J, double T_p, const CriticalExponents& e,
                                std::optional<double> system_size = std::nullopt) {
  validate(e);
  require(J > 0.0 && T_p >= 0.0, "J must be positive and T_p non-negative");
  KzLength out;
  const double jt = J * T_p;
  if (jt < 1.0) {
    out.clamped = true;
    out.xi = 1.0;
  } else {
    out.xi = std::pow(jt, to_double(kz_exponent(e)));
  }
  if (system_size && out.xi > *system_size) {
    out.xi = *system_size;
    out.capped = true;
  }
  return out;
}

/// Distance Omega_c (J T_p)^(-1/(z nu + 1)) from the critical field at which a
/// ramp of duration T_p stops being adiabatic.
inline double freezing_detuning(double omega_c, double J, double T_p, const CriticalExponents& e) {
  require(J > 0.0 && T_p > 0.0, "J and T_p must be positive");
  const Rational p = Rational{1} / (e.z * e.nu + Rational{1});
  return omega_c * std::pow(J * T_p, -to_double(p));
}

struct StageSplit {
  Rational beta;
  double T_p = 0.0;
  double T_s = 0.0;
};

/// beta = T_p / T2bar maximizing xi^(d/2) T_s: (1 + 2 (nu z + 1) / (d nu))^-1.
inline StageSplit optimal_stage_split(const CriticalExponents& e, int d, double T2_eff = 1.0) {
  validate(e);
  require(d >= 1, "dimension must be positive");
  const Rational beta =
      Rational{1} / (Rational{1} + Rational{2} * (e.nu * e.z + Rational{1}) / (Rational{d} * e.nu));
  return {beta, to_double(beta) * T2_eff, (1.0 - to_double(beta)) * T2_eff};
}

// ---------------------------------------------------------------------------
// Sensitivity laws
// ---------------------------------------------------------------------------

/// eta / (z nu + 1)
inline Rational no_parity_exponent(const CriticalExponents& e) {
  return e.eta / (e.z * e.nu + Rational{1});
}

struct SensitivityInput {
  double N = 1.0;
  double T = 1.0;        // total integration time
  double T2_eff = 1.0;   // coherence time of the probe state
  double J = 1.0;
  CriticalExponents exponents = CriticalExponents::ising_1d();
  int d = 1;
  // Stage durations for Regime::correlated; T_s = 0 selects the optimal split.
  double T_p = 0.0;
  double T_s = 0.0;
  double T_r = 0.0;
  /// Overrides the Kibble-Zurek estimate when set.
  std::optional<double> xi;
};

struct SensitivityReport {
  double delta_B_inv = 0.0;
  Regime regime = Regime::sql;
  double T_p = 0.0, T_s = 0.0, T_r = 0.0;
  double beta = 0.0;
  double xi = 1.0;
  double chi_cluster = 1.0;
  double T2_eff = 0.0;
  double bandwidth = 0.0;
};

/// sql         sqrt(N T T2)
/// heisenberg  N sqrt(T2 T)
/// correlated  sqrt(T / (T_p + T_s + T_r)) sqrt(xi^d N) T_s
/// correlated_optimal  sqrt(N T T2) (J T2)^(d nu / (2 (1 + z nu)))
/// no_parity   sqrt(N T T2) (J T2)^(eta / (z nu + 1))
inline SensitivityReport sensitivity(Regime regime, const SensitivityInput& in) {
  require(in.N > 0 && in.T > 0 && in.T2_eff > 0 && in.J > 0, "sensitivity inputs must be positive");
  validate(in.exponents);
  const auto& e = in.exponents;
  SensitivityReport rep;
  rep.regime = regime;
  rep.T2_eff = in.T2_eff;
  rep.bandwidth = 1.0 / in.T2_eff;
  switch (regime) {
    case Regime::sql:
      rep.delta_B_inv = std::sqrt(in.N * in.T * in.T2_eff);
      rep.T_s = in.T2_eff;
      break;
    case Regime::heisenberg:
      rep.delta_B_inv = in.N * std::sqrt(in.T2_eff * in.T);
      rep.T_s = in.T2_eff;
      rep.xi = in.N;
      rep.chi_cluster = in.N;
      break;
    case Regime::correlated: {
      double tp = in.T_p, ts = in.T_s, tr = in.T_r;
      if (ts <= 0.0) {
        const auto split = optimal_stage_split(e, in.d, in.T2_eff);
        tp = split.T_p;
        ts = split.T_s;
        tr = 0.0;
      }
      require(tp + ts + tr > 0.0, "stage durations must not all vanish");
      const double xi = in.xi ? *in.xi : kibble_zurek_xi(in.J, tp, e).xi;
      rep.T_p = tp;
      rep.T_s = ts;
      rep.T_r = tr;
      rep.beta = tp / (tp + ts + tr);
      rep.xi = xi;
      rep.chi_cluster = std::pow(xi, in.d);
      rep.delta_B_inv = std::sqrt(in.T / (tp + ts + tr)) * std::sqrt(rep.chi_cluster * in.N) * ts;
      break;
    }
    case Regime::correlated_optimal: {
      const Rational p = Rational{in.d} * e.nu / (Rational{2} * (Rational{1} + e.z * e.nu));
      const auto split = optimal_stage_split(e, in.d, in.T2_eff);
      rep.beta = to_double(split.beta);
      rep.T_p = split.T_p;
      rep.T_s = split.T_s;
      rep.xi = kibble_zurek_xi(in.J, split.T_p, e).xi;
      rep.chi_cluster = std::pow(rep.xi, in.d);
      rep.delta_B_inv = std::sqrt(in.N * in.T * in.T2_eff) * std::pow(in.J * in.T2_eff, to_double(p));
      break;
    }
    case Regime::no_parity:
      rep.delta_B_inv = std::sqrt(in.N * in.T * in.T2_eff) *
                        std::pow(in.J * in.T2_eff, to_double(no_parity_exponent(e)));
      break;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Coherence and bandwidth
// ---------------------------------------------------------------------------

/// d nu / (1 + z nu + d nu)
inline Rational chi_exponent(const CriticalExponents& e, int d) {
  return Rational{d} * e.nu / (Rational{1} + e.z * e.nu + Rational{d} * e.nu);
}

struct ChiSolution {
  double chi = 1.0;
  Rational exponent;
  double fixed_point = 1.0;
  int iterations = 0;
};

/// chi = (J T2)^(d nu / (1 + z nu + d nu)), cross-checked by iterating
/// chi <- (J T2 / chi)^a with a = d nu / (1 + z nu). The bare map has slope -a
/// in log space and diverges for a > 1 (the 2D dipolar case has a = 4/3), so
/// it is damped with weight 1 / (2 + a).
inline ChiSolution self_consistent_chi(double J, double T2_single, const CriticalExponents& e, int d) {
  validate(e);
  require(d >= 1, "dimension must be positive");
  const double L = std::log(J * T2_single);
  if (!(L > 0.0)) throw ParameterError("self-consistent chi needs J T2 > 1");
  ChiSolution out;
  out.exponent = chi_exponent(e, d);
  out.chi = std::exp(to_double(out.exponent) * L);

  const double a = to_double(Rational{d} * e.nu / (Rational{1} + e.z * e.nu));
  const double lambda = 1.0 / (2.0 + a);
  double x = 0.0;
  for (out.iterations = 1; out.iterations <= 10000; ++out.iterations) {
    const double next = (1.0 - lambda) * x + lambda * a * (L - x);
    const bool done = std::abs(next - x) < 1e-14 * std::max(1.0, std::abs(next));
    x = next;
    if (done) break;
  }
  if (out.iterations > 10000) throw InternalError("self-consistent chi iteration did not converge");
  out.fixed_point = std::exp(x);
  return out;
}

/// independent: T2 / xi^d. dipolar_correlated: T2 / sqrt(chi), chi = xi^d,
/// derived for a 2D sensing layer only.
inline double effective_T2(double T2_single, double xi, int d, NoiseCorrelation model) {
  require(T2_single > 0.0 && xi > 0.0 && d >= 1, "effective_T2 inputs must be positive");
  const double chi = std::pow(xi, d);
  if (model == NoiseCorrelation::independent) return T2_single / chi;
  if (d != 2) throw UnsupportedModel("correlated-noise coherence model is derived for d = 2 only");
  return T2_single / std::sqrt(chi);
}

enum class BandwidthRegime { conventional, correlated };

/// delta_omega / delta_B^2: N T conventionally, chi N T with chi correlated spins.
inline double bandwidth_product(BandwidthRegime regime, double N, double T, double chi = 1.0) {
  require(N > 0 && T > 0 && chi > 0, "bandwidth inputs must be positive");
  return regime == BandwidthRegime::conventional ? N * T : chi * N * T;
}

// ---------------------------------------------------------------------------
// Dipolar noise geometry
// ---------------------------------------------------------------------------

struct DipoleNoiseGeometry {
  double a0 = 1.0;     // sensor spacing
  double depth = 1.0;  // fluctuator distance z from the sensing layer
  double m = 1.0;      // dipole magnitude
  double alpha = 0.0;  // tilt from the layer normal
  double n_z = 1.0;    // fluctuators per unit depth
  double mu0 = 1.0;
};

struct FieldVector {
  double z = 0.0;        // normal component
  double in_plane = 0.0; // along the projection of m onto the layer
};

/// Field of one dipole summed over the sensors within radius xi:
/// (mu0 / (4 a0^2)) xi^2 / (z^2 + xi^2)^(3/2) (2 m_z, -m_q).
inline FieldVector dipole_effective_field(const DipoleNoiseGeometry& g, double xi) {
  require(g.a0 > 0.0 && g.depth >= 0.0, "a0 must be positive and depth non-negative");
  require(xi > 0.0, "xi must be positive");
  const double f = g.mu0 / (4.0 * g.a0 * g.a0) * xi * xi / std::pow(g.depth * g.depth + xi * xi, 1.5);
  return {2.0 * g.m * std::cos(g.alpha) * f, -g.m * std::sin(g.alpha) * f};
}

namespace detail {

// Composite 20-point Gauss-Legendre on [a, b] with `panels` equal panels.
template <class F>
double gauss_panels(F&& f, double a, double b, int panels) {
  const double h = (b - a) / panels;
  double total = 0.0;
  for (int k = 0; k < panels; ++k) {
    total += boost::math::quadrature::gauss<double, 20>::integrate(f, a + k * h, a + (k + 1) * h);
  }
  return total;
}

}  // namespace detail

struct NoiseIntegrals {
  double uncorrelated = 0.0;  // integral of S_uncorr n_z over z in (a0, inf)
  double correlated = 0.0;    // integral of S_corr n_z over z in (0, inf)
  double ratio() const { return uncorrelated / correlated; }
};

/// Depth integrals of the two noise densities
///   S_uncorr = (mu0 m)^2 / a0^2 (z^-4 - (z^2 + xi^2)^-2)
///   S_corr   = (mu0 m / a0^2)^2 xi^4 / (z^2 + xi^2)^3
/// evaluated on compact variables (z = a0 / t, z = xi tan theta).
inline NoiseIntegrals noise_integrals(const DipoleNoiseGeometry& g, double xi, int panels = 64) {
  require(g.a0 > 0.0, "a0 must be positive");
  if (xi < g.a0) throw DomainError("xi must be at least the sensor spacing a0");
  const double pref = std::pow(g.mu0 * g.m, 2) * g.n_z;
  const double a0 = g.a0;
  // z^-4 on (a0, inf) with z = a0 / t
  const double near = detail::gauss_panels([&](double t) { return t * t / (a0 * a0 * a0); }, 0.0, 1.0, panels);
  // (z^2 + xi^2)^-2 on (a0, inf) with z = xi tan(theta)
  const double theta0 = std::atan(a0 / xi);
  const double far = detail::gauss_panels(
      [&](double th) { return std::pow(std::cos(th), 2) / (xi * xi * xi); }, theta0, kPi / 2, panels);
  // (z^2 + xi^2)^-3 on (0, inf)
  const double corr = detail::gauss_panels(
      [&](double th) { return std::pow(std::cos(th), 4) / std::pow(xi, 5); }, 0.0, kPi / 2, panels);
  NoiseIntegrals out;
  out.uncorrelated = pref / (a0 * a0) * (near - far);
  out.correlated = pref / std::pow(a0, 4) * std::pow(xi, 4) * corr;
  return out;
}

/// Uncorrelated over correlated integrated noise; grows like xi / a0.
inline double noise_density_ratio(const DipoleNoiseGeometry& g, double xi, int panels = 64) {
  return noise_integrals(g, xi, panels).ratio();
}

// ---------------------------------------------------------------------------
// Disorder-limited preparation
// ---------------------------------------------------------------------------

/// (W/J)^-mu
inline double localization_length(double W_over_J, double mu) {
  require(W_over_J > 0.0 && mu > 0.0, "W/J and mu must be positive");
  return std::pow(W_over_J, -mu);
}

/// (W/J)^(-2 mu) / J
inline double localized_prep_time(double W_over_J, double mu, double J) {
  require(J > 0.0, "J must be positive");
  return std::pow(W_over_J, -2.0 * mu) / J;
}

struct PrepBudget {
  double T_p = 0.0;
  double xi = 1.0;
  bool localization_limited = false;
};

/// Replaces T_p by the localization-limited time when xi_loc < xi(T_p).
inline PrepBudget disorder_limited_prep(double J, double T_p, double W_over_J, const CriticalExponents& e) {
  const double xi = kibble_zurek_xi(J, T_p, e).xi;
  if (W_over_J <= 0.0) return {T_p, xi, false};
  const double xi_loc = localization_length(W_over_J, e.mu);
  if (xi_loc >= xi) return {T_p, xi, false};
  return {localized_prep_time(W_over_J, e.mu, J), xi_loc, true};
}

// ---------------------------------------------------------------------------
// NV field imager
// ---------------------------------------------------------------------------

namespace units {
inline constexpr double mu0_over_4pi = 1e-7;           // T m / A
inline constexpr double bohr_magneton = 9.2740100783e-24;  // J / T
inline constexpr double hbar = 1.054571817e-34;        // J s
inline constexpr double g_nv = 2.0028;
inline constexpr double nm3 = 1e-27;                   // m^3
}  // namespace units

/// Dipolar coupling constant mu0 g^2 muB^2 / (4 pi hbar) in rad/s nm^3.
inline double nv_dipolar_constant() {
  return units::mu0_over_4pi * std::pow(units::g_nv * units::bohr_magneton, 2) / units::hbar / units::nm3;
}

/// J0 / r^3, rad/s with r in nm.
inline double dipolar_coupling(double J0, double r_nm) { return J0 / (r_nm * r_nm * r_nm); }

/// Smallest spacing with J0 / r^3 <= 1 / T2, i.e. (J0 T2)^(1/3).
inline double min_spacing(double J0, double T2) { return std::cbrt(J0 * T2); }

struct ImagerPoint {
  double density = 0.0;   // spins per nm^2
  double spacing = 0.0;   // nm
  double n_probe = 1.0;   // spins inside the (lambda/2)^2 probe area
  double J_dd = 0.0;      // rad/s at the mean spacing
  double T2_conventional = 0.0;
  int regime = 1;         // I: spacing-limited, II: diffraction-limited, III: interaction-limited
  double chi = 1.0;
  double sql_gain = 1.0;        // conventional delta_B^-1 over a single spin
  double uncorrelated_gain = 1.0;  // protocol without the chi^(1/4) factor
  double protocol_gain = 1.0;   // correlated protocol delta_B^-1 over a single spin
};

/// Most spins a conventional probe of side lambda/2 can hold at spacing r_min
/// (at least one).
inline double max_conventional_spins(double lambda_nm, double T2_single, double J0) {
  const double ratio = 0.5 * lambda_nm / min_spacing(J0, T2_single);
  return std::max(1.0, ratio * ratio);
}

/// Sensitivity gain versus 2D spin density for a diffraction-limited imager.
/// Conventional sensing uses T2 = min(T2_single, 1 / J_dd); the protocol keeps
/// T2_single and gains chi^(1/4) with chi from the 2D dipolar self-consistency
/// (capped at the probe spin count).
inline std::vector<ImagerPoint> imager_budget(const std::vector<double>& densities, double lambda_nm,
                                              double T2_single, double J0) {
  require(lambda_nm > 0.0 && T2_single > 0.0 && J0 > 0.0, "imager inputs must be positive");
  const double probe = 0.5 * lambda_nm;
  const double r_min = min_spacing(J0, T2_single);
  std::vector<ImagerPoint> out;
  for (double n : densities) {
    require(n > 0.0, "density must be positive");
    ImagerPoint p;
    p.density = n;
    p.spacing = 1.0 / std::sqrt(n);
    p.n_probe = std::max(1.0, n * probe * probe);
    p.J_dd = dipolar_coupling(J0, p.spacing);
    p.T2_conventional = std::min(T2_single, 1.0 / p.J_dd);
    p.regime = p.spacing >= probe ? 1 : (p.spacing >= r_min ? 2 : 3);
    p.sql_gain = std::sqrt(p.n_probe * p.T2_conventional / T2_single);
    const double jt = p.J_dd * T2_single;
    if (p.regime == 3 && jt > 1.0) {
      p.chi = std::min(p.n_probe,
                       self_consistent_chi(p.J_dd, T2_single, CriticalExponents::dipolar_2d_mean_field(), 2).chi);
    }
    p.uncorrelated_gain = std::sqrt(p.n_probe);
    p.protocol_gain = p.uncorrelated_gain * std::pow(p.chi, 0.25);
    out.push_back(p);
  }
  return out;
}

}  // namespace floqsense

#endif
