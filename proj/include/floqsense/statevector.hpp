#ifndef FLOQSENSE_STATEVECTOR_HPP
#define FLOQSENSE_STATEVECTOR_HPP

// Exact dense simulation of the driven Ising chain.
//
// Basis: sigma^z product states, site 0 is the least significant bit, bit 0
// means spin up (S^z = +1/2). Evolution is matrix-free; dense 2^N x 2^N
// matrices are only built on request (build_h0, build_h0_sector).

#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "floqsense/errors.hpp"
#include "floqsense/model.hpp"

namespace floqsense {

using cplx = std::complex<double>;

inline constexpr int kDefaultMaxSites = 14;

inline void check_size(int n_sites, int max_sites = kDefaultMaxSites) {
  if (n_sites < 1) throw ParameterError("state vector needs at least one site");
  if (n_sites > max_sites) {
    throw SizeError("N = " + std::to_string(n_sites) + " exceeds the dense-engine cap of " +
                    std::to_string(max_sites));
  }
}

class QuantumState {
 public:
  QuantumState() = default;

  /// |up up ... up>
  explicit QuantumState(int n_sites, int max_sites = kDefaultMaxSites) : n_(n_sites) {
    check_size(n_sites, max_sites);
    amp_ = Eigen::VectorXcd::Zero(Eigen::Index{1} << n_sites);
    amp_(0) = 1.0;
  }

  QuantumState(int n_sites, Eigen::VectorXcd amplitudes) : n_(n_sites), amp_(std::move(amplitudes)) {
    if (amp_.size() != (Eigen::Index{1} << n_sites)) {
      throw ParameterError("amplitude vector length must be 2^N");
    }
  }

  /// All spins along +x.
  static QuantumState x_polarized(int n_sites) {
    QuantumState s(n_sites);
    s.amp_.setConstant(std::pow(2.0, -0.5 * n_sites));
    return s;
  }

  /// (|up...up> + sign |down...down>) / sqrt(2)
  static QuantumState ghz(int n_sites, int sign = +1) {
    QuantumState s(n_sites);
    s.amp_(0) = std::sqrt(0.5);
    s.amp_(s.amp_.size() - 1) = sign * std::sqrt(0.5);
    return s;
  }

  int sites() const { return n_; }
  std::size_t dim() const { return static_cast<std::size_t>(amp_.size()); }
  Eigen::VectorXcd& amplitudes() { return amp_; }
  const Eigen::VectorXcd& amplitudes() const { return amp_; }
  double norm() const { return amp_.norm(); }
  void normalize() { amp_.normalize(); }

 private:
  int n_ = 0;
  Eigen::VectorXcd amp_;
};

inline cplx overlap(const QuantumState& a, const QuantumState& b) {
  return a.amplitudes().dot(b.amplitudes());
}

inline double fidelity(const QuantumState& a, const QuantumState& b) {
  return std::norm(overlap(a, b));
}

// ---------------------------------------------------------------------------
// Diagonal pieces and Hamiltonian assembly
// ---------------------------------------------------------------------------

/// <s| -sum_b J_b S^z_i S^z_j |s> for every basis state.
inline std::vector<double> ising_diagonal(const DisorderRealization& r) {
  const std::size_t dim = std::size_t{1} << r.N;
  std::vector<double> diag(dim, 0.0);
  for (std::size_t s = 0; s < dim; ++s) {
    double e = 0.0;
    for (const auto& b : r.bonds) {
      const bool aligned = ((s >> b.i) & 1U) == ((s >> b.j) & 1U);
      e -= 0.25 * b.J * (aligned ? 1.0 : -1.0);
    }
    diag[s] = e;
  }
  return diag;
}

/// sum_i S^z_i of basis state s.
inline double magnetization(std::size_t s, int n_sites) {
  return 0.5 * (n_sites - 2 * std::popcount(s));
}

/// Dense H0 = -sum J_b S^z S^z - sum_i Omega_i S^x_i in the sigma^z basis.
inline Eigen::MatrixXd build_h0(const DisorderRealization& r, double omega,
                                int max_sites = kDefaultMaxSites) {
  check_size(r.N, max_sites);
  const auto dim = Eigen::Index{1} << r.N;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
  const auto diag = ising_diagonal(r);
  for (Eigen::Index s = 0; s < dim; ++s) {
    h(s, s) = diag[static_cast<std::size_t>(s)];
    for (int i = 0; i < r.N; ++i) h(s ^ (Eigen::Index{1} << i), s) -= 0.5 * r.field(i, omega);
  }
  return h;
}

/// Block of H0 in one parity sector of prod(2 S^x), written in the S^x
/// product basis (bit 1 = spin along -x). Parity of a state is (-1)^popcount.
inline Eigen::MatrixXd build_h0_sector(const DisorderRealization& r, double omega, int parity,
                                       int max_sites = kDefaultMaxSites) {
  check_size(r.N, max_sites);
  require(parity == 1 || parity == -1, "parity must be +1 or -1");
  const std::size_t full = std::size_t{1} << r.N;
  std::vector<long> index(full, -1);
  std::vector<std::size_t> states;
  for (std::size_t s = 0; s < full; ++s) {
    const int p = (std::popcount(s) % 2 == 0) ? 1 : -1;
    if (p == parity) {
      index[s] = static_cast<long>(states.size());
      states.push_back(s);
    }
  }
  const auto dim = static_cast<Eigen::Index>(states.size());
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
  for (Eigen::Index a = 0; a < dim; ++a) {
    const std::size_t s = states[static_cast<std::size_t>(a)];
    for (int i = 0; i < r.N; ++i) {
      const double sx = ((s >> i) & 1U) ? -0.5 : 0.5;
      h(a, a) -= r.field(i, omega) * sx;
    }
    for (const auto& b : r.bonds) {
      const std::size_t t = s ^ (std::size_t{1} << b.i) ^ (std::size_t{1} << b.j);
      h(index[t], a) -= 0.25 * b.J;
    }
  }
  return h;
}

// ---------------------------------------------------------------------------
// Single-shot operations on states
// ---------------------------------------------------------------------------

/// exp(-i angle_i S^x_i) on every site.
inline void apply_x_rotations(QuantumState& psi, std::span<const double> angles) {
  auto& a = psi.amplitudes();
  const auto dim = static_cast<std::size_t>(a.size());
  for (int i = 0; i < psi.sites(); ++i) {
    const double c = std::cos(0.5 * angles[i]);
    const cplx mis(0.0, -std::sin(0.5 * angles[i]));
    const std::size_t bit = std::size_t{1} << i;
    for (std::size_t base = 0; base < dim; base += 2 * bit) {
      for (std::size_t s = base; s < base + bit; ++s) {
        const cplx x0 = a[s];
        const cplx x1 = a[s | bit];
        a[s] = c * x0 + mis * x1;
        a[s | bit] = mis * x0 + c * x1;
      }
    }
  }
}

/// Global pi pulse with per-site angle errors: prod_i exp(-i (pi + dtheta_i) S^x_i).
inline void apply_pulse(QuantumState& psi, std::span<const double> pulse_errors) {
  std::vector<double> angles(psi.sites(), kPi);
  for (int i = 0; i < psi.sites() && i < static_cast<int>(pulse_errors.size()); ++i) {
    angles[i] += pulse_errors[i];
  }
  apply_x_rotations(psi, angles);
}

/// exp(-i angle sum_i S^z_i)
inline void apply_z_rotation(QuantumState& psi, double angle) {
  auto& a = psi.amplitudes();
  for (Eigen::Index s = 0; s < a.size(); ++s) {
    a[s] *= std::exp(cplx(0.0, -angle * magnetization(static_cast<std::size_t>(s), psi.sites())));
  }
}

/// In-place transform to the S^x product basis (bit 1 = -x).
inline Eigen::VectorXcd to_x_basis(const QuantumState& psi) {
  Eigen::VectorXcd a = psi.amplitudes();
  const auto dim = static_cast<std::size_t>(a.size());
  const double r = std::sqrt(0.5);
  for (int i = 0; i < psi.sites(); ++i) {
    const std::size_t bit = std::size_t{1} << i;
    for (std::size_t base = 0; base < dim; base += 2 * bit) {
      for (std::size_t s = base; s < base + bit; ++s) {
        const cplx x0 = a[s];
        const cplx x1 = a[s | bit];
        a[s] = r * (x0 + x1);
        a[s | bit] = r * (x0 - x1);
      }
    }
  }
  return a;
}

/// Probability of finding m spins along -x, m = 0..N.
inline std::vector<double> flip_distribution(const QuantumState& psi) {
  const Eigen::VectorXcd ax = to_x_basis(psi);
  std::vector<double> p(psi.sites() + 1, 0.0);
  for (Eigen::Index s = 0; s < ax.size(); ++s) {
    p[std::popcount(static_cast<std::size_t>(s))] += std::norm(ax[s]);
  }
  return p;
}

/// <prod_i 2 S^x_i>, evaluated in the Hadamard-rotated basis.
inline double parity_expectation(const QuantumState& psi) {
  const Eigen::VectorXcd ax = to_x_basis(psi);
  double p = 0.0;
  for (Eigen::Index s = 0; s < ax.size(); ++s) {
    p += (std::popcount(static_cast<std::size_t>(s)) % 2 == 0 ? 1.0 : -1.0) * std::norm(ax[s]);
  }
  return p;
}

/// <sum_i S^x_i>
inline double total_sx(const QuantumState& psi) {
  const auto& a = psi.amplitudes();
  double sx = 0.0;
  for (int i = 0; i < psi.sites(); ++i) {
    const std::size_t bit = std::size_t{1} << i;
    for (Eigen::Index s = 0; s < a.size(); ++s) {
      sx += 0.5 * std::real(std::conj(a[s]) * a[static_cast<Eigen::Index>(static_cast<std::size_t>(s) ^ bit)]);
    }
  }
  return sx;
}

/// Spin flips relative to the x-polarized paramagnet: N/2 - <sum S^x>.
inline double excitation_number(const QuantumState& psi) { return 0.5 * psi.sites() - total_sx(psi); }

inline double sz_expectation(const QuantumState& psi, int i) {
  const auto& a = psi.amplitudes();
  double v = 0.0;
  for (Eigen::Index s = 0; s < a.size(); ++s) {
    v += (((static_cast<std::size_t>(s) >> i) & 1U) ? -0.5 : 0.5) * std::norm(a[s]);
  }
  return v;
}

/// Connected <S^z_i S^z_j> - <S^z_i><S^z_j>.
inline double zz_correlator(const QuantumState& psi, int i, int j) {
  require(i >= 0 && j >= 0 && i < psi.sites() && j < psi.sites(), "site index out of range");
  const auto& a = psi.amplitudes();
  double zz = 0.0;
  for (Eigen::Index s = 0; s < a.size(); ++s) {
    const auto u = static_cast<std::size_t>(s);
    const bool aligned = ((u >> i) & 1U) == ((u >> j) & 1U);
    zz += (aligned ? 0.25 : -0.25) * std::norm(a[s]);
  }
  return zz - sz_expectation(psi, i) * sz_expectation(psi, j);
}

/// <(sum_i S^z_i)^2>
inline double sz_total_second_moment(const QuantumState& psi) {
  const auto& a = psi.amplitudes();
  double m2 = 0.0;
  for (Eigen::Index s = 0; s < a.size(); ++s) {
    const double m = magnetization(static_cast<std::size_t>(s), psi.sites());
    m2 += m * m * std::norm(a[s]);
  }
  return m2;
}

/// Fraction of bonds carrying a domain wall, sum_b <1/2 - 2 S^z_i S^z_j> / n_bonds.
inline double domain_wall_density(const QuantumState& psi, const DisorderRealization& r) {
  if (r.bonds.empty()) return 0.0;
  const auto& a = psi.amplitudes();
  double walls = 0.0;
  for (const auto& b : r.bonds) {
    for (Eigen::Index s = 0; s < a.size(); ++s) {
      const auto u = static_cast<std::size_t>(s);
      if (((u >> b.i) & 1U) != ((u >> b.j) & 1U)) walls += std::norm(a[s]);
    }
  }
  return walls / static_cast<double>(r.bonds.size());
}

// ---------------------------------------------------------------------------
// Time evolution
// ---------------------------------------------------------------------------

/// A stretch of continuous evolution. Time-dependent pieces are sampled at
/// substep midpoints with t measured from the start of the segment.
struct EvolutionSegment {
  double duration = 0.0;
  std::function<double(double)> transverse;  // nominal Omega(t); empty means 0
  std::function<double(double)> signal;      // lab-frame B(t) on sum S^z; empty means 0
  double static_z = 0.0;                     // static epsilon on sum S^z
  double max_step = 2e-3;
};

struct EvolutionReport {
  int pulses = 0;
  long steps = 0;
  double norm_drift = 0.0;
};

/// Strang-split propagator for one realization. Diagonal part (Ising plus
/// longitudinal field) is applied in closed form around a full transverse
/// step. Instantaneous pi pulses fire at the end of every Floquet period; a
/// trailing partial period evolves without a final pulse.
class ChainSimulator {
 public:
  explicit ChainSimulator(DisorderRealization realization, int max_sites = kDefaultMaxSites)
      : r_(std::move(realization)) {
    check_size(r_.N, max_sites);
    ising_ = ising_diagonal(r_);
    const std::size_t dim = ising_.size();
    popcount_.resize(dim);
    for (std::size_t s = 0; s < dim; ++s) popcount_[s] = static_cast<std::uint8_t>(std::popcount(s));
  }

  const DisorderRealization& realization() const { return r_; }
  std::span<const double> ising() const { return ising_; }

  /// out = H0(Omega) in, real arithmetic.
  void apply_h0(const Eigen::VectorXd& in, Eigen::VectorXd& out, double omega) const {
    out.resize(in.size());
    for (Eigen::Index s = 0; s < in.size(); ++s) out[s] = ising_[static_cast<std::size_t>(s)] * in[s];
    for (int i = 0; i < r_.N; ++i) {
      const double f = -0.5 * r_.field(i, omega);
      const Eigen::Index bit = Eigen::Index{1} << i;
      for (Eigen::Index s = 0; s < in.size(); ++s) out[s] += f * in[s ^ bit];
    }
  }

  EvolutionReport evolve(QuantumState& psi, const EvolutionSegment& seg,
                         const DriveSpec* drive = nullptr) const {
    require(psi.sites() == r_.N, "state and realization sizes differ");
    require(seg.duration >= 0.0, "segment duration must be non-negative");
    require(seg.max_step > 0.0, "max_step must be positive");
    EvolutionReport report;
    const double norm0 = psi.norm();

    std::vector<std::pair<double, bool>> marks;  // (interval end, pulse at end)
    if (drive != nullptr && drive->enabled) {
      validate(*drive);
      const double tau = drive->period();
      const auto periods = static_cast<long>(std::floor(seg.duration / tau + 1e-9));
      for (long n = 1; n <= periods; ++n) marks.emplace_back(std::min(n * tau, seg.duration), true);
      if (marks.empty() || marks.back().first < seg.duration - 1e-12) marks.emplace_back(seg.duration, false);
    } else {
      marks.emplace_back(seg.duration, false);
    }

    StepCache cache;
    double start = 0.0;
    for (const auto& [end, pulse] : marks) {
      const double length = end - start;
      if (length > 1e-14) {
        const long n_sub = std::max(1L, static_cast<long>(std::ceil(length / seg.max_step - 1e-9)));
        const double h = length / static_cast<double>(n_sub);
        for (long k = 0; k < n_sub; ++k) {
          const double tm = start + (static_cast<double>(k) + 0.5) * h;
          const double omega = seg.transverse ? seg.transverse(tm) : 0.0;
          const double bz = (seg.signal ? seg.signal(tm) : 0.0) + seg.static_z;
          strang_step(psi, h, omega, bz, cache);
          ++report.steps;
        }
      }
      if (pulse) {
        apply_pulse(psi, r_.pulse_errors);
        ++report.pulses;
      }
      start = end;
    }

    report.norm_drift = std::abs(psi.norm() - norm0);
    if (report.norm_drift > 1e-8) {
      throw IntegratorError("norm drift " + std::to_string(report.norm_drift) +
                            " exceeds 1e-8; reduce max_step");
    }
    return report;
  }

 private:
  struct StepCache {
    double h = -1.0;
    std::vector<cplx> ising_half;
  };

  void strang_step(QuantumState& psi, double h, double omega, double bz, StepCache& cache) const {
    if (cache.h != h) {
      cache.h = h;
      cache.ising_half.resize(ising_.size());
      for (std::size_t s = 0; s < ising_.size(); ++s) {
        cache.ising_half[s] = std::exp(cplx(0.0, -0.5 * h * ising_[s]));
      }
    }
    std::vector<cplx> zphase(r_.N + 1);
    for (int k = 0; k <= r_.N; ++k) {
      zphase[k] = std::exp(cplx(0.0, -0.5 * h * bz * 0.5 * (r_.N - 2 * k)));
    }
    auto& a = psi.amplitudes();
    const auto half_diag = [&] {
      for (Eigen::Index s = 0; s < a.size(); ++s) {
        const auto u = static_cast<std::size_t>(s);
        a[s] *= cache.ising_half[u] * zphase[popcount_[u]];
      }
    };
    half_diag();
    if (omega != 0.0 || has_field_disorder()) {
      std::vector<double> angles(r_.N);
      // H0 carries -Omega_i S^x_i, so the step is exp(+i h Omega_i S^x_i).
      for (int i = 0; i < r_.N; ++i) angles[i] = -h * r_.field(i, omega);
      apply_x_rotations(psi, angles);
    }
    half_diag();
  }

  bool has_field_disorder() const {
    for (double d : r_.field_offsets) {
      if (d != 0.0) return true;
    }
    return false;
  }

  DisorderRealization r_;
  std::vector<double> ising_;
  std::vector<std::uint8_t> popcount_;
};

// ---------------------------------------------------------------------------
// Ground states
// ---------------------------------------------------------------------------

struct GroundState {
  QuantumState state;
  double energy = 0.0;
  int iterations = 0;
};

/// Lowest eigenpair of H0(Omega) inside one parity sector of prod(2 S^x),
/// by Lanczos with full reorthogonalization. Restricting to a sector picks
/// |G+> (parity +1) out of the degenerate Omega = 0 ground manifold.
inline GroundState ground_state(const DisorderRealization& r, double omega, int parity = +1,
                                int max_sites = kDefaultMaxSites) {
  require(parity == 1 || parity == -1, "parity must be +1 or -1");
  const ChainSimulator sim(r, max_sites);
  const Eigen::Index dim = Eigen::Index{1} << r.N;
  const Eigen::Index mask = dim - 1;

  // prod(2 S^x) maps basis state s to s ^ mask.
  const auto project = [&](Eigen::VectorXd& v) {
    Eigen::VectorXd w(v.size());
    for (Eigen::Index s = 0; s < dim; ++s) w[s] = 0.5 * (v[s] + parity * v[s ^ mask]);
    v = std::move(w);
  };

  Eigen::VectorXd v(dim);
  for (Eigen::Index s = 0; s < dim; ++s) v[s] = 1.0 + 0.5 * std::sin(1.7 * static_cast<double>(s) + 0.3);
  project(v);
  if (v.norm() == 0.0) throw InternalError("empty parity sector start vector");
  v.normalize();

  const Eigen::Index sector_dim = std::max<Eigen::Index>(1, dim / 2);
  const int max_iter = static_cast<int>(std::min<Eigen::Index>(sector_dim, 500));
  std::vector<Eigen::VectorXd> basis;
  std::vector<double> alpha, beta;
  basis.push_back(v);
  Eigen::VectorXd w;
  double theta = 0.0;
  Eigen::VectorXd y;
  int iterations = 0;

  for (int m = 0; m < max_iter; ++m) {
    sim.apply_h0(basis.back(), w, omega);
    project(w);
    alpha.push_back(basis.back().dot(w));
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& q : basis) w -= q.dot(w) * q;
    }
    const double b = w.norm();
    iterations = m + 1;

    const auto k = static_cast<Eigen::Index>(alpha.size());
    Eigen::VectorXd d = Eigen::Map<Eigen::VectorXd>(alpha.data(), k);
    Eigen::VectorXd e = k > 1 ? Eigen::VectorXd(Eigen::Map<Eigen::VectorXd>(beta.data(), k - 1))
                              : Eigen::VectorXd();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> tri;
    tri.computeFromTridiagonal(d, e, Eigen::ComputeEigenvectors);
    theta = tri.eigenvalues()[0];
    y = tri.eigenvectors().col(0);
    const double residual = b * std::abs(y[k - 1]);
    if (residual < 1e-12 * std::max(1.0, std::abs(theta)) || b < 1e-13) break;
    beta.push_back(b);
    basis.push_back(w / b);
  }

  Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
  for (Eigen::Index k = 0; k < y.size(); ++k) g += y[k] * basis[static_cast<std::size_t>(k)];
  g.normalize();
  // Deterministic sign: largest component positive.
  Eigen::Index imax = 0;
  g.cwiseAbs().maxCoeff(&imax);
  if (g[imax] < 0) g = -g;

  Eigen::VectorXd hg;
  sim.apply_h0(g, hg, omega);
  return {QuantumState(r.N, g.cast<cplx>()), g.dot(hg), iterations};
}

// ---------------------------------------------------------------------------
// Adiabatic initialization
// ---------------------------------------------------------------------------

/// Minimum ratio |omega_0 - 2 omega_s| / max(Omega, J) treated as "far detuned".
inline constexpr double kFarDetuningRatio = 10.0;

inline std::optional<std::string> detuning_warning(const DriveSpec& drive, const SignalSpec& signal,
                                                   double omega_max, double J,
                                                   const std::string& stage) {
  if (!drive.enabled || signal.B == 0.0) return std::nullopt;
  const double detuning = std::abs(drive.omega_0 - 2.0 * signal.omega_s);
  const double scale = std::max(omega_max, J);
  if (detuning < kFarDetuningRatio * scale) {
    return stage + ": drive detuning |omega_0 - 2 omega_s| = " + std::to_string(detuning) +
           " is not >> max(Omega, J) = " + std::to_string(scale);
  }
  return std::nullopt;
}

struct RampResult {
  QuantumState state;
  double ghz_fidelity = 0.0;
  /// Overlap with the even-sector ground state at omega_stop.
  double ground_fidelity = 0.0;
  double domain_wall_density = 0.0;
  EvolutionReport report;
  std::vector<std::string> warnings;
};

/// Signal as seen by a stage that starts `offset` after the signal clock origin.
inline std::function<double(double)> lab_signal(const SignalSpec& s, double offset) {
  if (s.B == 0.0) return {};
  return [s, offset](double t) { return s.B * std::sin(s.omega_s * (t + offset) + s.phase0); };
}

/// Initialization stage: start in |+x...+x> (or the exact ground state at
/// omega_init), ramp Omega to omega_stop over T_p under the preparation drive.
/// The signal clock origin is the end of the ramp.
inline RampResult run_adiabatic_ramp(const DisorderRealization& r, const ProtocolSchedule& schedule,
                                     const SignalSpec& signal = {}) {
  validate(schedule);
  RampResult out;
  if (auto w = detuning_warning(schedule.prep_drive, signal, schedule.omega_init, r.J_nominal,
                                "initialization")) {
    out.warnings.push_back(*w);
  }
  const ChainSimulator sim(r);
  out.state = schedule.initial_state == InitialState::ground
                  ? ground_state(r, schedule.omega_init, +1).state
                  : QuantumState::x_polarized(r.N);

  EvolutionSegment seg;
  seg.duration = schedule.T_p;
  seg.transverse = ramp_profile(schedule.ramp, schedule.omega_init, schedule.omega_stop, schedule.T_p);
  seg.signal = lab_signal(signal, -schedule.T_p);
  seg.max_step = schedule.max_step;
  out.report = sim.evolve(out.state, seg, &schedule.prep_drive);

  out.ghz_fidelity = fidelity(QuantumState::ghz(r.N, +1), out.state);
  out.ground_fidelity =
      schedule.omega_stop == 0.0 ? out.ghz_fidelity
                                 : fidelity(ground_state(r, schedule.omega_stop, +1).state, out.state);
  out.domain_wall_density = domain_wall_density(out.state, r);
  return out;
}

// ---------------------------------------------------------------------------
// Echo diagnostic
// ---------------------------------------------------------------------------

/// Parity leakage (1 - <P>)/2 under H0(omega) + eps sum S^z with the pi-train
/// `drive`, starting from the even ground state. Sampled after every pair of
/// pulses (toggling frame back to the lab frame) and averaged over `duration`,
/// so micromotion and slow Rabi beating do not enter.
inline double echo_leakage(const DisorderRealization& r, double omega, double eps, const DriveSpec& drive,
                           double duration, int steps_per_period = 20) {
  validate(drive);
  require(duration > 0.0 && steps_per_period > 0, "duration and steps_per_period must be positive");
  const double cycle = 2.0 * drive.period();
  EvolutionSegment seg;
  seg.duration = cycle;
  seg.transverse = [omega](double) { return omega; };
  seg.static_z = eps;
  seg.max_step = drive.period() / steps_per_period;
  const ChainSimulator sim(r);
  auto psi = ground_state(r, omega, +1).state;
  const long cycles = std::max(1L, static_cast<long>(std::ceil(duration / cycle)));
  double acc = 0.0;
  for (long k = 0; k < cycles; ++k) {
    sim.evolve(psi, seg, &drive);
    acc += 0.5 * (1.0 - parity_expectation(psi));
  }
  return acc / static_cast<double>(cycles);
}

}  // namespace floqsense

#endif
