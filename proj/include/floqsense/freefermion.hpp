#ifndef FLOQSENSE_FREEFERMION_HPP
#define FLOQSENSE_FREEFERMION_HPP

// Jordan-Wigner / BdG treatment of the nearest-neighbour chain.
//
// The 2N x 2N BdG matrix H = [[A, B], [-B, -A]] (A symmetric, B antisymmetric)
// is orthogonally equivalent to [[0, C], [C^T, 0]] with C = A - B, so its
// eigenvalues are plus/minus the singular values of the N x N block C. Full
// solutions use an SVD of C; localization sweeps only need a few modes near
// zero energy and take a banded selected-eigenpair route instead.
//
// Energy bookkeeping: the matrix eigenvalues are +-eps/2, where eps is the
// quasiparticle energy entering H0 = E0 + sum_n eps_n (n_n), E0 = -sum sigma.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/numeric/odeint.hpp>
#include <lapacke.h>

#include "floqsense/errors.hpp"
#include "floqsense/model.hpp"
#include "floqsense/parallel.hpp"
#include "floqsense/random.hpp"

namespace floqsense {

enum class FermionBoundary { antiperiodic, periodic, open };

struct BdgMatrix {
  int N = 0;
  FermionBoundary boundary = FermionBoundary::antiperiodic;
  Eigen::MatrixXd H;  // 2N x 2N, particle block first
};

namespace detail {

inline void require_fermion_chain(const DisorderRealization& r) {
  if (!r.nearest_neighbor) {
    throw UnsupportedModel("free-fermion engine needs nearest-neighbour couplings");
  }
  require(r.N >= 2 && r.N % 2 == 0, "free-fermion engine needs an even N >= 2");
}

inline FermionBoundary effective_boundary(const DisorderRealization& r, FermionBoundary b) {
  return r.boundary == Boundary::open ? FermionBoundary::open : b;
}

}  // namespace detail

/// H_ij blocks: A_ii = -Omega_i/2, A_{i,i+1} = J_i/8, B_{i,i+1} = -B_{i+1,i} = J_i/8,
/// closed by c_N = -c_0 (antiperiodic) or c_N = c_0 (periodic).
inline BdgMatrix build_bdg(const DisorderRealization& r, double omega,
                           FermionBoundary boundary = FermionBoundary::antiperiodic) {
  detail::require_fermion_chain(r);
  boundary = detail::effective_boundary(r, boundary);
  const int n = r.N;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) A(i, i) = -0.5 * r.field(i, omega);
  for (const auto& b : r.bonds) {
    const bool wraps = (b.i == n - 1 && b.j == 0) || (b.i == 0 && b.j == n - 1);
    if (!wraps) {
      const int i = std::min(b.i, b.j);
      A(i, i + 1) = A(i + 1, i) = b.J / 8.0;
      B(i, i + 1) = b.J / 8.0;
      B(i + 1, i) = -b.J / 8.0;
    } else if (boundary != FermionBoundary::open) {
      const double s = boundary == FermionBoundary::antiperiodic ? -1.0 : 1.0;
      A(n - 1, 0) = A(0, n - 1) = s * b.J / 8.0;
      B(n - 1, 0) = s * b.J / 8.0;
      B(0, n - 1) = -s * b.J / 8.0;
    }
  }
  BdgMatrix m{n, boundary, Eigen::MatrixXd(2 * n, 2 * n)};
  m.H << A, B, -B, -A;
  return m;
}

/// C = A - B: lower bidiagonal plus one corner entry for closed chains.
inline Eigen::MatrixXd chiral_block(const DisorderRealization& r, double omega,
                                    FermionBoundary boundary = FermionBoundary::antiperiodic) {
  detail::require_fermion_chain(r);
  boundary = detail::effective_boundary(r, boundary);
  const int n = r.N;
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) C(i, i) = -0.5 * r.field(i, omega);
  for (const auto& b : r.bonds) {
    const bool wraps = (b.i == n - 1 && b.j == 0) || (b.i == 0 && b.j == n - 1);
    if (!wraps) {
      const int i = std::min(b.i, b.j);
      C(i + 1, i) = b.J / 4.0;
    } else if (boundary != FermionBoundary::open) {
      C(0, n - 1) = (boundary == FermionBoundary::antiperiodic ? -1.0 : 1.0) * b.J / 4.0;
    }
  }
  return C;
}

struct BdgSolution {
  int N = 0;
  FermionBoundary boundary = FermionBoundary::antiperiodic;
  /// Singular values of C, ascending (the non-negative BdG eigenvalues).
  Eigen::VectorXd sigma;
  /// Left/right singular vectors, columns aligned with sigma. Empty when
  /// vectors were not requested.
  Eigen::MatrixXd left;
  Eigen::MatrixXd right;
  /// Fermion parity of the quasiparticle vacuum, sign(det C).
  int vacuum_parity = 1;

  /// All 2N matrix eigenvalues, ascending.
  Eigen::VectorXd eigenvalues() const {
    Eigen::VectorXd e(2 * N);
    for (int i = 0; i < N; ++i) {
      e[i] = -sigma[N - 1 - i];
      e[N + i] = sigma[i];
    }
    return e;
  }
  Eigen::VectorXd quasiparticle_energies() const { return 2.0 * sigma; }
  double ground_energy() const { return -sigma.sum(); }

  /// |u_i|^2 + |v_i|^2 of positive mode n; sums to one over sites.
  Eigen::VectorXd mode_weights(int n) const {
    require(left.cols() == N, "mode vectors were not computed");
    return 0.5 * (left.col(n).array().square() + right.col(n).array().square()).matrix();
  }
  double ipr(int n) const { return mode_weights(n).array().square().sum(); }
};

namespace detail {

// sign(det C) for the bidiagonal-plus-corner structure, computed in log space:
// det C = prod_i C_ii + (-1)^(N-1) C_{0,N-1} prod_i C_{i+1,i}.
inline int chiral_det_sign(const Eigen::MatrixXd& C) {
  const auto n = C.rows();
  double log1 = 0.0, log2 = 0.0;
  int sign1 = 1, sign2 = 1;
  bool zero1 = false, zero2 = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = C(i, i);
    if (d == 0.0) zero1 = true;
    else {
      log1 += std::log(std::abs(d));
      if (d < 0) sign1 = -sign1;
    }
  }
  if (n == 1) return zero1 ? 1 : sign1;
  double corner = C(0, n - 1);
  if (corner == 0.0) zero2 = true;
  else {
    log2 += std::log(std::abs(corner));
    if (corner < 0) sign2 = -sign2;
  }
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    const double l = C(i + 1, i);
    if (l == 0.0) zero2 = true;
    else {
      log2 += std::log(std::abs(l));
      if (l < 0) sign2 = -sign2;
    }
  }
  if ((n - 1) % 2 == 1) sign2 = -sign2;
  if (zero1 && zero2) return 1;
  if (zero2) return sign1;
  if (zero1) return sign2;
  if (sign1 == sign2) return sign1;
  return log1 >= log2 ? sign1 : sign2;
}

}  // namespace detail

inline BdgSolution solve_chiral(const Eigen::MatrixXd& C, FermionBoundary boundary,
                                bool want_vectors = true) {
  const auto n = static_cast<lapack_int>(C.rows());
  Eigen::MatrixXd a = C;  // dgesdd overwrites its input
  Eigen::VectorXd s(n);
  Eigen::MatrixXd U, VT;
  const char jobz = want_vectors ? 'A' : 'N';
  if (want_vectors) {
    U.resize(n, n);
    VT.resize(n, n);
  }
  double dummy = 0.0;
  const lapack_int info =
      LAPACKE_dgesdd(LAPACK_COL_MAJOR, jobz, n, n, a.data(), n, s.data(),
                     want_vectors ? U.data() : &dummy, n, want_vectors ? VT.data() : &dummy, n);
  if (info != 0) throw InternalError("dgesdd failed with info = " + std::to_string(info));

  BdgSolution sol;
  sol.N = static_cast<int>(n);
  sol.boundary = boundary;
  sol.sigma = s.reverse();
  if (want_vectors) {
    sol.left = U.rowwise().reverse();
    sol.right = VT.transpose().rowwise().reverse();
  }
  sol.vacuum_parity = detail::chiral_det_sign(C);
  return sol;
}

inline BdgSolution solve_bdg(const DisorderRealization& r, double omega,
                             FermionBoundary boundary = FermionBoundary::antiperiodic,
                             bool want_vectors = true) {
  boundary = detail::effective_boundary(r, boundary);
  return solve_chiral(chiral_block(r, omega, boundary), boundary, want_vectors);
}

struct LowModes {
  /// The `count` smallest singular values of C, ascending.
  Eigen::VectorXd sigma;
  /// Column n holds |u_i|^2 + |v_i|^2 of mode n.
  Eigen::MatrixXd weights;

  double ipr(int n) const { return weights.col(n).array().square().sum(); }
};

/// Lowest `count` positive BdG modes without a full SVD. Sites are laid out
/// in ring order 0, N-1, 1, N-2, ... so the closure bond stays local; the
/// interleaved (particle, hole) matrix K = [[0, C], [C^T, 0]] is then banded
/// with half-bandwidth 5. Eigenvalues come from LAPACK dsbevx, vectors from
/// inverse iteration on the banded LU of K - lambda, orthogonalized inside
/// near-degenerate clusters.
inline LowModes lowest_modes(const DisorderRealization& r, double omega, int count,
                             FermionBoundary boundary = FermionBoundary::antiperiodic) {
  require(count >= 1 && count <= r.N, "count must lie in [1, N]");
  const Eigen::MatrixXd C = chiral_block(r, omega, boundary);
  const int n = r.N;
  std::vector<int> pos(static_cast<std::size_t>(n));
  for (int p = 0; p < n; ++p) pos[p % 2 == 0 ? p / 2 : n - 1 - (p - 1) / 2] = p;

  const lapack_int dim = 2 * n;
  const lapack_int kd = 5;
  // Entries of K in the interleaved ordering, upper triangle only.
  struct Entry {
    lapack_int i, j;
    double v;
  };
  std::vector<Entry> entries;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double c = C(i, j);
      if (c == 0.0) continue;
      lapack_int a = 2 * pos[i], b = 2 * pos[j] + 1;
      if (a > b) std::swap(a, b);
      if (b - a > kd) throw InternalError("band layout violated");
      entries.push_back({a, b, c});
    }
  }

  // Upper symmetric band storage: ab(kd + i - j, j) = K(i, j), i <= j.
  Eigen::MatrixXd ab = Eigen::MatrixXd::Zero(kd + 1, dim);
  for (const auto& e : entries) ab(kd + e.i - e.j, e.j) = e.v;
  Eigen::VectorXd w(dim);
  std::vector<lapack_int> ifail(static_cast<std::size_t>(dim));
  lapack_int found = 0;
  double qdummy = 0.0, zdummy = 0.0;
  const double abstol = 2.0 * LAPACKE_dlamch('S');
  lapack_int info = LAPACKE_dsbevx(LAPACK_COL_MAJOR, 'N', 'I', 'U', dim, kd, ab.data(), kd + 1, &qdummy, 1,
                                   0.0, 0.0, n + 1, n + count, abstol, &found, w.data(), &zdummy, 1,
                                   ifail.data());
  if (info != 0 || found != count) {
    throw InternalError("dsbevx failed with info = " + std::to_string(info));
  }

  // General band storage for dgbtrf: kl = ku = kd, ldab = 3 kd + 1.
  const lapack_int ldgb = 3 * kd + 1;
  double scale = 0.0;
  for (const auto& e : entries) scale = std::max(scale, std::abs(e.v));
  const double cluster_tol = 1e-3 * scale;
  Eigen::MatrixXd z(dim, count);
  Engine engine(0x5eed);
  for (int m = 0; m < count; ++m) {
    // Nudge the shift so the factorization stays nonsingular.
    const double shift = w[m] + 1e-14 * std::max(scale, std::abs(w[m]));
    Eigen::MatrixXd gb = Eigen::MatrixXd::Zero(ldgb, dim);
    for (const auto& e : entries) {
      gb(2 * kd + e.i - e.j, e.j) = e.v;
      gb(2 * kd + e.j - e.i, e.i) = e.v;
    }
    for (lapack_int k = 0; k < dim; ++k) gb(2 * kd, k) = -shift;
    std::vector<lapack_int> piv(static_cast<std::size_t>(dim));
    info = LAPACKE_dgbtrf(LAPACK_COL_MAJOR, dim, dim, kd, kd, gb.data(), ldgb, piv.data());
    if (info < 0) throw InternalError("dgbtrf failed with info = " + std::to_string(info));
    if (info > 0) gb(2 * kd, info - 1) = std::numeric_limits<double>::epsilon() * scale;

    Eigen::VectorXd x(dim);
    for (lapack_int k = 0; k < dim; ++k) x[k] = uniform(engine, -1.0, 1.0);
    for (int it = 0; it < 4; ++it) {
      info = LAPACKE_dgbtrs(LAPACK_COL_MAJOR, 'N', dim, kd, kd, 1, gb.data(), ldgb, piv.data(), x.data(), dim);
      if (info != 0) throw InternalError("dgbtrs failed with info = " + std::to_string(info));
      for (int prev = 0; prev < m; ++prev) {
        if (std::abs(w[prev] - w[m]) < cluster_tol) x -= z.col(prev).dot(x) * z.col(prev);
      }
      x.normalize();
    }
    z.col(m) = x;
  }

  LowModes out;
  out.sigma = w.head(count);
  out.weights.resize(n, count);
  for (int m = 0; m < count; ++m) {
    for (int i = 0; i < n; ++i) {
      const double a = z(2 * pos[i], m), b = z(2 * pos[i] + 1, m);
      out.weights(i, m) = a * a + b * b;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Many-body levels
// ---------------------------------------------------------------------------

/// With n_i = 1/2 + S^x_i, prod(2 S^x) = (-1)^N (-1)^{N_f}; the closure is
/// antiperiodic in the even fermion-parity sector.
inline int fermion_parity_of_sector(int n_sites, int spin_parity) {
  return (n_sites % 2 == 0) ? spin_parity : -spin_parity;
}

inline FermionBoundary sector_boundary(int n_sites, int spin_parity) {
  return fermion_parity_of_sector(n_sites, spin_parity) == 1 ? FermionBoundary::antiperiodic
                                                            : FermionBoundary::periodic;
}

namespace detail {

// Levels E0 + sum_{n in S} 2 sigma_n over subsets S of the first m modes whose
// fermion parity matches. Exact for all levels when m = N, and for the lowest
// m levels of the sector otherwise.
inline std::vector<double> enumerate_levels(const BdgSolution& sol, int m, int fermion_parity) {
  std::vector<double> levels;
  const double e0 = sol.ground_energy();
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << m); ++mask) {
    const int occupied = std::popcount(mask);
    const int parity = sol.vacuum_parity * ((occupied % 2 == 0) ? 1 : -1);
    if (parity != fermion_parity) continue;
    double e = e0;
    for (int k = 0; k < m; ++k) {
      if ((mask >> k) & 1U) e += 2.0 * sol.sigma[k];
    }
    levels.push_back(e);
  }
  std::sort(levels.begin(), levels.end());
  return levels;
}

}  // namespace detail

inline constexpr int kFullSpectrumMaxSites = 20;
inline constexpr int kLowLevelModes = 16;

/// Many-body energies of H0 in the spin-parity sector prod(2 S^x) = spin_parity,
/// ascending. max_levels = 0 requests the full sector (N <= 20).
inline std::vector<double> sector_levels(const DisorderRealization& r, double omega, int spin_parity,
                                         std::size_t max_levels = 0) {
  require(spin_parity == 1 || spin_parity == -1, "parity must be +1 or -1");
  detail::require_fermion_chain(r);
  const int fp = fermion_parity_of_sector(r.N, spin_parity);
  const auto sol = solve_bdg(r, omega, sector_boundary(r.N, spin_parity), false);
  int m = r.N;
  if (max_levels == 0) {
    if (r.N > kFullSpectrumMaxSites) throw SizeError("full many-body spectrum needs N <= 20");
  } else {
    require(max_levels <= static_cast<std::size_t>(kLowLevelModes) || r.N <= kFullSpectrumMaxSites,
            "at most 16 low-lying levels are available for N > 20");
    m = std::min(r.N, kLowLevelModes);
  }
  auto levels = detail::enumerate_levels(sol, m, fp);
  if (max_levels != 0 && levels.size() > max_levels) levels.resize(max_levels);
  return levels;
}

/// Lowest excitation energy inside a parity sector.
inline double sector_gap(const DisorderRealization& r, double omega, int spin_parity = +1) {
  const auto levels = sector_levels(r, omega, spin_parity, 2);
  return levels[1] - levels[0];
}

/// Energy of the odd sector's lowest state above the even sector's.
inline double parity_splitting(const DisorderRealization& r, double omega) {
  return sector_levels(r, omega, -1, 1)[0] - sector_levels(r, omega, +1, 1)[0];
}

// ---------------------------------------------------------------------------
// Localization
// ---------------------------------------------------------------------------

struct IprOptions {
  int n_realizations = 50;
  int n_states = 50;
  /// Transverse field; NaN means the clean critical point J/2.
  double omega = std::numeric_limits<double>::quiet_NaN();
  int jobs = 1;
};

struct IprResult {
  double mean = 0.0;
  double stderr_mean = 0.0;
  std::vector<double> per_realization;
};

/// Mean of sum_i (|u_i|^2 + |v_i|^2)^2 over the n_states positive modes closest
/// to zero energy and over n_realizations disorder draws. Realization k uses
/// seed derive_seed(spec.disorder.seed, k).
inline IprResult ipr_average(const SpinEnsembleSpec& spec, const IprOptions& opt = {}) {
  validate(spec);
  require(spec.N >= 2 && spec.N % 2 == 0, "free-fermion engine needs an even N >= 2");
  require(opt.n_realizations >= 1, "n_realizations must be positive");
  require(opt.n_states >= 1 && opt.n_states <= spec.N,
          "n_states must lie in [1, N] (positive branch of the BdG spectrum)");
  const double omega = std::isnan(opt.omega) ? 0.5 * spec.J : opt.omega;

  IprResult res;
  res.per_realization.assign(static_cast<std::size_t>(opt.n_realizations), 0.0);
  parallel_for_strict(res.per_realization.size(), opt.jobs, [&](std::size_t k) {
    SpinEnsembleSpec s = spec;
    s.disorder.seed = derive_seed(spec.disorder.seed, k);
    const auto modes = lowest_modes(sample_disorder(s), omega, opt.n_states);
    double acc = 0.0;
    for (int n = 0; n < opt.n_states; ++n) acc += modes.ipr(n);
    res.per_realization[k] = acc / opt.n_states;
  });
  const double n = static_cast<double>(res.per_realization.size());
  res.mean = std::accumulate(res.per_realization.begin(), res.per_realization.end(), 0.0) / n;
  if (n > 1) {
    double ss = 0.0;
    for (double v : res.per_realization) ss += (v - res.mean) * (v - res.mean);
    res.stderr_mean = std::sqrt(ss / (n - 1) / n);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Power-law fits
// ---------------------------------------------------------------------------

struct PowerLawFit {
  double exponent = 0.0;
  double prefactor = 0.0;
  double stderr_exponent = 0.0;
  double r_squared = 0.0;
  std::size_t points = 0;
};

/// Ordinary least squares of log y on log x.
inline PowerLawFit fit_power_law(std::span<const double> xs, std::span<const double> ys) {
  require(xs.size() == ys.size(), "x and y must have equal length");
  if (xs.size() < 3) throw DomainError("power-law fit needs at least 3 points");
  const auto n = static_cast<double>(xs.size());
  std::vector<double> lx(xs.size()), ly(ys.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0)) throw DomainError("power-law fit needs positive data");
    lx[i] = std::log(xs[i]);
    ly[i] = std::log(ys[i]);
  }
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  if (sxx == 0.0) throw DomainError("power-law fit needs at least two distinct x values");
  PowerLawFit f;
  f.points = xs.size();
  f.exponent = sxy / sxx;
  f.prefactor = std::exp(my - f.exponent * mx);
  double rss = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    const double e = ly[i] - (my + f.exponent * (lx[i] - mx));
    rss += e * e;
  }
  f.stderr_exponent = std::sqrt(rss / (n - 2.0) / sxx);
  f.r_squared = syy > 0.0 ? 1.0 - rss / syy : 1.0;
  return f;
}

// ---------------------------------------------------------------------------
// Clean-chain momentum modes
// ---------------------------------------------------------------------------

struct MomentumMode {
  double k = 0.0;
  /// Quasiparticle energy eps_k = sqrt(Omega^2 + J^2/4 - Omega J cos k).
  double energy = 0.0;
  /// Bloch block h_k with eigenvalues +-eps_k/2.
  Eigen::Matrix2cd bloch;
};

inline Eigen::Matrix2cd bloch_matrix(double omega, double J, double k) {
  const double d = -0.5 * omega + 0.25 * J * std::cos(k);
  const std::complex<double> off(0.0, 0.25 * J * std::sin(k));
  Eigen::Matrix2cd h;
  h << d, off, std::conj(off), -d;
  return h;
}

inline double quasiparticle_energy(double omega, double J, double k) {
  return std::sqrt(std::max(0.0, omega * omega + 0.25 * J * J - omega * J * std::cos(k)));
}

/// Antiperiodic momenta k = (2n+1) pi / N mapped into (-pi, pi), ascending.
inline std::vector<MomentumMode> dispersion(double omega, double J, int N) {
  require(N >= 2 && N % 2 == 0, "dispersion needs an even N >= 2");
  std::vector<MomentumMode> modes;
  modes.reserve(static_cast<std::size_t>(N));
  for (int n = -N / 2; n < N / 2; ++n) {
    const double k = (2.0 * n + 1.0) * kPi / N;
    modes.push_back({k, quasiparticle_energy(omega, J, k), bloch_matrix(omega, J, k)});
  }
  return modes;
}

inline std::vector<MomentumMode> dispersion(const DisorderRealization& r, double omega) {
  detail::require_fermion_chain(r);
  const bool clean = std::all_of(r.field_offsets.begin(), r.field_offsets.end(),
                                 [](double d) { return d == 0.0; }) &&
                     std::all_of(r.bonds.begin(), r.bonds.end(),
                                 [&](const Bond& b) { return b.J == r.J_nominal; }) &&
                     r.boundary == Boundary::periodic;
  if (!clean) throw UnsupportedModel("dispersion needs a clean periodic chain");
  return dispersion(omega, r.J_nominal, r.N);
}

// ---------------------------------------------------------------------------
// Kibble-Zurek ramp
// ---------------------------------------------------------------------------

/// Transverse-field path through the transition. NaN `from` means 2 Omega_c.
struct KzPath {
  double omega_from = std::numeric_limits<double>::quiet_NaN();
  double omega_to = 0.0;
  RampShape shape = RampShape::linear;
};

struct KzResult {
  /// Quasiparticles per site, sum over all k of p_k / N.
  double defect_density = 0.0;
  double xi = 0.0;
  std::vector<double> k;    // positive momenta
  std::vector<double> p_k;  // pair excitation probability at each k
};

namespace detail {

inline Eigen::Vector2cd lower_eigenvector(const Eigen::Matrix2cd& h) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2cd> es(h);
  return es.eigenvectors().col(0);
}

inline Eigen::Vector2cd upper_eigenvector(const Eigen::Matrix2cd& h) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2cd> es(h);
  return es.eigenvectors().col(1);
}

}  // namespace detail

/// Each pair (k, -k) evolves under 2 h_k(Omega(t)) from the instantaneous
/// ground state; p_k is the final excited-state population. T_p = 0 is the
/// sudden quench. Runs over momenta on `jobs` threads.
inline KzResult kz_ramp(const SpinEnsembleSpec& spec, double T_p, const KzPath& path = {},
                        int jobs = 1) {
  validate(spec);
  require(spec.N >= 2 && spec.N % 2 == 0, "free-fermion engine needs an even N >= 2");
  if (spec.profile != CouplingProfile::nearest_neighbor) {
    throw UnsupportedModel("kz_ramp needs nearest-neighbour couplings");
  }
  if (spec.disorder.W_omega != 0.0 || spec.disorder.W_J != 0.0) {
    throw UnsupportedModel("kz_ramp needs a clean chain");
  }
  require(T_p >= 0.0, "T_p must be non-negative");
  const double J = spec.J;
  const double omega_c = 0.5 * J;
  const double from = std::isnan(path.omega_from) ? 2.0 * omega_c : path.omega_from;
  const double to = path.omega_to;
  if ((from - omega_c) * (to - omega_c) >= 0.0) {
    throw DomainError("ramp does not cross the critical field; use the excitation protocol");
  }
  const auto omega_t = ramp_profile(path.shape, from, to, T_p);

  KzResult res;
  const int half = spec.N / 2;
  res.k.resize(static_cast<std::size_t>(half));
  res.p_k.resize(static_cast<std::size_t>(half));

  parallel_for_strict(static_cast<std::size_t>(half), jobs, [&](std::size_t idx) {
    const double k = (2.0 * static_cast<double>(idx) + 1.0) * kPi / spec.N;
    res.k[idx] = k;
    const Eigen::Vector2cd psi0 = detail::lower_eigenvector(bloch_matrix(from, J, k));
    Eigen::Vector2cd psi = psi0;
    if (T_p > 0.0) {
      using State = std::array<double, 4>;
      State x{psi0[0].real(), psi0[0].imag(), psi0[1].real(), psi0[1].imag()};
      // i dpsi/dt = 2 h_k psi with h_k = [[d, i s], [-i s, -d]].
      const auto rhs = [&](const State& y, State& dy, double t) {
        const double om = omega_t(t);
        const double d = 2.0 * (-0.5 * om + 0.25 * J * std::cos(k));
        const double s = 2.0 * 0.25 * J * std::sin(k);
        const std::complex<double> a(y[0], y[1]), b(y[2], y[3]);
        const std::complex<double> I(0.0, 1.0);
        const std::complex<double> ha = d * a + I * s * b;
        const std::complex<double> hb = -I * s * a - d * b;
        const std::complex<double> da = -I * ha, db = -I * hb;
        dy = {da.real(), da.imag(), db.real(), db.imag()};
      };
      namespace odeint = boost::numeric::odeint;
      auto stepper = odeint::make_dense_output(1e-10, 1e-10, odeint::runge_kutta_dopri5<State>());
      odeint::integrate_adaptive(stepper, rhs, x, 0.0, T_p, std::min(0.1, T_p / 10.0));
      psi << std::complex<double>(x[0], x[1]), std::complex<double>(x[2], x[3]);
    }
    const Eigen::Vector2cd up = detail::upper_eigenvector(bloch_matrix(to, J, k));
    res.p_k[idx] = std::norm(up.dot(psi)) / psi.squaredNorm();
  });

  double total = 0.0;
  for (double p : res.p_k) total += 2.0 * p;
  res.defect_density = total / spec.N;
  res.xi = res.defect_density > 0.0 ? 1.0 / res.defect_density : std::numeric_limits<double>::infinity();
  return res;
}

}  // namespace floqsense

#endif
