#include <cmath>
#include <vector>

#include <boost/math/tools/minima.hpp>
#include <gtest/gtest.h>

#include "floqsense/freefermion.hpp"
#include "floqsense/random.hpp"
#include "floqsense/scaling.hpp"
#include "oracles.hpp"

using namespace floqsense;

namespace {

CriticalExponents exps(Rational nu, Rational z) {
  CriticalExponents e = CriticalExponents::ising_1d();
  e.nu = nu;
  e.z = z;
  return e;
}

}  // namespace

TEST(KibbleZurekXi, ReferenceValues) {
  EXPECT_NEAR(kibble_zurek_xi(1.0, 100.0, CriticalExponents::ising_1d()).xi, 10.0, 1e-12);
  EXPECT_NEAR(kibble_zurek_xi(1.0, 128.0, CriticalExponents::dipolar_2d_mean_field()).xi,
              std::pow(128.0, 2.0 / 3.0), 1e-12);
  EXPECT_NEAR(kibble_zurek_xi(1.0, 128.0, CriticalExponents::dipolar_2d_mean_field()).xi, 25.4, 0.05);
}

TEST(KibbleZurekXi, ClampAndCap) {
  const auto lo = kibble_zurek_xi(1.0, 0.5, CriticalExponents::ising_1d());
  EXPECT_TRUE(lo.clamped);
  EXPECT_EQ(lo.xi, 1.0);
  const auto hi = kibble_zurek_xi(1.0, 1e6, CriticalExponents::ising_1d(), 50.0);
  EXPECT_TRUE(hi.capped);
  EXPECT_EQ(hi.xi, 50.0);
}

TEST(KibbleZurekXi, ExponentMatchesFreeFermionRamp) {
  SpinEnsembleSpec spec;
  spec.N = 400;
  std::vector<double> tp, xi;
  for (double t : {10.0, 31.6, 100.0, 316.0, 1000.0}) {
    tp.push_back(t);
    xi.push_back(1.0 / kz_ramp(spec, t).defect_density);
  }
  const auto fit = fit_power_law(tp, xi);
  EXPECT_NEAR(fit.exponent, to_double(kz_exponent(CriticalExponents::ising_1d())), 0.05);
}

TEST(OptimalStageSplit, ClosedFormValues) {
  EXPECT_EQ(optimal_stage_split(CriticalExponents::ising_1d(), 1).beta, Rational(1, 5));
  EXPECT_EQ(optimal_stage_split(CriticalExponents::dipolar_2d_mean_field(), 2).beta, Rational(2, 5));
  const auto s = optimal_stage_split(CriticalExponents::ising_1d(), 1, 10.0);
  EXPECT_NEAR(s.T_p, 2.0, 1e-14);
  EXPECT_NEAR(s.T_s, 8.0, 1e-14);
}

TEST(OptimalStageSplit, MaximizesPreparationTradeOff) {
  for (int d : {1, 2, 3}) {
    for (Rational nu : {Rational(1), Rational(1, 2), Rational(2, 3)}) {
      for (Rational z : {Rational(1), Rational(1, 2), Rational(2)}) {
        const auto e = exps(nu, z);
        const double J = 3.0, T2 = 50.0;
        const double p = to_double(Rational{d} * nu / (Rational{2} * (Rational{1} + z * nu)));
        auto neg = [&](double b) { return -std::pow(J * b * T2, p) * (1.0 - b) * T2; };
        const auto best = boost::math::tools::brent_find_minima(neg, 1e-9, 1.0 - 1e-9, 50);
        EXPECT_NEAR(best.first, to_double(optimal_stage_split(e, d).beta), 1e-6);
      }
    }
  }
}

TEST(Sensitivity, HeisenbergOverSqlIsRootN) {
  for (double n : {4.0, 64.0, 1000.0}) {
    SensitivityInput in;
    in.N = n;
    in.T = 7.0;
    in.T2_eff = 3.0;
    const double ratio = sensitivity(Regime::heisenberg, in).delta_B_inv / sensitivity(Regime::sql, in).delta_B_inv;
    EXPECT_NEAR(ratio, std::sqrt(n), 1e-12 * n);
  }
}

TEST(Sensitivity, NoParityExponent) {
  EXPECT_EQ(no_parity_exponent(CriticalExponents::ising_1d()), Rational(3, 16));
}

TEST(Sensitivity, CorrelatedReducesToHeisenbergAndSql) {
  SensitivityInput in;
  in.N = 64;
  in.T = 100.0;
  in.T2_eff = 5.0;
  in.T_p = 0.0;
  in.T_s = 5.0;
  in.T_r = 0.0;
  in.xi = 64.0;
  EXPECT_NEAR(sensitivity(Regime::correlated, in).delta_B_inv, sensitivity(Regime::heisenberg, in).delta_B_inv,
              1e-10);
  in.xi = 1.0;
  EXPECT_NEAR(sensitivity(Regime::correlated, in).delta_B_inv, sensitivity(Regime::sql, in).delta_B_inv, 1e-10);
}

TEST(Sensitivity, OptimalSplitMatchesClosedFormExponent) {
  // (J T2)^(1/4) improvement over SQL: check the exponent from two T2 values
  SensitivityInput in;
  in.N = 10;
  in.T = 1000.0;
  double prev = 0.0;
  for (double t2 : {100.0, 1600.0}) {
    in.T2_eff = t2;
    const double gain = sensitivity(Regime::correlated_optimal, in).delta_B_inv / sensitivity(Regime::sql, in).delta_B_inv;
    if (prev > 0.0) EXPECT_NEAR(std::log(gain / prev) / std::log(16.0), 0.25, 1e-12);
    prev = gain;
    // the stage-budget evaluation follows the same power of T2
    const auto eq4 = sensitivity(Regime::correlated, in);
    EXPECT_NEAR(eq4.beta, 0.2, 1e-12);
  }
}

TEST(Sensitivity, HomogeneousUnderTimeRescaling) {
  SensitivityInput a;
  a.N = 20;
  a.T = 500.0;
  a.T2_eff = 40.0;
  a.J = 2.0;
  SensitivityInput b = a;
  const double s = 7.0;
  b.J *= s;
  b.T /= s;
  b.T2_eff /= s;
  for (Regime r : {Regime::sql, Regime::heisenberg, Regime::correlated_optimal, Regime::no_parity}) {
    const double ra = sensitivity(r, a).delta_B_inv / sensitivity(Regime::sql, a).delta_B_inv;
    const double rb = sensitivity(r, b).delta_B_inv / sensitivity(Regime::sql, b).delta_B_inv;
    EXPECT_NEAR(ra, rb, 1e-10 * ra) << to_string(r);
  }
  EXPECT_THROW(regime_from_string("bogus"), ParameterError);
}

TEST(SelfConsistentChi, ClosedFormExponents) {
  EXPECT_EQ(chi_exponent(CriticalExponents::dipolar_2d_mean_field(), 2), Rational(4, 7));
  EXPECT_EQ(chi_exponent(CriticalExponents::ising_1d(), 1), Rational(1, 3));
  EXPECT_NEAR(self_consistent_chi(1.0, 1e7, CriticalExponents::dipolar_2d_mean_field(), 2).chi,
              std::pow(1e7, 4.0 / 7.0), 1e-6);
}

TEST(SelfConsistentChi, FixedPointMatchesClosedForm) {
  Engine rng(2024);
  for (int k = 0; k < 20; ++k) {
    const auto e = exps(Rational(1 + static_cast<int>(uniform(rng, 0, 3)), 2),
                        Rational(1 + static_cast<int>(uniform(rng, 0, 4)), 2));
    const int d = 1 + static_cast<int>(uniform(rng, 0, 3));
    const double J = uniform(rng, 0.1, 10.0), T2 = uniform(rng, 2.0, 1e4) / J;
    const auto sol = self_consistent_chi(J, T2, e, d);
    EXPECT_NEAR(sol.fixed_point / sol.chi, 1.0, 1e-8);
  }
  EXPECT_THROW(self_consistent_chi(1.0, 0.5, CriticalExponents::ising_1d(), 1), ParameterError);
}

TEST(EffectiveT2, Models) {
  EXPECT_EQ(effective_T2(3.0, 1.0, 2, NoiseCorrelation::independent), 3.0);
  EXPECT_EQ(effective_T2(3.0, 1.0, 2, NoiseCorrelation::dipolar_correlated), 3.0);
  EXPECT_NEAR(effective_T2(3.0, 10.0, 2, NoiseCorrelation::independent), 0.03, 1e-15);
  EXPECT_NEAR(effective_T2(3.0, 10.0, 2, NoiseCorrelation::dipolar_correlated), 0.3, 1e-15);
  EXPECT_THROW(effective_T2(3.0, 10.0, 1, NoiseCorrelation::dipolar_correlated), UnsupportedModel);
}

TEST(BandwidthProduct, Ratios) {
  EXPECT_EQ(bandwidth_product(BandwidthRegime::conventional, 10, 2),
            bandwidth_product(BandwidthRegime::correlated, 10, 2, 1.0));
  EXPECT_NEAR(bandwidth_product(BandwidthRegime::correlated, 10, 2, 50.0) /
                  bandwidth_product(BandwidthRegime::conventional, 10, 2),
              50.0, 1e-12);
}

TEST(BandwidthProduct, ConsistentWithSensitivity) {
  SensitivityInput in;
  in.N = 30;
  in.T = 80.0;
  in.T2_eff = 4.0;
  const auto rep = sensitivity(Regime::sql, in);
  const double dB = 1.0 / rep.delta_B_inv;
  EXPECT_NEAR(rep.bandwidth / (dB * dB), bandwidth_product(BandwidthRegime::conventional, in.N, in.T), 1e-9);
}

TEST(DipoleField, VerticalDipoleHasNoInPlaneComponent) {
  const DipoleNoiseGeometry g{1.0, 2.0, 1.0, 0.0};
  EXPECT_EQ(dipole_effective_field(g, 5.0).in_plane, 0.0);
}

TEST(DipoleField, DecaysAsInverseClusterSize) {
  const DipoleNoiseGeometry g{1.0, 0.5, 1.0, 0.4};
  const double b1 = dipole_effective_field(g, 1e3).z, b2 = dipole_effective_field(g, 2e3).z;
  EXPECT_NEAR(b1 / b2, 2.0, 1e-5);
}

TEST(DipoleField, MatchesDiskQuadrature) {
  Engine rng(99);
  for (int k = 0; k < 10; ++k) {
    DipoleNoiseGeometry g;
    g.a0 = uniform(rng, 0.5, 2.0);
    g.depth = uniform(rng, 0.3, 5.0);
    g.m = uniform(rng, 0.5, 3.0);
    g.alpha = uniform(rng, 0.0, kPi);
    const double xi = uniform(rng, 1.0, 20.0);
    const auto closed = dipole_effective_field(g, xi);
    const auto [qz, qx] = oracle::disk_dipole_field(g.a0, g.depth, g.m, g.alpha, g.mu0, xi);
    const double scale = std::hypot(closed.z, closed.in_plane);
    EXPECT_NEAR(qz, closed.z, 1e-6 * scale);
    EXPECT_NEAR(qx, closed.in_plane, 1e-6 * scale);
  }
}

TEST(NoiseRatio, IntegralsMatchClosedForms) {
  const DipoleNoiseGeometry g{1.3, 0.0, 0.7, 0.0, 2.0};
  const double xi = 9.0;
  const auto ints = noise_integrals(g, xi);
  const double pref = std::pow(g.mu0 * g.m, 2) * g.n_z;
  EXPECT_NEAR(ints.correlated, pref / std::pow(g.a0, 4) * 3.0 * kPi / (16.0 * xi), 1e-12 * ints.correlated);
  const double a = g.a0;
  const double far = (kPi / 2 - std::atan(a / xi)) / (2 * std::pow(xi, 3)) -
                     a / (2 * xi * xi * (a * a + xi * xi));
  EXPECT_NEAR(ints.uncorrelated, pref / (a * a) * (1.0 / (3 * a * a * a) - far), 1e-12 * ints.uncorrelated);
}

TEST(NoiseRatio, OrderOneWithoutCorrelation) {
  const DipoleNoiseGeometry g{1.0};
  const double r = noise_density_ratio(g, 1.0);
  EXPECT_GT(r, 0.1);
  EXPECT_LT(r, 10.0);
  EXPECT_THROW(noise_density_ratio(g, 0.5), DomainError);
}

TEST(NoiseRatio, LinearInClusterSize) {
  const DipoleNoiseGeometry g{1.0};
  std::vector<double> xs, ys;
  for (double x = 3.0; x <= 100.0 * (1 + 1e-12); x *= std::pow(100.0 / 3.0, 1.0 / 9.0)) {
    xs.push_back(x);
    ys.push_back(noise_density_ratio(g, x));
  }
  EXPECT_NEAR(fit_power_law(xs, ys).exponent, 1.0, 0.1);
}

TEST(NoiseRatio, HalvingStepIsStable) {
  const DipoleNoiseGeometry g{0.8, 0.0, 1.0, 0.0, 1.0};
  for (double xi : {0.8, 5.0, 80.0}) {
    const double a = noise_density_ratio(g, xi, 32), b = noise_density_ratio(g, xi, 64);
    EXPECT_NEAR(a, b, 1e-6 * b);
  }
}

TEST(Localization, PrepTimeFormula) {
  const double mu = 1.49;
  EXPECT_NEAR(localization_length(0.1, mu), std::pow(10.0, mu), 1e-9);
  EXPECT_NEAR(localized_prep_time(0.1, mu, 2.0), std::pow(10.0, 2 * mu) / 2.0, 1e-9);
  const auto e = CriticalExponents::ising_1d();
  const auto capped = disorder_limited_prep(1.0, 1e4, 0.3, e);
  EXPECT_TRUE(capped.localization_limited);
  EXPECT_NEAR(capped.T_p, std::pow(0.3, -2 * e.mu), 1e-9);
  EXPECT_FALSE(disorder_limited_prep(1.0, 4.0, 0.3, e).localization_limited);
}

TEST(Imager, InteractionScaleAtDiffractionLimit) {
  const double J0 = nv_dipolar_constant();
  EXPECT_NEAR(dipolar_coupling(J0, 250.0) / (2 * kPi), 3.3, 0.05);
  EXPECT_NEAR(min_spacing(J0, 3e-3), 100.0, 2.0);
}

TEST(Imager, AnchorCounts) {
  const double J0 = nv_dipolar_constant();
  EXPECT_EQ(std::lround(max_conventional_spins(500.0, 3e-3, J0)), 6);
  EXPECT_EQ(max_conventional_spins(500.0, 0.5, J0), 1.0);
  const auto pts = imager_budget({1.0 / 25.0}, 500.0, 3e-3, J0);
  EXPECT_NEAR(pts[0].n_probe, 2500.0, 1e-9);
  EXPECT_EQ(pts[0].regime, 3);
  EXPECT_NEAR(pts[0].uncorrelated_gain, 50.0, 1e-9);
  EXPECT_NEAR(pts[0].uncorrelated_gain / std::sqrt(max_conventional_spins(500.0, 3e-3, J0)), 20.0, 0.5);
  EXPECT_GT(pts[0].protocol_gain, pts[0].uncorrelated_gain);
}

TEST(Imager, RegimeLabelsFollowDensity) {
  const double J0 = nv_dipolar_constant();
  const auto pts = imager_budget({1e-6, 5e-5, 1e-2}, 500.0, 3e-3, J0);
  EXPECT_EQ(pts[0].regime, 1);
  EXPECT_EQ(pts[1].regime, 2);
  EXPECT_EQ(pts[2].regime, 3);
  EXPECT_LT(pts[2].sql_gain, pts[2].protocol_gain);
}
