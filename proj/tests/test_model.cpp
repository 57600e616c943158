#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "floqsense/model.hpp"
#include "oracles.hpp"

using namespace floqsense;

namespace {

SpinEnsembleSpec chain(int n, DisorderSpec d = {}) {
  SpinEnsembleSpec s;
  s.N = n;
  s.disorder = d;
  return s;
}

// Mean of the toggled signal over [0, T], integrated piecewise between pulses.
double numerical_mean(const SignalSpec& sig, const DriveSpec& drive, double T) {
  const double tau = drive.period();
  double total = 0.0;
  for (double a = 0.0; a < T - 1e-12; a += tau) {
    const double b = std::min(a + tau, T);
    const double mid = 0.5 * (a + b);
    const double sign = toggle_sign(drive, mid);
    total += sign * oracle::simpson([&](double t) { return sig.B * std::sin(sig.omega_s * t + sig.phase0); }, a, b, 400);
  }
  return total / T;
}

}  // namespace

TEST(SampleDisorder, ZeroWidthGivesUniformChain) {
  const auto r = sample_disorder(chain(8));
  ASSERT_EQ(r.bonds.size(), 8u);
  for (const auto& b : r.bonds) EXPECT_EQ(b.J, 1.0);
  for (int i = 0; i < 8; ++i) EXPECT_EQ(r.field(i, 0.7), 0.7);
  for (double d : r.pulse_errors) EXPECT_EQ(d, 0.0);
}

TEST(SampleDisorder, SameSeedSameRealization) {
  const DisorderSpec d{0.3, 0.2, 0.1, 42};
  const auto a = sample_disorder(chain(16, d));
  const auto b = sample_disorder(chain(16, d));
  EXPECT_EQ(a.field_offsets, b.field_offsets);
  EXPECT_EQ(a.pulse_errors, b.pulse_errors);
  for (std::size_t k = 0; k < a.bonds.size(); ++k) EXPECT_EQ(a.bonds[k].J, b.bonds[k].J);
  const auto c = sample_disorder(chain(16, {0.3, 0.2, 0.1, 43}));
  EXPECT_NE(a.field_offsets, c.field_offsets);
}

TEST(SampleDisorder, BondOffsetsFollowUniformLaw) {
  const int n = 100000;
  const auto r = sample_disorder(chain(n, {0.0, 0.1, 0.0, 7}));
  double sum = 0.0;
  for (const auto& b : r.bonds) {
    const double d = b.J - 1.0;
    EXPECT_GE(d, -0.1);
    EXPECT_LE(d, 0.1);
    sum += d;
  }
  const double mean = sum / static_cast<double>(r.bonds.size());
  const double sigma_mean = 0.1 / std::sqrt(3.0) / std::sqrt(static_cast<double>(r.bonds.size()));
  EXPECT_LT(std::abs(mean), 3.0 * sigma_mean);
}

TEST(SampleDisorder, FieldOffsetsUseHalfWidth) {
  const auto r = sample_disorder(chain(20000, {0.4, 0.0, 0.0, 3}));
  const auto [lo, hi] = std::minmax_element(r.field_offsets.begin(), r.field_offsets.end());
  EXPECT_GE(*lo, -0.2);
  EXPECT_LE(*hi, 0.2);
  EXPECT_LT(*lo, -0.19);
  EXPECT_GT(*hi, 0.19);
}

TEST(SampleDisorder, BondSignFlipRejected) {
  EXPECT_THROW(sample_disorder(chain(4, {0.0, 1.0, 0.0, 1})), ParameterError);
  EXPECT_THROW(sample_disorder(chain(4, {-0.1, 0.0, 0.0, 1})), ParameterError);
}

TEST(SampleDisorder, ExplicitCouplingsMustBeSymmetric) {
  SpinEnsembleSpec s = chain(3);
  s.profile = CouplingProfile::explicit_matrix;
  s.couplings = {0, 1, 0, 0.5, 0, 1, 0, 1, 0};
  EXPECT_THROW(sample_disorder(s), ParameterError);
  s.couplings = {0, 1, 0.2, 1, 0, 1, 0.2, 1, 0};
  EXPECT_EQ(sample_disorder(s).bonds.size(), 3u);
}

TEST(TogglingSignal, FlipsAtEachPulse) {
  const SignalSpec sig{1.0, 1.0, kPi / 2};
  const DriveSpec drive{2.0};
  const double tau = drive.period();
  EXPECT_LT(toggling_signal(sig, drive, tau - 1e-9) * toggling_signal(sig, drive, tau + 1e-9), 0.0);
  EXPECT_EQ(toggle_sign(drive, tau - 1e-9), 1.0);
  EXPECT_EQ(toggle_sign(drive, tau + 1e-9), -1.0);
  EXPECT_EQ(toggle_sign(drive, 2 * tau + 1e-9), 1.0);
}

TEST(TogglingSignal, ZeroAmplitudeIsZero) {
  const SignalSpec sig{0.0, 3.0, 0.3};
  for (double t : {0.0, 0.1, 1.7, 9.3}) EXPECT_EQ(toggling_signal(sig, DriveSpec{6.0}, t), 0.0);
}

TEST(EffectiveSignal, ResonanceGivesTwoOverPi) {
  for (double B : {0.01, 1.0, 7.5}) {
    const SignalSpec sig{B, 25.0, 0.0};
    const DriveSpec drive{50.0};
    const auto avg = effective_signal_average(sig, drive);
    EXPECT_NEAR(avg.value, 2.0 / kPi * B, 1e-8 * B);
    EXPECT_NEAR(numerical_mean(sig, drive, 2.0 * drive.period()), 2.0 / kPi * B, 1e-6 * B);
  }
}

TEST(EffectiveSignal, FastDriveAveragesOut) {
  const SignalSpec sig{1.0, 1.0, 0.0};
  const auto avg = effective_signal_average(sig, DriveSpec{20.0});
  EXPECT_TRUE(avg.commensurate);
  EXPECT_LT(std::abs(avg.value), 1e-3);
}

TEST(EffectiveSignal, CosinePhaseAveragesToZeroAtResonance) {
  const SignalSpec sig{1.0, 4.0, kPi / 2};
  const DriveSpec drive{8.0};
  EXPECT_NEAR(effective_signal_average(sig, drive).value, 0.0, 1e-12);
  EXPECT_NEAR(numerical_mean(sig, drive, 2.0 * drive.period()), 0.0, 1e-8);
}

TEST(EffectiveSignal, CommensurateOffResonanceMatchesQuadrature) {
  const SignalSpec sig{1.3, 3.0, 0.4};
  const DriveSpec drive{2.0};  // omega_0 / (2 omega_s) = 1/3
  const auto avg = effective_signal_average(sig, drive);
  ASSERT_TRUE(avg.commensurate);
  EXPECT_NEAR(avg.value, numerical_mean(sig, drive, avg.window), 1e-8);
}

TEST(EffectiveSignal, IncommensurateReportsTruncationBound) {
  const SignalSpec sig{1.0, 1.0, 0.2};
  const DriveSpec drive{2.0 * std::sqrt(2.0) * 1.0000001};
  const auto avg = effective_signal_average(sig, drive);
  EXPECT_FALSE(avg.commensurate);
  EXPECT_GT(avg.truncation_bound, 0.0);
  EXPECT_LT(std::abs(avg.value), avg.truncation_bound + 1e-12);
}

TEST(EffectiveSignal, IntegralStaysWithinOnePeriodOfLinearGrowth) {
  const SignalSpec sig{0.8, 5.0, 0.0};
  const DriveSpec drive{10.0};
  const double mean = effective_signal_average(sig, drive).value;
  for (double t : {0.3, 1.1, 2.9, 7.7, 15.2}) {
    const double integral = numerical_mean(sig, drive, t) * t;
    EXPECT_LE(std::abs(integral - mean * t), sig.B * drive.period());
  }
}
