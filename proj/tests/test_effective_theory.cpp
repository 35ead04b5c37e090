#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "spindefect/effective_theory.hpp"

using namespace spindefect;

namespace {

std::vector<double> eigenvalues(const Operator& H) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(H.matrix(), Eigen::EigenvaluesOnly);
  return {es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size()};
}

constexpr double kD = 3480.0;
constexpr double kGe = 2.8;

}  // namespace

TEST(OmegaJ, ZeroLadderGivesZero) {
  EXPECT_EQ(omega_j({0.0, 0.0}, {5.0, 66.0, 0.3, 0.0}, kD, kGe, 760.0), cplx(0.0, 0.0));
}

TEST(OmegaJ, RealForThetaZeroAndNoA2) {
  const LadderCoefficients lc{7.5, cplx(0.0, 0.0)};
  const DriveSpec d{4.0, 66.0, 0.0, 0.0};
  const cplx w = omega_j(lc, d, kD, kGe, 760.0);
  EXPECT_NEAR(w.real(), -kGe * 4.0 * 7.5 / (kD - kGe * 760.0), 1e-14);
  EXPECT_EQ(w.imag(), 0.0);
}

TEST(OmegaJ, GapGuard) {
  const LadderCoefficients lc{1.0, cplx(0.0, 0.0)};
  try {
    omega_j(lc, {1.0, 66.0, 0.0, 0.0}, kD, kGe, kD / kGe + 1.0);
    FAIL();
  } catch (const InvalidInput& e) {
    EXPECT_NE(std::string(e.what()).find("far away from the ground-state anti-crossing"), std::string::npos);
  }
  EXPECT_THROW(omega_j(lc, {-1.0, 66.0, 0.0, 0.0}, kD, kGe, 760.0), InvalidInput);
}

// A site rotated by phi couples like the unrotated site driven at theta - phi.
TEST(OmegaJ, RotationCovariance) {
  const auto base = nitrogen15_base_tensor();
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> u(0.0, 2.0 * std::numbers::pi);
  for (int k = 0; k < 20; ++k) {
    const double phi = u(rng), theta = u(rng);
    const auto rot = ladder_coefficients(rotate_tensor(base, phi));
    const auto ref = ladder_coefficients(base);
    const double a = std::abs(omega_j(rot, {3.0, 66.0, theta, 0.0}, kD, kGe, 760.0));
    const double b = std::abs(omega_j(ref, {3.0, 66.0, theta - phi, 0.0}, kD, kGe, 760.0));
    EXPECT_NEAR(a, b, 1e-12 * std::max(a, 1.0));
  }
}

TEST(OmegaJ, LinearInDriveInverseInGap) {
  const auto lc = ladder_coefficients(nitrogen15_base_tensor());
  const double w1 = std::abs(omega_j(lc, {2.0, 66.0, 0.4, 0.0}, kD, kGe, 760.0));
  const double w2 = std::abs(omega_j(lc, {6.0, 66.0, 0.4, 0.0}, kD, kGe, 760.0));
  EXPECT_NEAR(w2 / w1, 3.0, 1e-12);
  const double w3 = std::abs(omega_j(lc, {2.0, 66.0, 0.4, 0.0}, kD, kGe, 300.0));
  EXPECT_NEAR(w3 / w1, (kD - kGe * 760.0) / (kD - kGe * 300.0), 1e-12);
}

TEST(OmegaJ, LevelVariantsDifferOnlyInDenominator) {
  const auto lc = ladder_coefficients(nitrogen15_base_tensor());
  const DriveSpec d{2.0, 66.0, 0.1, 0.0};
  const double Bz = 500.0;
  const cplx minus = omega_j(lc, d, kD, kGe, Bz);
  const cplx plus = omega_j(lc, d, kD, kGe, Bz, {ElectronLevel::Plus, std::nullopt});
  const cplx zero = omega_j(lc, d, kD, kGe, Bz, {ElectronLevel::Zero, std::nullopt});
  const double lo = kD - kGe * Bz, hi = kD + kGe * Bz;
  EXPECT_NEAR(std::abs(plus - minus * lo / hi), 0.0, 1e-13);
  EXPECT_NEAR(std::abs(zero - minus * lo * (1.0 / hi + 1.0 / lo)), 0.0, 1e-13);
}

TEST(OmegaJ, BareNuclearTermIsAdditive) {
  const auto lc = ladder_coefficients(nitrogen15_base_tensor());
  const DriveSpec d{2.0, 66.0, 0.7, 0.0};
  const double gn = -2.8 / 6487.0;
  const cplx diff = omega_j(lc, d, kD, kGe, 760.0, {ElectronLevel::Minus, gn}) - omega_j(lc, d, kD, kGe, 760.0);
  EXPECT_NEAR(std::abs(diff - (-0.5 * gn * 2.0 * std::polar(1.0, -0.7))), 0.0, 1e-15);
}

TEST(RabiMatrix, ZeroCouplings) {
  EXPECT_EQ(rabi_matrix({cplx{}, cplx{}, cplx{}}).matrix(), CMatrix::Zero(8, 8));
}

TEST(RabiMatrix, SparsityPattern) {
  const cplx w1(1.0, 2.0), w2(3.0, -1.0), w3(-0.5, 0.25);
  const auto M = rabi_matrix({w1, w2, w3}).matrix();
  // first row: |+++> couples to |++->, |+-+>, |-++>
  EXPECT_EQ(M(0, 1), w3);
  EXPECT_EQ(M(0, 2), w2);
  EXPECT_EQ(M(0, 4), w1);
  EXPECT_EQ(M(1, 0), std::conj(w3));
  EXPECT_EQ(M(0, 3), cplx{});
  EXPECT_EQ(M(3, 7), w1);
  EXPECT_EQ((M - M.adjoint()).cwiseAbs().maxCoeff(), 0.0);
  int nonzero = 0;
  for (Eigen::Index i = 0; i < 8; ++i)
    for (Eigen::Index j = 0; j < 8; ++j)
      if (M(i, j) != cplx{}) ++nonzero;
  EXPECT_EQ(nonzero, 24);
}

TEST(RabiMatrix, ClosedFormEigenvaluesRandomTriples) {
  std::mt19937 rng(2024);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int k = 0; k < 100; ++k) {
    const std::array<cplx, 3> w{cplx(u(rng), u(rng)), cplx(u(rng), u(rng)), cplx(u(rng), u(rng))};
    const auto got = eigenvalues(rabi_matrix(w));
    const auto want = rabi_matrix_closed_form(w);
    for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(got[i], want[i], 1e-10) << k;
  }
}

TEST(RabiMatrix, SymmetricFrequencies) {
  const double W = 0.37;
  const std::array<cplx, 3> w{std::polar(W, 0.1), std::polar(W, 2.0), std::polar(W, -1.3)};
  const auto f = rabi_frequencies(w);
  EXPECT_NEAR(f[0], 2.0 * W, 1e-14);
  EXPECT_NEAR(f[1], 2.0 * W, 1e-14);
  EXPECT_NEAR(f[2], 2.0 * W, 1e-14);
  EXPECT_NEAR(f[3], 6.0 * W, 1e-14);
}

TEST(GammaEff, PaperOperatingPoint) {
  const double Bz = (kD - 1390.0) / kGe;
  const HyperfineTensor t{30.0, 0.0, 0.0, -65.9};
  const auto r = gamma_eff(t, kD, kGe, Bz, -2.8 / 6487.0);
  EXPECT_NEAR(r.gamma_eff, 2.8 * 30.0 / (std::sqrt(2.0) * 1390.0), 1e-12);
  EXPECT_NEAR(r.gamma_eff, 0.043, 0.0005);
  ASSERT_TRUE(r.enhancement.has_value());
  EXPECT_NEAR(*r.enhancement, 99.0, 1.0);
  EXPECT_NEAR(r.transverse_magnitude, 30.0, 1e-12);
  EXPECT_NEAR(r.gap, 1390.0, 1e-9);
  EXPECT_NEAR(r.guard_margin, 1380.0, 1e-9);
}

TEST(GammaEff, ZeroTransverse) {
  const auto r = gamma_eff({0.0, 0.0, 0.0, -65.9}, kD, kGe, 760.0);
  EXPECT_EQ(r.gamma_eff, 0.0);
  EXPECT_EQ(r.gamma_eff_theta, 0.0);
  EXPECT_FALSE(r.enhancement.has_value());
}

TEST(GammaEff, AngleAverageMatchesRms) {
  const auto t = nitrogen15_base_tensor();
  double ms = 0.0;
  const int n = 360;
  for (int k = 0; k < n; ++k) {
    const double g = gamma_eff(t, kD, kGe, 760.0, std::nullopt, 2.0 * std::numbers::pi * k / n).gamma_eff_theta;
    ms += g * g / n;
  }
  EXPECT_NEAR(std::sqrt(ms), gamma_eff(t, kD, kGe, 760.0).gamma_eff, 1e-12);
}

TEST(GammaEff, ThetaValueMatchesOmega) {
  const auto t = nitrogen15_base_tensor();
  const DriveSpec d{3.0, 66.0, 0.9, 0.0};
  const double w = std::abs(omega_j(ladder_coefficients(t), d, kD, kGe, 760.0));
  EXPECT_NEAR(gamma_eff(t, kD, kGe, 760.0, std::nullopt, 0.9).gamma_eff_theta * d.B_dr, 2.0 * w, 1e-12);
}

TEST(GammaEff, GuardAndZeroGamma) {
  EXPECT_THROW(gamma_eff(nitrogen15_base_tensor(), kD, kGe, kD / kGe), InvalidInput);
  EXPECT_THROW(gamma_eff(nitrogen15_base_tensor(), kD, kGe, 760.0, 0.0), InvalidInput);
}

TEST(Calibration, PaperValues) {
  EXPECT_NEAR(calibrate_gamma_eff(1.67, 41.67, 2.6, 2.8), 0.0432, 5e-5);
  EXPECT_NEAR(calibrate_gamma_eff(3.3, 3.3, 1.0, 2.8), 2.8, 1e-15);
  EXPECT_THROW(calibrate_gamma_eff(0.0, 41.67, 2.6), InvalidInput);
  EXPECT_THROW(calibrate_gamma_eff(1.0, 41.67, -2.6), InvalidInput);
}

TEST(Calibration, InvertRoundTrip) {
  const double Wn = required_nuclear_rabi(0.043, 41.67, 2.6, 2.8);
  EXPECT_NEAR(calibrate_gamma_eff(Wn, 41.67, 2.6, 2.8), 0.043, 1e-15);
  EXPECT_NEAR(Wn, 0.043 / 2.8 * 41.67 * 2.6, 1e-15);
}

TEST(InferTransverse, PaperValueAndRoundTrip) {
  const double Bz = (kD - 1390.0) / kGe;
  EXPECT_NEAR(infer_transverse_magnitude(0.043, kD, kGe, Bz), 30.0, 0.2);
  EXPECT_EQ(infer_transverse_magnitude(0.0, kD, kGe, Bz), 0.0);
  for (double mag : {1.0, 12.5, 30.0, 142.0}) {
    const HyperfineTensor t = rescale_transverse(nitrogen15_base_tensor(), nitrogen15_base_tensor().transverse_magnitude() / mag);
    const double g = gamma_eff(t, kD, kGe, 760.0).gamma_eff;
    EXPECT_NEAR(infer_transverse_magnitude(g, kD, kGe, 760.0), mag, 1e-10 * mag);
  }
  EXPECT_THROW(infer_transverse_magnitude(0.04, kD, kGe, kD / kGe), InvalidInput);
  EXPECT_THROW(infer_transverse_magnitude(-0.04, kD, kGe, 760.0), InvalidInput);
}

TEST(Calibration, DriveForNuclearRabi) {
  const auto r = gamma_eff(nitrogen15_base_tensor(), kD, kGe, 760.0);
  EXPECT_NEAR(drive_for_nuclear_rabi(1.67, r) * r.gamma_eff, 1.67, 1e-14);
  EXPECT_THROW(drive_for_nuclear_rabi(1.67, gamma_eff({0, 0, 0, 1}, kD, kGe, 760.0)), InvalidInput);
}
