#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <random>

#include "spindefect/spin_core.hpp"

using namespace spindefect;

namespace {

double max_abs(const CMatrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

CMatrix random_matrix(Eigen::Index n, std::mt19937& rng) {
  std::normal_distribution<double> g;
  CMatrix m(n, n);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < n; ++c) m(r, c) = {g(rng), g(rng)};
  return m;
}

}  // namespace

TEST(SpinQuantum, RejectsNonPositive) {
  EXPECT_THROW(SpinQuantum(0), InvalidInput);
  EXPECT_THROW(SpinQuantum(-3), InvalidInput);
  EXPECT_EQ(SpinQuantum(6).multiplicity(), 7);
  EXPECT_DOUBLE_EQ(SpinQuantum(3).value(), 1.5);
}

TEST(SpinMatrices, SpinOneExplicit) {
  const auto S = spin_matrices(SpinQuantum::one());
  CMatrix z = CMatrix::Zero(3, 3);
  z(0, 0) = 1;
  z(2, 2) = -1;
  EXPECT_LE(max_abs(S.Sz.matrix() - z), 1e-15);
  CMatrix x = CMatrix::Zero(3, 3);
  x(0, 1) = x(1, 0) = x(1, 2) = x(2, 1) = 1.0 / std::sqrt(2.0);
  EXPECT_LE(max_abs(S.Sx.matrix() - x), 1e-15);
}

TEST(SpinMatrices, SpinHalfRaising) {
  const auto I = spin_matrices(SpinQuantum::half());
  CMatrix p = CMatrix::Zero(2, 2);
  p(0, 1) = 1;
  EXPECT_LE(max_abs(I.Splus.matrix() - p), 1e-15);
}

TEST(SpinMatrices, SpinThreeCommutator) {
  const auto S = spin_matrices(SpinQuantum(6));
  // Brute-force product of the constructed matrices.
  const CMatrix c = S.Sx.matrix() * S.Sy.matrix() - S.Sy.matrix() * S.Sx.matrix();
  EXPECT_LE(max_abs(c - cplx(0, 1) * S.Sz.matrix()), 1e-12);
}

class SpinAlgebra : public ::testing::TestWithParam<int> {};

TEST_P(SpinAlgebra, StandardIdentities) {
  const SpinQuantum q(GetParam());
  const auto S = spin_matrices(q);
  const auto d = q.multiplicity();
  for (int k = 0; k < d; ++k) EXPECT_EQ(S.Sz(k, k).real(), q.value() - k);
  const CMatrix comm = S.Splus.matrix() * S.Sminus.matrix() - S.Sminus.matrix() * S.Splus.matrix();
  EXPECT_LE(max_abs(comm - 2.0 * S.Sz.matrix()), 1e-12);
  const CMatrix s2 = S.Sx.matrix() * S.Sx.matrix() + S.Sy.matrix() * S.Sy.matrix() + S.Sz.matrix() * S.Sz.matrix();
  const double I = q.value();
  EXPECT_LE(max_abs(s2 - I * (I + 1) * CMatrix::Identity(d, d)), 1e-12);
  EXPECT_LE(max_abs(S.Sx.matrix() - 0.5 * (S.Splus.matrix() + S.Sminus.matrix())), 0.0);
  EXPECT_LE(max_abs(S.Sy.matrix() - (S.Splus.matrix() - S.Sminus.matrix()) / cplx(0, 2)), 0.0);
  EXPECT_TRUE(S.Sx.is_hermitian());
  EXPECT_TRUE(S.Sy.is_hermitian());
}

INSTANTIATE_TEST_SUITE_P(AllSpins, SpinAlgebra, ::testing::Values(1, 2, 3, 4, 5, 6));

TEST(Embed, ElectronSzOnSpinHalfRegister) {
  const SpinRegister reg({SpinQuantum::one(), SpinQuantum::half()});
  const auto e = embed(spin_matrices(reg[0]).Sz, reg, 0);
  Eigen::VectorXd diag(6);
  diag << 1, 1, 0, 0, -1, -1;
  EXPECT_LE(max_abs(e.matrix() - CMatrix(diag.cast<cplx>().asDiagonal())), 0.0);
}

TEST(Embed, NuclearIzRepeats) {
  const SpinRegister reg({SpinQuantum::one(), SpinQuantum::half()});
  const auto e = embed(spin_matrices(reg[1]).Sz, reg, 1);
  for (int k = 0; k < 6; ++k) EXPECT_EQ(e(k, k).real(), k % 2 == 0 ? 0.5 : -0.5);
  EXPECT_LE(max_abs(e.matrix() - CMatrix(e.matrix().diagonal().asDiagonal())), 0.0);
}

TEST(Embed, DifferentSitesCommute) {
  const SpinRegister reg({SpinQuantum::one(), SpinQuantum::half(), SpinQuantum(3), SpinQuantum(2)});
  std::mt19937 rng(7);
  for (std::size_t a = 0; a < reg.size(); ++a)
    for (std::size_t b = a + 1; b < reg.size(); ++b) {
      const Operator A(random_matrix(reg[a].multiplicity(), rng));
      const Operator B(random_matrix(reg[b].multiplicity(), rng));
      const auto c = commutator(embed(A, reg, a), embed(B, reg, b));
      EXPECT_LE(max_abs(c.matrix()), 1e-12) << a << "," << b;
    }
}

TEST(Embed, RejectsMismatch) {
  const SpinRegister reg({SpinQuantum::one(), SpinQuantum::half()});
  EXPECT_THROW(embed(spin_matrices(SpinQuantum::one()).Sz, reg, 1), InvalidInput);
  EXPECT_THROW(embed(spin_matrices(SpinQuantum::one()).Sz, reg, 2), InvalidInput);
}

TEST(Embed, PreservesHermiticityAndSpectrum) {
  const SpinRegister reg({SpinQuantum::one(), SpinQuantum(3), SpinQuantum::half()});
  const auto S = spin_matrices(reg[1]);
  const Operator op = 0.3 * S.Sx + 1.7 * S.Sz;
  const auto e = embed(op, reg, 1);
  EXPECT_TRUE(e.hermitian_flag());
  EXPECT_TRUE(e.is_hermitian());
  Eigen::SelfAdjointEigenSolver<CMatrix> small(op.matrix()), big(e.matrix());
  const auto mult = reg.total_dim() / op.dim();
  std::vector<double> expect;
  for (Eigen::Index k = 0; k < op.dim(); ++k)
    for (Eigen::Index r = 0; r < mult; ++r) expect.push_back(small.eigenvalues()[k]);
  std::sort(expect.begin(), expect.end());
  for (Eigen::Index k = 0; k < e.dim(); ++k) EXPECT_NEAR(big.eigenvalues()[k], expect[static_cast<std::size_t>(k)], 1e-12);
}

TEST(KronChain, Identities) {
  const auto k = kron_chain({Operator::identity(2), Operator::identity(3)});
  EXPECT_LE(max_abs(k.matrix() - CMatrix::Identity(6, 6)), 0.0);
  EXPECT_THROW(kron_chain(std::span<const Operator>{}), InvalidInput);
}

TEST(KronChain, TraceFactorizes) {
  std::mt19937 rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const Operator A(random_matrix(2, rng)), B(random_matrix(3, rng));
    const auto k = kron_chain({A, B});
    EXPECT_EQ(k.dim(), 6);
    EXPECT_LE(std::abs(k.matrix().trace() - A.matrix().trace() * B.matrix().trace()), 1e-12);
  }
}

TEST(KronChain, ProductEigenvalues) {
  const auto k = kron_chain({spin_matrices(SpinQuantum::one()).Sz, spin_matrices(SpinQuantum::half()).Sz});
  std::vector<double> d;
  for (int i = 0; i < 6; ++i) d.push_back(k(i, i).real());
  EXPECT_EQ(d, (std::vector<double>{0.5, -0.5, 0.0, 0.0, -0.5, 0.5}));
}

TEST(Register, DecomposeLastFastest) {
  const SpinRegister reg({SpinQuantum::one(), SpinQuantum::half(), SpinQuantum::half()});
  EXPECT_EQ(reg.total_dim(), 12);
  EXPECT_EQ(reg.decompose(5), (std::vector<int>{1, 0, 1}));
  EXPECT_THROW(SpinRegister({}), InvalidInput);
}

TEST(OperatorArith, DimensionChecks) {
  EXPECT_THROW(Operator::identity(2) + Operator::identity(3), InvalidInput);
  EXPECT_THROW(Operator(CMatrix::Zero(2, 3)), InvalidInput);
  EXPECT_FALSE((cplx(0, 1) * Operator::identity(2)).hermitian_flag());
}
