#pragma once

// Finite-dimensional spin operator algebra.
//
// Basis ordering is descending m everywhere: index 0 is m = +I, index 2I is
// m = -I. Composite registers are ordered electron first, then nuclei, and
// the Kronecker product is left-associated, so the last subsystem varies
// fastest. Every sign convention in the library follows from this ordering.

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "spindefect/error.hpp"

namespace spindefect {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

/// Spin quantum number stored doubled so half-integers stay exact.
class SpinQuantum {
 public:
  explicit constexpr SpinQuantum(int two_I) : two_I_(two_I) {
    if (two_I < 1) throw InvalidInput("spin quantum number 2I must be >= 1, got " + std::to_string(two_I));
  }

  static constexpr SpinQuantum half() { return SpinQuantum(1); }
  static constexpr SpinQuantum one() { return SpinQuantum(2); }

  constexpr int two_I() const { return two_I_; }
  constexpr double value() const { return 0.5 * two_I_; }
  constexpr int multiplicity() const { return two_I_ + 1; }
  /// m of basis index k (descending order).
  constexpr double m(int k) const { return value() - k; }

  friend constexpr bool operator==(SpinQuantum, SpinQuantum) = default;

 private:
  int two_I_;
};

/// Dense complex operator. Immutable once built; arithmetic returns new values.
class Operator {
 public:
  Operator() = default;
  explicit Operator(CMatrix m, bool hermitian = false) : m_(std::move(m)), hermitian_(hermitian) {
    if (m_.rows() != m_.cols()) throw InvalidInput("operator matrix must be square");
  }

  static Operator identity(Eigen::Index dim) { return Operator(CMatrix::Identity(dim, dim), true); }
  static Operator zero(Eigen::Index dim) { return Operator(CMatrix::Zero(dim, dim), true); }

  Eigen::Index dim() const { return m_.rows(); }
  const CMatrix& matrix() const { return m_; }
  bool hermitian_flag() const { return hermitian_; }
  cplx operator()(Eigen::Index r, Eigen::Index c) const { return m_(r, c); }

  /// max |M - M^dagger| relative to max |M| (0 for the zero matrix).
  double hermiticity_defect() const {
    const double scale = m_.cwiseAbs().maxCoeff();
    if (scale == 0.0) return 0.0;
    return (m_ - m_.adjoint()).cwiseAbs().maxCoeff() / scale;
  }
  bool is_hermitian(double rel_tol = 1e-12) const { return hermiticity_defect() <= rel_tol; }

  Operator adjoint() const { return Operator(m_.adjoint(), hermitian_); }

  friend Operator operator+(const Operator& a, const Operator& b) {
    check_same(a, b);
    return Operator(a.m_ + b.m_, a.hermitian_ && b.hermitian_);
  }
  friend Operator operator-(const Operator& a, const Operator& b) {
    check_same(a, b);
    return Operator(a.m_ - b.m_, a.hermitian_ && b.hermitian_);
  }
  friend Operator operator*(const Operator& a, const Operator& b) {
    check_same(a, b);
    return Operator(a.m_ * b.m_, false);
  }
  friend Operator operator*(double s, const Operator& a) { return Operator(s * a.m_, a.hermitian_); }
  friend Operator operator*(cplx s, const Operator& a) {
    return Operator(s * a.m_, a.hermitian_ && s.imag() == 0.0);
  }

 private:
  static void check_same(const Operator& a, const Operator& b) {
    if (a.dim() != b.dim())
      throw InvalidInput("operator dimension mismatch: " + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
  }

  CMatrix m_;
  bool hermitian_ = false;
};

inline Operator commutator(const Operator& a, const Operator& b) { return a * b - b * a; }

struct SpinMatrices {
  Operator Sx, Sy, Sz, Splus, Sminus;
};

/// Angular-momentum matrices in the descending-m basis.
inline SpinMatrices spin_matrices(SpinQuantum spin) {
  const int d = spin.multiplicity();
  const double I = spin.value();
  CMatrix plus = CMatrix::Zero(d, d);
  CMatrix z = CMatrix::Zero(d, d);
  for (int k = 0; k < d; ++k) {
    const double m = spin.m(k);
    z(k, k) = m;
    // <m+1| S+ |m> = sqrt(I(I+1) - m(m+1)); row k-1 holds m+1.
    if (k > 0) plus(k - 1, k) = std::sqrt(I * (I + 1.0) - m * (m + 1.0));
  }
  CMatrix minus = plus.adjoint();
  CMatrix x = 0.5 * (plus + minus);
  CMatrix y = (plus - minus) / cplx(0.0, 2.0);
  return {Operator(x, true), Operator(y, true), Operator(z, true), Operator(plus), Operator(minus)};
}

/// Ordered list of subsystems; position 0 is the electronic spin.
class SpinRegister {
 public:
  explicit SpinRegister(std::vector<SpinQuantum> subsystems) : subs_(std::move(subsystems)) {
    if (subs_.empty()) throw InvalidInput("spin register needs at least one subsystem");
    total_ = 1;
    for (auto s : subs_) total_ *= s.multiplicity();
  }

  std::size_t size() const { return subs_.size(); }
  const SpinQuantum& operator[](std::size_t i) const { return subs_.at(i); }
  std::span<const SpinQuantum> subsystems() const { return subs_; }
  Eigen::Index total_dim() const { return total_; }

  /// Per-subsystem basis indices of a composite basis index.
  std::vector<int> decompose(Eigen::Index index) const {
    std::vector<int> out(subs_.size());
    for (std::size_t i = subs_.size(); i-- > 0;) {
      const int d = subs_[i].multiplicity();
      out[i] = static_cast<int>(index % d);
      index /= d;
    }
    return out;
  }

 private:
  std::vector<SpinQuantum> subs_;
  Eigen::Index total_ = 1;
};

/// Left-associated Kronecker product of a non-empty operator list.
inline Operator kron_chain(std::span<const Operator> ops) {
  if (ops.empty()) throw InvalidInput("kron_chain needs a non-empty operator list");
  CMatrix acc = ops.front().matrix();
  bool herm = ops.front().hermitian_flag();
  for (std::size_t i = 1; i < ops.size(); ++i) {
    const CMatrix& b = ops[i].matrix();
    CMatrix next(acc.rows() * b.rows(), acc.cols() * b.cols());
    for (Eigen::Index r = 0; r < acc.rows(); ++r)
      for (Eigen::Index c = 0; c < acc.cols(); ++c)
        next.block(r * b.rows(), c * b.cols(), b.rows(), b.cols()) = acc(r, c) * b;
    acc = std::move(next);
    herm = herm && ops[i].hermitian_flag();
  }
  return Operator(std::move(acc), herm);
}

inline Operator kron_chain(std::initializer_list<Operator> ops) {
  return kron_chain(std::span<const Operator>(ops.begin(), ops.size()));
}

/// identity x ... x op x ... x identity with op at `site`.
inline Operator embed(const Operator& op, const SpinRegister& reg, std::size_t site) {
  if (site >= reg.size())
    throw InvalidInput("embed: site " + std::to_string(site) + " outside register of size " + std::to_string(reg.size()));
  if (op.dim() != reg[site].multiplicity())
    throw InvalidInput("embed: operator dim " + std::to_string(op.dim()) + " does not match multiplicity " +
                       std::to_string(reg[site].multiplicity()) + " of site " + std::to_string(site));
  // Identity blocks on either side collapse into two Kronecker factors.
  Eigen::Index left = 1, right = 1;
  for (std::size_t i = 0; i < site; ++i) left *= reg[i].multiplicity();
  for (std::size_t i = site + 1; i < reg.size(); ++i) right *= reg[i].multiplicity();
  std::vector<Operator> parts;
  if (left > 1) parts.push_back(Operator::identity(left));
  parts.push_back(op);
  if (right > 1) parts.push_back(Operator::identity(right));
  return kron_chain(parts);
}

}  // namespace spindefect
