#pragma once

// Second-order couplings between nuclear sublevels of one electronic level
// under a weak transverse drive.

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "spindefect/error.hpp"
#include "spindefect/exact_dynamics.hpp"
#include "spindefect/hamiltonian.hpp"

namespace spindefect {

/// Smallest |D_gs - gamma_e Bz| for which the expansion is accepted, MHz.
inline constexpr double kPerturbativeGapGuard = 10.0;

enum class ElectronLevel { Minus, Zero, Plus };

namespace detail {

inline void check_gap(double gap, const char* who) {
  if (!(std::abs(gap) > kPerturbativeGapGuard))
    throw InvalidInput(std::string(who) + ": |D_gs - gamma_e Bz| = " + std::to_string(std::abs(gap)) +
                       " MHz; the field must be far away from the ground-state anti-crossing");
}

/// Energy-denominator factor of each level.
inline double level_factor(ElectronLevel level, double D_gs, double gamma_e, double Bz) {
  const double lo = D_gs - gamma_e * Bz, hi = D_gs + gamma_e * Bz;
  check_gap(lo, "effective coupling");
  switch (level) {
    case ElectronLevel::Minus: return 1.0 / lo;
    case ElectronLevel::Plus:
      check_gap(hi, "effective coupling");
      return 1.0 / hi;
    case ElectronLevel::Zero:
      check_gap(hi, "effective coupling");
      return 1.0 / hi + 1.0 / lo;
  }
  return 0.0;
}

}  // namespace detail

struct EffectiveCouplingOptions {
  ElectronLevel level = ElectronLevel::Minus;
  /// When set, adds the bare nuclear Zeeman drive -gamma_n B_dr e^{-i theta} / 2.
  std::optional<double> bare_gamma_n;
};

/// omega = -gamma_e B_dr (A1 e^{i theta} + A2^* e^{-i theta}) / (D_gs - gamma_e Bz)
inline cplx omega_j(const LadderCoefficients& lc, const DriveSpec& drive, double D_gs, double gamma_e, double Bz,
                    const EffectiveCouplingOptions& opt = {}) {
  if (!(drive.B_dr >= 0.0)) throw InvalidInput("omega_j: B_dr must be >= 0");
  const double f = detail::level_factor(opt.level, D_gs, gamma_e, Bz);
  const cplx eip = std::polar(1.0, drive.theta);
  cplx w = -gamma_e * drive.B_dr * (lc.A1 * eip + std::conj(lc.A2) * std::conj(eip)) * f;
  if (opt.bare_gamma_n) w += -0.5 * *opt.bare_gamma_n * drive.B_dr * std::conj(eip);
  return w;
}

/// One coupling per nucleus of the model, in model order.
inline std::vector<cplx> model_omegas(const DefectModel& model, const FieldConfig& field, const DriveSpec& drive,
                                      const EffectiveCouplingOptions& opt = {}) {
  std::vector<cplx> out;
  for (const auto& n : model.nuclei)
    out.push_back(omega_j(ladder_coefficients(n.tensor), drive, model.D_gs, model.gamma_e, field.Bz, opt));
  return out;
}

/// Nuclear coupling matrix in the |m_I^1, m_I^2, m_I^3> basis of one
/// electronic level (descending m, nucleus 1 slowest). A pair of states
/// differing only in nucleus j carries omega_j above the diagonal.
inline Operator rabi_matrix(const std::array<cplx, 3>& w) {
  CMatrix m = CMatrix::Zero(8, 8);
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 3; ++j) {
      const int bit = 4 >> j;
      if (i & bit) continue;
      m(i, i | bit) = w[static_cast<std::size_t>(j)];
      m(i | bit, i) = std::conj(w[static_cast<std::size_t>(j)]);
    }
  }
  return Operator(std::move(m), true);
}

/// The eight values +-|w1| +-|w2| +-|w3|, ascending.
inline std::vector<double> rabi_matrix_closed_form(const std::array<cplx, 3>& w) {
  std::vector<double> out;
  for (int s = 0; s < 8; ++s)
    out.push_back((s & 4 ? -1.0 : 1.0) * std::abs(w[0]) + (s & 2 ? -1.0 : 1.0) * std::abs(w[1]) +
                  (s & 1 ? -1.0 : 1.0) * std::abs(w[2]));
  std::sort(out.begin(), out.end());
  return out;
}

/// The four Rabi frequencies 2 ||w1| +- |w2| +- |w3||, ascending.
inline std::array<double, 4> rabi_frequencies(const std::array<cplx, 3>& w) {
  const double a = std::abs(w[0]), b = std::abs(w[1]), c = std::abs(w[2]);
  std::array<double, 4> f{2.0 * std::abs(a + b + c), 2.0 * std::abs(a + b - c), 2.0 * std::abs(a - b + c),
                          2.0 * std::abs(a - b - c)};
  std::sort(f.begin(), f.end());
  return f;
}

struct EnhancementReport {
  double gamma_eff = 0.0;           // MHz/G, averaged over the drive angle
  double gamma_eff_theta = 0.0;     // MHz/G, at the requested angle
  std::optional<double> enhancement;  // gamma_eff / |gamma_n|
  double transverse_magnitude = 0.0;  // MHz
  double gap = 0.0;                   // D_gs - gamma_e Bz, MHz
  double guard_margin = 0.0;          // |gap| - guard, MHz
};

/// gamma_eff = gamma_e sqrt(Axx^2 + Ayy^2 + 2 Axy^2) / (sqrt2 (D_gs - gamma_e Bz))
inline EnhancementReport gamma_eff(const HyperfineTensor& t, double D_gs, double gamma_e, double Bz,
                                   std::optional<double> gamma_n = std::nullopt, double theta = 0.0) {
  const double gap = D_gs - gamma_e * Bz;
  detail::check_gap(gap, "gamma_eff");
  EnhancementReport r;
  r.gap = gap;
  r.guard_margin = std::abs(gap) - kPerturbativeGapGuard;
  r.transverse_magnitude = t.transverse_magnitude();
  r.gamma_eff = gamma_e * r.transverse_magnitude / (std::sqrt(2.0) * std::abs(gap));
  const auto lc = ladder_coefficients(t);
  const cplx eip = std::polar(1.0, theta);
  r.gamma_eff_theta = 2.0 * gamma_e * std::abs(lc.A1 * eip + std::conj(lc.A2) * std::conj(eip)) / std::abs(gap);
  if (gamma_n) {
    if (*gamma_n == 0.0) throw InvalidInput("gamma_eff: gamma_n must be non-zero for an enhancement ratio");
    r.enhancement = r.gamma_eff / std::abs(*gamma_n);
  }
  return r;
}

/// gamma_eff = (Omega_n / R_volt) / Omega_e * gamma_e
inline double calibrate_gamma_eff(double Omega_n, double Omega_e, double R_volt, double gamma_e = kGammaElectron) {
  if (!(Omega_n > 0.0 && Omega_e > 0.0 && R_volt > 0.0 && gamma_e > 0.0))
    throw InvalidInput("calibrate_gamma_eff: all inputs must be positive");
  return Omega_n / R_volt / Omega_e * gamma_e;
}

/// Nuclear Rabi frequency that yields `gamma_eff` for the given electron calibration.
inline double required_nuclear_rabi(double gamma_eff, double Omega_e, double R_volt, double gamma_e = kGammaElectron) {
  if (!(gamma_eff > 0.0 && Omega_e > 0.0 && R_volt > 0.0 && gamma_e > 0.0))
    throw InvalidInput("required_nuclear_rabi: all inputs must be positive");
  return gamma_eff / gamma_e * Omega_e * R_volt;
}

/// Transverse magnitude that produces `gamma_eff` at the given field.
inline double infer_transverse_magnitude(double gamma_eff, double D_gs, double gamma_e, double Bz) {
  const double gap = D_gs - gamma_e * Bz;
  detail::check_gap(gap, "infer_transverse_magnitude");
  if (!(gamma_eff >= 0.0)) throw InvalidInput("infer_transverse_magnitude: gamma_eff must be >= 0");
  if (!(gamma_e > 0.0)) throw InvalidInput("infer_transverse_magnitude: gamma_e must be positive");
  return gamma_eff * std::sqrt(2.0) * std::abs(gap) / gamma_e;
}

/// Drive amplitude whose slow (averaged) Rabi frequency equals Omega_n.
inline double drive_for_nuclear_rabi(double Omega_n, const EnhancementReport& r) {
  if (!(r.gamma_eff > 0.0)) throw InvalidInput("drive_for_nuclear_rabi: gamma_eff must be positive");
  return Omega_n / r.gamma_eff;
}

}  // namespace spindefect
