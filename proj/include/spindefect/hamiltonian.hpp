#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "spindefect/error.hpp"
#include "spindefect/isotopes.hpp"
#include "spindefect/spin_core.hpp"

namespace spindefect {

/// Hyperfine coupling tensor in MHz. Mirror symmetry about the lattice plane
/// forces Axz = Ayz = Azx = Azy = 0, and Ayx = Axy.
struct HyperfineTensor {
  double Axx = 0.0, Ayy = 0.0, Axy = 0.0, Azz = 0.0;

  std::array<std::array<double, 3>, 3> full() const {
    return {{{Axx, Axy, 0.0}, {Axy, Ayy, 0.0}, {0.0, 0.0, Azz}}};
  }

  /// sqrt(Axx^2 + Ayy^2 + 2 Axy^2)
  double transverse_magnitude() const { return std::sqrt(Axx * Axx + Ayy * Ayy + 2.0 * Axy * Axy); }

  friend bool operator==(const HyperfineTensor&, const HyperfineTensor&) = default;
};

/// Ladder-operator form: Azz Sz Iz + (A1 S+ I- + h.c.) + (A2 S+ I+ + h.c.)
struct LadderCoefficients {
  double A1 = 0.0;
  cplx A2{0.0, 0.0};
};

inline LadderCoefficients ladder_coefficients(const HyperfineTensor& t) {
  return {0.25 * (t.Axx + t.Ayy), cplx(0.25 * (t.Axx - t.Ayy), 0.0) + t.Axy / cplx(0.0, 2.0)};
}

/// Inverse of ladder_coefficients.
inline HyperfineTensor tensor_from_ladder(const LadderCoefficients& lc, double Azz) {
  // A1 = (Axx+Ayy)/4, Re A2 = (Axx-Ayy)/4, Im A2 = -Axy/2
  return {2.0 * lc.A1 + 2.0 * lc.A2.real(), 2.0 * lc.A1 - 2.0 * lc.A2.real(), -2.0 * lc.A2.imag(), Azz};
}

/// Conjugates the in-plane block by the rotation R(phi); Azz is untouched.
inline HyperfineTensor rotate_tensor(const HyperfineTensor& t, double phi) {
  const double c = std::cos(phi), s = std::sin(phi);
  // R M R^T with M = [[Axx, Axy], [Axy, Ayy]]
  const double xx = c * c * t.Axx - 2.0 * c * s * t.Axy + s * s * t.Ayy;
  const double yy = s * s * t.Axx + 2.0 * c * s * t.Axy + c * c * t.Ayy;
  const double xy = c * s * (t.Axx - t.Ayy) + (c * c - s * s) * t.Axy;
  return {xx, yy, xy, t.Azz};
}

/// Hyperfine couplings scale with the nuclear gyromagnetic ratio.
inline HyperfineTensor isotope_substitute(const HyperfineTensor& t, const IsotopeSpecies& from,
                                          const IsotopeSpecies& to) {
  const double g_from = from.gamma();
  if (g_from == 0.0) throw InvalidInput("isotope_substitute: source isotope " + from.name + " has zero gamma_n");
  const double r = to.gamma() / g_from;
  return {t.Axx * r, t.Ayy * r, t.Axy * r, t.Azz * r};
}

/// Divides the transverse components by `factor`.
inline HyperfineTensor rescale_transverse(const HyperfineTensor& t, double factor) {
  if (!(factor > 0.0)) throw InvalidInput("rescale_transverse: factor must be positive");
  return {t.Axx / factor, t.Ayy / factor, t.Axy / factor, t.Azz};
}

struct Nucleus {
  IsotopeSpecies species;
  HyperfineTensor tensor;
};

struct DefectModel {
  double D_gs = kZeroFieldSplitting;  // MHz
  double gamma_e = kGammaElectron;    // MHz/G
  std::vector<Nucleus> nuclei;
  bool include_quadrupole = false;  // reserved; rejected by build_hamiltonian

  SpinRegister register_layout() const {
    std::vector<SpinQuantum> subs{SpinQuantum::one()};
    for (const auto& n : nuclei) subs.push_back(n.species.spin);
    return SpinRegister(std::move(subs));
  }
};

struct FieldConfig {
  double Bz = 0.0;  // G
  double Bx = 0.0;
  double By = 0.0;
};

inline constexpr std::size_t kMaxModelNuclei = 6;

/// Term-by-term Cartesian hyperfine operator for nucleus at `site`.
inline Operator hyperfine_cartesian(const HyperfineTensor& t, const SpinRegister& reg, std::size_t site) {
  const auto S = spin_matrices(reg[0]);
  const auto I = spin_matrices(reg[site]);
  auto e = [&](const Operator& op) { return embed(op, reg, 0); };
  auto n = [&](const Operator& op) { return embed(op, reg, site); };
  return t.Azz * (e(S.Sz) * n(I.Sz)) + t.Axx * (e(S.Sx) * n(I.Sx)) + t.Ayy * (e(S.Sy) * n(I.Sy)) +
         t.Axy * (e(S.Sx) * n(I.Sy)) + t.Axy * (e(S.Sy) * n(I.Sx));
}

/// Same operator assembled from the ladder coefficients.
inline Operator hyperfine_ladder(const HyperfineTensor& t, const SpinRegister& reg, std::size_t site) {
  const auto S = spin_matrices(reg[0]);
  const auto I = spin_matrices(reg[site]);
  const auto lc = ladder_coefficients(t);
  const Operator flipflop = embed(S.Splus, reg, 0) * embed(I.Sminus, reg, site);
  const Operator flipflip = embed(S.Splus, reg, 0) * embed(I.Splus, reg, site);
  const Operator t1 = cplx(lc.A1, 0.0) * flipflop;
  const Operator t2 = lc.A2 * flipflip;
  return t.Azz * (embed(S.Sz, reg, 0) * embed(I.Sz, reg, site)) + t1 + t1.adjoint() + t2 + t2.adjoint();
}

/// Ground-state Hamiltonian in MHz on the register (electron, nuclei...).
inline Operator build_hamiltonian(const DefectModel& model, const FieldConfig& field) {
  if (model.include_quadrupole)
    throw InvalidInput("build_hamiltonian: nuclear quadrupole terms are not supported");
  if (model.nuclei.size() > kMaxModelNuclei)
    throw InvalidInput("build_hamiltonian: " + std::to_string(model.nuclei.size()) + " nuclei exceed the limit of " +
                       std::to_string(kMaxModelNuclei));
  if (!(model.D_gs > 0.0)) throw InvalidInput("build_hamiltonian: D_gs must be positive");

  const SpinRegister reg = model.register_layout();
  const auto S = spin_matrices(reg[0]);
  const Operator Sz = embed(S.Sz, reg, 0);

  CMatrix h = model.D_gs * (Sz * Sz).matrix();
  h += model.gamma_e * (field.Bz * Sz.matrix() + field.Bx * embed(S.Sx, reg, 0).matrix() +
                        field.By * embed(S.Sy, reg, 0).matrix());
  for (std::size_t j = 0; j < model.nuclei.size(); ++j) {
    const auto& nuc = model.nuclei[j];
    const std::size_t site = j + 1;
    const auto I = spin_matrices(reg[site]);
    const double g = nuc.species.gamma();
    h -= g * (field.Bz * embed(I.Sz, reg, site).matrix() + field.Bx * embed(I.Sx, reg, site).matrix() +
              field.By * embed(I.Sy, reg, site).matrix());
    h += hyperfine_ladder(nuc.tensor, reg, site).matrix();
  }
  Operator H(std::move(h), true);
  if (!H.is_hermitian(1e-12)) throw NumericalFailure("build_hamiltonian: assembled operator is not Hermitian");
  return H;
}

/// The three nearest-neighbour tensors: base rotated by 0, 2pi/3, 4pi/3.
inline std::vector<HyperfineTensor> threefold_shell(const HyperfineTensor& base) {
  constexpr double step = 2.0 * std::numbers::pi / 3.0;
  return {rotate_tensor(base, 0.0), rotate_tensor(base, step), rotate_tensor(base, 2.0 * step)};
}

/// Transverse proportions Axx : Ayy : Axy of the default nitrogen tensor.
/// Only the combined magnitude is constrained by measurement; these ratios
/// are editable data (see data/defect_15n.json).
inline constexpr std::array<double, 3> kDefaultTransverseShape{47.9, 90.5, 0.0};

/// Base 15N tensor with measured Azz and a chosen transverse magnitude.
inline HyperfineTensor nitrogen15_base_tensor(double transverse_magnitude = 30.0, double Azz = -65.9,
                                              std::array<double, 3> shape = kDefaultTransverseShape) {
  HyperfineTensor unit{shape[0], shape[1], shape[2], 0.0};
  const double norm = unit.transverse_magnitude();
  if (norm == 0.0) return {0.0, 0.0, 0.0, Azz};
  // Sign follows the negative 15N gyromagnetic ratio.
  const double s = -transverse_magnitude / norm;
  return {unit.Axx * s, unit.Ayy * s, unit.Axy * s, Azz};
}

/// Defect plus its three nearest 15N nuclei.
inline DefectModel default_15n_model(double transverse_magnitude = 30.0,
                                     const IsotopeRegistry& registry = default_registry()) {
  DefectModel m;
  const auto& n15 = registry.at("15N");
  for (const auto& t : threefold_shell(nitrogen15_base_tensor(transverse_magnitude)))
    m.nuclei.push_back({n15, t});
  return m;
}

}  // namespace spindefect
