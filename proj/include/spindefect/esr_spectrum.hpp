#pragma once

// Secular ESR spectral density of a defect coupled to a nuclear bath.
//
// Under the secular approximation every nuclear configuration shifts the
// electronic transition by sum_j Azz_j m_j. The density of these shifts is
// the inverse Fourier transform of the product of per-site characteristic
// functions, so a bath of n sites costs O(N * sum of site multiplicities)
// instead of prod(multiplicities).
//
// All shifts are placed on a frequency lattice of step bin_width / q. When
// every per-site shift Azz*m is a multiple of that step (the usual case for
// couplings quoted to finite decimal precision) the lattice is exact and the
// sampled characteristic function is periodic in the DFT window, so the
// transform reproduces the enumerated histogram to rounding error.

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "spindefect/error.hpp"
#include "spindefect/hamiltonian.hpp"
#include "spindefect/isotopes.hpp"

namespace spindefect {

struct BathComponent {
  IsotopeSpecies species;
  double weight = 1.0;  // isotope probability at this site
  double Azz = 0.0;     // MHz
};

struct BathSite {
  std::vector<BathComponent> composition;

  void validate() const {
    if (composition.empty()) throw InvalidInput("bath site has no isotope components");
    double sum = 0.0;
    for (const auto& c : composition) {
      if (!(c.weight >= 0.0 && c.weight <= 1.0))
        throw InvalidInput("bath site: weight of " + c.species.name + " outside [0,1]");
      if (!std::isfinite(c.Azz)) throw InvalidInput("bath site: non-finite Azz for " + c.species.name);
      sum += c.weight;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw InvalidInput("bath site: weights sum to " + std::to_string(sum));
  }

  /// Largest |Azz| * I over the composition.
  double max_shift() const {
    double m = 0.0;
    for (const auto& c : composition) m = std::max(m, std::abs(c.Azz) * c.species.spin.value());
    return m;
  }
};

inline BathSite pure_site(const IsotopeSpecies& s, double Azz) { return BathSite{{{s, 1.0, Azz}}}; }

/// Site with natural-abundance mixing, couplings scaled from `coupling_per_gamma` (MHz per MHz/G).
inline BathSite mixed_site(const std::vector<IsotopeSpecies>& isotopes, double coupling_per_gamma) {
  BathSite site;
  for (const auto& s : isotopes)
    if (s.natural_abundance > 0.0) site.composition.push_back({s, s.natural_abundance, coupling_per_gamma * s.gamma()});
  return site;
}

/// Binned density of secular shifts. Offsets are bin centres k * bin_width,
/// density is per MHz so that sum(density) * bin_width = 1.
struct SpectralDensity {
  double bin_width = 0.5;
  std::vector<double> freq_offsets;
  std::vector<double> density;
  bool exact_lattice = true;  // false when shifts were snapped to the lattice
  double lattice_step = 0.5;  // MHz

  std::vector<double> weights() const {
    std::vector<double> w(density.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = density[i] * bin_width;
    return w;
  }
  double total() const {
    double s = 0.0;
    for (double d : density) s += d * bin_width;
    return s;
  }
  /// Weight of the bin containing `offset`, or 0 outside the grid.
  double weight_at(double offset) const {
    if (freq_offsets.empty()) return 0.0;
    const auto k = static_cast<long>(std::floor(offset / bin_width + 0.5)) -
                   static_cast<long>(std::llround(freq_offsets.front() / bin_width));
    if (k < 0 || k >= static_cast<long>(density.size())) return 0.0;
    return density[static_cast<std::size_t>(k)] * bin_width;
  }
};

/// Frequency series: strictly ascending freqs (MHz) with intensities.
struct SpectrumSeries {
  std::vector<double> freqs;
  std::vector<double> values;
  std::map<std::string, std::string> metadata;

  void validate() const {
    if (freqs.size() != values.size()) throw InvalidInput("spectrum: freqs and values differ in length");
    for (std::size_t i = 1; i < freqs.size(); ++i)
      if (!(freqs[i] > freqs[i - 1])) throw InvalidInput("spectrum: frequencies must be strictly ascending");
  }
};

namespace detail {

inline long floor_div(long a, long b) {
  long q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

/// Bin index with the upper-bin rule on boundaries; the epsilon absorbs
/// rounding in sums of decimal couplings.
inline long bin_index(double x, double bin_width) { return static_cast<long>(std::floor(x / bin_width + 0.5 + 1e-9)); }

inline std::size_t next_pow2(double x) {
  std::size_t n = 1;
  while (static_cast<double>(n) < x) n <<= 1;
  return n;
}

struct Atom {
  double weight;
  double shift;  // MHz
};

inline std::vector<Atom> site_atoms(const BathSite& site) {
  std::vector<Atom> atoms;
  for (const auto& c : site.composition) {
    if (c.weight == 0.0) continue;
    const int d = c.species.spin.multiplicity();
    for (int k = 0; k < d; ++k) atoms.push_back({c.weight / d, c.Azz * c.species.spin.m(k)});
  }
  return atoms;
}

inline void validate_sites(const std::vector<BathSite>& sites) {
  for (const auto& s : sites) s.validate();
}

inline double support_bound(const std::vector<BathSite>& sites) {
  double s = 0.0;
  for (const auto& site : sites) s += site.max_shift();
  return s;
}

inline SpectralDensity empty_grid(double bin_width, double f_max, double lattice_step, bool exact) {
  const long K = static_cast<long>(std::ceil(f_max / bin_width - 1e-12));
  SpectralDensity out;
  out.bin_width = bin_width;
  out.lattice_step = lattice_step;
  out.exact_lattice = exact;
  for (long k = -K; k <= K; ++k) out.freq_offsets.push_back(static_cast<double>(k) * bin_width);
  out.density.assign(out.freq_offsets.size(), 0.0);
  return out;
}

}  // namespace detail

/// Half-width that contains every secular shift: sum over sites of max |Azz| I.
inline double spectral_support_bound(const std::vector<BathSite>& sites) { return detail::support_bound(sites); }

/// Distance between the extreme shifts of the bath: sum over sites of max 2 I |Azz|.
inline double spectral_support_width(const std::vector<BathSite>& sites) { return 2.0 * detail::support_bound(sites); }

struct DensityOptions {
  double bin_width = 0.5;         // MHz
  std::optional<double> f_max;    // MHz; default 1.2 * support bound
  unsigned workers = 1;           // threads for characteristic-function sampling
  int max_oversample = 200;       // largest lattice refinement q tried
  int fallback_oversample = 10;   // q used when no exact lattice exists
  std::size_t max_samples = std::size_t{1} << 22;
};

namespace detail {

inline double resolve_f_max(const std::vector<BathSite>& sites, const DensityOptions& opt) {
  if (!(opt.bin_width > 0.0)) throw InvalidInput("bin_width must be positive");
  const double bound = support_bound(sites);
  const double required = 1.2 * bound;
  if (opt.f_max) {
    if (*opt.f_max < required - 1e-12)
      throw InvalidInput("f_max = " + std::to_string(*opt.f_max) + " MHz is below the required support bound " +
                         std::to_string(required) + " MHz (1.2 x " + std::to_string(bound) + ")");
    return std::max(*opt.f_max, opt.bin_width);
  }
  return std::max(required, opt.bin_width);
}

}  // namespace detail

/// Spectral density by the characteristic-function / FFT route.
inline SpectralDensity spectral_density_fft(const std::vector<BathSite>& sites, const DensityOptions& opt = {}) {
  detail::validate_sites(sites);
  const double f_max = detail::resolve_f_max(sites, opt);
  const double bw = opt.bin_width;

  std::vector<std::vector<detail::Atom>> atoms;
  for (const auto& s : sites) atoms.push_back(detail::site_atoms(s));

  auto samples_for = [&](int q) { return detail::next_pow2(4.0 * f_max / (bw / q)); };

  // Smallest refinement q for which every shift lands on the lattice.
  int q = 0;
  for (int cand = 1; cand <= opt.max_oversample && samples_for(cand) <= opt.max_samples; ++cand) {
    const double step = bw / cand;
    bool ok = true;
    for (const auto& site : atoms) {
      for (const auto& a : site) {
        const double u = a.shift / step;
        if (std::abs(u - std::round(u)) > 1e-6) {
          ok = false;
          break;
        }
      }
      if (!ok) break;
    }
    if (ok) {
      q = cand;
      break;
    }
  }
  const bool exact = q != 0;
  if (!exact) {
    q = std::max(1, opt.fallback_oversample);
    while (q > 1 && samples_for(q) > opt.max_samples) --q;
  }
  const double step = bw / q;
  const std::size_t N = samples_for(q);

  // Lattice index of every atom; phases are exact N-th roots of unity.
  struct LatticeAtom {
    double weight;
    long index;
  };
  std::vector<std::vector<LatticeAtom>> lattice;
  for (const auto& site : atoms) {
    std::vector<LatticeAtom> l;
    for (const auto& a : site) l.push_back({a.weight, static_cast<long>(std::floor(a.shift / step + 0.5))});
    lattice.push_back(std::move(l));
  }
  std::vector<cplx> roots(N);
  for (std::size_t k = 0; k < N; ++k) {
    const double ang = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(N);
    roots[k] = {std::cos(ang), std::sin(ang)};
  }

  std::vector<cplx> chi(N);
  const long Nl = static_cast<long>(N);
  auto sample_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t n = begin; n < end; ++n) {
      cplx prod{1.0, 0.0};
      for (const auto& site : lattice) {
        cplx factor{0.0, 0.0};
        for (const auto& a : site) {
          long idx = (a.index % Nl) * static_cast<long>(n) % Nl;
          if (idx < 0) idx += Nl;
          factor += a.weight * roots[static_cast<std::size_t>(idx)];
        }
        prod *= factor;
      }
      chi[n] = prod;
    }
  };
  const unsigned workers = std::max(1u, opt.workers);
  if (workers == 1) {
    sample_range(0, N);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (N + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
      const std::size_t b = w * chunk, e = std::min(N, b + chunk);
      if (b < e) pool.emplace_back(sample_range, b, e);
    }
  }

  Eigen::FFT<double> fft;
  std::vector<cplx> fine;
  fft.inv(fine, chi);  // includes the 1/N factor

  auto out = detail::empty_grid(bw, f_max, step, exact);
  const long K = static_cast<long>(out.density.size() / 2);
  for (std::size_t n = 0; n < N; ++n) {
    const long j = (n < N / 2) ? static_cast<long>(n) : static_cast<long>(n) - Nl;
    const long k = detail::floor_div(2 * j + q, 2L * q);
    if (k < -K || k > K) continue;
    out.density[static_cast<std::size_t>(k + K)] += std::abs(fine[n]) / bw;
  }
  return out;
}

inline constexpr std::uint64_t kMaxBruteforceConfigurations = 1'000'000;

inline std::uint64_t configuration_count(const std::vector<BathSite>& sites) {
  std::uint64_t count = 1;
  for (const auto& s : sites) {
    std::uint64_t per = 0;
    for (const auto& c : s.composition) per += static_cast<std::uint64_t>(c.species.spin.multiplicity());
    if (count > kMaxBruteforceConfigurations * 100) return count;  // saturate
    count *= per;
  }
  return count;
}

/// Exact enumeration of every nuclear configuration; small baths only.
inline SpectralDensity spectral_density_bruteforce(const std::vector<BathSite>& sites, double bin_width = 0.5,
                                                   std::optional<double> f_max = std::nullopt) {
  detail::validate_sites(sites);
  const std::uint64_t count = configuration_count(sites);
  if (count > kMaxBruteforceConfigurations)
    throw InvalidInput("bruteforce enumeration: " + std::to_string(count) + " configurations exceed the limit of " +
                       std::to_string(kMaxBruteforceConfigurations));
  DensityOptions opt;
  opt.bin_width = bin_width;
  opt.f_max = f_max;
  const double fm = detail::resolve_f_max(sites, opt);
  auto out = detail::empty_grid(bin_width, fm, bin_width, true);
  const long K = static_cast<long>(out.density.size() / 2);

  std::vector<std::vector<detail::Atom>> atoms;
  for (const auto& s : sites) atoms.push_back(detail::site_atoms(s));
  std::vector<std::size_t> choice(atoms.size(), 0);
  // Odometer over all configurations; zero-weight components still count
  // toward the configuration total but contribute nothing.
  std::vector<const std::vector<detail::Atom>*> live;
  for (const auto& a : atoms) live.push_back(&a);
  while (true) {
    double w = 1.0, x = 0.0;
    for (std::size_t i = 0; i < live.size(); ++i) {
      const auto& a = (*live[i])[choice[i]];
      w *= a.weight;
      x += a.shift;
    }
    const long k = detail::bin_index(x, bin_width);
    if (k >= -K && k <= K) out.density[static_cast<std::size_t>(k + K)] += w / bin_width;
    std::size_t i = live.size();
    while (i > 0) {
      --i;
      if (++choice[i] < live[i]->size()) break;
      choice[i] = 0;
      if (i == 0) return out;
    }
    if (live.empty()) return out;
  }
}

namespace detail {

/// Integral over [a, b] of a Lorentzian (FWHM gamma) periodised with period L.
inline double periodic_lorentz_mass(double a, double b, double gamma, double L) {
  const double coth = 1.0 / std::tanh(std::numbers::pi * gamma / (2.0 * L));
  auto cdf = [&](double x) {
    const double wraps = std::round(x / L);
    const double r = x - wraps * L;  // in [-L/2, L/2]
    double g;
    if (std::abs(std::abs(r) - 0.5 * L) < 1e-15 * L)
      g = std::copysign(0.5, r);
    else
      g = std::atan(coth * std::tan(std::numbers::pi * r / L)) / std::numbers::pi;
    return g + wraps;
  };
  return cdf(b) - cdf(a);
}

}  // namespace detail

/// ESR intensity 1 - contrast * (density convolved with a unit-area Lorentzian).
///
/// The convolution is circular over the density grid (equivalently, the
/// characteristic function is damped by exp(-pi * fwhm * |t|)), so the
/// absorbed area equals `contrast` exactly; pass `half_span` to widen the
/// window and push the wrapped tails further from the lines.
inline SpectrumSeries synthesize_esr(const SpectralDensity& density, double center, double contrast,
                                     double extra_fwhm = 0.0, std::optional<double> half_span = std::nullopt) {
  if (!(contrast > 0.0 && contrast <= 1.0)) throw InvalidInput("synthesize_esr: contrast must lie in (0, 1]");
  if (!(extra_fwhm >= 0.0)) throw InvalidInput("synthesize_esr: extra_fwhm must be >= 0");
  if (density.density.empty()) throw InvalidInput("synthesize_esr: empty density");
  const double bw = density.bin_width;
  const long K0 = static_cast<long>(density.density.size() / 2);
  long K = K0;
  if (half_span) K = std::max(K0, static_cast<long>(std::ceil(*half_span / bw)));
  const std::size_t M = static_cast<std::size_t>(2 * K + 1);

  std::vector<double> w(M, 0.0);
  for (std::size_t i = 0; i < density.density.size(); ++i)
    w[static_cast<std::size_t>(static_cast<long>(i) - K0 + K)] = density.density[i] * bw;

  std::vector<double> absorbed(M, 0.0);
  if (extra_fwhm == 0.0) {
    absorbed = w;
  } else {
    const double L = static_cast<double>(M) * bw;
    std::vector<double> kernel(M);
    for (std::size_t d = 0; d < M; ++d) {
      const double c = static_cast<double>(d) * bw;
      kernel[d] = detail::periodic_lorentz_mass(c - 0.5 * bw, c + 0.5 * bw, extra_fwhm, L);
    }
    for (std::size_t j = 0; j < M; ++j) {
      if (w[j] == 0.0) continue;
      for (std::size_t k = 0; k < M; ++k) absorbed[k] += w[j] * kernel[(k + M - j) % M];
    }
  }

  SpectrumSeries out;
  out.freqs.resize(M);
  out.values.resize(M);
  for (std::size_t k = 0; k < M; ++k) {
    out.freqs[k] = center + static_cast<double>(static_cast<long>(k) - K) * bw;
    out.values[k] = 1.0 - contrast * absorbed[k];
  }
  out.metadata["kind"] = "esr";
  return out;
}

struct TransitionCenters {
  double f_minus = 0.0;  // m_s = 0 <-> -1, MHz
  double f_plus = 0.0;   // m_s = 0 <-> +1, MHz
  std::optional<std::string> warning;
};

/// Secular transition frequencies D_gs -/+ gamma_e Bz.
inline TransitionCenters transition_centers(const DefectModel& model, const FieldConfig& field) {
  TransitionCenters tc{model.D_gs - model.gamma_e * field.Bz, model.D_gs + model.gamma_e * field.Bz, std::nullopt};
  const double lim = 0.05 * std::abs(field.Bz);
  if (std::abs(field.Bx) > lim || std::abs(field.By) > lim)
    tc.warning = "transverse field exceeds 5% of Bz; secular line positions are approximate";
  return tc;
}

}  // namespace spindefect
