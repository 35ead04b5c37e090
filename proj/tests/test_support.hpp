#pragma once

// Fixtures shared by the unit and acceptance suites.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "spindefect/spindefect.hpp"

namespace spindefect::testing {

/// Registry with boron gyromagnetic ratios filled in (MHz/G). The bundled
/// registry leaves them for the user; these are standard tabulated values.
inline IsotopeRegistry registry_with_boron() {
  const double g15 = -kGammaElectron / kElectronTo15NRatio;
  return IsotopeRegistry({
      {"14N", SpinQuantum(2), g15 / k15NTo14NGammaRatio, 0.996},
      {"15N", SpinQuantum(1), g15, 0.004},
      {"10B", SpinQuantum(6), 4.5751e-4, 0.2},
      {"11B", SpinQuantum(3), 1.36630e-3, 0.8},
  });
}

/// Random bath whose couplings sit on a 0.1 MHz grid, so every shift is
/// commensurate with a refined 0.5 MHz lattice. Sites mix up to all four
/// isotopes with random weights.
inline std::vector<BathSite> random_lattice_bath(std::mt19937& rng, const IsotopeRegistry& reg,
                                                 std::uint64_t max_configs) {
  const std::vector<std::string> names{"14N", "15N", "10B", "11B"};
  std::uniform_int_distribution<int> nsites(1, 5), ncomp(1, 4), coupling(-400, 400);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  for (;;) {
    std::vector<BathSite> sites;
    const int n = nsites(rng);
    for (int s = 0; s < n; ++s) {
      std::vector<std::string> pool = names;
      std::shuffle(pool.begin(), pool.end(), rng);
      const int k = ncomp(rng);
      BathSite site;
      double sum = 0.0;
      std::vector<double> w;
      for (int c = 0; c < k; ++c) {
        w.push_back(u(rng));
        sum += w.back();
      }
      double acc = 0.0;
      for (int c = 0; c < k; ++c) {
        double wc = w[static_cast<std::size_t>(c)] / sum;
        if (c == k - 1) wc = 1.0 - acc;
        acc += wc;
        site.composition.push_back({reg.at(pool[static_cast<std::size_t>(c)]), wc, 0.1 * coupling(rng)});
      }
      sites.push_back(std::move(site));
    }
    if (configuration_count(sites) <= max_configs) return sites;
  }
}

/// Sample times at whole drive periods up to `span` microseconds.
inline std::vector<double> stroboscopic_times(double freq, double span) {
  const double T = 1.0 / freq;
  std::vector<double> t;
  for (long k = 0; static_cast<double>(k) * T <= span; ++k) t.push_back(static_cast<double>(k) * T);
  return t;
}

/// Full width at half depth of the deepest feature of an ESR series.
inline double half_depth_width(const SpectrumSeries& s) {
  const auto it = std::min_element(s.values.begin(), s.values.end());
  const double half = 1.0 - 0.5 * (1.0 - *it);
  std::size_t lo = 0, hi = s.values.size() - 1;
  while (lo < s.values.size() && s.values[lo] > half) ++lo;
  while (hi > 0 && s.values[hi] > half) --hi;
  return s.freqs[hi] - s.freqs[lo];
}

}  // namespace spindefect::testing
