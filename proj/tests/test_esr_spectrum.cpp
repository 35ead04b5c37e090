#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "spindefect/esr_spectrum.hpp"
#include "test_support.hpp"

using namespace spindefect;
using spindefect::testing::registry_with_boron;

namespace {

const IsotopeRegistry& reg() {
  static const IsotopeRegistry r = registry_with_boron();
  return r;
}

std::vector<std::pair<double, double>> populated(const SpectralDensity& d, double tol = 1e-12) {
  std::vector<std::pair<double, double>> out;
  const auto w = d.weights();
  for (std::size_t i = 0; i < w.size(); ++i)
    if (w[i] > tol) out.emplace_back(d.freq_offsets[i], w[i]);
  return out;
}

double max_diff(const SpectralDensity& a, const SpectralDensity& b) {
  EXPECT_EQ(a.density.size(), b.density.size());
  double m = 0.0;
  const auto wa = a.weights(), wb = b.weights();
  for (std::size_t i = 0; i < std::min(wa.size(), wb.size()); ++i) m = std::max(m, std::abs(wa[i] - wb[i]));
  return m;
}

}  // namespace

TEST(SpectralDensityFft, SingleNitrogen15) {
  const auto d = spectral_density_fft({pure_site(reg().at("15N"), -65.9)});
  const auto p = populated(d);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_NEAR(d.weight_at(32.95), 0.5, 1e-12);
  EXPECT_NEAR(d.weight_at(-32.95), 0.5, 1e-12);
  EXPECT_TRUE(d.exact_lattice);
}

TEST(SpectralDensityFft, SingleNitrogen14) {
  const auto d = spectral_density_fft({pure_site(reg().at("14N"), 48.3)});
  const auto p = populated(d);
  ASSERT_EQ(p.size(), 3u);
  for (double x : {-48.3, 0.0, 48.3}) EXPECT_NEAR(d.weight_at(x), 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(p[1].first - p[0].first, 48.5, 1e-12);  // bin centres of the 0.5 MHz grid
}

TEST(SpectralDensityFft, ThreeNitrogen15Multiplet) {
  const auto s = pure_site(reg().at("15N"), -65.9);
  const auto d = spectral_density_fft({s, s, s});
  const auto p = populated(d);
  ASSERT_EQ(p.size(), 4u);
  const double expect[] = {1.0 / 8, 3.0 / 8, 3.0 / 8, 1.0 / 8};
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(p[k].second, expect[k], 1e-12);
  EXPECT_NEAR(d.weight_at(98.85), 0.125, 1e-12);
  EXPECT_NEAR(d.weight_at(-32.95), 0.375, 1e-12);
}

TEST(SpectralDensityFft, RejectsSmallFmaxWithBound) {
  DensityOptions opt;
  opt.f_max = 10.0;
  try {
    spectral_density_fft({pure_site(reg().at("15N"), -65.9)}, opt);
    FAIL();
  } catch (const InvalidInput& e) {
    EXPECT_NE(std::string(e.what()).find("39.54"), std::string::npos) << e.what();
  }
}

TEST(SpectralDensityFft, NormalisedAndSymmetric) {
  // Shifts lie on a 0.05 MHz grid; 0.55 MHz bins keep them off every bin
  // boundary, where the upper-bin tie rule would break mirror symmetry.
  std::mt19937 rng(4);
  DensityOptions opt;
  opt.bin_width = 0.55;
  for (int rep = 0; rep < 10; ++rep) {
    const auto bath = spindefect::testing::random_lattice_bath(rng, reg(), 1'000'000);
    const auto d = spectral_density_fft(bath, opt);
    EXPECT_TRUE(d.exact_lattice);
    EXPECT_NEAR(d.total(), 1.0, 1e-6);
    const auto w = d.weights();
    for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(w[i], w[w.size() - 1 - i], 1e-12);
    for (double x : d.density) EXPECT_GE(x, 0.0);
  }
}

TEST(SpectralDensityFft, BoundaryTiesGoUp) {
  // +-0.25 MHz sit on the edges of the 0.5 MHz bins around zero.
  const auto d = spectral_density_fft({pure_site(reg().at("15N"), 0.5)});
  EXPECT_NEAR(d.weight_at(0.5), 0.5, 1e-12);
  EXPECT_NEAR(d.weight_at(0.0), 0.5, 1e-12);
  EXPECT_LE(max_diff(d, spectral_density_bruteforce({pure_site(reg().at("15N"), 0.5)})), 1e-12);
}

TEST(SpectralDensityFft, WorkerCountDoesNotChangeOutput) {
  std::mt19937 rng(9);
  const auto bath = spindefect::testing::random_lattice_bath(rng, reg(), 1'000'000);
  DensityOptions one, many;
  many.workers = 3;
  const auto a = spectral_density_fft(bath, one), b = spectral_density_fft(bath, many);
  EXPECT_EQ(a.density, b.density);
}

TEST(SpectralDensityFft, PermutationInvariance) {
  std::mt19937 rng(12);
  for (int rep = 0; rep < 5; ++rep) {
    auto bath = spindefect::testing::random_lattice_bath(rng, reg(), 1'000'000);
    const auto a = spectral_density_fft(bath);
    std::reverse(bath.begin(), bath.end());
    EXPECT_LE(max_diff(a, spectral_density_fft(bath)), 1e-12);
  }
}

TEST(SpectralDensityFft, ZeroCouplingSiteIsNeutral) {
  std::mt19937 rng(13);
  auto bath = spindefect::testing::random_lattice_bath(rng, reg(), 1'000'000);
  DensityOptions opt;
  opt.f_max = 1.2 * spectral_support_bound(bath) + 5.0;
  const auto a = spectral_density_fft(bath, opt);
  bath.push_back(pure_site(reg().at("11B"), 0.0));
  EXPECT_LE(max_diff(a, spectral_density_fft(bath, opt)), 1e-12);
}

TEST(SpectralDensityFft, OffLatticeCouplingsAreFlagged) {
  const auto d = spectral_density_fft({pure_site(reg().at("15N"), -65.9 * std::numbers::sqrt2)});
  EXPECT_FALSE(d.exact_lattice);
  EXPECT_NEAR(d.total(), 1.0, 1e-9);
}

TEST(SpectralDensityFft, BandwidthLaw) {
  const double per_gamma = 1.0e5;  // MHz per (MHz/G)
  for (const std::string name : {"14N", "15N", "10B", "11B"}) {
    const auto& s = reg().at(name);
    const std::vector<BathSite> site{pure_site(s, per_gamma * s.gamma())};
    const double width = 2.0 * std::abs(s.gamma() * s.spin.value()) * per_gamma;
    EXPECT_NEAR(spectral_support_width(site), width, 1e-9) << name;
    const auto p = populated(spectral_density_fft(site));
    EXPECT_EQ(static_cast<int>(p.size()), s.spin.multiplicity()) << name;
    EXPECT_NEAR(p.back().first - p.front().first, width, 0.5 + 1e-9) << name;
  }
}

TEST(SpectralDensityBruteforce, MatchesFftSingleSite) {
  for (const std::string name : {"14N", "15N", "10B", "11B"}) {
    const std::vector<BathSite> site{pure_site(reg().at(name), -37.3)};
    EXPECT_LE(max_diff(spectral_density_fft(site), spectral_density_bruteforce(site)), 1e-12) << name;
  }
}

TEST(SpectralDensityBruteforce, NaturalBoronMixture) {
  std::vector<BathSite> bath;
  const std::vector<IsotopeSpecies> boron{reg().at("10B"), reg().at("11B")};
  const double couplings[] = {3.0e3, 2.2e3, 1.5e3, 0.9e3};  // MHz per (MHz/G)
  for (double c : couplings) {
    BathSite s = mixed_site(boron, c);
    for (auto& comp : s.composition) comp.Azz = std::round(comp.Azz * 10.0) / 10.0;
    bath.push_back(s);
  }
  EXPECT_EQ(configuration_count(bath), 11u * 11u * 11u * 11u);
  const auto fft = spectral_density_fft(bath);
  EXPECT_TRUE(fft.exact_lattice);
  EXPECT_LE(max_diff(fft, spectral_density_bruteforce(bath)), 1e-9);
}

TEST(SpectralDensityBruteforce, EmptyBath) {
  const auto d = spectral_density_bruteforce({});
  const auto p = populated(d);
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0].first, 0.0);
  EXPECT_NEAR(p[0].second, 1.0, 1e-15);
  EXPECT_LE(max_diff(d, spectral_density_fft({})), 1e-15);
}

TEST(SpectralDensityBruteforce, RejectsOversizedBath) {
  std::vector<BathSite> bath(8, pure_site(reg().at("10B"), 1.0));
  try {
    spectral_density_bruteforce(bath);
    FAIL();
  } catch (const InvalidInput& e) {
    EXPECT_NE(std::string(e.what()).find("5764801"), std::string::npos) << e.what();
  }
}

TEST(BathSite, Validation) {
  BathSite s{{{reg().at("15N"), 0.6, 1.0}, {reg().at("14N"), 0.3, 1.0}}};
  EXPECT_THROW(s.validate(), InvalidInput);
  s.composition[1].weight = 0.4;
  EXPECT_NO_THROW(s.validate());
  s.composition[1].Azz = std::nan("");
  EXPECT_THROW(s.validate(), InvalidInput);
}

TEST(SynthesizeEsr, DeltaDensity) {
  const auto d = spectral_density_fft({});
  const auto s = synthesize_esr(d, 3480.0, 0.05);
  const auto it = std::min_element(s.values.begin(), s.values.end());
  EXPECT_NEAR(*it, 0.95, 1e-15);
  EXPECT_EQ(s.freqs[static_cast<std::size_t>(it - s.values.begin())], 3480.0);
  EXPECT_NO_THROW(s.validate());
}

TEST(SynthesizeEsr, ConvolutionPreservesArea) {
  const auto site = pure_site(reg().at("15N"), -65.9);
  const auto d = spectral_density_fft({site, site, site});
  auto area = [](const SpectrumSeries& s) {
    double a = 0.0;
    for (double v : s.values) a += 1.0 - v;
    return a;
  };
  const double before = area(synthesize_esr(d, 0.0, 0.1));
  for (double fwhm : {0.5, 5.0, 55.0}) {
    const auto s = synthesize_esr(d, 0.0, 0.1, fwhm, 400.0);
    EXPECT_NEAR(area(s), before, 1e-6) << fwhm;
  }
}

TEST(SynthesizeEsr, Guards) {
  const auto d = spectral_density_fft({});
  EXPECT_THROW(synthesize_esr(d, 0.0, 0.0), InvalidInput);
  EXPECT_THROW(synthesize_esr(d, 0.0, 1.5), InvalidInput);
  EXPECT_THROW(synthesize_esr(d, 0.0, 0.1, -1.0), InvalidInput);
}

TEST(SynthesizeEsr, PurifiedBathIsNarrower) {
  // A 36-site bath: 18 nitrogen and 18 boron sites sharing one per-gamma
  // coupling table. The table is illustrative; only the ordering matters.
  const auto& r = reg();
  std::vector<BathSite> purified, natural;
  const std::vector<IsotopeSpecies> nitrogen{r.at("14N"), r.at("15N")}, boron{r.at("10B"), r.at("11B")};
  for (int j = 0; j < 18; ++j) {
    const double cn = (j < 3 ? -65.9 : -8.0 * std::exp(-0.3 * (j - 3))) / r.at("15N").gamma();
    const double cb = 4.0 * std::exp(-0.25 * j) / r.at("11B").gamma();
    purified.push_back(pure_site(r.at("15N"), cn * r.at("15N").gamma()));
    purified.push_back(pure_site(r.at("10B"), cb * r.at("10B").gamma()));
    natural.push_back(mixed_site(nitrogen, cn));
    natural.push_back(mixed_site(boron, cb));
  }
  DensityOptions opt;
  opt.f_max = 600.0;
  const auto wp = spindefect::testing::half_depth_width(synthesize_esr(spectral_density_fft(purified, opt), 0, 0.1, 20.0));
  const auto wn = spindefect::testing::half_depth_width(synthesize_esr(spectral_density_fft(natural, opt), 0, 0.1, 20.0));
  EXPECT_LT(wp, wn);
  EXPECT_LT(spectral_support_width(purified), spectral_support_width(natural));
}

TEST(TransitionCenters, Values) {
  DefectModel m;
  auto tc = transition_centers(m, {87.0});
  EXPECT_NEAR(tc.f_minus, 3480 - 243.6, 1e-9);
  EXPECT_NEAR(tc.f_plus, 3480 + 243.6, 1e-9);
  EXPECT_FALSE(tc.warning);
  tc = transition_centers(m, {});
  EXPECT_EQ(tc.f_minus, 3480.0);
  EXPECT_EQ(tc.f_plus, 3480.0);
  tc = transition_centers(m, {760.0});
  EXPECT_NEAR(tc.f_minus, 1352.0, 1e-9);
  EXPECT_TRUE(transition_centers(m, {100.0, 10.0}).warning.has_value());
}
