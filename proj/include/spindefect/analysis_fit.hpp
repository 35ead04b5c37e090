#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "spindefect/error.hpp"
#include "spindefect/esr_spectrum.hpp"
#include "spindefect/exact_dynamics.hpp"
#include "spindefect/levenberg_marquardt.hpp"

namespace spindefect {

struct FitReport {
  std::string model;
  std::vector<std::string> names;
  std::vector<double> values;
  std::vector<double> sigmas;
  double residual_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  double condition = 0.0;
  std::string message;
  std::vector<std::vector<double>> covariance;  // physical parameters, report order
  nlohmann::json extras = nlohmann::json::object();

  void add(std::string name, double value, double sigma) {
    names.push_back(std::move(name));
    values.push_back(value);
    sigmas.push_back(sigma);
  }

  double value(const std::string& name) const { return values.at(index(name)); }
  double sigma(const std::string& name) const { return sigmas.at(index(name)); }
  double covariance_of(const std::string& a, const std::string& b) const {
    return covariance.at(index(a)).at(index(b));
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["format_version"] = 1;
    j["model"] = model;
    j["converged"] = converged;
    j["iterations"] = iterations;
    j["residual_norm"] = residual_norm;
    j["condition_estimate"] = condition;
    j["message"] = message;
    nlohmann::json params = nlohmann::json::array();
    if (converged)
      for (std::size_t k = 0; k < names.size(); ++k)
        params.push_back({{"name", names[k]}, {"value", values[k]}, {"sigma", sigmas[k]}});
    j["parameters"] = params;
    if (!extras.empty()) j["extras"] = extras;
    return j;
  }

 private:
  std::size_t index(const std::string& name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw InvalidInput("fit report has no parameter '" + name + "'");
    return static_cast<std::size_t>(it - names.begin());
  }
};

/// A fitted model, or only diagnostics when the fit did not converge.
template <class Model>
struct FitOutcome {
  std::optional<Model> model;
  FitReport report;
};

// ---------------------------------------------------------------------------
// Line amplitudes

inline double logistic(double u) { return 1.0 / (1.0 + std::exp(-u)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

namespace detail {
inline void check_fraction(double p, const char* who) {
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidInput(std::string(who) + ": probability must lie in [0,1]");
}
}  // namespace detail

/// Binomial weights for three spin-1/2 nuclei, X = 0..3 nuclei in the up
/// state. Returned in ascending frequency on the 0 <-> +1 transition: X
/// ascending for positive gamma_n, reversed when gamma_n < 0.
inline std::array<double, 4> polarization_amplitudes(double P, bool negative_gamma = false) {
  detail::check_fraction(P, "polarization_amplitudes");
  const double Q = 1.0 - P;
  std::array<double, 4> w{Q * Q * Q, 3.0 * P * Q * Q, 3.0 * P * P * Q, P * P * P};
  if (negative_gamma) std::reverse(w.begin(), w.end());
  return w;
}

/// Two nuclei polarised with P1, the third with P2; same ordering rule.
inline std::array<double, 4> polarization_amplitudes_2(double P1, double P2, bool negative_gamma = false) {
  detail::check_fraction(P1, "polarization_amplitudes_2");
  detail::check_fraction(P2, "polarization_amplitudes_2");
  const double Q1 = 1.0 - P1, Q2 = 1.0 - P2;
  std::array<double, 4> w{Q1 * Q1 * Q2, Q1 * Q1 * P2 + 2.0 * P1 * Q1 * Q2, P1 * P1 * Q2 + 2.0 * P1 * P2 * Q1,
                          P1 * P1 * P2};
  if (negative_gamma) std::reverse(w.begin(), w.end());
  return w;
}

/// Degeneracies of the summed projection for an unpolarised shell, normalised.
inline std::vector<double> unpolarized_weights(int n_lines) {
  std::vector<double> w;
  switch (n_lines) {
    case 1: w = {1}; break;
    case 2: w = {1, 1}; break;
    case 3: w = {1, 1, 1}; break;
    case 4: w = {1, 3, 3, 1}; break;
    case 7: w = {1, 3, 6, 7, 6, 3, 1}; break;
    default: throw InvalidInput("multiplet: n_lines must be one of 1, 2, 3, 4, 7");
  }
  double s = 0.0;
  for (double x : w) s += x;
  for (double& x : w) x /= s;
  return w;
}

// ---------------------------------------------------------------------------
// Lorentzian multiplets

enum class AmplitudeLaw { BinomialUnpolarized, BinomialP, TwoParameterP, Free };

inline std::string to_string(AmplitudeLaw law) {
  switch (law) {
    case AmplitudeLaw::BinomialUnpolarized: return "binomial-unpolarized";
    case AmplitudeLaw::BinomialP: return "binomial-P";
    case AmplitudeLaw::TwoParameterP: return "two-parameter-P1P2";
    case AmplitudeLaw::Free: return "free";
  }
  return "";
}

inline AmplitudeLaw amplitude_law_from_string(const std::string& s) {
  for (auto law : {AmplitudeLaw::BinomialUnpolarized, AmplitudeLaw::BinomialP, AmplitudeLaw::TwoParameterP,
                   AmplitudeLaw::Free})
    if (to_string(law) == s) return law;
  throw InvalidInput("unknown amplitude law '" + s + "'");
}

/// Line k sits at center + (k - (n-1)/2) * splitting, i.e. ordered by the
/// summed nuclear projection, and dips by amplitudes[k] at its center.
/// intensity(nu) = baseline - sum_k amplitudes[k] L_k(nu) with L_k peak-normalised.
struct MultipletModel {
  double center = 0.0;     // MHz
  double splitting = 0.0;  // MHz, signed
  double fwhm = 1.0;       // MHz
  double depth = 0.0;      // contrast scale for constrained laws
  double baseline = 1.0;
  int n_lines = 4;
  AmplitudeLaw law = AmplitudeLaw::BinomialUnpolarized;
  std::vector<double> amplitudes;  // per line, filled by evaluate_amplitudes()
  std::optional<double> P, P1, P2;

  double line_position(int k) const { return center + (k - 0.5 * (n_lines - 1)) * splitting; }

  /// Resolves `amplitudes` from depth and the law parameters.
  void evaluate_amplitudes() {
    std::vector<double> w;
    switch (law) {
      case AmplitudeLaw::BinomialUnpolarized: w = unpolarized_weights(n_lines); break;
      case AmplitudeLaw::BinomialP: {
        const auto a = polarization_amplitudes(P.value_or(0.5));
        w.assign(a.begin(), a.end());
        break;
      }
      case AmplitudeLaw::TwoParameterP: {
        const auto a = polarization_amplitudes_2(P1.value_or(0.5), P2.value_or(0.5));
        w.assign(a.begin(), a.end());
        break;
      }
      case AmplitudeLaw::Free:
        if (static_cast<int>(amplitudes.size()) != n_lines)
          throw InvalidInput("free-law multiplet needs one amplitude per line");
        return;
    }
    amplitudes.clear();
    for (double x : w) amplitudes.push_back(depth * x);
  }

  double contrast(double nu) const {
    const double hw2 = 0.25 * fwhm * fwhm;
    double c = 0.0;
    for (int k = 0; k < n_lines; ++k) {
      const double x = nu - line_position(k);
      c += amplitudes[static_cast<std::size_t>(k)] * hw2 / (x * x + hw2);
    }
    return c;
  }

  double intensity(double nu) const { return baseline - contrast(nu); }

  /// d contrast / d nu, per MHz.
  double contrast_slope(double nu) const {
    const double hw2 = 0.25 * fwhm * fwhm;
    double d = 0.0;
    for (int k = 0; k < n_lines; ++k) {
      const double x = nu - line_position(k);
      const double den = x * x + hw2;
      d += -amplitudes[static_cast<std::size_t>(k)] * 2.0 * x * hw2 / (den * den);
    }
    return d;
  }

  SpectrumSeries sample(const std::vector<double>& freqs) const {
    SpectrumSeries s;
    s.freqs = freqs;
    for (double f : freqs) s.values.push_back(intensity(f));
    return s;
  }
};

namespace detail {

/// Maps the solver vector onto a MultipletModel.
///
/// Layout: center, [splitting], log fwhm, baseline, then depth and the
/// law's logits, or one amplitude per line for the free law. A fixed
/// splitting sign turns the splitting slot into a magnitude.
class MultipletLayout {
 public:
  MultipletLayout(int n_lines, AmplitudeLaw law, int splitting_sign)
      : n_(n_lines), law_(law), sign_(splitting_sign) {
    (void)unpolarized_weights(n_lines);
    if ((law == AmplitudeLaw::BinomialP || law == AmplitudeLaw::TwoParameterP) && n_lines != 4)
      throw InvalidInput("polarization amplitude laws require 4 lines");
  }

  bool has_splitting() const { return n_ > 1; }
  Eigen::Index size() const {
    Eigen::Index s = 3 + (has_splitting() ? 1 : 0);
    switch (law_) {
      case AmplitudeLaw::BinomialUnpolarized: return s + 1;
      case AmplitudeLaw::BinomialP: return s + 2;
      case AmplitudeLaw::TwoParameterP: return s + 3;
      case AmplitudeLaw::Free: return s + n_;
    }
    return s;
  }

  Eigen::VectorXd pack(const MultipletModel& m) const {
    Eigen::VectorXd p(size());
    Eigen::Index i = 0;
    p[i++] = m.center;
    if (has_splitting()) p[i++] = sign_ != 0 ? std::abs(m.splitting) : m.splitting;
    p[i++] = std::log(m.fwhm);
    p[i++] = m.baseline;
    switch (law_) {
      case AmplitudeLaw::BinomialUnpolarized: p[i++] = m.depth; break;
      case AmplitudeLaw::BinomialP:
        p[i++] = m.depth;
        p[i++] = logit(std::clamp(m.P.value_or(0.5), 0.02, 0.98));
        break;
      case AmplitudeLaw::TwoParameterP:
        p[i++] = m.depth;
        p[i++] = logit(std::clamp(m.P1.value_or(0.5), 0.02, 0.98));
        p[i++] = logit(std::clamp(m.P2.value_or(0.5), 0.02, 0.98));
        break;
      case AmplitudeLaw::Free:
        for (int k = 0; k < n_; ++k) p[i++] = m.amplitudes.at(static_cast<std::size_t>(k));
        break;
    }
    return p;
  }

  MultipletModel unpack(const Eigen::VectorXd& p) const {
    MultipletModel m;
    m.n_lines = n_;
    m.law = law_;
    Eigen::Index i = 0;
    m.center = p[i++];
    if (has_splitting()) m.splitting = sign_ != 0 ? sign_ * std::abs(p[i++]) : p[i++];
    m.fwhm = std::exp(p[i++]);
    m.baseline = p[i++];
    switch (law_) {
      case AmplitudeLaw::BinomialUnpolarized: m.depth = p[i++]; break;
      case AmplitudeLaw::BinomialP:
        m.depth = p[i++];
        m.P = logistic(p[i++]);
        break;
      case AmplitudeLaw::TwoParameterP:
        m.depth = p[i++];
        m.P1 = logistic(p[i++]);
        m.P2 = logistic(p[i++]);
        break;
      case AmplitudeLaw::Free:
        for (int k = 0; k < n_; ++k) m.amplitudes.push_back(p[i++]);
        break;
    }
    m.evaluate_amplitudes();
    return m;
  }

  /// Physical values and their covariance. Every slot maps one-to-one, so
  /// the linearised covariance is D C D with D the slot derivatives.
  void describe(const Eigen::VectorXd& p, FitReport& rep, const Eigen::MatrixXd& cov) const {
    Eigen::Index i = 0;
    Eigen::VectorXd D(p.size());
    auto put = [&](const std::string& name, double value, double dvalue) {
      D[i] = dvalue;
      rep.add(name, value, std::abs(dvalue) * std::sqrt(std::max(cov(i, i), 0.0)));
      ++i;
    };
    put("center", p[i], 1.0);
    if (has_splitting()) {
      if (sign_ != 0)
        put("splitting", sign_ * std::abs(p[i]), 1.0);
      else
        put("splitting", p[i], 1.0);
    }
    put("fwhm", std::exp(p[i]), std::exp(p[i]));
    put("baseline", p[i], 1.0);
    auto put_prob = [&](const std::string& name) {
      const double P = logistic(p[i]);
      put(name, P, P * (1.0 - P));
    };
    switch (law_) {
      case AmplitudeLaw::BinomialUnpolarized: put("depth", p[i], 1.0); break;
      case AmplitudeLaw::BinomialP:
        put("depth", p[i], 1.0);
        put_prob("P");
        break;
      case AmplitudeLaw::TwoParameterP:
        put("depth", p[i], 1.0);
        put_prob("P1");
        put_prob("P2");
        break;
      case AmplitudeLaw::Free:
        for (int k = 0; k < n_; ++k) put("amplitude_" + std::to_string(k), p[i], 1.0);
        break;
    }
    const Eigen::MatrixXd phys = D.asDiagonal() * cov * D.asDiagonal();
    rep.covariance.assign(static_cast<std::size_t>(p.size()), std::vector<double>(static_cast<std::size_t>(p.size())));
    for (Eigen::Index a = 0; a < p.size(); ++a)
      for (Eigen::Index b = 0; b < p.size(); ++b)
        rep.covariance[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] = phys(a, b);
  }

 private:
  int n_;
  AmplitudeLaw law_;
  int sign_;
};

inline void check_series(const SpectrumSeries& s, const char* who) {
  if (s.freqs.size() != s.values.size()) throw InvalidInput(std::string(who) + ": column length mismatch");
  if (s.freqs.size() < 4) throw InvalidInput(std::string(who) + ": too few samples");
  for (std::size_t k = 1; k < s.freqs.size(); ++k)
    if (!(s.freqs[k] > s.freqs[k - 1])) throw InvalidInput(std::string(who) + ": frequencies must be ascending");
}

/// Median of the outer tenth of the samples on both ends.
inline double edge_median(const SpectrumSeries& s) {
  const std::size_t n = s.values.size();
  const std::size_t k = std::max<std::size_t>(1, n / 20);
  std::vector<double> v(s.values.begin(), s.values.begin() + static_cast<std::ptrdiff_t>(k));
  v.insert(v.end(), s.values.end() - static_cast<std::ptrdiff_t>(k), s.values.end());
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
  return v[v.size() / 2];
}

/// Free-amplitude starting point: scans the center over +-1.5 splittings and
/// solves baseline and line amplitudes by linear least squares at each one.
inline MultipletModel seed_free_multiplet(const SpectrumSeries& s, MultipletModel m) {
  const auto n = static_cast<Eigen::Index>(s.freqs.size());
  const double step = std::abs(m.splitting) / 8.0;
  const double c0 = m.center;
  double best_cost = std::numeric_limits<double>::infinity();
  MultipletModel best = m;
  const Eigen::Map<const Eigen::VectorXd> y(s.values.data(), n);
  for (int j = -12; j <= 12; ++j) {
    m.center = c0 + j * step;
    Eigen::MatrixXd A(n, m.n_lines + 1);
    const double hw2 = 0.25 * m.fwhm * m.fwhm;
    for (Eigen::Index r = 0; r < n; ++r) {
      A(r, 0) = 1.0;
      for (int k = 0; k < m.n_lines; ++k) {
        const double x = s.freqs[static_cast<std::size_t>(r)] - m.line_position(k);
        A(r, k + 1) = -hw2 / (x * x + hw2);
      }
    }
    const Eigen::VectorXd sol = A.colPivHouseholderQr().solve(y);
    const double cost = (A * sol - y).squaredNorm();
    if (cost < best_cost) {
      best_cost = cost;
      best = m;
      best.baseline = sol[0];
      best.amplitudes.assign(sol.data() + 1, sol.data() + sol.size());
    }
  }
  return best;
}

}  // namespace detail

/// Starting point from the data: baseline from the spectrum edges, center
/// at the dip centroid, depth from the deepest point.
inline MultipletModel initial_multiplet_guess(const SpectrumSeries& s, int n_lines, double splitting, double fwhm,
                                              AmplitudeLaw law = AmplitudeLaw::BinomialUnpolarized) {
  detail::check_series(s, "initial_multiplet_guess");
  MultipletModel m;
  m.n_lines = n_lines;
  m.law = law;
  m.splitting = splitting;
  m.fwhm = fwhm;
  m.baseline = detail::edge_median(s);
  double wsum = 0.0, fsum = 0.0;
  for (std::size_t k = 0; k < s.freqs.size(); ++k) {
    const double w = m.baseline - s.values[k];
    wsum += w;
    fsum += w * s.freqs[k];
  }
  m.center = wsum > 0.0 ? fsum / wsum : 0.5 * (s.freqs.front() + s.freqs.back());
  const double dip = m.baseline - *std::min_element(s.values.begin(), s.values.end());
  const auto w = unpolarized_weights(n_lines);
  const double wmax = *std::max_element(w.begin(), w.end());
  m.depth = dip > 0.0 ? dip / wmax : 1e-3;
  if (law == AmplitudeLaw::Free)
    for (double x : w) m.amplitudes.push_back(m.depth * x);
  m.evaluate_amplitudes();
  return m;
}

struct MultipletFitOptions {
  LMOptions lm{};
  /// +1 or -1 freezes the sign of the splitting; 0 leaves it free.
  int splitting_sign = 0;
  bool check_coverage = true;
};

/// Least-squares fit of a Lorentzian multiplet to a spectrum.
inline FitOutcome<MultipletModel> fit_multiplet(const SpectrumSeries& spec, int n_lines, AmplitudeLaw law,
                                                MultipletModel init, const MultipletFitOptions& opt = {}) {
  detail::check_series(spec, "fit_multiplet");
  if (!(init.fwhm > 0.0)) throw InvalidInput("fit_multiplet: initial fwhm must be positive");
  init.n_lines = n_lines;
  init.law = law;
  if (law == AmplitudeLaw::Free && static_cast<int>(init.amplitudes.size()) != n_lines) {
    init.amplitudes.clear();
    for (double x : unpolarized_weights(n_lines)) init.amplitudes.push_back(init.depth * x);
  }
  const detail::MultipletLayout layout(n_lines, law, opt.splitting_sign);
  if (opt.check_coverage) {
    const double span = (n_lines - 1) * std::abs(init.splitting) + init.fwhm;
    const double covered = spec.freqs.back() - spec.freqs.front();
    if (covered < 2.0 * span)
      throw InvalidInput("fit_multiplet: spectrum covers " + std::to_string(covered) +
                         " MHz, less than twice the expected multiplet span " + std::to_string(span) + " MHz");
  }

  const Eigen::Map<const Eigen::VectorXd> f(spec.freqs.data(), static_cast<Eigen::Index>(spec.freqs.size()));
  const Eigen::Map<const Eigen::VectorXd> y(spec.values.data(), static_cast<Eigen::Index>(spec.values.size()));
  auto residual = [&](const Eigen::VectorXd& p) {
    const MultipletModel m = layout.unpack(p);
    Eigen::VectorXd r(f.size());
    for (Eigen::Index k = 0; k < f.size(); ++k) r[k] = m.intensity(f[k]) - y[k];
    return r;
  };
  const LMResult lm = levenberg_marquardt(residual, layout.pack(init), opt.lm);

  FitOutcome<MultipletModel> out;
  out.report.model = "lorentzian-multiplet/" + to_string(law) + "/" + std::to_string(n_lines);
  out.report.residual_norm = lm.residual_norm;
  out.report.iterations = lm.iterations;
  out.report.converged = lm.converged;
  out.report.condition = lm.condition;
  out.report.message = lm.message;
  layout.describe(lm.params, out.report, lm.covariance);
  if (lm.converged) out.model = layout.unpack(lm.params);
  return out;
}

// ---------------------------------------------------------------------------
// Polarization

enum class PolarizationModel { Single, Double };

/// Frequency ordering of the summed projection on one ESR transition.
struct LineOrdering {
  bool negative_gamma = true;
  int transition_ms = +1;  // 0 <-> +1 or 0 <-> -1

  /// Sign of d(frequency)/d(sum m_I).
  int splitting_sign() const { return (negative_gamma ? -1 : 1) * (transition_ms >= 0 ? 1 : -1); }
};

struct PolarizationResult {
  double P = 0.0;  // net polarization probability
  double sigma = 0.0;
  std::optional<double> P1, P2, sigma_P1, sigma_P2;
  int splitting_sign = -1;
  double resolvability = 0.0;  // free-law fwhm / |splitting|
  MultipletModel model;
};

/// Fits four lines with amplitudes tied to one or two polarization
/// probabilities. A free-amplitude fit first checks that the lines resolve.
inline FitOutcome<PolarizationResult> fit_polarization(const SpectrumSeries& spec, PolarizationModel kind,
                                                       const MultipletModel& init, LineOrdering ordering = {},
                                                       const LMOptions& lm = {}) {
  const int sign = ordering.splitting_sign();
  MultipletFitOptions fo;
  fo.lm = lm;
  fo.splitting_sign = sign;
  detail::check_series(spec, "fit_polarization");
  MultipletModel free_init = init;
  free_init.law = AmplitudeLaw::Free;
  free_init.n_lines = 4;
  if (sign != 0) free_init.splitting = sign * std::abs(init.splitting);
  free_init = detail::seed_free_multiplet(spec, free_init);
  const auto free = fit_multiplet(spec, 4, AmplitudeLaw::Free, free_init, fo);
  FitOutcome<PolarizationResult> out;
  if (!free.model) {
    out.report = free.report;
    out.report.message = "free-amplitude pre-fit: " + free.report.message;
    return out;
  }
  const double resolvability = free.model->fwhm / std::abs(free.model->splitting);
  if (!(resolvability < 1.0))
    throw InvalidInput("fit_polarization: multiplet not resolvable (fwhm/|splitting| = " +
                       std::to_string(resolvability) + ", must be < 1)");

  MultipletModel start = *free.model;
  double total = 0.0, mean_x = 0.0;
  for (int k = 0; k < 4; ++k) {
    total += start.amplitudes[static_cast<std::size_t>(k)];
    mean_x += k * start.amplitudes[static_cast<std::size_t>(k)];
  }
  const double p0 = total > 0.0 ? std::clamp(mean_x / (3.0 * total), 0.05, 0.95) : 0.5;
  start.depth = total;
  start.P = start.P1 = start.P2 = p0;
  const AmplitudeLaw law = kind == PolarizationModel::Single ? AmplitudeLaw::BinomialP : AmplitudeLaw::TwoParameterP;
  const auto fit = fit_multiplet(spec, 4, law, start, fo);
  out.report = fit.report;
  out.report.model = kind == PolarizationModel::Single ? "polarization/single" : "polarization/double";
  out.report.extras["resolvability"] = resolvability;
  out.report.extras["splitting_sign"] = sign;
  if (!fit.model) return out;

  PolarizationResult r;
  r.model = *fit.model;
  r.splitting_sign = sign;
  r.resolvability = resolvability;
  if (kind == PolarizationModel::Single) {
    r.P = fit.report.value("P");
    r.sigma = fit.report.sigma("P");
  } else {
    r.P1 = fit.report.value("P1");
    r.P2 = fit.report.value("P2");
    r.sigma_P1 = fit.report.sigma("P1");
    r.sigma_P2 = fit.report.sigma("P2");
    r.P = (2.0 * *r.P1 + *r.P2) / 3.0;
    const double var = (4.0 * fit.report.covariance_of("P1", "P1") + 4.0 * fit.report.covariance_of("P1", "P2") +
                        fit.report.covariance_of("P2", "P2")) /
                       9.0;
    r.sigma = std::sqrt(std::max(var, 0.0));
  }
  out.report.add("net_polarization", r.P, r.sigma);
  out.model = r;
  return out;
}

// ---------------------------------------------------------------------------
// Decay

/// offset + amplitude exp(-(t/T)^stretch_n), t in the trace's time unit.
struct DecayModel {
  double T = 1.0;
  double stretch_n = 1.0;
  double amplitude = 1.0;
  double offset = 0.0;

  double operator()(double t) const { return offset + amplitude * std::exp(-std::pow(t / T, stretch_n)); }
};

inline constexpr double kMaxStretch = 4.0;

struct DecayFitOptions {
  bool freeze_n = true;
  LMOptions lm{};
};

namespace detail {

inline FitOutcome<DecayModel> fit_decay_once(const std::vector<double>& t, const std::vector<double>& y,
                                             const DecayModel& init, bool freeze_n, const LMOptions& lm_opt) {
  auto unpack = [&](const Eigen::VectorXd& p) {
    DecayModel m;
    m.offset = p[0];
    m.amplitude = p[1];
    m.T = std::exp(p[2]);
    m.stretch_n = freeze_n ? init.stretch_n : kMaxStretch * logistic(p[3]);
    return m;
  };
  Eigen::VectorXd p0(freeze_n ? 3 : 4);
  p0[0] = init.offset;
  p0[1] = init.amplitude;
  p0[2] = std::log(init.T);
  if (!freeze_n) p0[3] = logit(std::clamp(init.stretch_n / kMaxStretch, 0.01, 0.99));
  auto residual = [&](const Eigen::VectorXd& p) {
    const DecayModel m = unpack(p);
    Eigen::VectorXd r(static_cast<Eigen::Index>(t.size()));
    for (std::size_t k = 0; k < t.size(); ++k) r[static_cast<Eigen::Index>(k)] = m(t[k]) - y[k];
    return r;
  };
  const LMResult lm = levenberg_marquardt(residual, p0, lm_opt);
  FitOutcome<DecayModel> out;
  auto& rep = out.report;
  rep.model = freeze_n ? "stretched-exponential/frozen-n" : "stretched-exponential/free-n";
  rep.residual_norm = lm.residual_norm;
  rep.iterations = lm.iterations;
  rep.converged = lm.converged;
  rep.condition = lm.condition;
  rep.message = lm.message;
  const DecayModel m = unpack(lm.params);
  Eigen::VectorXd D(lm.params.size());
  D[0] = 1.0;
  D[1] = 1.0;
  D[2] = m.T;
  if (!freeze_n) D[3] = m.stretch_n * (1.0 - m.stretch_n / kMaxStretch);
  const Eigen::MatrixXd cov = D.asDiagonal() * lm.covariance * D.asDiagonal();
  auto sd = [&](Eigen::Index i) { return std::sqrt(std::max(cov(i, i), 0.0)); };
  rep.add("offset", m.offset, sd(0));
  rep.add("amplitude", m.amplitude, sd(1));
  rep.add("T", m.T, sd(2));
  rep.add("stretch_n", m.stretch_n, freeze_n ? 0.0 : sd(3));
  rep.covariance.assign(4, std::vector<double>(4, 0.0));
  for (Eigen::Index a = 0; a < cov.rows(); ++a)
    for (Eigen::Index b = 0; b < cov.cols(); ++b)
      rep.covariance[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] = cov(a, b);
  if (lm.converged) out.model = m;
  return out;
}

}  // namespace detail

/// Stretched-exponential fit. With a frozen exponent the free-exponent fit
/// is also run and attached when the exponents differ by more than 2 sigma.
inline FitOutcome<DecayModel> fit_decay(const std::vector<double>& times, const std::vector<double>& values,
                                        const DecayModel& init, const DecayFitOptions& opt = {}) {
  if (times.size() != values.size()) throw InvalidInput("fit_decay: column length mismatch");
  if (times.size() < 8) throw InvalidInput("fit_decay: at least 8 samples are required");
  if (!(init.T > 0.0)) throw InvalidInput("fit_decay: initial T must be positive");
  if (!(init.stretch_n > 0.0 && init.stretch_n <= kMaxStretch))
    throw InvalidInput("fit_decay: stretch_n must lie in (0, 4]");
  const auto [tmin, tmax] = std::minmax_element(times.begin(), times.end());
  if (*tmax - *tmin < 1.5 * init.T)
    throw InvalidInput("fit_decay: samples must span at least 1.5x the initial T");
  const auto [vmin, vmax] = std::minmax_element(values.begin(), values.end());
  if (!(*vmax - *vmin > 1e-12 * (1.0 + std::max(std::abs(*vmin), std::abs(*vmax)))))
    throw InvalidInput("fit_decay: constant trace, no decay detectable");

  auto out = detail::fit_decay_once(times, values, init, opt.freeze_n, opt.lm);
  if (out.model && !(std::abs(out.model->amplitude) > 2.0 * out.report.sigma("amplitude")))
    throw InvalidInput("fit_decay: fitted amplitude is not significant, no decay detectable");
  if (opt.freeze_n && out.model) {
    DecayModel alt_init = *out.model;
    try {
      const auto alt = detail::fit_decay_once(times, values, alt_init, false, opt.lm);
      if (alt.model) {
        const double dn = std::abs(alt.model->stretch_n - out.model->stretch_n);
        const double sn = alt.report.sigma("stretch_n");
        out.report.extras["free_n_residual_norm"] = alt.report.residual_norm;
        if (dn > 2.0 * sn) out.report.extras["free_n_alternative"] = alt.report.to_json();
      }
    } catch (const InvalidInput&) {
      // The free exponent is not identifiable; nothing to report.
    }
  }
  return out;
}

inline FitOutcome<DecayModel> fit_decay(const PopulationTrace& trace, const DecayModel& init,
                                        const DecayFitOptions& opt = {}) {
  if (trace.populations.empty()) throw InvalidInput("fit_decay: trace has no population column");
  return fit_decay(trace.times, trace.populations.front(), init, opt);
}

// ---------------------------------------------------------------------------
// Sensitivity

/// Steepest |d contrast / d nu| of the model, per Hz.
inline double max_slope(const MultipletModel& m) {
  if (!(m.fwhm > 0.0)) throw InvalidInput("max_slope: fwhm must be positive");
  if (static_cast<int>(m.amplitudes.size()) != m.n_lines) throw InvalidInput("max_slope: amplitudes unresolved");
  double lo = m.line_position(0), hi = lo;
  for (int k = 1; k < m.n_lines; ++k) {
    lo = std::min(lo, m.line_position(k));
    hi = std::max(hi, m.line_position(k));
  }
  lo -= 3.0 * m.fwhm;
  hi += 3.0 * m.fwhm;
  const double h = m.fwhm / 200.0;
  auto g = [&](double x) { return std::abs(m.contrast_slope(x)); };
  double best_x = lo, best = g(lo);
  for (double x = lo; x <= hi; x += h) {
    const double v = g(x);
    if (v > best) {
      best = v;
      best_x = x;
    }
  }
  // Golden-section refinement on the bracketing interval.
  double a = best_x - h, b = best_x + h;
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - r * (b - a), d = a + r * (b - a);
  for (int it = 0; it < 100; ++it) {
    if (g(c) > g(d))
      b = d;
    else
      a = c;
    c = b - r * (b - a);
    d = a + r * (b - a);
  }
  best = std::max(best, g(0.5 * (a + b)));
  return best / 1e6;
}

/// Electron gyromagnetic ratio in Hz/T (ordinary frequency).
inline constexpr double kGammaElectronHzPerTesla = 2.8e10;

struct SensitivityInput {
  std::optional<double> R;          // photons/s
  std::optional<double> C_m;        // contrast
  std::optional<double> delta_nu;   // MHz
  std::optional<double> max_slope;  // 1/Hz
  std::optional<double> C_max;
  std::optional<double> N_photons;
  std::optional<double> tau;  // s
  std::optional<double> T2;   // s
  std::optional<double> t_I;  // s
  std::optional<double> t_R;  // s
};

enum class DcMode { Slope, Lorentzian };

namespace detail {
inline double require_positive(const std::optional<double>& v, const char* name) {
  if (!v) throw InvalidInput(std::string("sensitivity: missing field '") + name + "'");
  if (!(*v > 0.0)) throw InvalidInput(std::string("sensitivity: field '") + name + "' must be positive");
  return *v;
}
}  // namespace detail

/// eta_DC = 2 pi / (gamma_e sqrt(R) max slope), gamma_e angular; T/sqrt(Hz).
inline double sensitivity_dc(const SensitivityInput& in, DcMode mode) {
  const double R = detail::require_positive(in.R, "R");
  const double gamma = 2.0 * std::numbers::pi * kGammaElectronHzPerTesla;
  double slope = 0.0;
  if (mode == DcMode::Slope) {
    slope = detail::require_positive(in.max_slope, "max_slope");
  } else {
    const double dnu = detail::require_positive(in.delta_nu, "delta_nu") * 1e6;
    const double C = detail::require_positive(in.C_m, "C_m");
    slope = 3.0 * std::sqrt(3.0) / 4.0 * C / dnu;
  }
  return 2.0 * std::numbers::pi / (gamma * std::sqrt(R) * slope);
}

/// eta_AC = pi/(2 gamma_e) / (C_max e^{-tau/T2} sqrt(N)) * sqrt(t_I + tau + t_R) / tau.
inline double sensitivity_ac(const SensitivityInput& in) {
  const double C = detail::require_positive(in.C_max, "C_max");
  const double N = detail::require_positive(in.N_photons, "N_photons");
  const double tau = detail::require_positive(in.tau, "tau");
  const double T2 = detail::require_positive(in.T2, "T2");
  const double tI = detail::require_positive(in.t_I, "t_I");
  const double tR = detail::require_positive(in.t_R, "t_R");
  const double gamma = 2.0 * std::numbers::pi * kGammaElectronHzPerTesla;
  return std::numbers::pi / (2.0 * gamma) / (C * std::exp(-tau / T2) * std::sqrt(N)) * std::sqrt(tI + tau + tR) /
         tau;
}

}  // namespace spindefect
