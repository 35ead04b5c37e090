#include "runners.hpp"

#include <fmt/format.h>

#include <random>
#include <sstream>

namespace spindefect::cli {

namespace {

using nlohmann::json;

std::string csv_text(const CsvTable& t) {
  std::ostringstream out;
  write_csv(out, t);
  return out.str();
}

std::string json_text(const json& j) { return j.dump(2) + "\n"; }

json trace_warnings(const std::vector<std::string>& w) { return w.empty() ? json::array() : json(w); }

// ---------------------------------------------------------------------------
// Shared loaders

IsotopeRegistry registry_for(const Scenario& sc, RunContext& ctx) {
  const Fields f(sc.doc, "");
  const auto path = ctx.resolve(sc, f.string("registry", "data:isotopes.json"));
  IsotopeRegistry reg;
  try {
    reg = load_registry(path.string());
  } catch (const InvalidInput& e) {
    throw InvalidInput(path.filename().string() + ": " + e.what());
  }
  if (!f.has("isotope_overrides")) return reg;
  const Fields ov = f.object("isotope_overrides");
  for (const auto& [name, v] : ov.raw().items())
    if (!reg.contains(name)) throw InvalidInput(ov.path(name) + ": unknown isotope");
  std::vector<IsotopeSpecies> species;
  for (const auto& [name, s] : reg.all()) {
    auto c = s;
    if (ov.has(name)) c.gamma_n = ov.number(name);
    species.push_back(std::move(c));
  }
  return IsotopeRegistry(std::move(species));
}

DefectModel model_file(const Scenario& sc, RunContext& ctx, const IsotopeRegistry& reg, const std::string& ref) {
  const auto path = ctx.resolve(sc, ref);
  try {
    return defect_model_from_json(load_commented_json(path.string()), reg);
  } catch (const InvalidInput& e) {
    throw InvalidInput(path.filename().string() + ": " + e.what());
  }
}

DefectModel model_for(const Scenario& sc, RunContext& ctx, const IsotopeRegistry& reg) {
  return model_file(sc, ctx, reg, Fields(sc.doc, "").string("model", "data:defect_15n.json"));
}

std::vector<BathSite> bath_file(const Scenario& sc, RunContext& ctx, const IsotopeRegistry& reg,
                                const std::string& ref) {
  const auto path = ctx.resolve(sc, ref);
  try {
    return bath_from_json(load_commented_json(path.string()), reg);
  } catch (const InvalidInput& e) {
    throw InvalidInput(path.filename().string() + ": " + e.what());
  }
}

FieldConfig field_for(const Fields& f) {
  const Fields b = f.object("field");
  return {b.number("Bz_G"), b.number("Bx_G", 0.0), b.number("By_G", 0.0)};
}

ManifoldSelector manifold_for(const Fields& f, const std::string& key, ManifoldSelector dflt) {
  if (!f.has(key)) return dflt;
  const Fields m = f.object(key);
  ManifoldSelector s;
  if (m.has("two_ms")) s.two_ms = m.integer("two_ms", 0);
  if (m.has("two_sum_mI")) s.two_sum_mI = m.integer("two_sum_mI", 0);
  return s;
}

std::vector<double> uniform_grid(const Fields& f, const std::string& key) {
  const auto g = f.numbers(key);
  if (g.size() != 3 || !(g[2] > 0.0) || !(g[1] > g[0]))
    throw InvalidInput(f.path(key) + ": expected [start, stop, step] with stop > start and step > 0");
  const auto n = static_cast<std::size_t>(std::floor((g[1] - g[0]) / g[2] + 1e-9)) + 1;
  if (n > 2'000'000) throw InvalidInput(f.path(key) + ": grid has more than 2e6 points");
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = g[0] + static_cast<double>(k) * g[2];
  return out;
}

// ---------------------------------------------------------------------------
// Spectrum and trace inputs for the fitting kinds

struct SyntheticSpectrum {
  MultipletModel truth;
  std::vector<double> freqs;
  double noise = 0.0;  // relative, multiplies the contrast signal
  unsigned seed = 1;

  SpectrumSeries generate() const {
    auto s = truth.sample(freqs);
    if (noise > 0.0) {
      std::mt19937 rng(seed);
      std::normal_distribution<double> g(0.0, noise);
      for (auto& v : s.values) v = truth.baseline - (truth.baseline - v) * (1.0 + g(rng));
    }
    return s;
  }
};

struct SpectrumSource {
  std::optional<SpectrumSeries> file;
  std::optional<SyntheticSpectrum> synthetic;

  SpectrumSeries get() const { return file ? *file : synthetic->generate(); }
};

SpectrumSource spectrum_source(const Scenario& sc, RunContext& ctx, const Fields& f) {
  SpectrumSource src;
  if (f.has("input") == f.has("synthetic"))
    throw InvalidInput("exactly one of 'input' (CSV path) or 'synthetic' must be given");
  if (f.has("input")) {
    const auto path = ctx.resolve(sc, f.string("input"));
    try {
      src.file = spectrum_from_table(read_csv(path.string()));
    } catch (const InvalidInput& e) {
      throw InvalidInput(f.path("input") + ": " + e.what());
    }
    return src;
  }
  const Fields s = f.object("synthetic");
  SyntheticSpectrum syn;
  auto& m = syn.truth;
  m.n_lines = s.integer("n_lines", 4);
  if (m.n_lines < 1 || m.n_lines > 16) throw InvalidInput(s.path("n_lines") + ": must lie in 1..16");
  const std::string law = s.choice("law", {"binomial-unpolarized", "binomial-P", "two-parameter-P1P2"},
                                   "binomial-unpolarized");
  m.law = amplitude_law_from_string(law);
  if (m.law != AmplitudeLaw::BinomialUnpolarized && m.n_lines != 4)
    throw InvalidInput(s.path("law") + ": polarization laws need n_lines = 4");
  m.center = s.number("center_MHz");
  m.splitting = s.number("splitting_MHz");
  m.fwhm = s.positive("fwhm_MHz");
  m.depth = s.positive("depth");
  m.baseline = s.number("baseline", 1.0);
  auto fraction = [&](const std::string& key) {
    const double p = s.number(key);
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidInput(s.path(key) + ": must lie in [0, 1]");
    return p;
  };
  if (m.law == AmplitudeLaw::BinomialP) m.P = fraction("P");
  if (m.law == AmplitudeLaw::TwoParameterP) {
    m.P1 = fraction("P1");
    m.P2 = fraction("P2");
  }
  m.evaluate_amplitudes();
  syn.freqs = uniform_grid(s, "grid_MHz");
  syn.noise = s.number("noise", 0.0);
  if (!(syn.noise >= 0.0)) throw InvalidInput(s.path("noise") + ": must be >= 0");
  syn.seed = static_cast<unsigned>(s.integer("seed", 1));
  src.synthetic = syn;
  return src;
}

json multiplet_json(const MultipletModel& m) {
  json j{{"center_MHz", m.center},   {"splitting_MHz", m.splitting}, {"fwhm_MHz", m.fwhm},
         {"baseline", m.baseline},   {"n_lines", m.n_lines},         {"law", to_string(m.law)},
         {"amplitudes", m.amplitudes}};
  if (m.P) j["P"] = *m.P;
  if (m.P1) j["P1"] = *m.P1;
  if (m.P2) j["P2"] = *m.P2;
  return j;
}

std::vector<double> line_weights(const MultipletModel& m) {
  double sum = 0.0;
  for (double a : m.amplitudes) sum += a;
  std::vector<double> w;
  for (double a : m.amplitudes) w.push_back(sum != 0.0 ? a / sum : 0.0);
  return w;
}

void attach_spectrum_io(Artifacts& a, const SpectrumSeries& data, const std::optional<MultipletModel>& fit) {
  a.files.emplace_back("input_spectrum.csv", csv_text(spectrum_table(data)));
  if (fit) a.files.emplace_back("fit_curve.csv", csv_text(spectrum_table(fit->sample(data.freqs))));
}

// ---------------------------------------------------------------------------
// Kinds

Job esr_spectrum(const Scenario& sc, RunContext& ctx) {
  const Fields f(sc.doc, "");
  const auto reg = registry_for(sc, ctx);
  std::vector<BathSite> sites;
  DefectModel model;
  if (f.has("model")) {
    model = model_for(sc, ctx, reg);
    for (const auto& n : model.nuclei) sites.push_back(pure_site(n.species, n.tensor.Azz));
  }
  if (f.has("bath"))
    for (auto& s : bath_file(sc, ctx, reg, f.string("bath"))) sites.push_back(std::move(s));
  const FieldConfig field = field_for(f);
  const bool plus = f.choice("transition", {"minus", "plus"}, "minus") == "plus";
  DensityOptions dopt;
  dopt.bin_width = f.positive("bin_width_MHz", 0.5);
  dopt.f_max = f.maybe_number("f_max_MHz");
  dopt.workers = ctx.workers;
  (void)detail::resolve_f_max(sites, dopt);
  const double contrast = f.number("contrast", 0.1);
  if (!(contrast > 0.0 && contrast <= 1.0)) throw InvalidInput("contrast: must lie in (0, 1]");
  const double extra = f.number("extra_fwhm_MHz", 0.0);
  if (!(extra >= 0.0)) throw InvalidInput("extra_fwhm_MHz: must be >= 0");
  const auto half_span = f.maybe_number("half_span_MHz");

  std::optional<MultipletModel> guess;
  if (f.has("check_fit")) {
    const Fields c = f.object("check_fit");
    MultipletModel g;
    g.n_lines = c.integer("n_lines", 4);
    if (g.n_lines < 1 || g.n_lines > 16) throw InvalidInput(c.path("n_lines") + ": must lie in 1..16");
    g.splitting = c.number("splitting_guess_MHz");
    g.fwhm = c.positive("fwhm_guess_MHz");
    guess = g;
  }
  double input_azz = 0.0;
  for (const auto& s : sites)
    if (s.composition.size() == 1) input_azz = s.composition.front().Azz;

  return [=]() {
    Artifacts a;
    const auto density = spectral_density_fft(sites, dopt);
    const auto tc = transition_centers(model, field);
    const double center = plus ? tc.f_plus : tc.f_minus;
    const auto spec = synthesize_esr(density, center, contrast, extra, half_span);
    json rep{{"format_version", kFormatVersion},
             {"kind", "esr-spectrum"},
             {"center_MHz", center},
             {"site_count", sites.size()},
             {"support_width_MHz", spectral_support_width(sites)},
             {"bin_width_MHz", density.bin_width},
             {"exact_lattice", density.exact_lattice},
             {"lattice_step_MHz", density.lattice_step}};
    if (tc.warning) a.warnings.push_back(*tc.warning);
    if (!density.exact_lattice) a.warnings.push_back("couplings snapped to the FFT lattice; bins are approximate");
    if (guess) {
      const auto init = initial_multiplet_guess(spec, guess->n_lines, guess->splitting, guess->fwhm);
      const auto fit = fit_multiplet(spec, guess->n_lines, AmplitudeLaw::BinomialUnpolarized, init);
      rep["check_fit"] = fit.report.to_json();
      if (fit.model) {
        rep["check_fit"]["splitting_MHz"] = fit.model->splitting;
        rep["check_fit"]["input_Azz_MHz"] = input_azz;
        rep["check_fit"]["splitting_minus_Azz_MHz"] = std::abs(fit.model->splitting) - std::abs(input_azz);
      }
    }
    rep["warnings"] = trace_warnings(a.warnings);
    a.files.emplace_back("density.csv", csv_text(density_table(density)));
    a.files.emplace_back("spectrum.csv", csv_text(spectrum_table(spec)));
    a.files.emplace_back("report.json", json_text(rep));
    return a;
  };
}

Job endor_spectrum(const Scenario& sc, RunContext& ctx) {
  const Fields f(sc.doc, "");
  const auto reg = registry_for(sc, ctx);
  const auto model = model_for(sc, ctx, reg);
  if (model.nuclei.empty()) throw InvalidInput("model: needs at least one nucleus");
  const FieldConfig field = field_for(f);
  auto band = nuclear_band(model);
  if (f.has("band_MHz")) {
    const auto b = f.numbers("band_MHz");
    if (b.size() != 2 || !(b[1] > b[0]) || !(b[0] >= 0.0))
      throw InvalidInput("band_MHz: expected [low, high] with 0 <= low < high");
    band = {b[0], b[1]};
  }
  TransitionSpectrumOptions opt;
  opt.fwhm = f.positive("fwhm_MHz", opt.fwhm);
  opt.grid_step = f.positive("grid_step_MHz", opt.grid_step);
  opt.rule = f.choice("amplitude_rule", {"abs-sum", "intensity"}, "abs-sum") == "intensity" ? AmplitudeRule::Intensity
                                                                                          : AmplitudeRule::AbsSum;
  const auto manifold = manifold_for(f, "initial_manifold", {-2, 1});

  return [=]() {
    Artifacts a;
    const auto reg_layout = model.register_layout();
    const auto eig = diagonalize(build_hamiltonian(model, field), reg_layout);
    const auto probes = electron_probes(reg_layout);
    const auto spec = transition_spectrum(eig, probes, manifold, band, opt);
    auto lines = transition_lines(eig, probes, manifold, band.first, band.second, opt.rule);
    std::sort(lines.begin(), lines.end(), [](const auto& x, const auto& y) {
      return std::tie(x.delta_E, x.from_index, x.to_index) < std::tie(y.delta_E, y.from_index, y.to_index);
    });
    CsvTable lt{{"delta_E_MHz", "amplitude", "from_index", "to_index"}, {{}, {}, {}, {}}};
    for (const auto& l : lines) {
      lt.columns[0].push_back(l.delta_E);
      lt.columns[1].push_back(l.amplitude);
      lt.columns[2].push_back(static_cast<double>(l.from_index));
      lt.columns[3].push_back(static_cast<double>(l.to_index));
    }
    const json rep{{"format_version", kFormatVersion},
                   {"kind", "endor-spectrum"},
                   {"Bz_G", field.Bz},
                   {"dominant_line_MHz", dominant_peak(spec)},
                   {"line_count", lines.size()},
                   {"band_MHz", {band.first, band.second}},
                   {"warnings", json::array()}};
    a.files.emplace_back("spectrum.csv", csv_text(spectrum_table(spec)));
    a.files.emplace_back("lines.csv", csv_text(lt));
    a.files.emplace_back("report.json", json_text(rep));
    return a;
  };
}

Job rabi(const Scenario& sc, RunContext& ctx) {
  const Fields f(sc.doc, "");
  const auto reg = registry_for(sc, ctx);
  const auto model = model_for(sc, ctx, reg);
  if (model.nuclei.empty()) throw InvalidInput("model: needs at least one nucleus");
  const FieldConfig field = field_for(f);
  const Fields d = f.object("drive");
  DriveSpec drive;
  drive.freq = d.positive("freq_MHz");
  drive.theta = d.number("theta_rad", 0.0);
  drive.phase = d.number("phase_rad", 0.0);
  if (d.has("B_dr_G") == d.has("target_rabi_MHz"))
    throw InvalidInput("drive: give exactly one of 'B_dr_G' or 'target_rabi_MHz'");
  const auto enh = gamma_eff(model.nuclei.front().tensor, model.D_gs, model.gamma_e, field.Bz);
  drive.B_dr = d.has("B_dr_G") ? d.number("B_dr_G") : drive_for_nuclear_rabi(d.positive("target_rabi_MHz"), enh);
  if (!(drive.B_dr >= 0.0)) throw InvalidInput("drive.B_dr_G: must be >= 0");

  const Fields t = f.object("times");
  const double t_max = t.positive("t_max_us");
  const std::string sampling = t.choice("sampling", {"stroboscopic", "uniform"}, "stroboscopic");
  std::vector<double> times;
  if (sampling == "stroboscopic") {
    const double T = 1.0 / drive.freq;
    for (long k = 0; static_cast<double>(k) * T <= t_max * (1.0 + 1e-12); ++k) times.push_back(static_cast<double>(k) * T);
  } else {
    const int n = t.integer("samples", 201);
    if (n < 2) throw InvalidInput(t.path("samples") + ": must be >= 2");
    for (int k = 0; k < n; ++k) times.push_back(t_max * k / (n - 1));
  }
  if (times.size() > 200000) throw InvalidInput("times: more than 2e5 samples");
  RabiOptions ropt;
  ropt.dt = f.maybe_number("dt_us");
  ropt.workers = ctx.workers;
  ropt.manifold = manifold_for(f, "readout_manifold", ropt.manifold);
  const std::size_t n_peaks = static_cast<std::size_t>(f.integer("report_peaks", 4));

  return [=]() {
    Artifacts a;
    const auto tr = simulate_nuclear_rabi(model, field, drive, times, ropt);
    for (const auto& w : tr.warnings) a.warnings.push_back(w);
    json rep{{"format_version", kFormatVersion},
             {"kind", "rabi"},
             {"Bz_G", field.Bz},
             {"drive_freq_MHz", drive.freq},
             {"B_dr_G", drive.B_dr},
             {"gamma_eff_MHz_per_G", enh.gamma_eff},
             {"dt_used_us", tr.dt_used},
             {"norm_drift", tr.norm_drift}};
    json site = json::array();
    for (const auto& w : model_omegas(model, field, drive)) site.push_back(2.0 * std::abs(w));
    rep["site_rabi_MHz"] = site;
    if (model.nuclei.size() == 3) {
      const auto w = model_omegas(model, field, drive);
      rep["predicted_frequencies_MHz"] = rabi_frequencies({w[0], w[1], w[2]});
    }
    json peaks = json::array();
    if (tr.times.size() >= 8) {
      const auto p = trace_peaks(tr, 0, n_peaks);
      for (const auto& pk : p) peaks.push_back({{"freq_MHz", pk.freq}, {"magnitude", pk.magnitude}});
    }
    rep["fft_peaks"] = peaks;
    rep["warnings"] = trace_warnings(a.warnings);
    a.files.emplace_back("trace.csv", csv_text(trace_table(tr)));
    a.files.emplace_back("report.json", json_text(rep));
    return a;
  };
}

LMOptions lm_options(const Fields& f) {
  LMOptions lm;
  lm.max_iterations = f.integer("max_iterations", lm.max_iterations);
  if (lm.max_iterations < 1) throw InvalidInput("max_iterations: must be >= 1");
  return lm;
}

void mark_unconverged(Artifacts& a, const FitReport& r) {
  if (!r.converged) a.failure = "fit did not converge: " + r.message;
}

Job fit_multiplet_kind(const Scenario& sc, RunContext& ctx) {
  const Fields f(sc.doc, "");
  const auto src = spectrum_source(sc, ctx, f);
  const int n_lines = f.integer("n_lines", 4);
  if (n_lines < 1 || n_lines > 16) throw InvalidInput("n_lines: must lie in 1..16");
  const auto law = amplitude_law_from_string(
      f.choice("law", {"binomial-unpolarized", "binomial-P", "two-parameter-P1P2", "free"}, "binomial-unpolarized"));
  const Fields init = f.object("initial");
  const double s0 = init.number("splitting_MHz");
  const double w0 = init.positive("fwhm_MHz");
  MultipletFitOptions fo;
  fo.lm = lm_options(f);
  fo.splitting_sign = f.integer("splitting_sign", 0);
  if (fo.splitting_sign < -1 || fo.splitting_sign > 1) throw InvalidInput("splitting_sign: must be -1, 0 or +1");

  return [=]() {
    Artifacts a;
    const auto data = src.get();
    const auto fit = fit_multiplet(data, n_lines, law, initial_multiplet_guess(data, n_lines, s0, w0, law), fo);
    auto rep = fit.report.to_json();
    rep["kind"] = "fit-multiplet";
    if (fit.model) rep["model_parameters"] = multiplet_json(*fit.model);
    if (src.synthetic) rep["synthetic_truth"] = multiplet_json(src.synthetic->truth);
    mark_unconverged(a, fit.report);
    attach_spectrum_io(a, data, fit.model);
    a.files.emplace_back("report.json", json_text(rep));
    return a;
  };
}

Job fit_polarization_kind(const Scenario& sc, RunContext& ctx) {
  const Fields f(sc.doc, "");
  const auto src = spectrum_source(sc, ctx, f);
  const auto kind = f.choice("polarization_model", {"single", "double"}, "single") == "double"
                        ? PolarizationModel::Double
                        : PolarizationModel::Single;
  const Fields init = f.object("initial");
  const double s0 = init.number("splitting_MHz");
  const double w0 = init.positive("fwhm_MHz");
  LineOrdering ord;
  if (f.has("ordering")) {
    const Fields o = f.object("ordering");
    ord.negative_gamma = o.boolean("negative_gamma", ord.negative_gamma);
    ord.transition_ms = o.integer("transition_ms", ord.transition_ms);
    if (ord.transition_ms != 1 && ord.transition_ms != -1)
      throw InvalidInput(o.path("transition_ms") + ": must be +1 or -1");
  }
  const LMOptions lm = lm_options(f);

  return [=]() {
    Artifacts a;
    const auto data = src.get();
    const auto fit = fit_polarization(data, kind, initial_multiplet_guess(data, 4, s0, w0), ord, lm);
    auto rep = fit.report.to_json();
    rep["kind"] = "fit-polarization";
    if (fit.model) {
      const auto& r = *fit.model;
      rep["P"] = r.P;
      rep["sigma_P"] = r.sigma;
      rep["line_weights"] = line_weights(r.model);
      rep["model_parameters"] = multiplet_json(r.model);
    }
    if (src.synthetic) {
      const auto& t = src.synthetic->truth;
      rep["synthetic_truth"] = multiplet_json(t);
      if (t.P) rep["forward_amplitudes"] = polarization_amplitudes(*t.P);
    }
    mark_unconverged(a, fit.report);
    std::optional<MultipletModel> curve;
    if (fit.model) curve = fit.model->model;
    attach_spectrum_io(a, data, curve);
    a.files.emplace_back("report.json", json_text(rep));
    return a;
  };
}

Job fit_decay_kind(const Scenario& sc, RunContext& ctx) {
  const Fields f(sc.doc, "");
  if (f.has("input") == f.has("synthetic"))
    throw InvalidInput("exactly one of 'input' (CSV path) or 'synthetic' must be given");
  PopulationTrace data;
  std::optional<DecayModel> truth;
  if (f.has("input")) {
    const auto path = ctx.resolve(sc, f.string("input"));
    try {
      data = trace_from_table(read_csv(path.string()));
    } catch (const InvalidInput& e) {
      throw InvalidInput("input: " + std::string(e.what()));
    }
  } else {
    const Fields s = f.object("synthetic");
    DecayModel m;
    m.T = s.positive("T_us");
    m.stretch_n = s.positive("stretch_n", 1.0);
    m.amplitude = s.number("amplitude", 1.0);
    m.offset = s.number("offset", 0.0);
    const double t_max = s.positive("t_max_us");
    const int n = s.integer("samples", 101);
    if (n < 8) throw InvalidInput(s.path("samples") + ": must be >= 8");
    const double noise = s.number("noise", 0.0);
    if (!(noise >= 0.0)) throw InvalidInput(s.path("noise") + ": must be >= 0");
    std::mt19937 rng(static_cast<unsigned>(s.integer("seed", 1)));
    std::normal_distribution<double> g(0.0, noise > 0.0 ? noise : 1.0);
    data.labels = {"population"};
    data.populations.assign(1, {});
    for (int k = 0; k < n; ++k) {
      const double t = t_max * k / (n - 1);
      data.times.push_back(t);
      data.populations[0].push_back(m(t) + (noise > 0.0 ? g(rng) : 0.0));
    }
    truth = m;
  }
  const auto& y = data.populations.front();
  if (y.size() < 8) throw InvalidInput("input: at least 8 samples are required");
  const Fields i = f.object("initial");
  DecayModel init;
  init.T = i.positive("T_us");
  init.stretch_n = i.positive("stretch_n", 1.0);
  init.offset = i.number("offset", y.back());
  init.amplitude = i.number("amplitude", y.front() - y.back());
  DecayFitOptions opt;
  opt.freeze_n = f.boolean("freeze_n", true);
  opt.lm = lm_options(f);

  return [=]() {
    Artifacts a;
    const auto fit = fit_decay(data, init, opt);
    auto rep = fit.report.to_json();
    rep["kind"] = "fit-decay";
    if (truth)
      rep["synthetic_truth"] = {{"T_us", truth->T}, {"stretch_n", truth->stretch_n}, {"amplitude", truth->amplitude},
                                {"offset", truth->offset}};
    mark_unconverged(a, fit.report);
    a.files.emplace_back("input_trace.csv", csv_text(trace_table(data)));
    if (fit.model) {
      PopulationTrace curve;
      curve.times = data.times;
      curve.populations.assign(1, {});
      for (double t : data.times) curve.populations[0].push_back((*fit.model)(t));
      a.files.emplace_back("fit_curve.csv", csv_text(trace_table(curve)));
    }
    a.files.emplace_back("report.json", json_text(rep));
    return a;
  };
}

Job sensitivity_dc_kind(const Scenario& sc, RunContext&) {
  const Fields f(sc.doc, "");
  const auto mode = f.choice("mode", {"slope", "lorentzian"}, "slope") == "slope" ? DcMode::Slope : DcMode::Lorentzian;
  SensitivityInput in;
  in.R = f.maybe_number("R_per_s");
  in.max_slope = f.maybe_number("max_slope_per_Hz");
  in.delta_nu = f.maybe_number("delta_nu_MHz");
  in.C_m = f.maybe_number("C_m");
  const double eta = sensitivity_dc(in, mode);
  return [=]() {
    Artifacts a;
    const json rep{{"format_version", kFormatVersion},
                   {"kind", "sensitivity-dc"},
                   {"mode", mode == DcMode::Slope ? "slope" : "lorentzian"},
                   {"eta_T_per_sqrtHz", eta},
                   {"eta_uT_per_sqrtHz", eta * 1e6},
                   {"warnings", json::array()}};
    a.files.emplace_back("report.json", json_text(rep));
    return a;
  };
}

Job sensitivity_ac_kind(const Scenario& sc, RunContext&) {
  const Fields f(sc.doc, "");
  SensitivityInput in;
  in.C_max = f.maybe_number("C_max");
  in.N_photons = f.maybe_number("N_photons");
  in.tau = f.maybe_number("tau_s");
  in.T2 = f.maybe_number("T2_s");
  in.t_I = f.maybe_number("t_I_s");
  in.t_R = f.maybe_number("t_R_s");
  const double eta = sensitivity_ac(in);
  return [=]() {
    Artifacts a;
    const json rep{{"format_version", kFormatVersion},
                   {"kind", "sensitivity-ac"},
                   {"eta_T_per_sqrtHz", eta},
                   {"eta_uT_per_sqrtHz", eta * 1e6},
                   {"warnings", json::array()}};
    a.files.emplace_back("report.json", json_text(rep));
    return a;
  };
}

Job validate_kind(const Scenario& sc, RunContext& ctx) {
  const Fields f(sc.doc, "");
  const auto reg = registry_for(sc, ctx);
  auto required = f.strings("require_gammas");
  if (!f.has("require_gammas"))
    for (const auto& [name, s] : reg.all()) required.push_back(name);
  for (const auto& name : required) {
    if (!reg.contains(name)) throw InvalidInput("require_gammas: unknown isotope '" + name + "'");
    if (!reg.at(name).gamma_n)
      throw InvalidInput("isotope " + name + ": field 'gamma_n_MHz_per_G' is REQUIRED-USER-INPUT; supply a value");
  }
  json checked = json::array();
  for (const auto& ref : f.strings("models")) {
    const auto m = model_file(sc, ctx, reg, ref);
    for (const auto& n : m.nuclei) reg.require_gamma(n.species.name);
    checked.push_back({{"file", ref}, {"type", "defect-model"}, {"nuclei", m.nuclei.size()}});
  }
  for (const auto& ref : f.strings("baths")) {
    const auto b = bath_file(sc, ctx, reg, ref);
    checked.push_back({{"file", ref}, {"type", "bath"}, {"sites", b.size()}});
  }
  return [=]() {
    Artifacts a;
    const json rep{{"format_version", kFormatVersion},
                   {"kind", "validate"},
                   {"valid", true},
                   {"gammas_checked", required},
                   {"documents", checked},
                   {"warnings", json::array()}};
    a.files.emplace_back("report.json", json_text(rep));
    return a;
  };
}

}  // namespace

Job prepare(const Scenario& sc, RunContext& ctx) {
  if (sc.kind == "esr-spectrum") return esr_spectrum(sc, ctx);
  if (sc.kind == "endor-spectrum") return endor_spectrum(sc, ctx);
  if (sc.kind == "rabi") return rabi(sc, ctx);
  if (sc.kind == "fit-multiplet") return fit_multiplet_kind(sc, ctx);
  if (sc.kind == "fit-polarization") return fit_polarization_kind(sc, ctx);
  if (sc.kind == "fit-decay") return fit_decay_kind(sc, ctx);
  if (sc.kind == "sensitivity-dc") return sensitivity_dc_kind(sc, ctx);
  if (sc.kind == "sensitivity-ac") return sensitivity_ac_kind(sc, ctx);
  if (sc.kind == "validate") return validate_kind(sc, ctx);
  throw InvalidInput("kind: unsupported '" + sc.kind + "'");
}

}  // namespace spindefect::cli
