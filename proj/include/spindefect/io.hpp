#pragma once

// CSV payloads and the JSON model/bath descriptions.

#include <nlohmann/json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "spindefect/error.hpp"
#include "spindefect/esr_spectrum.hpp"
#include "spindefect/exact_dynamics.hpp"
#include "spindefect/hamiltonian.hpp"
#include "spindefect/isotopes.hpp"

namespace spindefect {

inline constexpr int kFormatVersion = 1;

/// Shortest decimal string that reads back to the same double.
inline std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  if (res.ec != std::errc{}) throw NumericalFailure("format_double: conversion failed");
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  while (b < e && (*b == ' ' || *b == '\t')) ++b;
  while (e > b && (e[-1] == ' ' || e[-1] == '\t' || e[-1] == '\r')) --e;
  if (b < e && *b == '+') ++b;
  const auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc{} || res.ptr != e) throw InvalidInput(where + ": '" + s + "' is not a number");
  return v;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;

  const std::vector<double>& column(const std::string& name) const {
    for (std::size_t k = 0; k < header.size(); ++k)
      if (header[k] == name) return columns[k];
    throw InvalidInput("csv: missing column '" + name + "'");
  }
  bool has(const std::string& name) const {
    for (const auto& h : header)
      if (h == name) return true;
    return false;
  }
};

inline void write_csv(std::ostream& out, const CsvTable& t) {
  for (std::size_t k = 0; k < t.header.size(); ++k) out << (k ? "," : "") << t.header[k];
  out << '\n';
  const std::size_t rows = t.columns.empty() ? 0 : t.columns.front().size();
  for (const auto& c : t.columns)
    if (c.size() != rows) throw InvalidInput("csv: columns differ in length");
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = 0; k < t.columns.size(); ++k) out << (k ? "," : "") << format_double(t.columns[k][r]);
    out << '\n';
  }
}

inline void write_csv(const std::string& path, const CsvTable& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write '" + path + "'");
  write_csv(out, t);
}

inline CsvTable read_csv(std::istream& in, const std::string& origin) {
  CsvTable t;
  std::string line;
  auto split = [](const std::string& l) {
    std::vector<std::string> f;
    std::stringstream ss(l);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    return f;
  };
  auto trim = [](std::string s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
    while (!s.empty() && s.front() == ' ') s.erase(s.begin());
    return s;
  };
  while (std::getline(in, line)) {
    if (trim(line).empty() || line[0] == '#') continue;
    for (auto& h : split(line)) t.header.push_back(trim(h));
    break;
  }
  if (t.header.empty()) throw InvalidInput(origin + ": empty csv");
  t.columns.assign(t.header.size(), {});
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty() || line[0] == '#') continue;
    const auto f = split(line);
    if (f.size() != t.header.size())
      throw InvalidInput(origin + ": row " + std::to_string(row) + " has " + std::to_string(f.size()) + " fields");
    for (std::size_t k = 0; k < f.size(); ++k)
      t.columns[k].push_back(parse_double(f[k], origin + ": row " + std::to_string(row)));
  }
  return t;
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open '" + path + "'");
  return read_csv(in, path);
}

inline CsvTable spectrum_table(const SpectrumSeries& s) { return {{"freq_MHz", "intensity"}, {s.freqs, s.values}}; }

inline SpectrumSeries spectrum_from_table(const CsvTable& t) {
  SpectrumSeries s;
  s.freqs = t.column("freq_MHz");
  s.values = t.column("intensity");
  s.validate();
  return s;
}

inline CsvTable density_table(const SpectralDensity& d) { return {{"offset_MHz", "weight"}, {d.freq_offsets, d.weights()}}; }

inline CsvTable trace_table(const PopulationTrace& tr) {
  if (tr.populations.size() != 1) throw InvalidInput("trace csv holds exactly one population column");
  return {{"time_us", "population"}, {tr.times, tr.populations.front()}};
}

/// Accepts `time_us` or, as a header mapping, `time_ns` (converted to us).
inline PopulationTrace trace_from_table(const CsvTable& t) {
  PopulationTrace tr;
  if (t.has("time_us")) {
    tr.times = t.column("time_us");
  } else if (t.has("time_ns")) {
    for (double x : t.column("time_ns")) tr.times.push_back(x * 1e-3);
  } else {
    throw InvalidInput("trace csv: needs a 'time_us' or 'time_ns' column");
  }
  tr.populations = {t.column("population")};
  tr.labels = {"population"};
  return tr;
}

// ---------------------------------------------------------------------------
// JSON documents

namespace detail {

inline void check_format_version(const nlohmann::json& doc, const std::string& what) {
  if (!doc.is_object()) throw InvalidInput(what + ": document must be an object");
  if (!doc.contains("format_version")) throw InvalidInput(what + ": missing 'format_version'");
  if (!doc["format_version"].is_number_integer() || doc["format_version"].get<int>() != kFormatVersion)
    throw InvalidInput(what + ": unsupported format_version (expected " + std::to_string(kFormatVersion) + ")");
}

inline double number_field(const nlohmann::json& obj, const std::string& key, const std::string& where) {
  if (!obj.contains(key)) throw InvalidInput(where + ": missing field '" + key + "'");
  if (obj[key].is_string() && (obj[key] == "EXTERNAL-DFT" || obj[key] == "REQUIRED-USER-INPUT"))
    throw InvalidInput(where + ": field '" + key + "' is the placeholder " + obj[key].get<std::string>() +
                       "; supply a value");
  if (!obj[key].is_number()) {
    const std::string shown = obj[key].is_string() ? obj[key].get<std::string>() : obj[key].dump();
    throw InvalidInput(where + ": field '" + key + "' must be a number (found " + shown + ")");
  }
  return obj[key].get<double>();
}

inline double number_or(const nlohmann::json& obj, const std::string& key, double dflt, const std::string& where) {
  return obj.contains(key) ? number_field(obj, key, where) : dflt;
}

inline HyperfineTensor tensor_field(const nlohmann::json& obj, const std::string& where) {
  return {number_or(obj, "Axx", 0.0, where), number_or(obj, "Ayy", 0.0, where), number_or(obj, "Axy", 0.0, where),
          number_field(obj, "Azz", where)};
}

inline HyperfineTensor with_transverse_magnitude(const HyperfineTensor& t, double mag) {
  const double cur = t.transverse_magnitude();
  if (cur == 0.0) {
    if (mag == 0.0) return t;
    throw InvalidInput("defect model: cannot scale a tensor without transverse components");
  }
  return rescale_transverse(t, cur / mag);
}

}  // namespace detail

/// DefectModel document.
///
/// Keys: format_version, D_gs_MHz, gamma_e_MHz_per_G, and either `nuclei`
/// (list of {isotope, Axx, Ayy, Axy, Azz, rotation_rad}) or
/// `threefold_shell` ({isotope, Axx, Ayy, Axy, Azz}). An optional
/// `transverse_magnitude_MHz` rescales every transverse block, keeping shape.
inline DefectModel defect_model_from_json(const nlohmann::json& doc, const IsotopeRegistry& reg) {
  detail::check_format_version(doc, "defect model");
  DefectModel m;
  m.D_gs = detail::number_or(doc, "D_gs_MHz", kZeroFieldSplitting, "defect model");
  m.gamma_e = detail::number_or(doc, "gamma_e_MHz_per_G", kGammaElectron, "defect model");
  if (doc.value("include_quadrupole", false)) m.include_quadrupole = true;
  std::optional<double> mag;
  if (doc.contains("transverse_magnitude_MHz"))
    mag = detail::number_field(doc, "transverse_magnitude_MHz", "defect model");
  if (mag && *mag < 0.0) throw InvalidInput("defect model: transverse_magnitude_MHz must be >= 0");

  auto species = [&](const nlohmann::json& obj, const std::string& where) {
    if (!obj.contains("isotope") || !obj["isotope"].is_string())
      throw InvalidInput(where + ": missing string field 'isotope'");
    const auto& s = reg.at(obj["isotope"].get<std::string>());
    (void)s.gamma();
    return s;
  };
  if (doc.contains("threefold_shell")) {
    const auto& sh = doc["threefold_shell"];
    auto base = detail::tensor_field(sh, "threefold_shell");
    if (mag) base = detail::with_transverse_magnitude(base, *mag);
    const auto s = species(sh, "threefold_shell");
    for (const auto& t : threefold_shell(base)) m.nuclei.push_back({s, t});
  }
  if (doc.contains("nuclei")) {
    if (!doc["nuclei"].is_array()) throw InvalidInput("defect model: 'nuclei' must be an array");
    std::size_t k = 0;
    for (const auto& n : doc["nuclei"]) {
      const std::string where = "defect model: nuclei[" + std::to_string(k++) + "]";
      auto t = detail::tensor_field(n, where);
      if (mag) t = detail::with_transverse_magnitude(t, *mag);
      t = rotate_tensor(t, detail::number_or(n, "rotation_rad", 0.0, where));
      m.nuclei.push_back({species(n, where), t});
    }
  }
  if (!(m.D_gs > 0.0)) throw InvalidInput("defect model: D_gs_MHz must be positive");
  if (m.nuclei.size() > kMaxModelNuclei)
    throw InvalidInput("defect model: at most " + std::to_string(kMaxModelNuclei) + " nuclei are supported");
  return m;
}

inline nlohmann::json defect_model_to_json(const DefectModel& m) {
  nlohmann::json j;
  j["format_version"] = kFormatVersion;
  j["D_gs_MHz"] = m.D_gs;
  j["gamma_e_MHz_per_G"] = m.gamma_e;
  j["nuclei"] = nlohmann::json::array();
  for (const auto& n : m.nuclei)
    j["nuclei"].push_back({{"isotope", n.species.name},
                           {"Axx", n.tensor.Axx},
                           {"Ayy", n.tensor.Ayy},
                           {"Axy", n.tensor.Axy},
                           {"Azz", n.tensor.Azz}});
  return j;
}

/// Bath document: format_version and `sites`, each a list `components` of
/// {isotope, weight, Azz_MHz}. Placeholder strings in Azz_MHz are refused.
inline std::vector<BathSite> bath_from_json(const nlohmann::json& doc, const IsotopeRegistry& reg) {
  detail::check_format_version(doc, "bath");
  if (!doc.contains("sites") || !doc["sites"].is_array()) throw InvalidInput("bath: missing array 'sites'");
  std::vector<BathSite> sites;
  std::size_t i = 0;
  for (const auto& s : doc["sites"]) {
    const std::string where = "bath: sites[" + std::to_string(i++) + "]";
    if (!s.contains("components") || !s["components"].is_array())
      throw InvalidInput(where + ": missing array 'components'");
    BathSite site;
    std::size_t c = 0;
    for (const auto& comp : s["components"]) {
      const std::string cw = where + ".components[" + std::to_string(c++) + "]";
      if (!comp.contains("isotope") || !comp["isotope"].is_string())
        throw InvalidInput(cw + ": missing string field 'isotope'");
      const auto& sp = reg.at(comp["isotope"].get<std::string>());
      site.composition.push_back(
          {sp, detail::number_field(comp, "weight", cw), detail::number_field(comp, "Azz_MHz", cw)});
    }
    try {
      site.validate();
    } catch (const InvalidInput& e) {
      throw InvalidInput(where + ": " + e.what());
    }
    sites.push_back(std::move(site));
  }
  return sites;
}

}  // namespace spindefect
