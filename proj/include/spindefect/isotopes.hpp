#pragma once

#include <nlohmann/json.hpp>

#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spindefect/error.hpp"
#include "spindefect/spin_core.hpp"

namespace spindefect {

/// Electron gyromagnetic ratio, MHz/G (ordinary frequency).
inline constexpr double kGammaElectron = 2.8;
/// Ground-state zero-field splitting, MHz.
inline constexpr double kZeroFieldSplitting = 3480.0;
/// gamma_e / |gamma_n| for 15N.
inline constexpr double kElectronTo15NRatio = 6487.0;
/// gamma(15N) / gamma(14N).
inline constexpr double k15NTo14NGammaRatio = -1.4;

struct IsotopeSpecies {
  std::string name;  // mass number + element symbol, e.g. "15N"
  SpinQuantum spin{1};
  std::optional<double> gamma_n;  // MHz/G, signed; empty until user-populated
  double natural_abundance = 0.0;

  std::string element() const {
    std::string el;
    for (char c : name)
      if (std::isalpha(static_cast<unsigned char>(c))) el += c;
    return el;
  }

  double gamma() const {
    if (!gamma_n)
      throw InvalidInput("isotope " + name + ": gamma_n_MHz_per_G is not populated (REQUIRED-USER-INPUT)");
    return *gamma_n;
  }
};

class IsotopeRegistry {
 public:
  IsotopeRegistry() = default;
  explicit IsotopeRegistry(std::vector<IsotopeSpecies> species) {
    for (auto& s : species) {
      const std::string key = s.name;
      if (!by_name_.emplace(key, std::move(s)).second) throw InvalidInput("isotope registry: duplicate record " + key);
    }
    validate_abundances();
  }

  const IsotopeSpecies& at(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw InvalidInput("unknown isotope '" + name + "'");
    return it->second;
  }
  bool contains(const std::string& name) const { return by_name_.count(name) != 0; }
  const std::map<std::string, IsotopeSpecies>& all() const { return by_name_; }

  /// Names of records whose gyromagnetic ratio still awaits user input.
  std::vector<std::string> missing_gammas() const {
    std::vector<std::string> out;
    for (const auto& [name, s] : by_name_)
      if (!s.gamma_n) out.push_back(name);
    return out;
  }

  void require_gamma(const std::string& name) const { (void)at(name).gamma(); }

 private:
  void validate_abundances() const {
    std::map<std::string, double> sums;
    for (const auto& [name, s] : by_name_) {
      if (!(s.natural_abundance >= 0.0 && s.natural_abundance <= 1.0))
        throw InvalidInput("isotope " + name + ": abundance must lie in [0,1]");
      sums[s.element()] += s.natural_abundance;
    }
    for (const auto& [el, sum] : sums)
      if (std::abs(sum - 1.0) > 1e-9)
        throw InvalidInput("isotope registry: abundances of element " + el + " sum to " + std::to_string(sum) +
                           ", expected 1");
  }

  std::map<std::string, IsotopeSpecies> by_name_;
};

/// Nitrogen ratios derive from the measured gamma_e/gamma_n and 15N/14N
/// ratios; boron ratios are left unpopulated.
inline IsotopeRegistry default_registry() {
  const double g15 = -kGammaElectron / kElectronTo15NRatio;
  return IsotopeRegistry({
      {"14N", SpinQuantum(2), g15 / k15NTo14NGammaRatio, 0.996},
      {"15N", SpinQuantum(1), g15, 0.004},
      {"10B", SpinQuantum(6), std::nullopt, 0.2},
      {"11B", SpinQuantum(3), std::nullopt, 0.8},
  });
}

inline IsotopeRegistry registry_from_json(const nlohmann::json& doc) {
  if (doc.contains("format_version") && doc["format_version"] != 1)
    throw InvalidInput("isotope registry: unsupported format_version (expected 1)");
  if (!doc.contains("isotopes") || !doc["isotopes"].is_array())
    throw InvalidInput("isotope registry: missing array 'isotopes'");
  std::vector<IsotopeSpecies> out;
  for (const auto& rec : doc["isotopes"]) {
    const std::string name = rec.value("name", std::string{});
    if (name.empty()) throw InvalidInput("isotope registry: record without 'name'");
    auto field = [&](const char* key) -> const nlohmann::json& {
      if (!rec.contains(key)) throw InvalidInput("isotope " + name + ": missing field '" + key + "'");
      return rec[key];
    };
    if (!field("two_I").is_number_integer()) throw InvalidInput("isotope " + name + ": 'two_I' must be an integer");
    if (!field("abundance").is_number()) throw InvalidInput("isotope " + name + ": 'abundance' must be a number");
    IsotopeSpecies s{name, SpinQuantum(field("two_I").get<int>()), std::nullopt, field("abundance").get<double>()};
    const auto& g = field("gamma_n_MHz_per_G");
    if (g.is_number()) {
      s.gamma_n = g.get<double>();
    } else if (!(g.is_null() || (g.is_string() && g.get<std::string>() == "REQUIRED-USER-INPUT"))) {
      throw InvalidInput("isotope " + name + ": 'gamma_n_MHz_per_G' must be a number, null or \"REQUIRED-USER-INPUT\"");
    }
    out.push_back(std::move(s));
  }
  return IsotopeRegistry(std::move(out));
}

inline nlohmann::json parse_commented_json(std::istream& in, const std::string& origin) {
  try {
    return nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidInput(origin + ": " + e.what());
  }
}

inline nlohmann::json load_commented_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open '" + path + "'");
  return parse_commented_json(in, path);
}

inline IsotopeRegistry load_registry(const std::string& path) { return registry_from_json(load_commented_json(path)); }

}  // namespace spindefect
