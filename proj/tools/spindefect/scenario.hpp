#pragma once

// Scenario documents: loading, path resolution and typed field access.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spindefect/spindefect.hpp"

namespace spindefect::cli {

namespace fs = std::filesystem;

inline const std::vector<std::string>& scenario_kinds() {
  static const std::vector<std::string> kinds{"esr-spectrum",    "endor-spectrum", "rabi",
                                              "fit-multiplet",   "fit-polarization", "fit-decay",
                                              "sensitivity-dc",  "sensitivity-ac",  "validate"};
  return kinds;
}

struct Scenario {
  fs::path file;
  nlohmann::json doc;
  std::string kind;
};

/// Everything a runner needs besides the scenario itself.
struct RunContext {
  fs::path data_dir;
  unsigned workers = 1;
  /// Every file read while preparing the run, in first-use order.
  std::vector<fs::path> inputs;

  fs::path resolve(const Scenario& sc, const std::string& ref) {
    fs::path p;
    if (ref.rfind("data:", 0) == 0)
      p = data_dir / ref.substr(5);
    else if (fs::path(ref).is_absolute())
      p = ref;
    else
      p = sc.file.parent_path() / ref;
    if (!fs::exists(p)) throw InvalidInput("referenced file '" + ref + "' not found (resolved to " + p.string() + ")");
    p = fs::weakly_canonical(p);
    if (std::find(inputs.begin(), inputs.end(), p) == inputs.end()) inputs.push_back(p);
    return p;
  }
};

Scenario load_scenario(const fs::path& file);

/// Replaces the number at a dotted path ("field.Bz_G"); the path must exist.
void set_scalar(nlohmann::json& doc, const std::string& dotted, double value);

/// Typed access to one JSON object with field-level error messages.
class Fields {
 public:
  Fields(const nlohmann::json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    if (!obj_.is_object()) throw InvalidInput(where_ + ": expected an object");
  }

  bool has(const std::string& key) const { return obj_.contains(key); }

  double number(const std::string& key) const {
    if (!has(key)) throw InvalidInput(path(key) + ": missing required number");
    if (!obj_[key].is_number()) throw InvalidInput(path(key) + ": must be a number, found " + obj_[key].dump());
    return obj_[key].get<double>();
  }
  double number(const std::string& key, double dflt) const { return has(key) ? number(key) : dflt; }
  std::optional<double> maybe_number(const std::string& key) const {
    return has(key) ? std::optional<double>(number(key)) : std::nullopt;
  }
  double positive(const std::string& key) const {
    const double v = number(key);
    if (!(v > 0.0)) throw InvalidInput(path(key) + ": must be positive");
    return v;
  }
  double positive(const std::string& key, double dflt) const { return has(key) ? positive(key) : dflt; }

  int integer(const std::string& key, int dflt) const {
    if (!has(key)) return dflt;
    if (!obj_[key].is_number_integer()) throw InvalidInput(path(key) + ": must be an integer");
    return obj_[key].get<int>();
  }
  bool boolean(const std::string& key, bool dflt) const {
    if (!has(key)) return dflt;
    if (!obj_[key].is_boolean()) throw InvalidInput(path(key) + ": must be true or false");
    return obj_[key].get<bool>();
  }
  std::string string(const std::string& key) const {
    if (!has(key)) throw InvalidInput(path(key) + ": missing required string");
    if (!obj_[key].is_string()) throw InvalidInput(path(key) + ": must be a string");
    return obj_[key].get<std::string>();
  }
  std::string string(const std::string& key, const std::string& dflt) const { return has(key) ? string(key) : dflt; }
  std::string choice(const std::string& key, const std::vector<std::string>& allowed, const std::string& dflt) const {
    const std::string v = string(key, dflt);
    if (std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      throw InvalidInput(path(key) + ": '" + v + "' is not one of {" + list + "}");
    }
    return v;
  }
  Fields object(const std::string& key) const {
    if (!has(key)) throw InvalidInput(path(key) + ": missing required object");
    return Fields(obj_[key], path(key));
  }
  std::vector<double> numbers(const std::string& key) const {
    if (!has(key) || !obj_[key].is_array()) throw InvalidInput(path(key) + ": must be an array of numbers");
    std::vector<double> out;
    for (const auto& v : obj_[key]) {
      if (!v.is_number()) throw InvalidInput(path(key) + ": must be an array of numbers");
      out.push_back(v.get<double>());
    }
    return out;
  }
  std::vector<std::string> strings(const std::string& key) const {
    std::vector<std::string> out;
    if (!has(key)) return out;
    if (!obj_[key].is_array()) throw InvalidInput(path(key) + ": must be an array of strings");
    for (const auto& v : obj_[key]) {
      if (!v.is_string()) throw InvalidInput(path(key) + ": must be an array of strings");
      out.push_back(v.get<std::string>());
    }
    return out;
  }

  const nlohmann::json& raw() const { return obj_; }
  std::string path(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }

 private:
  const nlohmann::json& obj_;
  std::string where_;
};

}  // namespace spindefect::cli
