#include "scenario.hpp"

#include <sstream>

namespace spindefect::cli {

Scenario load_scenario(const fs::path& file) {
  if (!fs::exists(file)) throw InvalidInput("scenario '" + file.string() + "' not found");
  Scenario sc;
  sc.file = fs::weakly_canonical(file);
  sc.doc = load_commented_json(sc.file.string());
  const Fields f(sc.doc, "");
  if (f.integer("format_version", -1) != kFormatVersion)
    throw InvalidInput("format_version: missing or unsupported (expected " + std::to_string(kFormatVersion) + ")");
  sc.kind = f.choice("kind", scenario_kinds(), "");
  return sc;
}

void set_scalar(nlohmann::json& doc, const std::string& dotted, double value) {
  if (dotted.empty()) throw InvalidInput("sweep axis: empty parameter name");
  nlohmann::json* node = &doc;
  std::stringstream ss(dotted);
  std::string key;
  while (std::getline(ss, key, '.')) {
    if (!node->is_object() || !node->contains(key))
      throw InvalidInput("sweep axis '" + dotted + "': no field '" + key + "' in the scenario");
    node = &(*node)[key];
  }
  if (!node->is_number()) throw InvalidInput("sweep axis '" + dotted + "' does not name a scalar number");
  *node = value;
}

}  // namespace spindefect::cli
