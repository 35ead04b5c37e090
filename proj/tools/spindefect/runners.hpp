#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "scenario.hpp"

namespace spindefect::cli {

/// Named file contents produced by a run, in write order.
struct Artifacts {
  std::vector<std::pair<std::string, std::string>> files;
  std::vector<std::string> warnings;
  /// Set when the run produced diagnostics only (e.g. a fit did not converge).
  std::optional<std::string> failure;
};

using Job = std::function<Artifacts()>;

/// Reads and validates everything the scenario references. The returned job
/// performs the computation; nothing is computed before it is called.
Job prepare(const Scenario& sc, RunContext& ctx);

}  // namespace spindefect::cli
