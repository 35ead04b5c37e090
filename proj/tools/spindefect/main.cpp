// spindefect: scenario runner for the spin-defect toolkit.

#include <CLI11.hpp>
#include <fmt/format.h>
#include <openssl/evp.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>
#include <thread>

#include "runners.hpp"
#include "scenario.hpp"

#ifndef SPINDEFECT_VERSION
#define SPINDEFECT_VERSION "0.0.0"
#endif
#ifndef SPINDEFECT_DEFAULT_DATA_DIR
#define SPINDEFECT_DEFAULT_DATA_DIR "data"
#endif

namespace {

using namespace spindefect;
using namespace spindefect::cli;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 2;
constexpr int kExitNumerical = 3;

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw NumericalFailure("sha256: digest failed");
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", md[i]);
  return hex;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw InvalidInput("cannot read '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out || !(out << text) || !out.flush()) throw NumericalFailure("cannot write '" + p.string() + "'");
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

fs::path data_dir() {
  if (const char* env = std::getenv("SPINDEFECT_DATA_DIR"); env && *env) return env;
  return SPINDEFECT_DEFAULT_DATA_DIR;
}

json digest_list(const std::vector<fs::path>& files) {
  json out = json::array();
  for (const auto& p : files) out.push_back({{"path", p.string()}, {"sha256", sha256_hex(slurp(p))}});
  return out;
}

struct PointResult {
  int status = kExitOk;
  std::string message;
};

/// Validates, computes and writes one scenario into `out`.
PointResult run_once(const Scenario& sc, const fs::path& out, unsigned workers, bool validate_only,
                     const json& sweep_info) {
  RunContext ctx{data_dir(), workers, {sc.file}};
  json manifest{{"format_version", kFormatVersion},
                {"tool", "spindefect"},
                {"version", SPINDEFECT_VERSION},
                {"kind", sc.kind},
                {"scenario", sc.file.string()},
                {"data_dir", ctx.data_dir.string()}};
  if (!sweep_info.is_null()) manifest["sweep"] = sweep_info;

  auto fail = [&](int status, const std::string& msg) {
    spdlog::error("{}: {}", sc.file.filename().string(), msg);
    if (validate_only) return PointResult{status, msg};
    try {
      fs::create_directories(out);
      write_file(out / "FAILED", fmt::format("exit_status {}\n{}\n", status, msg));
      manifest["exit_status"] = status;
      manifest["message"] = msg;
      manifest["created_utc"] = utc_now();
      write_file(out / "manifest.json", manifest.dump(2) + "\n");
    } catch (const std::exception& e) {
      spdlog::error("could not record the failure in {}: {}", out.string(), e.what());
    }
    return PointResult{status, msg};
  };

  Job job;
  try {
    job = prepare(sc, ctx);
  } catch (const InvalidInput& e) {
    return fail(kExitInvalid, e.what());
  } catch (const NumericalFailure& e) {
    return fail(kExitNumerical, e.what());
  } catch (const std::exception& e) {
    return fail(kExitInvalid, e.what());
  }
  if (validate_only) {
    spdlog::info("{}: valid ({})", sc.file.filename().string(), sc.kind);
    return {};
  }

  try {
    fs::create_directories(out);
    fs::remove(out / "FAILED");
    write_file(out / "FAILED", "exit_status running\n");
    spdlog::info("running {} ({}) into {}", sc.file.filename().string(), sc.kind, out.string());
    const Artifacts a = job();
    for (const auto& w : a.warnings) spdlog::warn("{}", w);
    json arts = json::array();
    for (const auto& [name, text] : a.files) {
      write_file(out / name, text);
      arts.push_back({{"name", name}, {"sha256", sha256_hex(text)}, {"bytes", text.size()}});
    }
    manifest["inputs"] = digest_list(ctx.inputs);
    manifest["artifacts"] = arts;
    manifest["exit_status"] = kExitOk;
    manifest["created_utc"] = utc_now();
    if (a.failure) return fail(kExitNumerical, *a.failure);
    write_file(out / "manifest.json", manifest.dump(2) + "\n");
    fs::remove(out / "FAILED");
  } catch (const InvalidInput& e) {
    return fail(kExitInvalid, e.what());
  } catch (const NumericalFailure& e) {
    return fail(kExitNumerical, e.what());
  } catch (const std::exception& e) {
    return fail(kExitNumerical, e.what());
  }
  return {};
}

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    if (cell.find_first_not_of(" \t") == std::string::npos) continue;
    out.push_back(parse_double(cell, "--sweep-values"));
  }
  return out;
}

int run_sweep(const Scenario& base, const fs::path& out, const std::string& axis, const std::string& values_text,
              unsigned workers, bool validate_only) {
  std::vector<double> values;
  try {
    values = parse_values(values_text);
    if (values.empty()) throw InvalidInput("--sweep-values: empty value list");
    auto probe = base.doc;
    set_scalar(probe, axis, values.front());
  } catch (const InvalidInput& e) {
    spdlog::error("{}", e.what());
    return kExitInvalid;
  }

  const std::size_t n = values.size();
  std::vector<PointResult> results(n);
  std::atomic<std::size_t> next{0};
  const unsigned pool = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(n)));
  const unsigned inner = pool > 1 ? 1u : workers;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      Scenario pt = base;
      set_scalar(pt.doc, axis, values[i]);
      const json info{{"axis", axis}, {"value", values[i]}, {"point", i}};
      results[i] = run_once(pt, out / fmt::format("point_{:03d}", i), inner, validate_only, info);
    }
  };
  {
    std::vector<std::jthread> threads;
    for (unsigned k = 1; k < pool; ++k) threads.emplace_back(worker);
    worker();
  }

  int status = kExitOk;
  for (const auto& r : results) status = std::max(status, r.status);
  if (validate_only) return status;

  CsvTable index{{"point", "value", "exit_status"}, {{}, {}, {}}};
  json points = json::array();
  for (std::size_t i = 0; i < n; ++i) {
    index.columns[0].push_back(static_cast<double>(i));
    index.columns[1].push_back(values[i]);
    index.columns[2].push_back(results[i].status);
    json p{{"point", i}, {"value", values[i]}, {"dir", fmt::format("point_{:03d}", i)}, {"exit_status", results[i].status}};
    if (!results[i].message.empty()) p["message"] = results[i].message;
    points.push_back(p);
  }
  try {
    fs::create_directories(out);
    std::ostringstream csv;
    write_csv(csv, index);
    write_file(out / "index.csv", csv.str());
    const json manifest{{"format_version", kFormatVersion},
                        {"tool", "spindefect"},
                        {"version", SPINDEFECT_VERSION},
                        {"scenario", base.file.string()},
                        {"axis", axis},
                        {"points", points},
                        {"exit_status", status},
                        {"created_utc", utc_now()}};
    write_file(out / "manifest.json", manifest.dump(2) + "\n");
  } catch (const std::exception& e) {
    spdlog::error("sweep index: {}", e.what());
    return kExitNumerical;
  }
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spin-defect spectra, dynamics and fits driven by scenario files"};
  app.set_version_flag("--version", SPINDEFECT_VERSION);
  std::string scenario_path, out_dir, log_level = "info", sweep_axis, sweep_values;
  unsigned workers = 1;
  bool validate_only = false;
  app.add_option("--scenario", scenario_path, "Scenario file")->required();
  app.add_option("--out", out_dir, "Output directory (overrides the scenario's 'output')");
  app.add_option("--workers", workers, "Worker threads")->check(CLI::Range(1u, 256u));
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));
  app.add_flag("--validate-only", validate_only, "Check the scenario and its inputs, compute nothing");
  auto* axis_opt = app.add_option("--sweep-axis", sweep_axis, "Dotted scenario parameter to sweep, e.g. field.Bz_G");
  app.add_option("--sweep-values", sweep_values, "Comma-separated sweep values")->needs(axis_opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInvalid;
  }

  auto logger = spdlog::stderr_color_mt("spindefect");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(log_level));
  spdlog::set_pattern("[%l] %v");

  Scenario sc;
  try {
    sc = load_scenario(scenario_path);
  } catch (const InvalidInput& e) {
    spdlog::error("{}", e.what());
    return kExitInvalid;
  }

  fs::path out = out_dir;
  if (out.empty()) {
    const auto& doc = sc.doc;
    out = doc.contains("output") && doc["output"].is_string() ? fs::path(doc["output"].get<std::string>())
                                                                : fs::path("runs") / sc.file.stem();
  }

  if (!sweep_axis.empty()) return run_sweep(sc, out, sweep_axis, sweep_values, workers, validate_only);
  return run_once(sc, out, workers, validate_only, json()).status;
}
