#pragma once

// Runs that turn a RunConfig into a self-describing output directory:
// data files, the effective config, a report of checks and a manifest.

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "trapscope/config.hpp"

namespace trapscope::app {

inline constexpr const char* tool_version = "0.3.0";

struct Check {
  std::string name;
  double value = 0;
  std::string requirement;
  bool pass = false;
  bool diagnostic = false;  // reported, never gates the exit code
};

struct RunReport {
  std::string command;
  std::vector<Check> checks;
  nlohmann::json summary = nlohmann::json::object();
  std::vector<std::pair<std::string, double>> timings_s;

  bool passed() const;
  nlohmann::json to_json() const;
};

/// Owns one output directory and remembers every file written into it.
class OutputDir {
 public:
  explicit OutputDir(std::filesystem::path dir);

  const std::filesystem::path& path() const { return dir_; }
  void write_text(const std::string& name, const std::string& content);
  /// Path for a file produced by another writer; it is listed in the manifest.
  std::filesystem::path claim(const std::string& name);
  const std::vector<std::string>& files() const { return files_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::string> files_;
};

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Writes config.json and report.json, then manifest.json listing every file
/// with its SHA-256 (timings live only in the manifest).
void finalize(OutputDir& out, const config::RunConfig& cfg, const RunReport& report);

RunReport run_trap_solve(const config::RunConfig& cfg, OutputDir& out);
RunReport run_collection(const config::RunConfig& cfg, OutputDir& out);
RunReport run_calibrate(const config::RunConfig& cfg, OutputDir& out);
RunReport run_lens_design(const config::RunConfig& cfg, OutputDir& out);
RunReport run_psf(const config::RunConfig& cfg, OutputDir& out);
RunReport run_scan_lateral(const config::RunConfig& cfg, OutputDir& out);
RunReport run_scan_axial(const config::RunConfig& cfg, OutputDir& out);

/// fig2c, fig2d, fig3d, fig4c, fig4d or budget.
RunReport reproduce(const config::RunConfig& cfg, const std::string& target, OutputDir& out);
const std::vector<std::string>& reproduce_targets();

struct SweepRequest {
  std::string op;     // trap, collection, lateral, axial
  std::string param;  // aperture_width | aperture_length, or objective | integrated
  config::Range range;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

/// Generic one-parameter sweep; writes sweep.csv.
RunReport run_sweep(const config::RunConfig& cfg, const SweepRequest& request, OutputDir& out);

}  // namespace trapscope::app
