#pragma once

// Run configuration: one JSON document, every key optional, unknown keys
// rejected. An empty file yields the nominal device.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "trapscope/collection.hpp"
#include "trapscope/design.hpp"
#include "trapscope/metalens.hpp"
#include "trapscope/ray_trace.hpp"
#include "trapscope/trap_model.hpp"
#include "trapscope/wave_optics.hpp"

namespace trapscope::config {

/// Inclusive arithmetic range; the last value is the largest start + k·step
/// not exceeding stop (with a 1e-9 relative allowance).
struct Range {
  double start = 0, stop = 0, step = 1;
  std::vector<double> values() const;
  void validate(const std::string& key) const;
  bool operator==(const Range&) const = default;
};

struct DriveConfig {
  double voltage = 50.0;
  double frequency_mhz = 20.0;
  trap::RfDrive rf_drive() const;
  bool operator==(const DriveConfig&) const = default;
};

struct CollectionConfig {
  double source_height_um = 125.0;
  double substrate_thickness_um = 275.0;
  double target_efficiency_pct = 0.91;
  collection::UndercutParameter undercut_parameter = collection::UndercutParameter::half_width;
  design::HeightCoupling height_coupling = design::HeightCoupling::anchored;
  std::uint64_t mc_samples = 10'000'000;
  bool operator==(const CollectionConfig&) const = default;
};

struct LensConfig {
  double wavelength_nm = 397.0;
  double diameter_um = 440.0;
  std::uint64_t radial_samples = 4001;
  int fit_order = 4;
  std::string pillar_library;  // CSV path; empty selects the synthetic library
  bool write_featuremap = true;
  bool operator==(const LensConfig&) const = default;
};

struct PsfConfig {
  std::uint64_t grid_n = 4096;
  double spacing_um = 0.125;
  std::uint64_t guard = 256;
  bool use_featuremap = true;
  bool convergence_check = true;  // rerun at half resolution, compare FWHMs
  double raster_half_window_um = 10.0;
  optics::GridSpec grid() const;
  bool operator==(const PsfConfig&) const = default;
};

struct RayConfig {
  rays::TrainParams train;
  double transmittance = 0.67;
  std::uint64_t n_rays = 1'000'000;
  double cone_half_angle_deg = 10.98;
  bool operator==(const RayConfig&) const = default;
};

struct SweepConfig {
  Range width{10.0, 300.0, 10.0};
  Range length{50.0, 600.0, 25.0};
  Range lateral_objective{0.0, 2.0, 0.02};
  Range lateral_integrated{0.0, 15.0, 0.1};
  Range axial{-100.0, 100.0, 12.5};
  bool operator==(const SweepConfig&) const = default;
};

struct RunConfig {
  trap::TrapLayout trap;
  DriveConfig drive;
  trap::IonSpecies ion;
  CollectionConfig collection;
  metalens::LayerStack layers = metalens::LayerStack::nominal();
  LensConfig lens;
  PsfConfig psf;
  RayConfig rays;
  SweepConfig sweeps;
  std::uint64_t seed = rng::default_seed;
  std::string output_dir = "out";

  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

RunConfig from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& c);

/// Reads and validates a config file; empty or whitespace-only means `{}`.
RunConfig parse_config(const std::filesystem::path& path);
RunConfig parse_config_text(const std::string& text);

/// Canonical text used for hashing and the echoed effective config.
std::string canonical_text(const RunConfig& c);

std::string to_string(collection::UndercutParameter p);
collection::UndercutParameter undercut_parameter_from_string(const std::string& s);

}  // namespace trapscope::config
