#include "trapscope/config.hpp"

#include <cmath>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

namespace trapscope::config {

using nlohmann::json;

std::vector<double> Range::values() const {
  validate("range");
  const auto count = static_cast<std::size_t>(std::floor((stop - start) / step * (1 + 1e-9) + 1e-9)) + 1;
  std::vector<double> v(count);
  for (std::size_t i = 0; i < count; ++i) v[i] = start + step * static_cast<double>(i);
  return v;
}

void Range::validate(const std::string& key) const {
  if (!std::isfinite(start) || !std::isfinite(stop) || !std::isfinite(step))
    throw ConfigError(key, "range bounds must be finite");
  if (!(step > 0.0)) throw ConfigError(key + ".step", "must be > 0");
  if (start > stop) throw ConfigError(key, "start must not exceed stop");
}

trap::RfDrive DriveConfig::rf_drive() const {
  return {voltage, two_pi * frequency_mhz * 1e6};
}

optics::GridSpec PsfConfig::grid() const {
  return {static_cast<std::size_t>(grid_n), spacing_um, static_cast<std::size_t>(guard)};
}

std::string to_string(collection::UndercutParameter p) {
  switch (p) {
    case collection::UndercutParameter::half_width: return "half_width";
    case collection::UndercutParameter::half_length: return "half_length";
    case collection::UndercutParameter::both_fixed_aspect: return "both_fixed_aspect";
  }
  return "half_width";
}

collection::UndercutParameter undercut_parameter_from_string(const std::string& s) {
  if (s == "half_width") return collection::UndercutParameter::half_width;
  if (s == "half_length") return collection::UndercutParameter::half_length;
  if (s == "both_fixed_aspect") return collection::UndercutParameter::both_fixed_aspect;
  throw DomainError("unknown undercut parameter '" + s + "'");
}

namespace {

// Reads keys from one JSON object, remembering which were consumed so the
// leftovers can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

  template <class T>
  void get(const std::string& k, T& out) {
    seen_.insert(k);
    auto it = j_.find(k);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError(key(k), "expected true or false");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw ConfigError(key(k), "expected a string");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) throw ConfigError(key(k), "expected an integer");
        if constexpr (std::is_unsigned_v<T>)
          if (it->is_number_integer() && !it->is_number_unsigned())
            throw ConfigError(key(k), "must be >= 0");
      } else {
        if (!it->is_number()) throw ConfigError(key(k), "expected a number");
      }
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(key(k), e.what());
    }
  }

  std::optional<Section> child(const std::string& k) {
    seen_.insert(k);
    auto it = j_.find(k);
    if (it == j_.end()) return std::nullopt;
    return Section(*it, key(k));
  }

  const json* raw(const std::string& k) {
    seen_.insert(k);
    auto it = j_.find(k);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(key(it.key()), "unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_range(Section& parent, const std::string& k, Range& r) {
  if (auto s = parent.child(k)) {
    s->get("start", r.start);
    s->get("stop", r.stop);
    s->get("step", r.step);
    s->finish();
  }
}

json range_json(const Range& r) { return {{"start", r.start}, {"stop", r.stop}, {"step", r.step}}; }

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError(key, what);
}

}  // namespace

RunConfig from_json(const json& j) {
  RunConfig c;
  Section root(j, "");
  if (auto s = root.child("trap")) {
    s->get("rf_width_left", c.trap.rf_width_left);
    s->get("rf_width_right", c.trap.rf_width_right);
    s->get("gap", c.trap.gap);
    s->get("ground_baseline", c.trap.ground_baseline);
    s->get("ground_margin", c.trap.ground_margin);
    s->get("aperture_width", c.trap.aperture_width);
    s->get("aperture_length", c.trap.aperture_length);
    s->get("electrode_length", c.trap.electrode_length);
    s->finish();
  }
  if (auto s = root.child("drive")) {
    s->get("voltage", c.drive.voltage);
    s->get("frequency_mhz", c.drive.frequency_mhz);
    s->finish();
  }
  if (auto s = root.child("ion")) {
    s->get("mass_amu", c.ion.mass_amu);
    s->get("charge", c.ion.charge);
    s->finish();
  }
  if (auto s = root.child("collection")) {
    auto& cc = c.collection;
    s->get("source_height_um", cc.source_height_um);
    s->get("substrate_thickness_um", cc.substrate_thickness_um);
    s->get("target_efficiency_pct", cc.target_efficiency_pct);
    std::string param = to_string(cc.undercut_parameter);
    s->get("undercut_parameter", param);
    std::string coupling = design::to_string(cc.height_coupling);
    s->get("height_coupling", coupling);
    s->get("mc_samples", cc.mc_samples);
    s->finish();
    try {
      cc.undercut_parameter = undercut_parameter_from_string(param);
    } catch (const DomainError& e) {
      throw ConfigError("collection.undercut_parameter", e.what());
    }
    try {
      cc.height_coupling = design::coupling_from_string(coupling);
    } catch (const DomainError& e) {
      throw ConfigError("collection.height_coupling", e.what());
    }
  }
  if (const json* layers = root.raw("layers")) {
    if (!layers->is_array()) throw ConfigError("layers", "expected an array");
    c.layers.layers.clear();
    for (std::size_t i = 0; i < layers->size(); ++i) {
      Section s((*layers)[i], "layers[" + std::to_string(i) + "]");
      metalens::Layer l;
      s.get("thickness_um", l.thickness);
      s.get("index", l.index);
      s.finish();
      c.layers.layers.push_back(l);
    }
  }
  if (auto s = root.child("lens")) {
    s->get("wavelength_nm", c.lens.wavelength_nm);
    s->get("diameter_um", c.lens.diameter_um);
    s->get("radial_samples", c.lens.radial_samples);
    s->get("fit_order", c.lens.fit_order);
    s->get("pillar_library", c.lens.pillar_library);
    s->get("write_featuremap", c.lens.write_featuremap);
    s->finish();
  }
  if (auto s = root.child("psf")) {
    s->get("grid_n", c.psf.grid_n);
    s->get("spacing_um", c.psf.spacing_um);
    s->get("guard", c.psf.guard);
    s->get("use_featuremap", c.psf.use_featuremap);
    s->get("convergence_check", c.psf.convergence_check);
    s->get("raster_half_window_um", c.psf.raster_half_window_um);
    s->finish();
  }
  if (auto s = root.child("rays")) {
    auto& t = c.rays.train;
    s->get("objective_focal_mm", t.objective_focal_mm);
    s->get("objective_radius_mm", t.objective_radius_mm);
    s->get("focusing_focal_mm", t.focusing_focal_mm);
    s->get("focusing_radius_mm", t.focusing_radius_mm);
    s->get("relay_mm", t.relay_mm);
    s->get("detector_half_mm", t.detector_half_mm);
    s->get("metalens_radius_mm", t.metalens_radius_mm);
    s->get("transmittance", c.rays.transmittance);
    s->get("n_rays", c.rays.n_rays);
    s->get("cone_half_angle_deg", c.rays.cone_half_angle_deg);
    s->finish();
  }
  if (auto s = root.child("sweeps")) {
    read_range(*s, "width_um", c.sweeps.width);
    read_range(*s, "length_um", c.sweeps.length);
    read_range(*s, "lateral_objective_mm", c.sweeps.lateral_objective);
    read_range(*s, "lateral_integrated_mm", c.sweeps.lateral_integrated);
    read_range(*s, "axial_um", c.sweeps.axial);
    s->finish();
  }
  root.get("seed", c.seed);
  root.get("output_dir", c.output_dir);
  root.finish();
  c.validate();
  return c;
}

void RunConfig::validate() const {
  auto positive = [](double v, const std::string& key) {
    require(v > 0.0 && std::isfinite(v), key, "must be > 0");
  };
  positive(trap.rf_width_left, "trap.rf_width_left");
  positive(trap.rf_width_right, "trap.rf_width_right");
  positive(trap.gap, "trap.gap");
  positive(trap.ground_baseline, "trap.ground_baseline");
  positive(trap.electrode_length, "trap.electrode_length");
  require(trap.ground_margin >= 0.0, "trap.ground_margin", "must be >= 0");
  positive(trap.aperture_width, "trap.aperture_width");
  positive(trap.aperture_length, "trap.aperture_length");
  require(trap.aperture_length <= trap.electrode_length, "trap.aperture_length",
          "must not exceed electrode_length");
  positive(drive.voltage, "drive.voltage");
  positive(drive.frequency_mhz, "drive.frequency_mhz");
  positive(ion.mass_amu, "ion.mass_amu");
  require(ion.charge >= 1, "ion.charge", "must be >= 1");

  positive(collection.source_height_um, "collection.source_height_um");
  positive(collection.substrate_thickness_um, "collection.substrate_thickness_um");
  require(collection.target_efficiency_pct > 0.0 && collection.target_efficiency_pct < 50.0,
          "collection.target_efficiency_pct", "must lie in (0, 50)");
  require(collection.mc_samples >= 1000, "collection.mc_samples", "must be >= 1000");

  require(!layers.layers.empty(), "layers", "must list at least one layer");
  for (std::size_t i = 0; i < layers.layers.size(); ++i) {
    const std::string k = "layers[" + std::to_string(i) + "]";
    positive(layers.layers[i].thickness, k + ".thickness_um");
    require(layers.layers[i].index >= 1.0, k + ".index", "must be >= 1");
  }
  require(std::abs(layers.layers.front().thickness - collection.source_height_um) < 1e-9,
          "layers[0].thickness_um", "must equal collection.source_height_um");
  require(layers.total_thickness() >=
              collection.source_height_um + collection.substrate_thickness_um - 1e-9,
          "layers", "must reach at least the substrate depth");

  positive(lens.wavelength_nm, "lens.wavelength_nm");
  positive(lens.diameter_um, "lens.diameter_um");
  require(lens.radial_samples >= 16, "lens.radial_samples", "must be >= 16");
  require(lens.fit_order >= 2 && lens.fit_order <= 12, "lens.fit_order", "must lie in [2, 12]");

  require(psf.grid_n >= 64 && psf.grid_n % 2 == 0, "psf.grid_n", "must be even and >= 64");
  positive(psf.spacing_um, "psf.spacing_um");
  require(2 * psf.guard < psf.grid_n, "psf.guard", "must be smaller than half the grid");
  positive(psf.raster_half_window_um, "psf.raster_half_window_um");

  const auto& t = rays.train;
  positive(t.objective_focal_mm, "rays.objective_focal_mm");
  positive(t.objective_radius_mm, "rays.objective_radius_mm");
  positive(t.focusing_focal_mm, "rays.focusing_focal_mm");
  positive(t.focusing_radius_mm, "rays.focusing_radius_mm");
  positive(t.relay_mm, "rays.relay_mm");
  positive(t.detector_half_mm, "rays.detector_half_mm");
  positive(t.metalens_radius_mm, "rays.metalens_radius_mm");
  require(rays.transmittance >= 0.0 && rays.transmittance <= 1.0, "rays.transmittance",
          "must lie in [0, 1]");
  require(rays.n_rays >= 1000, "rays.n_rays", "must be >= 1000");
  require(rays.cone_half_angle_deg > 0.0 && rays.cone_half_angle_deg < 90.0,
          "rays.cone_half_angle_deg", "must lie in (0, 90)");

  sweeps.width.validate("sweeps.width_um");
  sweeps.length.validate("sweeps.length_um");
  sweeps.lateral_objective.validate("sweeps.lateral_objective_mm");
  sweeps.lateral_integrated.validate("sweeps.lateral_integrated_mm");
  sweeps.axial.validate("sweeps.axial_um");
  require(sweeps.width.start >= 0.0, "sweeps.width_um.start", "must be >= 0");
  require(sweeps.length.start > 0.0, "sweeps.length_um.start", "must be > 0");
  require(sweeps.lateral_objective.start >= 0.0, "sweeps.lateral_objective_mm.start",
          "must be >= 0");
  require(sweeps.lateral_integrated.start >= 0.0, "sweeps.lateral_integrated_mm.start",
          "must be >= 0");
  require(!output_dir.empty(), "output_dir", "must not be empty");
}

json to_json(const RunConfig& c) {
  json layers = json::array();
  for (const auto& l : c.layers.layers)
    layers.push_back({{"thickness_um", l.thickness}, {"index", l.index}});
  const auto& t = c.rays.train;
  return {
      {"trap",
       {{"rf_width_left", c.trap.rf_width_left},
        {"rf_width_right", c.trap.rf_width_right},
        {"gap", c.trap.gap},
        {"ground_baseline", c.trap.ground_baseline},
        {"ground_margin", c.trap.ground_margin},
        {"aperture_width", c.trap.aperture_width},
        {"aperture_length", c.trap.aperture_length},
        {"electrode_length", c.trap.electrode_length}}},
      {"drive", {{"voltage", c.drive.voltage}, {"frequency_mhz", c.drive.frequency_mhz}}},
      {"ion", {{"mass_amu", c.ion.mass_amu}, {"charge", c.ion.charge}}},
      {"collection",
       {{"source_height_um", c.collection.source_height_um},
        {"substrate_thickness_um", c.collection.substrate_thickness_um},
        {"target_efficiency_pct", c.collection.target_efficiency_pct},
        {"undercut_parameter", to_string(c.collection.undercut_parameter)},
        {"height_coupling", design::to_string(c.collection.height_coupling)},
        {"mc_samples", c.collection.mc_samples}}},
      {"layers", layers},
      {"lens",
       {{"wavelength_nm", c.lens.wavelength_nm},
        {"diameter_um", c.lens.diameter_um},
        {"radial_samples", c.lens.radial_samples},
        {"fit_order", c.lens.fit_order},
        {"pillar_library", c.lens.pillar_library},
        {"write_featuremap", c.lens.write_featuremap}}},
      {"psf",
       {{"grid_n", c.psf.grid_n},
        {"spacing_um", c.psf.spacing_um},
        {"guard", c.psf.guard},
        {"use_featuremap", c.psf.use_featuremap},
        {"convergence_check", c.psf.convergence_check},
        {"raster_half_window_um", c.psf.raster_half_window_um}}},
      {"rays",
       {{"objective_focal_mm", t.objective_focal_mm},
        {"objective_radius_mm", t.objective_radius_mm},
        {"focusing_focal_mm", t.focusing_focal_mm},
        {"focusing_radius_mm", t.focusing_radius_mm},
        {"relay_mm", t.relay_mm},
        {"detector_half_mm", t.detector_half_mm},
        {"metalens_radius_mm", t.metalens_radius_mm},
        {"transmittance", c.rays.transmittance},
        {"n_rays", c.rays.n_rays},
        {"cone_half_angle_deg", c.rays.cone_half_angle_deg}}},
      {"sweeps",
       {{"width_um", range_json(c.sweeps.width)},
        {"length_um", range_json(c.sweeps.length)},
        {"lateral_objective_mm", range_json(c.sweeps.lateral_objective)},
        {"lateral_integrated_mm", range_json(c.sweeps.lateral_integrated)},
        {"axial_um", range_json(c.sweeps.axial)}}},
      {"seed", c.seed},
      {"output_dir", c.output_dir},
  };
}

RunConfig parse_config_text(const std::string& text) {
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return from_json(json::object());
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<file>", std::string("not valid JSON: ") + e.what());
  }
  return from_json(j);
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string canonical_text(const RunConfig& c) { return to_json(c).dump(2) + "\n"; }

}  // namespace trapscope::config
