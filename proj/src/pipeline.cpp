#include "trapscope/pipeline.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <sstream>

namespace trapscope::app {

namespace fs = std::filesystem;
using nlohmann::json;
using config::RunConfig;

// ---------------------------------------------------------------- reporting

bool RunReport::passed() const {
  return std::all_of(checks.begin(), checks.end(),
                     [](const Check& c) { return c.pass || c.diagnostic; });
}

json RunReport::to_json() const {
  json list = json::array();
  for (const auto& c : checks) {
    list.push_back({{"name", c.name},
                    {"value", std::isfinite(c.value) ? json(c.value) : json(nullptr)},
                    {"requirement", c.requirement},
                    {"pass", c.pass},
                    {"diagnostic", c.diagnostic}});
  }
  return {{"command", command}, {"passed", passed()}, {"checks", list}, {"summary", summary}};
}

// --------------------------------------------------------------- output dir

OutputDir::OutputDir(fs::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec || !fs::is_directory(dir_))
    throw Error("cannot create output directory '" + dir_.string() + "'");
}

void OutputDir::write_text(const std::string& name, const std::string& content) {
  const auto p = claim(name);
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f << content;
  if (!f) throw Error("cannot write '" + p.string() + "'");
}

fs::path OutputDir::claim(const std::string& name) {
  if (std::find(files_.begin(), files_.end(), name) == files_.end()) files_.push_back(name);
  return dir_ / name;
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw Error("cannot read '" + p.string() + "'");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

void finalize(OutputDir& out, const RunConfig& cfg, const RunReport& report) {
  const std::string config_text = config::canonical_text(cfg);
  out.write_text("config.json", config_text);
  out.write_text("report.json", report.to_json().dump(2) + "\n");

  json files = json::array();
  for (const auto& name : out.files()) {
    const auto bytes = read_file(out.path() / name);
    files.push_back({{"name", name}, {"sha256", sha256_hex(bytes)}, {"bytes", bytes.size()}});
  }
  json timings = json::object();
  for (const auto& [stage, seconds] : report.timings_s) timings[stage] = seconds;

  const json manifest = {{"tool", "trapscope"},
                         {"version", tool_version},
                         {"command", report.command},
                         {"config_sha256", sha256_hex(config_text)},
                         {"seed", cfg.seed},
                         {"files", files},
                         {"timings_s", timings}};
  const auto p = out.path() / "manifest.json";
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f << manifest.dump(2) << "\n";
  if (!f) throw Error("cannot write '" + p.string() + "'");
}

// ----------------------------------------------------------------- helpers

namespace {

class Stopwatch {
 public:
  explicit Stopwatch(RunReport& r) : report_(r) {}
  template <class F>
  auto operator()(const std::string& stage, F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    auto finish = [&] {
      report_.timings_s.emplace_back(
          stage, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    };
    if constexpr (std::is_void_v<decltype(f())>) {
      f();
      finish();
    } else {
      auto result = f();
      finish();
      return result;
    }
  }

 private:
  RunReport& report_;
};

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

class Csv {
 public:
  explicit Csv(const std::string& header, const std::string& comment = {}) {
    if (!comment.empty()) text_ += "# " + comment + "\n";
    text_ += header + "\n";
  }
  void row(std::initializer_list<double> values) {
    bool first = true;
    for (double v : values) {
      if (!first) text_ += ',';
      text_ += num(v);
      first = false;
    }
    text_ += '\n';
  }
  const std::string& str() const { return text_; }

 private:
  std::string text_;
};

void add(RunReport& r, std::string name, double value, std::string requirement, bool pass,
         bool diagnostic = false) {
  r.checks.push_back({std::move(name), value, std::move(requirement), pass, diagnostic});
}

trap::SweepParameter sweep_parameter(const std::string& s) {
  if (s == "aperture_width" || s == "width") return trap::SweepParameter::aperture_width;
  if (s == "aperture_length" || s == "length") return trap::SweepParameter::aperture_length;
  throw UsageError("unknown sweep parameter '" + s + "' (aperture_width, aperture_length)");
}

design::CalibratedDesign nominal_design(const RunConfig& c) {
  return design::calibrate_design(c.trap.aperture_width, c.trap.aperture_length,
                                  c.collection.source_height_um,
                                  c.collection.substrate_thickness_um,
                                  c.collection.target_efficiency_pct / 100.0,
                                  c.collection.undercut_parameter);
}

json stack_json(const collection::ApertureStack& s) {
  json openings = json::array();
  for (const auto& o : s.openings)
    openings.push_back({{"depth_um", o.depth},
                        {"half_width_um", o.half_width},
                        {"half_length_um", o.half_length},
                        {"center_x_um", o.center_x},
                        {"center_z_um", o.center_z}});
  return {{"source_height_um", s.source_height}, {"openings", openings}};
}

json train_json(const config::RunConfig& c) {
  const auto& t = c.rays.train;
  return {{"objective_focal_mm", t.objective_focal_mm},
          {"objective_radius_mm", t.objective_radius_mm},
          {"focusing_focal_mm", t.focusing_focal_mm},
          {"focusing_radius_mm", t.focusing_radius_mm},
          {"relay_mm", t.relay_mm},
          {"detector_half_mm", t.detector_half_mm},
          {"metalens_radius_mm", t.metalens_radius_mm},
          {"n_rays", c.rays.n_rays},
          {"cone_half_angle_deg", c.rays.cone_half_angle_deg},
          {"seed", c.seed}};
}

// --------------------------------------------------------------- trap stage

std::string trap_csv(const std::vector<trap::TrapSweepPoint>& pts) {
  Csv csv("value_um,height_um,omega_x_MHz,omega_y_MHz,omega_y_norm");
  for (const auto& p : pts)
    csv.row({p.value, p.solution.height, p.solution.omega_x_mhz, p.solution.omega_y_mhz,
             p.omega_y_norm});
  return csv.str();
}

std::string collection_csv(const std::vector<design::CollectionSweepPoint>& pts) {
  Csv csv("value_um,height_um,efficiency_pct");
  for (const auto& p : pts) csv.row({p.value, p.height_um, 100.0 * p.efficiency});
  return csv.str();
}

std::vector<design::CollectionSweepPoint> collection_points(const RunConfig& c,
                                                            const design::CalibratedDesign& d,
                                                            trap::SweepParameter param,
                                                            std::span<const double> values) {
  return design::sweep_collection(c.trap, c.drive.rf_drive(), param, values, d.rule,
                                  c.collection.height_coupling, c.collection.source_height_um);
}

// ----------------------------------------------------------------- ray stage

std::string curve_csv(const rays::EfficiencyCurve& curve, const std::string& column,
                      const std::string& comment) {
  Csv csv(column + ",efficiency_pct,stderr_pct", comment);
  for (std::size_t i = 0; i < curve.displacement.size(); ++i)
    csv.row({curve.displacement[i], curve.efficiency_pct[i], curve.stderr_pct[i]});
  return csv.str();
}

rays::RaySource ray_source(const RunConfig& c) {
  rays::RaySource s;
  s.n_rays = c.rays.n_rays;
  s.seed = c.seed;
  s.cone_half_angle_deg = c.rays.cone_half_angle_deg;
  return s;
}

/// The objective setup images through the bare chip (interface losses only);
/// the integrated setup uses the configured end-to-end transmittance.
double setup_transmittance(const RunConfig& c, rays::Setup s) {
  return s == rays::Setup::objective ? optics::transmittance_budget(c.layers, 1.0).interfaces
                                     : c.rays.transmittance;
}

const config::Range& lateral_range(const RunConfig& c, rays::Setup s) {
  return s == rays::Setup::objective ? c.sweeps.lateral_objective : c.sweeps.lateral_integrated;
}

rays::EfficiencyCurve lateral(const RunConfig& c, const collection::ApertureStack& stack,
                              rays::Setup s, std::span<const double> d) {
  return rays::lateral_scan(s, c.rays.train, stack, c.layers, d, ray_source(c),
                            setup_transmittance(c, s));
}

rays::EfficiencyCurve axial(const RunConfig& c, const collection::ApertureStack& stack,
                            rays::Setup s, std::span<const double> d) {
  return rays::axial_scan(s, c.rays.train, stack, c.layers, d, ray_source(c),
                          setup_transmittance(c, s));
}

std::string ray_comment(const RunConfig& c, rays::Setup s) {
  json j = train_json(c);
  j["setup"] = rays::to_string(s);
  j["transmittance"] = setup_transmittance(c, s);
  return j.dump();
}

// ------------------------------------------------------------------ lens stage

metalens::PillarLibrary library_for(const RunConfig& c) {
  return c.lens.pillar_library.empty() ? metalens::PillarLibrary::synthetic_default()
                                       : metalens::PillarLibrary::load_csv(c.lens.pillar_library);
}

metalens::PhaseProfile profile_for(const RunConfig& c) {
  auto p = metalens::collimation_phase(c.layers, c.lens.diameter_um, c.lens.wavelength_nm,
                                       static_cast<std::size_t>(c.lens.radial_samples));
  p.even_coeffs = metalens::fit_even_powers(p, c.lens.fit_order).coeffs;
  return p;
}

struct PsfRun {
  optics::PsfResult result;
  double max_power_error = 0;
};

PsfRun simulate(const RunConfig& c, const metalens::PhaseProfile& profile,
                const metalens::FeatureMap* map, const metalens::PillarLibrary& lib,
                const collection::ApertureStack& stack, const optics::GridSpec& grid) {
  const auto mask = map ? optics::lens_mask_from(metalens::featuremap_phase(
                              *map, lib, grid.n, grid.spacing_um))
                        : optics::lens_mask_from(profile, grid);
  PsfRun run{optics::simulate_psf(mask, c.layers, stack, grid, c.lens.wavelength_nm), 0.0};
  for (const auto& s : run.result.steps)
    run.max_power_error = std::max(run.max_power_error, s.relative_power_error());
  return run;
}

std::string cut_csv(const optics::ComplexField2D& f, const optics::PsfMetrics& m, bool along_x,
                    double half_window) {
  const auto& g = f.grid();
  const auto nearest = [&](double coord) {
    const double i = std::round(coord / g.spacing_um + 0.5 * static_cast<double>(g.n) - 0.5);
    return static_cast<std::size_t>(std::clamp(i, 0.0, static_cast<double>(g.n - 1)));
  };
  const std::size_t ix = nearest(m.peak_x_um), iz = nearest(m.peak_z_um);
  const double peak = std::norm(f.at(ix, iz));
  Csv csv(along_x ? "x_um,intensity_norm" : "z_um,intensity_norm");
  for (std::size_t i = 0; i < g.n; ++i) {
    const double coord = g.coord(i);
    const double centre = along_x ? m.peak_x_um : m.peak_z_um;
    if (std::abs(coord - centre) > half_window) continue;
    const auto v = along_x ? f.at(i, iz) : f.at(ix, i);
    csv.row({coord, peak > 0 ? std::norm(v) / peak : 0.0});
  }
  return csv.str();
}

json metrics_json(const optics::PsfMetrics& m) {
  return {{"fwhm_x_um", m.fwhm_x_um},         {"fwhm_z_um", m.fwhm_z_um},
          {"peak_x_um", m.peak_x_um},         {"peak_z_um", m.peak_z_um},
          {"peak_y_um", m.peak_y_um},         {"encircled_fraction", m.encircled_fraction},
          {"asymmetry", m.asymmetry}};
}

double lookup(const std::vector<design::CollectionSweepPoint>& pts, double value) {
  for (const auto& p : pts)
    if (std::abs(p.value - value) <= 1e-9 * std::max(1.0, std::abs(value))) return p.efficiency;
  return std::numeric_limits<double>::quiet_NaN();
}

double rel_change(double a, double b) { return std::abs(a - b) / std::abs(b); }

// ---------------------------------------------------------------- targets

RunReport fig2(const RunConfig& c, OutputDir& out, bool width) {
  RunReport r;
  r.command = width ? "reproduce fig2c" : "reproduce fig2d";
  Stopwatch time(r);
  const auto param =
      width ? trap::SweepParameter::aperture_width : trap::SweepParameter::aperture_length;
  const auto values = (width ? c.sweeps.width : c.sweeps.length).values();
  const std::string stem = width ? "fig2c" : "fig2d";

  const auto trap_pts = time("trap_sweep", [&] {
    return trap::sweep_trap(c.trap, c.drive.rf_drive(), c.ion, param, values);
  });
  out.write_text(stem + "_trap.csv", trap_csv(trap_pts));
  const auto d = time("calibration", [&] { return nominal_design(c); });
  const auto pts = time("collection_sweep", [&] { return collection_points(c, d, param, values); });
  out.write_text(stem + "_collection.csv", collection_csv(pts));

  r.summary["calibrated_stack"] = stack_json(d.stack);
  r.summary["undercut_rule"] = {{"width_fraction", d.rule.width_fraction},
                                {"length_fraction", d.rule.length_fraction},
                                {"depth_um", d.rule.depth}};

  if (width) {
    bool decreasing = true;
    std::size_t counted = 0;
    const trap::TrapSweepPoint* prev = nullptr;
    for (const auto& p : trap_pts) {
      if (p.value < 20.0 - 1e-9 || p.value > 200.0 + 1e-9) continue;
      if (prev && !(p.omega_y_norm < prev->omega_y_norm)) decreasing = false;
      prev = &p;
      ++counted;
    }
    add(r, "omega_y_norm_strictly_decreasing_w20_200", static_cast<double>(counted),
        "strictly decreasing over the sampled widths in [20, 200] um", decreasing && counted >= 2);

    const auto best = std::max_element(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
      return a.efficiency < b.efficiency;
    });
    const bool interior = best != pts.begin() && std::next(best) != pts.end();
    r.summary["max_efficiency_pct"] = 100.0 * best->efficiency;
    r.summary["argmax_width_um"] = best->value;
    add(r, "collection_interior_maximum_width_um", best->value,
        "interior maximum in [80, 250] um",
        interior && best->value >= 80.0 && best->value <= 250.0);
  } else {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& p : trap_pts) {
      if (p.value < 50.0 - 1e-9 || p.value > 600.0 + 1e-9) continue;
      lo = std::min(lo, p.solution.omega_y_mhz);
      hi = std::max(hi, p.solution.omega_y_mhz);
    }
    const double variation = hi > 0 ? (hi - lo) / hi : std::numeric_limits<double>::quiet_NaN();
    add(r, "omega_y_variation_L50_600", variation, "< 0.05", variation < 0.05);

    bool increasing = pts.size() >= 2;
    for (std::size_t i = 1; i < pts.size(); ++i)
      if (!(pts[i].efficiency > pts[i - 1].efficiency)) increasing = false;
    add(r, "efficiency_monotone_increasing", static_cast<double>(pts.size()),
        "strictly increasing in L", increasing);

    const double nominal_L = c.trap.aperture_length;
    double eta_nom = lookup(pts, nominal_L);
    double eta_600 = lookup(pts, 600.0);
    if (std::isnan(eta_nom) || std::isnan(eta_600)) {
      const std::vector<double> extra{nominal_L, 600.0};
      const auto e = collection_points(c, d, param, extra);
      eta_nom = e[0].efficiency;
      eta_600 = e[1].efficiency;
    }
    const double target = c.collection.target_efficiency_pct;
    add(r, "efficiency_at_nominal_length_pct", 100.0 * eta_nom,
        "equals the calibration target " + num(target) + " within 1e-6 absolute",
        std::abs(eta_nom - target / 100.0) < 1e-6);
    const double ratio = eta_600 / eta_nom;
    add(r, "efficiency_ratio_L600_over_nominal", ratio, "in [2.0, 3.6]",
        ratio >= 2.0 && ratio <= 3.6);
    add(r, "efficiency_at_L600_pct", 100.0 * eta_600, "reference 3.17 (diagnostic)", true, true);
    r.summary["efficiency_L600_pct"] = 100.0 * eta_600;
    r.summary["ratio_L600"] = ratio;
  }
  return r;
}

RunReport fig3d(const RunConfig& c, OutputDir& out, std::string command) {
  RunReport r;
  r.command = std::move(command);
  Stopwatch time(r);
  const auto d = time("calibration", [&] { return nominal_design(c); });
  const auto lib = library_for(c);
  const auto profile = time("lens_design", [&] { return profile_for(c); });
  std::optional<metalens::FeatureMap> map;
  if (c.psf.use_featuremap)
    map = time("featuremap", [&] { return metalens::phase_to_featuremap(profile, lib); });
  const metalens::FeatureMap* mp = map ? &*map : nullptr;

  const auto grid = c.psf.grid();
  const auto run = time("propagation", [&] { return simulate(c, profile, mp, lib, d.stack, grid); });
  const auto& m = run.result.metrics;

  json metrics = metrics_json(m);
  metrics["grid"] = {{"n", grid.n}, {"spacing_um", grid.spacing_um}, {"guard", grid.guard}};
  metrics["max_relative_power_error"] = run.max_power_error;
  metrics["mask"] = mp ? "featuremap" : "continuous";

  const double half = c.psf.raster_half_window_um;
  out.write_text("psf_x.csv", cut_csv(run.result.focal, m, true, half));
  out.write_text("psf_z.csv", cut_csv(run.result.focal, m, false, half));
  optics::write_intensity_raster(out.claim("psf_focal.raster"), run.result.focal, half);

  add(r, "fwhm_z_um", m.fwhm_z_um, "0.92 +/- 15% (0.782 .. 1.058)",
      m.fwhm_z_um >= 0.92 * 0.85 && m.fwhm_z_um <= 0.92 * 1.15);
  add(r, "fwhm_x_over_fwhm_z", m.fwhm_x_um / m.fwhm_z_um, "> 1.2",
      m.fwhm_x_um / m.fwhm_z_um > 1.2);
  add(r, "max_relative_power_error", run.max_power_error, "<= 1e-6",
      run.max_power_error <= 1e-6);

  if (c.psf.convergence_check) {
    const optics::GridSpec coarse{grid.n / 2, 2.0 * grid.spacing_um, grid.guard / 2};
    const auto cr = time("propagation_coarse",
                         [&] { return simulate(c, profile, mp, lib, d.stack, coarse); });
    const double dx = rel_change(cr.result.metrics.fwhm_x_um, m.fwhm_x_um);
    const double dz = rel_change(cr.result.metrics.fwhm_z_um, m.fwhm_z_um);
    metrics["coarse_grid"] = metrics_json(cr.result.metrics);
    add(r, "grid_doubling_change_fwhm_x", dx, "< 0.02", dx < 0.02);
    add(r, "grid_doubling_change_fwhm_z", dz, "< 0.02", dz < 0.02);
  }
  out.write_text("psf_metrics.json", metrics.dump(2) + "\n");
  r.summary = metrics;
  return r;
}

RunReport fig4(const RunConfig& c, OutputDir& out, bool lateral_target, std::string command) {
  RunReport r;
  r.command = std::move(command);
  Stopwatch time(r);
  const auto d = time("calibration", [&] { return nominal_design(c); });
  const std::string stem = lateral_target ? "fig4c" : "fig4d";

  rays::EfficiencyCurve curves[2];
  const rays::Setup setups[2] = {rays::Setup::objective, rays::Setup::integrated};
  for (int k = 0; k < 2; ++k) {
    const auto s = setups[k];
    const auto name = rays::to_string(s);
    if (lateral_target) {
      const auto dv = lateral_range(c, s).values();
      curves[k] = time("lateral_" + name, [&] { return lateral(c, d.stack, s, dv); });
      out.write_text(stem + "_" + name + ".csv", curve_csv(curves[k], "d_mm", ray_comment(c, s)));
    } else {
      const auto dv = c.sweeps.axial.values();
      curves[k] = time("axial_" + name, [&] { return axial(c, d.stack, s, dv); });
      out.write_text(stem + "_" + name + ".csv",
                     curve_csv(curves[k], "dprime_um", ray_comment(c, s)));
    }
  }
  const auto& obj = curves[0];
  const auto& integ = curves[1];

  if (lateral_target) {
    const double k_obj = rays::falloff_displacement(obj, 0.9);
    const double k_int = rays::falloff_displacement(integ, 0.9);
    r.summary["objective_falloff_mm"] = std::isfinite(k_obj) ? json(k_obj) : json(nullptr);
    r.summary["integrated_falloff_mm"] = std::isfinite(k_int) ? json(k_int) : json(nullptr);
    r.summary["objective_max_pct"] = obj.max_efficiency();
    r.summary["integrated_max_pct"] = integ.max_efficiency();
    add(r, "objective_falloff_mm", k_obj, "0.86 +/- 0.15", std::abs(k_obj - 0.86) <= 0.15);

    bool retained = true;
    const double floor = 0.9 * integ.max_efficiency();
    for (std::size_t i = 0; i < integ.displacement.size(); ++i)
      if (integ.displacement[i] <= 10.0 + 1e-9 && integ.efficiency_pct[i] < floor) retained = false;
    add(r, "integrated_retains_90pct_to_10mm", floor, ">= 0.9 max for all d <= 10 mm", retained);
    add(r, "integrated_falloff_mm", k_int, "12.63 +/- 1", std::abs(k_int - 12.63) <= 1.0);
    add(r, "falloff_ratio", k_int / k_obj, "> 10", k_int / k_obj > 10.0);

    for (int k = 0; k < 2; ++k) {
      const auto& cv = curves[k];
      const auto i = static_cast<std::size_t>(
          std::max_element(cv.efficiency_pct.begin(), cv.efficiency_pct.end()) -
          cv.efficiency_pct.begin());
      const double slack = 3.0 * std::hypot(cv.stderr_pct[0], cv.stderr_pct[i]);
      add(r, rays::to_string(setups[k]) + "_maximum_at_origin", cv.efficiency_pct[0],
          "within 3 stderr of the curve maximum",
          cv.efficiency_pct[i] - cv.efficiency_pct[0] <= slack, true);
    }
  } else {
    for (int k = 0; k < 2; ++k) {
      const auto& cv = curves[k];
      double worst = 0;  // largest |e(d) − e(−d)| in units of the combined stderr
      for (std::size_t i = 0; i < cv.displacement.size(); ++i)
        for (std::size_t j = 0; j < cv.displacement.size(); ++j) {
          if (std::abs(cv.displacement[i] + cv.displacement[j]) > 1e-9 ||
              cv.displacement[i] <= 0)
            continue;
          const double s = std::hypot(cv.stderr_pct[i], cv.stderr_pct[j]);
          const double diff = std::abs(cv.efficiency_pct[i] - cv.efficiency_pct[j]);
          worst = std::max(worst, s > 0 ? diff / s : (diff > 0 ? 1e300 : 0.0));
        }
      add(r, rays::to_string(setups[k]) + "_asymmetry_sigma", worst, "< 3", worst < 3.0);
    }
    // Shapes are compared after normalizing each curve to its own maximum, so
    // the different transmittances of the two trains do not decide the outcome.
    const double mo = obj.max_efficiency(), mi = integ.max_efficiency();
    double worst = -1e300;  // largest (integrated − objective) / stderr at |d′| ≥ 25
    for (std::size_t i = 0; i < integ.displacement.size(); ++i) {
      if (std::abs(integ.displacement[i]) < 25.0 - 1e-9) continue;
      const double s = std::hypot(integ.stderr_pct[i] / mi, obj.stderr_pct[i] / mo);
      worst = std::max(worst, (integ.efficiency_pct[i] / mi - obj.efficiency_pct[i] / mo) / s);
    }
    add(r, "integrated_minus_objective_sigma", worst,
        "normalized integrated <= normalized objective at |d'| >= 25 um (within 3 stderr)",
        worst <= 3.0);
  }
  return r;
}

RunReport budget(const RunConfig& c, OutputDir& out) {
  RunReport r;
  r.command = "reproduce budget";
  Stopwatch time(r);
  const auto d = time("calibration", [&] { return nominal_design(c); });
  const double t_lens = optics::calibrate_metalens_transmittance(c.layers, c.rays.transmittance);
  const auto b = optics::transmittance_budget(c.layers, t_lens);

  const auto train = rays::build_train(rays::Setup::integrated, c.rays.train, d.stack, c.layers);
  const auto traced = time("ray_trace", [&] {
    return rays::detection_efficiency(train, ray_source(c), b.total);
  });

  const auto lib = library_for(c);
  const auto profile = time("lens_design", [&] { return profile_for(c); });
  const auto map = time("featuremap", [&] { return metalens::phase_to_featuremap(profile, lib); });
  const double map_t = metalens::mean_power_transmittance(map, lib);

  const double product = d.efficiency * 100.0 * b.total;
  json j = {{"collection_efficiency_pct", 100.0 * d.efficiency},
            {"interface_transmittance", b.interfaces},
            {"metalens_transmittance", b.metalens},
            {"total_transmittance", b.total},
            {"predicted_detection_pct", traced.percent},
            {"predicted_detection_stderr_pct", traced.stderr_percent},
            {"collection_times_transmittance_pct", product},
            {"reference_measured_pct", 0.58},
            {"featuremap_power_transmittance", map_t},
            {"library", lib.synthetic ? "synthetic" : c.lens.pillar_library},
            {"rays", train_json(c)}};
  out.write_text("budget.json", j.dump(2) + "\n");
  r.summary = j;

  add(r, "predicted_detection_pct", traced.percent, "0.61 +/- 0.05",
      std::abs(traced.percent - 0.61) <= 0.05);
  add(r, "prediction_minus_measured_pp", traced.percent - 0.58, "|value| < 0.10",
      std::abs(traced.percent - 0.58) < 0.10);
  add(r, "featuremap_power_transmittance", map_t, "synthetic library (diagnostic)", true, true);
  return r;
}

}  // namespace

// -------------------------------------------------------------- subcommands

RunReport run_trap_solve(const RunConfig& c, OutputDir& out) {
  RunReport r;
  r.command = "trap-solve";
  Stopwatch time(r);
  const auto drive = c.drive.rf_drive();
  const auto sol = time("newton", [&] { return trap::radial_frequencies(c.trap, drive, c.ion); });
  const trap::ElectrodeField field(c.trap.rf_electrodes(drive.voltage));
  const auto grid = time("grid_oracle", [&] { return trap::grid_scan_null(field, sol.null_x); });
  const double dist = std::hypot(grid.x - sol.null_x, grid.height - sol.height);
  json j = {{"null_x_um", sol.null_x},
            {"height_um", sol.height},
            {"omega_x_MHz", sol.omega_x_mhz},
            {"omega_y_MHz", sol.omega_y_mhz},
            {"omega_y_over_omega_x", sol.omega_y_mhz / sol.omega_x_mhz},
            {"iterations", sol.iterations},
            {"gradient_ratio", sol.gradient_ratio},
            {"hessian_J_per_m2", sol.hessian},
            {"grid_oracle", {{"x_um", grid.x}, {"height_um", grid.height}, {"distance_um", dist}}}};
  out.write_text("trap_solution.json", j.dump(2) + "\n");
  r.summary = j;
  add(r, "newton_vs_grid_oracle_um", dist, "< 0.5", dist < 0.5);
  return r;
}

RunReport run_collection(const RunConfig& c, OutputDir& out) {
  RunReport r;
  r.command = "collection";
  Stopwatch time(r);
  const double w = c.trap.aperture_width, L = c.trap.aperture_length;
  const double h = c.collection.source_height_um;
  auto bare = collection::ApertureStack::aperture_only(w, L, h);
  bare.openings.push_back({c.collection.substrate_thickness_um, w / 2, L / 2, 0, 0});
  bare.substrate_thickness = c.collection.substrate_thickness_um;
  const auto d = time("calibration", [&] { return nominal_design(c); });

  json rows = json::array();
  auto entry = [&](const std::string& name, const collection::ApertureStack& s) {
    const auto det = collection::solid_angle_stack(s);
    const auto mc = time("mc_" + name, [&] {
      return collection::mc_collection(s, {}, c.collection.mc_samples, c.seed);
    });
    rows.push_back({{"name", name},
                    {"stack", stack_json(s)},
                    {"efficiency_pct", det.efficiency_pct()},
                    {"mc_efficiency_pct", mc.efficiency_pct()},
                    {"mc_stderr_pct", mc.std_error_pct()}});
  };
  entry("aperture_only", collection::ApertureStack::aperture_only(w, L, h));
  entry("no_undercut", bare);
  entry("calibrated_undercut", d.stack);
  json j = {{"onaxis_closed_form_pct", collection::solid_angle_onaxis(w, L, h).efficiency_pct()},
            {"stacks", rows}};
  out.write_text("collection.json", j.dump(2) + "\n");
  r.summary = j;
  return r;
}

RunReport run_calibrate(const RunConfig& c, OutputDir& out) {
  RunReport r;
  r.command = "calibrate-undercut";
  Stopwatch time(r);
  const auto d = time("calibration", [&] { return nominal_design(c); });
  json j = {{"target_pct", c.collection.target_efficiency_pct},
            {"achieved_pct", 100.0 * d.efficiency},
            {"parameter", config::to_string(c.collection.undercut_parameter)},
            {"stack", stack_json(d.stack)},
            {"rule",
             {{"width_fraction", d.rule.width_fraction},
              {"length_fraction", d.rule.length_fraction},
              {"depth_um", d.rule.depth}}}};
  out.write_text("calibration.json", j.dump(2) + "\n");
  r.summary = j;
  add(r, "calibration_error_pct", 100.0 * d.efficiency - c.collection.target_efficiency_pct,
      "|value| < 1e-4", std::abs(d.efficiency - c.collection.target_efficiency_pct / 100) < 1e-6);
  return r;
}

RunReport run_lens_design(const RunConfig& c, OutputDir& out) {
  RunReport r;
  r.command = "lens-design";
  Stopwatch time(r);
  auto profile = time("phase", [&] {
    return metalens::collimation_phase(c.layers, c.lens.diameter_um, c.lens.wavelength_nm,
                                       static_cast<std::size_t>(c.lens.radial_samples));
  });
  const auto fit = metalens::fit_even_powers(profile, c.lens.fit_order);
  profile.even_coeffs = fit.coeffs;

  Csv csv("r_um,phase_rad,fit_rad,residual_rad");
  for (std::size_t i = 0; i < profile.radius_um.size(); ++i) {
    const double fv = profile.polynomial_at(profile.radius_um[i]);
    csv.row({profile.radius_um[i], profile.phase_rad[i], fv, profile.phase_rad[i] - fv});
  }
  out.write_text("phase_profile.csv", csv.str());

  const auto lib = library_for(c);
  lib.save_csv(out.claim("pillar_library.csv"));
  json j = {{"wavelength_nm", c.lens.wavelength_nm},
            {"diameter_um", c.lens.diameter_um},
            {"fit_order", c.lens.fit_order},
            {"even_coeffs_rad_per_um2k", fit.coeffs},
            {"fit_max_residual_rad", fit.max_residual},
            {"library", lib.synthetic ? "synthetic" : c.lens.pillar_library},
            {"library_phase_span_rad", lib.phase_span()},
            {"library_phase_quantum_rad", lib.phase_quantum()}};
  if (c.lens.write_featuremap) {
    const auto map = time("featuremap", [&] { return metalens::phase_to_featuremap(profile, lib); });
    map.save_csv(out.claim("featuremap.csv"), lib);
    j["featuremap"] = {{"sites_per_side", map.n},
                       {"filled", map.filled()},
                       {"mean_abs_residual_rad", map.mean_abs_residual()},
                       {"mean_power_transmittance", metalens::mean_power_transmittance(map, lib)}};
  }
  out.write_text("lens_design.json", j.dump(2) + "\n");
  r.summary = j;
  return r;
}

RunReport run_psf(const RunConfig& c, OutputDir& out) { return fig3d(c, out, "psf"); }
RunReport run_scan_lateral(const RunConfig& c, OutputDir& out) {
  return fig4(c, out, true, "scan-lateral");
}
RunReport run_scan_axial(const RunConfig& c, OutputDir& out) {
  return fig4(c, out, false, "scan-axial");
}

const std::vector<std::string>& reproduce_targets() {
  static const std::vector<std::string> t{"fig2c", "fig2d", "fig3d", "fig4c", "fig4d", "budget"};
  return t;
}

RunReport reproduce(const RunConfig& c, const std::string& target, OutputDir& out) {
  if (target == "fig2c") return fig2(c, out, true);
  if (target == "fig2d") return fig2(c, out, false);
  if (target == "fig3d") return fig3d(c, out, "reproduce fig3d");
  if (target == "fig4c") return fig4(c, out, true, "reproduce fig4c");
  if (target == "fig4d") return fig4(c, out, false, "reproduce fig4d");
  if (target == "budget") return budget(c, out);
  throw UsageError("unknown reproduce target '" + target +
                   "' (fig2c, fig2d, fig3d, fig4c, fig4d, budget)");
}

RunReport run_sweep(const RunConfig& c, const SweepRequest& q, OutputDir& out) {
  if (!std::isfinite(q.range.start) || !std::isfinite(q.range.stop) ||
      !std::isfinite(q.range.step))
    throw UsageError("sweep range must be finite");
  if (q.range.start > q.range.stop) throw UsageError("sweep range start exceeds stop");
  if (!(q.range.step > 0)) throw UsageError("sweep step must be > 0");
  const auto values = q.range.values();
  if ((q.op == "trap" || q.op == "collection") && !(q.range.start > 0))
    throw UsageError("aperture dimensions must be > 0");
  if (q.op == "lateral" && q.range.start < 0)
    throw UsageError("lateral displacements must be >= 0");

  RunReport r;
  r.command = "sweep " + q.op + " " + q.param;
  Stopwatch time(r);
  std::string csv;
  if (q.op == "trap") {
    const auto param = sweep_parameter(q.param);
    csv = trap_csv(time("sweep", [&] {
      return trap::sweep_trap(c.trap, c.drive.rf_drive(), c.ion, param, values);
    }));
  } else if (q.op == "collection") {
    const auto param = sweep_parameter(q.param);
    const auto d = time("calibration", [&] { return nominal_design(c); });
    csv = collection_csv(time("sweep", [&] { return collection_points(c, d, param, values); }));
  } else if (q.op == "lateral" || q.op == "axial") {
    rays::Setup s;
    try {
      s = rays::setup_from_string(q.param);
    } catch (const Error&) {
      throw UsageError("unknown setup '" + q.param + "' (objective, integrated)");
    }
    const auto d = time("calibration", [&] { return nominal_design(c); });
    const bool lat = q.op == "lateral";
    const auto curve = time("sweep", [&] {
      return lat ? lateral(c, d.stack, s, values) : axial(c, d.stack, s, values);
    });
    csv = curve_csv(curve, lat ? "d_mm" : "dprime_um", ray_comment(c, s));
  } else {
    throw UsageError("unknown sweep op '" + q.op + "' (trap, collection, lateral, axial)");
  }
  out.write_text("sweep.csv", csv);
  r.summary = {{"op", q.op}, {"param", q.param}, {"rows", values.size()}};
  return r;
}

}  // namespace trapscope::app
