#pragma once

// Collimating metalens design: exact Fermat phase through planar layers,
// an even-power radial fit, and compilation to a nanopillar lattice.

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "trapscope/common.hpp"

namespace trapscope::metalens {

struct Layer {
  double thickness = 0;  // µm
  double index = 1.0;
  bool operator==(const Layer&) const = default;
};

/// Nominal borosilicate index at 397 nm.
inline constexpr double nominal_glass_index = 1.5262;

/// Layers from the emitter (top) down to the lens plane (bottom).
struct LayerStack {
  std::vector<Layer> layers;

  /// 125 µm vacuum, 275 µm vacuum (hole through the substrate), 200 µm glass.
  static LayerStack nominal();
  double total_thickness() const;
  void validate() const;
  bool operator==(const LayerStack&) const = default;
};

struct PhaseProfile {
  double wavelength_nm = 397.0;
  double lens_diameter_um = 440.0;
  std::vector<double> radius_um;  // uniform, starting at 0
  std::vector<double> phase_rad;  // piston removed, phase(0) = 0
  std::vector<double> even_coeffs;  // c_k of r^(2k), k = 1..K, in rad/µm^(2k)

  double lens_radius_um() const { return 0.5 * lens_diameter_um; }
  /// Linear interpolation of the sampled phase; clamps beyond the last sample.
  double sampled_at(double r) const;
  /// Σ c_k r^(2k); requires even_coeffs.
  double polynomial_at(double r) const;
};

/// Optical path (µm) from the on-axis source to lens radius r, with the ray
/// obeying Snell's law at each interface. `crossing` receives the lateral
/// distance covered inside every layer when non-null.
double stationary_path(const LayerStack& stack, double r,
                       std::vector<double>* crossing = nullptr);

/// phase(r) = (2π/λ)(OPL(0) − OPL(r)) on `samples` uniform radii in
/// [0, lens_diameter/2].
PhaseProfile collimation_phase(const LayerStack& stack, double lens_diameter_um,
                               double wavelength_nm, std::size_t samples);

class FitError : public Error {
 public:
  using Error::Error;
};

struct EvenFit {
  std::vector<double> coeffs;  // rad/µm^(2k), k = 1..K
  double max_residual = 0;     // rad over the sampled aperture
};

/// Least-squares fit of the sampled phase to Σ_{k=1..K} c_k r^(2k).
EvenFit fit_even_powers(const PhaseProfile& profile, int order);

struct PillarEntry {
  double diameter_nm = 0;
  double phase_rad = 0;
  double transmittance = 1;  // amplitude
};

class LibraryError : public Error {
 public:
  using Error::Error;
};

struct PillarLibrary {
  double period_nm = 250.0;
  double height_nm = 700.0;
  std::vector<PillarEntry> entries;  // sorted by diameter
  bool synthetic = false;

  /// Synthetic smooth library: 60–240 nm diameters in 2 nm steps, phase
  /// spanning 2.2π, amplitude transmittance falling from 0.97 to 0.85.
  /// Not the output of an electromagnetic solver.
  static PillarLibrary synthetic_default();
  static PillarLibrary load_csv(const std::filesystem::path& path);
  void save_csv(const std::filesystem::path& path) const;

  double phase_span() const;
  /// Largest phase step between neighbouring diameters.
  double phase_quantum() const;
  /// Index of an entry with exactly this diameter; throws LibraryError.
  std::size_t find(double diameter_nm) const;
  /// Entry whose phase is circularly nearest to `phase`; ties go to the
  /// smaller diameter.
  std::size_t nearest(double phase) const;
  void validate() const;
};

/// Square lattice of pillar sites at the library period, centred on the
/// lens axis. Site (ix, iz) sits at ((ix - n/2 + 1/2) p, (iz - n/2 + 1/2) p).
/// Sites outside the lens aperture hold no pillar (index `empty`).
struct FeatureMap {
  static constexpr std::size_t empty = static_cast<std::size_t>(-1);

  double period_nm = 250.0;
  double lens_radius_um = 0;
  std::size_t n = 0;                    // sites per side
  std::vector<std::size_t> entry;       // library index per site, row-major in z
  std::vector<float> residual_rad;      // wrapped target − realized, per site

  double site_coord_um(std::size_t i) const;
  std::size_t at(std::size_t ix, std::size_t iz) const { return entry[iz * n + ix]; }
  std::size_t filled() const;
  double mean_abs_residual() const;

  /// CSV `ix,iz,x_nm,z_nm,diameter_nm`, filled sites only.
  void save_csv(const std::filesystem::path& path, const PillarLibrary& library) const;
};

FeatureMap phase_to_featuremap(const PhaseProfile& profile, const PillarLibrary& library,
                               Exec exec = Exec::parallel);

/// Wrapped phase and amplitude of the realized map sampled on a square,
/// cell-centred grid of `n` samples at `spacing_um` (nearest-site lookup).
struct SampledMask {
  std::size_t n = 0;
  double spacing_um = 0;
  std::vector<double> phase_rad;  // row-major in z
  std::vector<double> amplitude;  // 0 outside the lens
};

SampledMask featuremap_phase(const FeatureMap& map, const PillarLibrary& library,
                             std::size_t n, double spacing_um,
                             Exec exec = Exec::parallel);

/// Mean of |t|² over the filled sites.
double mean_power_transmittance(const FeatureMap& map, const PillarLibrary& library);

/// Wraps into [0, 2π).
double wrap_phase(double phase);

}  // namespace trapscope::metalens
