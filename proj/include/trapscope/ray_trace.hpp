#pragma once

// Sequential Monte Carlo ray tracing of the two detection trains.
//
// The axis s (mm) points down from the emitter. The chip (aperture stack,
// substrate layers and, in the integrated setup, the metalens) moves
// laterally with the readout-zone displacement d; the free-space optics stay
// on the s axis.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "trapscope/collection.hpp"
#include "trapscope/common.hpp"
#include "trapscope/metalens.hpp"
#include "trapscope/rng.hpp"

namespace trapscope::rays {

enum class Setup { objective, integrated };
std::string to_string(Setup s);
Setup setup_from_string(const std::string& s);

struct ThinLens {
  double position_mm = 0;
  double focal_mm = 0;
  double radius_mm = 0;
  void validate() const;
};

struct Detector {
  double position_mm = 0;
  double half_size_mm = 0;  // square
};

/// Free-space prescription shared by both setups.
struct TrainParams {
  double objective_focal_mm = 10.0;
  double objective_radius_mm = 5.773502691896258;  // NA 0.5: tan(asin 0.5) f
  double focusing_focal_mm = 100.0;
  double focusing_radius_mm = 12.63;
  double relay_mm = 80.0;  // objective to focusing lens
  double detector_half_mm = 8.6;
  double metalens_radius_mm = 0.22;
  void validate() const;
  bool operator==(const TrainParams&) const = default;
};

struct OpticalTrain {
  Setup setup = Setup::integrated;
  collection::ApertureStack stack;   // µm, chip frame
  metalens::LayerStack layers;       // emitter to lens plane, µm
  double chip_offset_mm = 0;         // lateral displacement d along x
  bool has_metalens = false;
  ThinLens metalens;                 // position absolute, centred on the chip
  std::vector<ThinLens> lenses;      // fixed free-space lenses on the axis
  Detector detector;

  double chip_bottom_mm() const { return 1e-3 * layers.total_thickness(); }
  void validate() const;
};

/// Reduced optical distance from the emitter to the lens plane, Σ t/n, in mm.
double reduced_distance_mm(const metalens::LayerStack& layers);

/// Objective focal point at the apparent emitter; the focusing lens sits at
/// objective + relay in both setups; the detector in its focal plane.
OpticalTrain build_train(Setup setup, const TrainParams& params,
                         const collection::ApertureStack& stack,
                         const metalens::LayerStack& layers);

struct Ray {
  double x_um = 0, z_um = 0;  // emitter position in the chip frame
  double u = 0, v = 0;        // direction tangents dx/ds, dz/ds
};

struct TraceResult {
  bool detected = false;
  int element = 0;  // 1-based index of the blocking element; 0 when detected
  double x_mm = 0, z_mm = 0;  // position at the last surface reached
};

/// Element order: 1 aperture stack, then the metalens (if any), the lenses in
/// order and finally the detector.
TraceResult trace_ray(const OpticalTrain& train, const Ray& ray);

enum class Emission { isotropic, cone };

struct RaySource {
  double x_um = 0, y_um = 0, z_um = 0;  // y is ignored (height comes from the stack)
  Emission emission = Emission::isotropic;
  double cone_half_angle_deg = 10.98;
  std::uint64_t n_rays = 1'000'000;
  std::uint64_t seed = rng::default_seed;
  void validate() const;
};

struct Efficiency {
  double percent = 0;
  double stderr_percent = 0;
  std::uint64_t hits = 0;
  std::uint64_t launched = 0;
  double launch_fraction = 0;  // solid angle sampled / 4π
};

/// Half-angle (rad) of a downward cone containing every direction that can
/// clear the aperture stack for the given emitter offsets.
double bounding_cone(const collection::ApertureStack& stack,
                     std::span<const collection::SourceOffset> sources);

/// hits / n × (sampled solid angle / 4π) × T, in percent. Isotropic sources
/// are sampled inside `cone_half_angle_rad` (0 picks the bounding cone);
/// outside it no ray can clear the stack.
Efficiency detection_efficiency(const OpticalTrain& train, const RaySource& source,
                                double transmittance, double cone_half_angle_rad = 0.0,
                                Exec exec = Exec::parallel);

/// detected_fraction × 2π(1 − cos θ)/(4π), in percent.
double cone_to_isotropic(double detected_fraction, double half_angle_deg);

struct EfficiencyCurve {
  std::string unit;  // "mm" or "um"
  std::vector<double> displacement;
  std::vector<double> efficiency_pct;
  std::vector<double> stderr_pct;
  double max_efficiency() const;
};

/// Moves chip and emitter together by d (mm) along x. Every point reuses the
/// same seed, so neighbouring points share random numbers.
EfficiencyCurve lateral_scan(Setup setup, const TrainParams& params,
                             const collection::ApertureStack& stack,
                             const metalens::LayerStack& layers, std::span<const double> d_mm,
                             const RaySource& source, double transmittance,
                             Exec exec = Exec::parallel);

/// Moves only the emitter by d′ (µm) along z.
EfficiencyCurve axial_scan(Setup setup, const TrainParams& params,
                           const collection::ApertureStack& stack,
                           const metalens::LayerStack& layers, std::span<const double> dprime_um,
                           const RaySource& source, double transmittance,
                           Exec exec = Exec::parallel);

/// First displacement beyond the maximum where the curve falls below
/// `level` × max (linear interpolation); NaN if it never does.
double falloff_displacement(const EfficiencyCurve& curve, double level = 0.9);

/// Aperture acceptance half-angle stored for reference (not derived here).
inline constexpr double reference_acceptance_deg = 8.46;

}  // namespace trapscope::rays
