#pragma once

// Solid-angle collection through a stack of rectangular openings.
//
// The emitter sits `source_height` µm above the electrode plane; openings are
// listed by depth below that plane. A direction is described by its tangents
// (u, v) = (dx/ds, dz/ds) where s is the distance travelled downward. Each
// opening maps to an axis-aligned rectangle in (u, v), so the accepted set of
// directions is the intersection of those rectangles.

#include <cstdint>
#include <span>
#include <vector>

#include "trapscope/common.hpp"
#include "trapscope/rng.hpp"

namespace trapscope::collection {

struct RectOpening {
  double depth = 0;        // µm below the electrode plane
  double half_width = 0;   // µm, along x
  double half_length = 0;  // µm, along z
  double center_x = 0;
  double center_z = 0;
};

struct ApertureStack {
  std::vector<RectOpening> openings;
  double source_height = 125.0;       // µm above the electrode plane
  double substrate_thickness = 275.0; // µm

  /// Electrode aperture of w x L at depth 0, optionally with an undercut
  /// opening at the substrate depth.
  static ApertureStack aperture_only(double w, double L, double h = 125.0);
  static ApertureStack with_undercut(double w, double L, double h,
                                     const RectOpening& undercut,
                                     double substrate_thickness = 275.0);

  const RectOpening& aperture() const { return openings.front(); }
  ApertureStack translated(double dx, double dz) const;
  ApertureStack scaled(double s) const;
  void validate() const;
};

struct SourceOffset {
  double x = 0;  // µm, relative to the electrode-aperture frame
  double z = 0;
};

struct SolidAngleResult {
  double omega = 0;       // sr
  double efficiency = 0;  // fraction of 4π
  double std_error = 0;   // Monte Carlo standard error, 0 for deterministic methods
  double efficiency_pct() const { return 100.0 * efficiency; }
  double std_error_pct() const { return 100.0 * std_error; }
};

struct AngularWindow {
  double u0 = 0, u1 = 0, v0 = 0, v1 = 0;
  bool empty() const { return !(u1 > u0) || !(v1 > v0); }
};

/// Closed-form solid angle of a w x L rectangle centred under a point at
/// distance h: 4 atan(t_x t_z / sqrt(1 + t_x² + t_z²)).
SolidAngleResult solid_angle_onaxis(double w, double L, double h);

/// Exact solid angle of a tangent-space rectangle (used by tests and the
/// calibration bracket; the primary route is the adaptive integrator).
double window_solid_angle_closed_form(const AngularWindow& w);

AngularWindow angular_window(const ApertureStack& stack, SourceOffset source);

/// True if a downward ray with tangents (u, v) clears every opening.
bool passes(const ApertureStack& stack, SourceOffset source, double u, double v);

/// Deterministic solid angle of the accepted window by nested adaptive
/// Gauss–Kronrod quadrature over (u, v) with absolute tolerance `tol` sr.
SolidAngleResult solid_angle_stack(const ApertureStack& stack,
                                   SourceOffset source = {}, double tol = 1e-8);

/// Monte Carlo oracle: uniform directions on the full sphere; a sample counts
/// if it passes every opening.
SolidAngleResult mc_collection(const ApertureStack& stack, SourceOffset source,
                               std::uint64_t n_samples,
                               std::uint64_t seed = rng::default_seed,
                               Exec exec = Exec::parallel);

enum class UndercutParameter { half_width, half_length, both_fixed_aspect };

class CalibrationError : public Error {
 public:
  CalibrationError(const std::string& what, double lo, double hi)
      : Error(what), bracket_low(lo), bracket_high(hi) {}
  double bracket_low, bracket_high;  // efficiencies (fractions) at the ends
};

/// Extent an opening at `depth` needs along one axis so it does not occlude
/// the cone defined by the electrode aperture, scaled by `factor`.
double projected_half_extent(double aperture_half, double source_height,
                             double depth, double factor = 1.0);

/// Undercut extents beyond this multiple of the projected footprint are
/// "unconstrained": they never clip the aperture cone.
inline constexpr double unconstrained_factor = 1.1;

/// Bisects the free parameter of the deepest opening of `tmpl` until the
/// stack efficiency matches `target` (fraction) to `tol`. The bracket runs
/// from the aperture's own footprint to the unconstrained extent.
RectOpening calibrate_undercut(const ApertureStack& tmpl, double target,
                               UndercutParameter parameter, double tol = 1e-10);

/// How the undercut follows the electrode aperture when w or L changes:
/// each half-extent is a fixed fraction of the aperture's projected footprint
/// at the undercut depth.
struct UndercutRule {
  double width_fraction = 1.0;
  double length_fraction = unconstrained_factor;
  double depth = 275.0;

  static UndercutRule from_calibrated(const ApertureStack& calibrated);
  RectOpening undercut_for(double w, double L, double h) const;
  ApertureStack stack_for(double w, double L, double h) const;
};

}  // namespace trapscope::collection
