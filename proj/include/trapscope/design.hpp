#pragma once

// Couples the electrostatic model to the collection geometry: the emitter
// height at each swept aperture comes from the trap solution.

#include <span>
#include <string>
#include <vector>

#include "trapscope/collection.hpp"
#include "trapscope/trap_model.hpp"

namespace trapscope::design {

/// `anchored` rescales model heights so the nominal layout sits at the
/// nominal emitter height; `absolute` uses the model height directly.
enum class HeightCoupling { anchored, absolute };
std::string to_string(HeightCoupling c);
HeightCoupling coupling_from_string(const std::string& s);

struct CalibratedDesign {
  collection::ApertureStack stack;  // nominal aperture plus calibrated undercut
  collection::UndercutRule rule;
  double efficiency = 0;            // achieved, fraction
};

/// Calibrates the undercut of the nominal w × L aperture (emitter at h,
/// undercut at `depth`) to `target` and derives the scaling rule.
CalibratedDesign calibrate_design(double w, double L, double h, double depth, double target,
                                  collection::UndercutParameter parameter =
                                      collection::UndercutParameter::half_width,
                                  double tol = 1e-10);

struct CollectionSweepPoint {
  double value = 0;
  double height_um = 0;        // emitter height used for the optics
  double model_height_um = 0;  // rf-null height from the trap model
  double efficiency = 0;       // fraction
};

/// For each value: solve the trap, place the emitter per `coupling`, build
/// the stack from `rule` and integrate. Ordered by input.
std::vector<CollectionSweepPoint> sweep_collection(const trap::TrapLayout& nominal,
                                                   const trap::RfDrive& drive,
                                                   trap::SweepParameter parameter,
                                                   std::span<const double> values,
                                                   const collection::UndercutRule& rule,
                                                   HeightCoupling coupling,
                                                   double nominal_height_um,
                                                   Exec exec = Exec::parallel);

}  // namespace trapscope::design
