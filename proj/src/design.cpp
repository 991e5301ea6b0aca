#include "trapscope/design.hpp"

#include "trapscope/parallel.hpp"

namespace trapscope::design {

std::string to_string(HeightCoupling c) {
  return c == HeightCoupling::anchored ? "anchored" : "absolute";
}

HeightCoupling coupling_from_string(const std::string& s) {
  if (s == "anchored") return HeightCoupling::anchored;
  if (s == "absolute") return HeightCoupling::absolute;
  throw DomainError("unknown height coupling '" + s + "' (expected anchored or absolute)");
}

CalibratedDesign calibrate_design(double w, double L, double h, double depth, double target,
                                  collection::UndercutParameter parameter, double tol) {
  using namespace collection;
  const RectOpening start{depth, projected_half_extent(0.5 * w, h, depth, unconstrained_factor),
                          projected_half_extent(0.5 * L, h, depth, unconstrained_factor), 0, 0};
  CalibratedDesign d;
  d.stack = ApertureStack::with_undercut(w, L, h, start, depth);
  d.stack.openings.back() = calibrate_undercut(d.stack, target, parameter, tol);
  d.rule = UndercutRule::from_calibrated(d.stack);
  d.efficiency = solid_angle_stack(d.stack).efficiency;
  return d;
}

std::vector<CollectionSweepPoint> sweep_collection(const trap::TrapLayout& nominal,
                                                   const trap::RfDrive& drive,
                                                   trap::SweepParameter parameter,
                                                   std::span<const double> values,
                                                   const collection::UndercutRule& rule,
                                                   HeightCoupling coupling,
                                                   double nominal_height_um, Exec exec) {
  for (std::size_t i = 1; i < values.size(); ++i)
    if (!(values[i] > values[i - 1]))
      throw DomainError("sweep values must be strictly increasing");
  if (!(nominal_height_um > 0.0)) throw DomainError("nominal emitter height must be positive");
  const double h_ref = trap::solve_rf_null(nominal, drive).height;

  std::vector<CollectionSweepPoint> out(values.size());
  for_each_index(values.size(), exec, [&](std::size_t i) {
    trap::TrapLayout layout = nominal;
    if (parameter == trap::SweepParameter::aperture_width)
      layout.aperture_width = values[i];
    else
      layout.aperture_length = values[i];
    try {
      CollectionSweepPoint p;
      p.value = values[i];
      p.model_height_um = trap::solve_rf_null(layout, drive).height;
      p.height_um = coupling == HeightCoupling::anchored
                        ? nominal_height_um * p.model_height_um / h_ref
                        : p.model_height_um;
      const auto stack =
          rule.stack_for(layout.aperture_width, layout.aperture_length, p.height_um);
      p.efficiency = collection::solid_angle_stack(stack).efficiency;
      out[i] = p;
    } catch (const Error& e) {
      throw trap::SweepError(values[i], e.what());
    }
  });
  return out;
}

}  // namespace trapscope::design
