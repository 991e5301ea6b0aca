#include "trapscope/collection.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <limits>

#include "trapscope/parallel.hpp"

namespace trapscope::collection {

namespace {

constexpr double four_pi = 4.0 * pi;

SolidAngleResult from_omega(double omega) { return {omega, omega / four_pi, 0.0}; }

double primitive(double u, double v) {
  return std::atan(u * v / std::sqrt(1.0 + u * u + v * v));
}

}  // namespace

ApertureStack ApertureStack::aperture_only(double w, double L, double h) {
  ApertureStack s;
  s.openings.push_back({0.0, 0.5 * w, 0.5 * L, 0.0, 0.0});
  s.source_height = h;
  return s;
}

ApertureStack ApertureStack::with_undercut(double w, double L, double h,
                                           const RectOpening& undercut,
                                           double substrate_thickness) {
  ApertureStack s = aperture_only(w, L, h);
  s.substrate_thickness = substrate_thickness;
  s.openings.push_back(undercut);
  return s;
}

ApertureStack ApertureStack::translated(double dx, double dz) const {
  ApertureStack out = *this;
  for (auto& o : out.openings) {
    o.center_x += dx;
    o.center_z += dz;
  }
  return out;
}

ApertureStack ApertureStack::scaled(double s) const {
  ApertureStack out = *this;
  out.source_height *= s;
  out.substrate_thickness *= s;
  for (auto& o : out.openings) {
    o.depth *= s;
    o.half_width *= s;
    o.half_length *= s;
    o.center_x *= s;
    o.center_z *= s;
  }
  return out;
}

void ApertureStack::validate() const {
  if (!(source_height > 0.0)) throw DomainError("source height must be positive");
  if (openings.empty() || openings.front().depth != 0.0)
    throw DomainError("aperture stack needs an opening at depth 0");
  for (std::size_t i = 0; i < openings.size(); ++i) {
    const auto& o = openings[i];
    if (!(o.half_width >= 0.0) || !(o.half_length >= 0.0))
      throw DomainError("opening half-extents must be non-negative");
    if (i > 0 && !(o.depth > openings[i - 1].depth))
      throw DomainError("opening depths must be strictly increasing");
  }
}

SolidAngleResult solid_angle_onaxis(double w, double L, double h) {
  if (!(w > 0.0) || !(L > 0.0) || !(h > 0.0))
    throw DomainError("solid_angle_onaxis requires w, L, h > 0");
  const double tx = w / (2.0 * h);
  const double tz = L / (2.0 * h);
  return from_omega(4.0 * std::atan(tx * tz / std::sqrt(1.0 + tx * tx + tz * tz)));
}

double window_solid_angle_closed_form(const AngularWindow& w) {
  if (w.empty()) return 0.0;
  return primitive(w.u1, w.v1) - primitive(w.u0, w.v1) - primitive(w.u1, w.v0) +
         primitive(w.u0, w.v0);
}

AngularWindow angular_window(const ApertureStack& stack, SourceOffset src) {
  stack.validate();
  AngularWindow win{-std::numeric_limits<double>::infinity(),
                    std::numeric_limits<double>::infinity(),
                    -std::numeric_limits<double>::infinity(),
                    std::numeric_limits<double>::infinity()};
  for (const auto& o : stack.openings) {
    const double d = stack.source_height + o.depth;
    win.u0 = std::max(win.u0, (o.center_x - o.half_width - src.x) / d);
    win.u1 = std::min(win.u1, (o.center_x + o.half_width - src.x) / d);
    win.v0 = std::max(win.v0, (o.center_z - o.half_length - src.z) / d);
    win.v1 = std::min(win.v1, (o.center_z + o.half_length - src.z) / d);
  }
  return win;
}

bool passes(const ApertureStack& stack, SourceOffset src, double u, double v) {
  for (const auto& o : stack.openings) {
    const double d = stack.source_height + o.depth;
    if (std::abs(src.x + u * d - o.center_x) > o.half_width) return false;
    if (std::abs(src.z + v * d - o.center_z) > o.half_length) return false;
  }
  return true;
}

SolidAngleResult solid_angle_stack(const ApertureStack& stack, SourceOffset src,
                                   double tol) {
  const AngularWindow w = angular_window(stack, src);
  if (w.empty()) return {};

  using boost::math::quadrature::gauss_kronrod;
  // Relative tolerances chosen so the absolute error stays below tol even for
  // a full hemisphere (2π sr).
  const double rel = std::min(1e-6, tol / (4.0 * two_pi));
  auto inner = [&](double u) {
    const double c = 1.0 + u * u;
    auto f = [c](double v) { return std::pow(c + v * v, -1.5); };
    return gauss_kronrod<double, 15>::integrate(f, w.v0, w.v1, 20, rel * 1e-2);
  };
  const double omega = gauss_kronrod<double, 15>::integrate(inner, w.u0, w.u1, 20, rel);
  return from_omega(omega);
}

SolidAngleResult mc_collection(const ApertureStack& stack, SourceOffset src,
                               std::uint64_t n, std::uint64_t seed, Exec exec) {
  stack.validate();
  if (n < 1000) throw DomainError("mc_collection needs at least 1000 samples");
  const rng::CounterRng gen(seed);
  const std::uint64_t hits = count_in_blocks(n, 1u << 16, exec, [&](std::uint64_t b, std::uint64_t e) {
    std::uint64_t local = 0;
    for (std::uint64_t i = b; i < e; ++i) {
      const double c = 1.0 - 2.0 * gen.uniform(i, 0, 2);  // cosine to the downward axis
      if (c <= 0.0) continue;
      const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
      const double phi = two_pi * gen.uniform(i, 1, 2);
      if (passes(stack, src, s * std::cos(phi) / c, s * std::sin(phi) / c)) ++local;
    }
    return local;
  });
  const double p = static_cast<double>(hits) / static_cast<double>(n);
  return {four_pi * p, p, std::sqrt(p * (1.0 - p) / static_cast<double>(n))};
}

double projected_half_extent(double aperture_half, double h, double depth, double factor) {
  return factor * aperture_half * (h + depth) / h;
}

RectOpening calibrate_undercut(const ApertureStack& tmpl, double target,
                               UndercutParameter parameter, double tol) {
  tmpl.validate();
  if (tmpl.openings.size() < 2)
    throw DomainError("calibration template needs an undercut opening below the aperture");
  const RectOpening& ap = tmpl.aperture();
  const RectOpening base = tmpl.openings.back();
  const double h = tmpl.source_height;

  // Maps the free parameter t onto an undercut opening.
  double lo = 0, hi = 0;
  auto make = [&](double t) {
    RectOpening o = base;
    switch (parameter) {
      case UndercutParameter::half_width: o.half_width = t; break;
      case UndercutParameter::half_length: o.half_length = t; break;
      case UndercutParameter::both_fixed_aspect:
        o.half_width = t * ap.half_width;
        o.half_length = t * ap.half_length;
        break;
    }
    return o;
  };
  switch (parameter) {
    case UndercutParameter::half_width:
      lo = ap.half_width;
      hi = projected_half_extent(ap.half_width, h, base.depth, unconstrained_factor);
      break;
    case UndercutParameter::half_length:
      lo = ap.half_length;
      hi = projected_half_extent(ap.half_length, h, base.depth, unconstrained_factor);
      break;
    case UndercutParameter::both_fixed_aspect:
      lo = 1.0;
      hi = unconstrained_factor * (h + base.depth) / h;
      break;
  }

  auto efficiency = [&](double t) {
    ApertureStack s = tmpl;
    s.openings.back() = make(t);
    return solid_angle_stack(s).efficiency;
  };
  const double e_lo = efficiency(lo);
  const double e_hi = efficiency(hi);
  if (std::abs(target - e_lo) < tol) return make(lo);
  if (std::abs(target - e_hi) < tol) return make(hi);
  if (target < e_lo || target > e_hi)
    throw CalibrationError("target efficiency outside the achievable bracket [" +
                               std::to_string(100 * e_lo) + "%, " +
                               std::to_string(100 * e_hi) + "%]",
                           e_lo, e_hi);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double e = efficiency(mid);
    if (std::abs(e - target) < tol) return make(mid);
    (e < target ? lo : hi) = mid;
  }
  return make(0.5 * (lo + hi));
}

UndercutRule UndercutRule::from_calibrated(const ApertureStack& calibrated) {
  calibrated.validate();
  if (calibrated.openings.size() < 2) throw DomainError("stack has no undercut opening");
  const auto& ap = calibrated.aperture();
  const auto& uc = calibrated.openings.back();
  const double h = calibrated.source_height;
  UndercutRule r;
  r.depth = uc.depth;
  r.width_fraction = uc.half_width / projected_half_extent(ap.half_width, h, uc.depth);
  r.length_fraction = uc.half_length / projected_half_extent(ap.half_length, h, uc.depth);
  return r;
}

RectOpening UndercutRule::undercut_for(double w, double L, double h) const {
  return {depth, projected_half_extent(0.5 * w, h, depth, width_fraction),
          projected_half_extent(0.5 * L, h, depth, length_fraction), 0.0, 0.0};
}

ApertureStack UndercutRule::stack_for(double w, double L, double h) const {
  return ApertureStack::with_undercut(w, L, h, undercut_for(w, L, h), depth);
}

}  // namespace trapscope::collection
