#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <random>

#include "trapscope/trap_model.hpp"

using namespace trapscope;
using namespace trapscope::trap;

namespace {

// Potential of an infinitely long strip x0 < x < x1 held at V in a grounded plane.
double strip_potential(double v, double x0, double x1, double x, double y) {
  return v / pi * (std::atan((x1 - x) / y) - std::atan((x0 - x) / y));
}

// rf null of two infinite rf strips [e1, e2] and [e3, e4]: the complex field
// Σ ±1/(w − edge) vanishes, a quadratic in w = x + i y.
std::complex<double> strip_null(double e1, double e2, double e3, double e4) {
  const double a = e2 - e1, b = e4 - e3;
  const double qa = a + b;
  const double qb = -(a * (e3 + e4) + b * (e1 + e2));
  const double qc = a * e3 * e4 + b * e1 * e2;
  const std::complex<double> disc = std::sqrt(std::complex<double>(qb * qb - 4 * qa * qc));
  auto w = (-qb + disc) / (2 * qa);
  if (w.imag() < 0) w = (-qb - disc) / (2 * qa);
  return w;
}

TrapLayout long_layout() {
  TrapLayout l;
  l.electrode_length = 1e7;
  return l;
}

}  // namespace

TEST(RectPotential, LongRectangleMatchesInfiniteStrip) {
  const ElectrodeRect r{-30, 50, -5e6, 5e6, ElectrodeRole::rf, 10.0};
  for (double x : {-80.0, -10.0, 0.0, 25.0, 90.0})
    for (double y : {5.0, 60.0, 200.0})
      EXPECT_NEAR(rect_potential(r, {x, y, 0}).potential, strip_potential(10, -30, 50, x, y),
                  1e-6);
}

TEST(RectPotential, GradientMatchesFiniteDifferences) {
  const ElectrodeRect r{-40, 35, -60, 80, ElectrodeRole::rf, 3.0};
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> ux(-120, 120), uy(5, 150);
  const double h = 1e-3;
  for (int k = 0; k < 50; ++k) {
    const Point3 p{ux(gen), uy(gen), ux(gen)};
    const Vec3 g = rect_gradient_per_um(r, p);
    auto phi = [&](double dx, double dy, double dz) {
      return rect_potential(r, {p.x + dx, p.y + dy, p.z + dz}).potential;
    };
    EXPECT_NEAR(g.x, (phi(h, 0, 0) - phi(-h, 0, 0)) / (2 * h), 1e-7);
    EXPECT_NEAR(g.y, (phi(0, h, 0) - phi(0, -h, 0)) / (2 * h), 1e-7);
    EXPECT_NEAR(g.z, (phi(0, 0, h) - phi(0, 0, -h)) / (2 * h), 1e-7);
  }
}

TEST(RectPotential, PotentialIsHarmonic) {
  const ElectrodeRect r{-40, 35, -60, 80, ElectrodeRole::rf, 1.0};
  const double h = 0.5;
  for (Point3 p : {Point3{0, 40, 0}, Point3{50, 20, -30}, Point3{-70, 100, 90}}) {
    auto phi = [&](double dx, double dy, double dz) {
      return rect_potential(r, {p.x + dx, p.y + dy, p.z + dz}).potential;
    };
    const double c = phi(0, 0, 0);
    const double dxx = phi(h, 0, 0) + phi(-h, 0, 0) - 2 * c;
    const double dyy = phi(0, h, 0) + phi(0, -h, 0) - 2 * c;
    const double dzz = phi(0, 0, h) + phi(0, 0, -h) - 2 * c;
    // Cancellation to the finite-difference truncation level.
    EXPECT_LT(std::abs(dxx + dyy + dzz), 1e-3 * (std::abs(dxx) + std::abs(dyy) + std::abs(dzz)));
  }
}

TEST(RectPotential, GroundRectangleContributesNothing) {
  const ElectrodeRect r{-40, 35, -60, 80, ElectrodeRole::ground, 7.0};
  EXPECT_EQ(rect_potential(r, {0, 10, 0}).potential, 0.0);
}

TEST(RectPotential, RejectsPointsOnOrBelowThePlane) {
  const ElectrodeRect r{-1, 1, -1, 1, ElectrodeRole::rf, 1.0};
  EXPECT_THROW(rect_potential(r, {0, 0, 0}), DomainError);
  EXPECT_THROW(rect_gradient_per_um(r, {0, -1, 0}), DomainError);
}

TEST(TrapLayout, GroundWidthRule) {
  TrapLayout l;
  l.aperture_width = 0;
  EXPECT_DOUBLE_EQ(l.ground_width(), 65.0);
  l.aperture_width = 40;
  EXPECT_DOUBLE_EQ(l.ground_width(), 105.0);
  l.aperture_width = 200;
  EXPECT_DOUBLE_EQ(l.ground_width(), 265.0);
}

TEST(TrapLayout, ValidationRejectsBadGeometry) {
  TrapLayout l;
  l.gap = -1;
  EXPECT_THROW(l.validate(), DomainError);
  l = {};
  l.aperture_width = -5;
  EXPECT_THROW(l.validate(), DomainError);
  l = {};
  l.aperture_length = 3000;
  EXPECT_THROW(l.validate(), DomainError);
}

TEST(SolveRfNull, MatchesInfiniteStripClosedForm) {
  for (double w : {0.0, 40.0, 150.0}) {
    TrapLayout l = long_layout();
    l.aperture_width = w;
    const auto rf = l.rf_electrodes(1.0);
    const auto w0 = strip_null(rf[0].x0, rf[0].x1, rf[1].x0, rf[1].x1);
    const auto s = solve_rf_null(l, {});
    EXPECT_NEAR(s.null_x, w0.real(), 1e-5) << "w = " << w;
    EXPECT_NEAR(s.height, w0.imag(), 1e-5) << "w = " << w;
  }
}

TEST(SolveRfNull, ConvergesToRelativeGradientTolerance) {
  const auto s = solve_rf_null({}, {});
  EXPECT_LE(s.gradient_ratio, 1e-10);
  EXPECT_GT(s.iterations, 0);
  const ElectrodeField f(TrapLayout{}.rf_electrodes(50.0));
  EXPECT_LT(std::sqrt(f.field_sq({s.null_x, s.height, 0})), 1e-6);
}

TEST(SolveRfNull, HeightScalesWithLayout) {
  const auto a = solve_rf_null({}, {});
  const auto b = solve_rf_null(TrapLayout{}.scaled(2.0), {});
  EXPECT_NEAR(b.height, 2 * a.height, 1e-6 * a.height);
  EXPECT_NEAR(b.null_x, 2 * a.null_x, 1e-6 * std::abs(a.height));
}

TEST(SolveRfNull, NewtonAgreesWithGridOracle) {
  const TrapLayout l;
  const auto s = solve_rf_null(l, {});
  const ElectrodeField f(l.rf_electrodes(50.0));
  const auto g = grid_scan_null(f, s.null_x);
  EXPECT_LT(std::hypot(g.x - s.null_x, g.height - s.height), 0.5);
}

TEST(SolveRfNull, GridOracleIsIndependentOfExecution) {
  const ElectrodeField f(TrapLayout{}.rf_electrodes(50.0));
  const auto a = grid_scan_null(f, 0.0, 40.0, 0.5, Exec::serial);
  const auto b = grid_scan_null(f, 0.0, 40.0, 0.5, Exec::parallel);
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.height, b.height);
  EXPECT_EQ(a.field_sq, b.field_sq);
}

TEST(RadialFrequencies, MatchIndependentPseudopotentialCurvature) {
  const TrapLayout l;
  const RfDrive d;
  const IonSpecies ion;
  const auto s = radial_frequencies(l, d, ion);
  const ElectrodeField f(l.rf_electrodes(d.voltage));
  // Fourth-order finite differences of |E|² with a wider step.
  const double h = 0.2;
  auto e2 = [&](double dx, double dy) { return f.field_sq({s.null_x + dx, s.height + dy, 0}); };
  auto d2 = [&](double ax, double ay) {
    return (-e2(2 * h * ax, 2 * h * ay) + 16 * e2(h * ax, h * ay) - 30 * e2(0, 0) +
            16 * e2(-h * ax, -h * ay) - e2(-2 * h * ax, -2 * h * ay)) /
           (12 * h * h);
  };
  const double q = constants::elementary_charge;
  const double m = ion.mass_amu * constants::atomic_mass_unit;
  const double scale = q * q / (4 * m * d.omega * d.omega) * 1e12 / 1e-12;  // J/m²
  const double dxx = d2(1, 0) * scale, dyy = d2(0, 1) * scale;
  const double dxy = (e2(h, h) - e2(h, -h) - e2(-h, h) + e2(-h, -h)) / (4 * h * h) * scale;
  const double mean = 0.5 * (dxx + dyy), rad = std::hypot(0.5 * (dxx - dyy), dxy);
  const double w_hi = std::sqrt((mean + rad) / m) / two_pi / 1e6;
  const double w_lo = std::sqrt((mean - rad) / m) / two_pi / 1e6;
  EXPECT_NEAR(std::max(s.omega_x_mhz, s.omega_y_mhz), w_hi, 1e-4 * w_hi);
  EXPECT_NEAR(std::min(s.omega_x_mhz, s.omega_y_mhz), w_lo, 1e-4 * w_lo);
}

TEST(RadialFrequencies, ScaleExactlyWithVoltageAndInverseDriveFrequency) {
  const auto base = radial_frequencies({}, {}, {});
  const auto v2 = radial_frequencies({}, {100.0, two_pi * 20e6}, {});
  const auto f2 = radial_frequencies({}, {50.0, two_pi * 40e6}, {});
  EXPECT_NEAR(v2.omega_x_mhz / base.omega_x_mhz, 2.0, 2e-9);
  EXPECT_NEAR(v2.omega_y_mhz / base.omega_y_mhz, 2.0, 2e-9);
  EXPECT_NEAR(f2.omega_x_mhz / base.omega_x_mhz, 0.5, 1e-9);
  EXPECT_NEAR(f2.omega_y_mhz / base.omega_y_mhz, 0.5, 1e-9);
}

TEST(RadialFrequencies, RatioWithinModelBand) {
  const auto s = radial_frequencies({}, {}, {});
  const double ratio = s.omega_y_mhz / s.omega_x_mhz;
  EXPECT_GT(ratio, 1.124 * 0.85);
  EXPECT_LT(ratio, 1.124 * 1.15);
}

TEST(RadialFrequencies, HeavierIonIsSlower) {
  IonSpecies heavy;
  heavy.mass_amu *= 4;
  const auto a = radial_frequencies({}, {}, {});
  const auto b = radial_frequencies({}, {}, heavy);
  EXPECT_NEAR(b.omega_x_mhz / a.omega_x_mhz, 0.25, 1e-9);
}

TEST(RadialFrequencies, RejectsInvalidSpecies) {
  EXPECT_THROW(radial_frequencies({}, {}, {-1.0, 1}), DomainError);
  EXPECT_THROW(radial_frequencies({}, {}, {40.0, 0}), DomainError);
  EXPECT_THROW(radial_frequencies({}, {0.0, 1.0}, {}), DomainError);
}

TEST(SweepTrap, NormalizedFrequencyDecreasesWithWidth) {
  std::vector<double> w;
  for (double v = 20; v <= 200; v += 10) w.push_back(v);
  const auto pts = sweep_trap({}, {}, {}, SweepParameter::aperture_width, w);
  ASSERT_EQ(pts.size(), 19u);
  for (std::size_t i = 1; i < pts.size(); ++i)
    EXPECT_LT(pts[i].omega_y_norm, pts[i - 1].omega_y_norm) << pts[i].value;
}

TEST(SweepTrap, LengthHasNegligibleEffect) {
  const std::vector<double> L{50, 100, 300, 600};
  const auto pts = sweep_trap({}, {}, {}, SweepParameter::aperture_length, L);
  double lo = 1e300, hi = 0;
  for (const auto& p : pts) {
    lo = std::min(lo, p.solution.omega_y_mhz);
    hi = std::max(hi, p.solution.omega_y_mhz);
  }
  EXPECT_LT((hi - lo) / hi, 0.05);
}

TEST(SweepTrap, SerialAndParallelAreBitIdentical) {
  const std::vector<double> w{20, 60, 100, 140};
  const auto a = sweep_trap({}, {}, {}, SweepParameter::aperture_width, w, Exec::serial);
  const auto b = sweep_trap({}, {}, {}, SweepParameter::aperture_width, w, Exec::parallel);
  for (std::size_t i = 0; i < w.size(); ++i) {
    EXPECT_EQ(a[i].solution.height, b[i].solution.height);
    EXPECT_EQ(a[i].solution.omega_y_mhz, b[i].solution.omega_y_mhz);
    EXPECT_EQ(a[i].omega_y_norm, b[i].omega_y_norm);
  }
}

TEST(SweepTrap, RejectsUnorderedValues) {
  const std::vector<double> w{40, 30};
  EXPECT_THROW(sweep_trap({}, {}, {}, SweepParameter::aperture_width, w), DomainError);
}

TEST(SweepTrap, InvalidPointReportsItsValue) {
  const std::vector<double> L{100, 5000};
  try {
    sweep_trap({}, {}, {}, SweepParameter::aperture_length, L);
    FAIL() << "expected SweepError";
  } catch (const SweepError& e) {
    EXPECT_EQ(e.value, 5000);
  }
}
