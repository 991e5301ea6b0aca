#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "trapscope/collection.hpp"

using namespace trapscope;
using namespace trapscope::collection;

namespace {

// Midpoint-rule integral of h / r³ over a w × L rectangle in the plane at
// distance h, offset by (cx, cz).
double plane_integral(double w, double L, double h, double cx = 0, double cz = 0,
                      int n = 1500) {
  double acc = 0;
  const double dx = w / n, dz = L / n;
  for (int i = 0; i < n; ++i) {
    const double x = cx - w / 2 + (i + 0.5) * dx;
    for (int j = 0; j < n; ++j) {
      const double z = cz - L / 2 + (j + 0.5) * dz;
      acc += h / std::pow(x * x + z * z + h * h, 1.5);
    }
  }
  return acc * dx * dz;
}

ApertureStack stacked(double w, double L, double h, double depth) {
  return ApertureStack::with_undercut(w, L, h, {depth, w / 2, L / 2, 0, 0}, depth);
}

ApertureStack nominal_undercut() {
  return ApertureStack::with_undercut(40, 100, 125, {275, 30.878, 176, 0, 0});
}

}  // namespace

TEST(SolidAngleOnAxis, MatchesDirectPlaneIntegration) {
  for (auto [w, L, h] : {std::tuple{40.0, 100.0, 125.0}, {10.0, 10.0, 1.0}, {300.0, 50.0, 80.0}}) {
    const double omega = solid_angle_onaxis(w, L, h).omega;
    EXPECT_NEAR(omega, plane_integral(w, L, h), 1e-5 * omega);
  }
}

TEST(SolidAngleOnAxis, LimitsAndErrors) {
  // A huge aperture approaches the hemisphere.
  EXPECT_NEAR(solid_angle_onaxis(1e9, 1e9, 1).efficiency, 0.5, 1e-8);
  EXPECT_THROW(solid_angle_onaxis(0, 1, 1), DomainError);
  EXPECT_THROW(solid_angle_onaxis(1, 1, -1), DomainError);
}

TEST(SolidAngleStack, NoUndercutStackIsLimitedByTheDeeperOpening) {
  const auto r = solid_angle_stack(stacked(40, 100, 125, 275));
  EXPECT_NEAR(r.efficiency_pct(), 0.197162, 1e-6);
  EXPECT_NEAR(r.omega, solid_angle_onaxis(40, 100, 400).omega, 1e-12);
  EXPECT_NEAR(r.efficiency_pct(), 0.20, 0.01);
}

TEST(SolidAngleStack, QuadratureMatchesClosedFormWindow) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> off(-40, 40);
  for (int k = 0; k < 20; ++k) {
    const SourceOffset s{off(gen), off(gen)};
    const auto st = nominal_undercut();
    const double closed = window_solid_angle_closed_form(angular_window(st, s));
    EXPECT_NEAR(solid_angle_stack(st, s).omega, closed, 1e-10);
  }
}

TEST(SolidAngleStack, OffsetWindowMatchesPlaneIntegration) {
  auto st = ApertureStack::aperture_only(60, 90, 100);
  st.openings[0].center_x = 25;
  st.openings[0].center_z = -10;
  EXPECT_NEAR(solid_angle_stack(st).omega, plane_integral(60, 90, 100, 25, -10), 1e-7);
}

TEST(SolidAngleStack, AgreesWithMonteCarloOnSeveralGeometries) {
  const std::vector<std::pair<ApertureStack, SourceOffset>> cases{
      {stacked(40, 100, 125, 275), {}},
      {nominal_undercut(), {}},
      {nominal_undercut(), {10, 0}},
      {nominal_undercut(), {-15, 30}},
      {ApertureStack::aperture_only(200, 200, 50), {60, -20}},
      {ApertureStack::with_undercut(80, 120, 90, {200, 120, 200, 30, 0}), {5, 5}},
  };
  for (const auto& [st, src] : cases) {
    const auto det = solid_angle_stack(st, src);
    const auto mc = mc_collection(st, src, 1'000'000, 99);
    EXPECT_LE(std::abs(det.efficiency - mc.efficiency), 3 * mc.std_error + 1e-12)
        << det.efficiency << " vs " << mc.efficiency;
  }
}

TEST(SolidAngleStack, EmptyWindowGivesZero) {
  auto st = ApertureStack::aperture_only(10, 10, 50);
  st.openings.push_back({100, 5, 5, 500, 0});
  EXPECT_EQ(solid_angle_stack(st).omega, 0.0);
}

TEST(Properties, TranslatingStackAndSourceTogetherIsInvariant) {
  const auto st = nominal_undercut();
  const double a = solid_angle_stack(st, {3, -4}).omega;
  const double b = solid_angle_stack(st.translated(17, 23), {20, 19}).omega;
  EXPECT_NEAR(a, b, 1e-12);
}

TEST(Properties, UniformScalingIsInvariant) {
  const auto st = nominal_undercut();
  EXPECT_NEAR(solid_angle_stack(st).omega, solid_angle_stack(st.scaled(3.7)).omega, 1e-12);
}

TEST(Properties, MirrorSymmetry) {
  const auto st = nominal_undercut();
  EXPECT_NEAR(solid_angle_stack(st, {12, 7}).omega, solid_angle_stack(st, {-12, -7}).omega,
              1e-12);
}

TEST(Properties, EnlargingAnOpeningNeverReducesCollection) {
  auto st = nominal_undercut();
  double prev = solid_angle_stack(st).omega;
  for (int k = 0; k < 10; ++k) {
    st.openings.back().half_width += 5;
    const double next = solid_angle_stack(st).omega;
    EXPECT_GE(next, prev - 1e-15);
    prev = next;
  }
}

TEST(Properties, AddingAnOpeningNeverIncreasesCollection) {
  auto st = ApertureStack::aperture_only(40, 100, 125);
  const double a = solid_angle_stack(st).omega;
  st.openings.push_back({275, 30, 150, 0, 0});
  EXPECT_LE(solid_angle_stack(st).omega, a);
}

TEST(Passes, AgreesWithAngularWindow) {
  const auto st = nominal_undercut();
  const SourceOffset src{4, -9};
  const auto w = angular_window(st, src);
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int k = 0; k < 10000; ++k) {
    const double a = u(gen), b = u(gen);
    const bool inside = a >= w.u0 && a <= w.u1 && b >= w.v0 && b <= w.v1;
    EXPECT_EQ(passes(st, src, a, b), inside);
  }
}

TEST(MonteCarlo, DeterministicAndIndependentOfExecution) {
  const auto st = nominal_undercut();
  const auto a = mc_collection(st, {}, 300'000, 5, Exec::serial);
  const auto b = mc_collection(st, {}, 300'000, 5, Exec::parallel);
  EXPECT_EQ(a.efficiency, b.efficiency);
  EXPECT_EQ(a.std_error, b.std_error);
  const auto c = mc_collection(st, {}, 300'000, 6);
  EXPECT_NE(a.efficiency, c.efficiency);
}

TEST(MonteCarlo, RejectsTooFewSamples) {
  EXPECT_THROW(mc_collection(nominal_undercut(), {}, 999), DomainError);
}

TEST(StackValidation, RejectsMalformedStacks) {
  ApertureStack st;
  EXPECT_THROW(st.validate(), DomainError);
  st = ApertureStack::aperture_only(10, 10, 10);
  st.openings.push_back({0, 5, 5, 0, 0});
  EXPECT_THROW(st.validate(), DomainError);
  st = ApertureStack::aperture_only(10, 10, -1);
  EXPECT_THROW(st.validate(), DomainError);
}

TEST(Calibration, ReachesTargetToTolerance) {
  // The fixed dimension of each template leaves the target reachable.
  const std::vector<std::pair<UndercutParameter, ApertureStack>> cases{
      {UndercutParameter::half_width, ApertureStack::with_undercut(40, 100, 125, {275, 20, 176, 0, 0})},
      {UndercutParameter::half_length, ApertureStack::with_undercut(40, 100, 125, {275, 40, 120, 0, 0})},
      {UndercutParameter::both_fixed_aspect,
       ApertureStack::with_undercut(40, 100, 125, {275, 20, 100, 0, 0})},
  };
  for (const auto& [p, tmpl] : cases) {
    const auto o = calibrate_undercut(tmpl, 0.0091, p);
    auto st = tmpl;
    st.openings.back() = o;
    EXPECT_NEAR(solid_angle_stack(st).efficiency, 0.0091, 1e-8);
  }
}

TEST(Calibration, TargetOutsideBracketReportsBracket) {
  const auto tmpl = ApertureStack::with_undercut(40, 100, 125, {275, 20, 50, 0, 0});
  try {
    calibrate_undercut(tmpl, 0.2, UndercutParameter::half_width);
    FAIL() << "expected CalibrationError";
  } catch (const CalibrationError& e) {
    EXPECT_LT(e.bracket_low, e.bracket_high);
    EXPECT_LT(e.bracket_high, 0.2);
  }
}

TEST(Calibration, NeedsAnUndercutOpening) {
  EXPECT_THROW(calibrate_undercut(ApertureStack::aperture_only(40, 100, 125), 0.005,
                                  UndercutParameter::half_width),
               DomainError);
}

TEST(UndercutRule, ReproducesTheCalibratedStack) {
  const auto st = nominal_undercut();
  const auto rule = UndercutRule::from_calibrated(st);
  const auto again = rule.stack_for(40, 100, 125);
  EXPECT_NEAR(again.openings.back().half_width, 30.878, 1e-12);
  EXPECT_NEAR(again.openings.back().half_length, 176, 1e-12);
  EXPECT_DOUBLE_EQ(again.openings.back().depth, 275);
}

TEST(UndercutRule, ScalesWithTheProjectedFootprint) {
  UndercutRule rule;
  rule.width_fraction = 0.5;
  rule.length_fraction = 1.1;
  const auto o = rule.undercut_for(80, 200, 100);
  EXPECT_NEAR(o.half_width, 0.5 * 40 * 375 / 100, 1e-12);
  EXPECT_NEAR(o.half_length, 1.1 * 100 * 375 / 100, 1e-12);
}
