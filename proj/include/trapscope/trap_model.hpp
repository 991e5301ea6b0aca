#pragma once

// Gapless-plane model of a surface-electrode rf trap.
//
// Coordinates (all lengths in µm): x is lateral across the rails, y is the
// height above the electrode plane, z runs along the trap axis. Every
// electrode is a rectangle in the y = 0 plane held at a fixed potential; the
// rest of the plane is grounded. Gaps are collapsed by splitting each gap
// evenly between its two neighbours.

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "trapscope/common.hpp"

namespace trapscope::trap {

struct Point3 {
  double x = 0, y = 0, z = 0;
};

struct Vec3 {
  double x = 0, y = 0, z = 0;
  double norm_sq() const { return x * x + y * y + z * z; }
};

enum class ElectrodeRole { rf, ground };

struct ElectrodeRect {
  double x0 = 0, x1 = 0;
  double z0 = 0, z1 = 0;
  ElectrodeRole role = ElectrodeRole::rf;
  double amplitude = 0;  // V, only meaningful for rf electrodes

  void validate() const;
};

struct PotentialSample {
  double potential = 0;  // V
  Vec3 gradient;         // V/m
};

/// Closed-form potential of one rectangle held at `rect.amplitude` inside an
/// otherwise grounded plane. The point must lie strictly above the plane.
PotentialSample rect_potential(const ElectrodeRect& rect, Point3 p);

/// Gradient in V/µm; the hot path used by the field sums below.
Vec3 rect_gradient_per_um(const ElectrodeRect& rect, Point3 p);

struct TrapLayout {
  double rf_width_left = 65.0;
  double rf_width_right = 80.0;
  double gap = 20.0;
  double ground_baseline = 65.0;
  double ground_margin = 32.5;
  double aperture_width = 40.0;
  double aperture_length = 100.0;
  double electrode_length = 2000.0;

  /// max(ground_baseline, aperture_width + 2 * ground_margin)
  double ground_width() const;

  /// The two rf rails after gap collapse. The ground electrode (with its
  /// aperture, treated as grounded) contributes nothing to the rf potential.
  std::vector<ElectrodeRect> rf_electrodes(double amplitude) const;

  /// Uniformly scales every length.
  TrapLayout scaled(double s) const;

  void validate() const;
  bool operator==(const TrapLayout&) const = default;
};

struct RfDrive {
  double voltage = 50.0;                // V amplitude
  double omega = two_pi * 20.0e6;       // rad/s
  void validate() const;
  bool operator==(const RfDrive&) const = default;
};

struct IonSpecies {
  double mass_amu = 39.9626;  // 40Ca+
  int charge = 1;
  void validate() const;
  bool operator==(const IonSpecies&) const = default;
};

using Matrix2 = std::array<std::array<double, 2>, 2>;

struct TrapSolution {
  double null_x = 0;        // µm
  double height = 0;        // µm
  double omega_x_mhz = 0;   // secular frequency / 2π, MHz
  double omega_y_mhz = 0;
  Matrix2 hessian{};        // pseudopotential Hessian at the null, J/m²
  int iterations = 0;
  double gradient_ratio = 0;  // |∇|E|²| final / initial
};

class SolverError : public Error {
 public:
  SolverError(const std::string& what, double last_x, double last_y)
      : Error(what), last_x(last_x), last_y(last_y) {}
  double last_x, last_y;
};

class ConfinementError : public Error {
 public:
  using Error::Error;
};

/// A sweep point failed; carries the swept value and the original message.
class SweepError : public Error {
 public:
  SweepError(double value, const std::string& what)
      : Error("sweep value " + std::to_string(value) + ": " + what),
        value(value) {}
  double value;
};

/// Superposition of electrode rectangles.
class ElectrodeField {
 public:
  explicit ElectrodeField(std::vector<ElectrodeRect> rects);

  double potential(Point3 p) const;         // V
  Vec3 gradient_per_um(Point3 p) const;     // V/µm
  Vec3 field(Point3 p) const;               // E = -∇φ, V/m
  double field_sq(Point3 p) const;          // |E|², (V/µm)²

  std::span<const ElectrodeRect> rects() const { return rects_; }

 private:
  std::vector<ElectrodeRect> rects_;
};

struct NewtonOptions {
  int max_iterations = 60;
  double tolerance = 1e-10;   // on |∇|E|²| relative to the initial iterate
  double fd_step = 0.05;      // µm, central-difference step for the Jacobian
  double damping = 0.5;       // applied while a full step increases |E|
};

/// rf-null position in the transverse plane at the axial centre. Only
/// null_x, height, iterations and gradient_ratio are filled in.
TrapSolution solve_rf_null(const TrapLayout& layout, const RfDrive& drive,
                           const NewtonOptions& opts = {});

/// Solves the null, then diagonalises the radial pseudopotential Hessian
/// Ψ = q²|E|²/(4mΩ²) (central differences, 0.05 µm step).
TrapSolution radial_frequencies(const TrapLayout& layout, const RfDrive& drive,
                                const IonSpecies& ion);

struct GridMinimum {
  double x = 0, height = 0, field_sq = 0;
};

/// Brute-force minimiser of |E|² over the window
/// x ∈ [cx - half, cx + half], y ∈ (0, 2*half] at the given pitch.
/// Independent oracle for solve_rf_null.
GridMinimum grid_scan_null(const ElectrodeField& field, double center_x,
                           double half_window = 150.0, double pitch = 0.25,
                           Exec exec = Exec::parallel);

enum class SweepParameter { aperture_width, aperture_length };

struct TrapSweepPoint {
  double value = 0;
  TrapSolution solution;
  double omega_y_norm = 0;
};

/// One solution per value; ω_y normalised to the same layout without an
/// aperture (w = 0). Points are evaluated in parallel, returned in order.
std::vector<TrapSweepPoint> sweep_trap(const TrapLayout& base,
                                       const RfDrive& drive,
                                       const IonSpecies& ion,
                                       SweepParameter parameter,
                                       std::span<const double> values,
                                       Exec exec = Exec::parallel);

std::string to_string(SweepParameter p);

}  // namespace trapscope::trap
