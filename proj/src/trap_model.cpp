#include "trapscope/trap_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "trapscope/parallel.hpp"

namespace trapscope::trap {

namespace {

constexpr double um = 1e-6;

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v))
    throw DomainError(std::string(name) + " must be positive and finite");
}

// One corner term of the rectangle solid-angle sum, with a = xi - x,
// b = zj - z. Returns atan(ab / (yR)) and its partial derivatives with
// respect to a, b and y.
struct CornerTerm {
  double value, d_a, d_b, d_y;
};

CornerTerm corner(double a, double b, double y) {
  const double a2y2 = a * a + y * y;
  const double b2y2 = b * b + y * y;
  const double r2 = a * a + b * b + y * y;
  const double r = std::sqrt(r2);
  return {std::atan(a * b / (y * r)), b * y / (r * a2y2), a * y / (r * b2y2),
          -a * b * (r2 + y * y) / (r * a2y2 * b2y2)};
}

template <class Fn>
void for_corners(const ElectrodeRect& rc, Point3 p, Fn&& fn) {
  const double xs[2] = {rc.x1, rc.x0};
  const double zs[2] = {rc.z1, rc.z0};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      fn(((i + j) % 2 == 0) ? 1.0 : -1.0, corner(xs[i] - p.x, zs[j] - p.z, p.y));
}

double rect_amplitude(const ElectrodeRect& rc) {
  return rc.role == ElectrodeRole::rf ? rc.amplitude : 0.0;
}

}  // namespace

void ElectrodeRect::validate() const {
  if (!(x0 < x1) || !(z0 < z1))
    throw DomainError("electrode rectangle must satisfy x0 < x1 and z0 < z1");
}

Vec3 rect_gradient_per_um(const ElectrodeRect& rc, Point3 p) {
  if (!(p.y > 0.0)) throw DomainError("field point must lie above the electrode plane");
  Vec3 g;
  for_corners(rc, p, [&](double s, const CornerTerm& t) {
    g.x -= s * t.d_a;
    g.z -= s * t.d_b;
    g.y += s * t.d_y;
  });
  const double k = rect_amplitude(rc) / two_pi;
  return {k * g.x, k * g.y, k * g.z};
}

PotentialSample rect_potential(const ElectrodeRect& rc, Point3 p) {
  if (!(p.y > 0.0)) throw DomainError("field point must lie above the electrode plane");
  double phi = 0;
  for_corners(rc, p, [&](double s, const CornerTerm& t) { phi += s * t.value; });
  const Vec3 g = rect_gradient_per_um(rc, p);
  return {rect_amplitude(rc) * phi / two_pi, {g.x / um, g.y / um, g.z / um}};
}

// ---------------------------------------------------------------------------

double TrapLayout::ground_width() const {
  return std::max(ground_baseline, aperture_width + 2.0 * ground_margin);
}

void TrapLayout::validate() const {
  require_positive(rf_width_left, "rf_width_left");
  require_positive(rf_width_right, "rf_width_right");
  require_positive(gap, "gap");
  require_positive(ground_baseline, "ground_baseline");
  require_positive(electrode_length, "electrode_length");
  if (!(ground_margin >= 0.0)) throw DomainError("ground_margin must be non-negative");
  if (!(aperture_width >= 0.0)) throw DomainError("aperture_width must be non-negative");
  if (!(aperture_length >= 0.0)) throw DomainError("aperture_length must be non-negative");
  if (aperture_width > 0.0 && aperture_length > electrode_length)
    throw DomainError("aperture_length exceeds electrode_length");
}

std::vector<ElectrodeRect> TrapLayout::rf_electrodes(double amplitude) const {
  validate();
  const double half_ground = 0.5 * ground_width() + 0.5 * gap;
  const double half_len = 0.5 * electrode_length;
  ElectrodeRect left{-half_ground - rf_width_left - gap, -half_ground,
                     -half_len, half_len, ElectrodeRole::rf, amplitude};
  ElectrodeRect right{half_ground, half_ground + rf_width_right + gap,
                      -half_len, half_len, ElectrodeRole::rf, amplitude};
  return {left, right};
}

TrapLayout TrapLayout::scaled(double s) const {
  TrapLayout out = *this;
  out.rf_width_left *= s;
  out.rf_width_right *= s;
  out.gap *= s;
  out.ground_baseline *= s;
  out.ground_margin *= s;
  out.aperture_width *= s;
  out.aperture_length *= s;
  out.electrode_length *= s;
  return out;
}

void RfDrive::validate() const {
  require_positive(voltage, "rf voltage");
  require_positive(omega, "rf angular frequency");
}

void IonSpecies::validate() const {
  require_positive(mass_amu, "ion mass");
  if (charge < 1) throw DomainError("ion charge must be >= 1");
}

// ---------------------------------------------------------------------------

ElectrodeField::ElectrodeField(std::vector<ElectrodeRect> rects)
    : rects_(std::move(rects)) {
  for (const auto& r : rects_) r.validate();
}

double ElectrodeField::potential(Point3 p) const {
  double phi = 0;
  for (const auto& r : rects_) phi += rect_potential(r, p).potential;
  return phi;
}

Vec3 ElectrodeField::gradient_per_um(Point3 p) const {
  Vec3 g;
  for (const auto& r : rects_) {
    const Vec3 gi = rect_gradient_per_um(r, p);
    g.x += gi.x;
    g.y += gi.y;
    g.z += gi.z;
  }
  return g;
}

Vec3 ElectrodeField::field(Point3 p) const {
  const Vec3 g = gradient_per_um(p);
  return {-g.x / um, -g.y / um, -g.z / um};
}

double ElectrodeField::field_sq(Point3 p) const { return gradient_per_um(p).norm_sq(); }

// ---------------------------------------------------------------------------

namespace {

struct Transverse {
  double gx, gy;  // ∂φ/∂x, ∂φ/∂y in V/µm at z = 0
};

Transverse transverse_gradient(const ElectrodeField& f, double x, double y) {
  const Vec3 g = f.gradient_per_um({x, y, 0.0});
  return {g.x, g.y};
}

// Central-difference Jacobian of the transverse gradient (the φ Hessian).
Matrix2 transverse_jacobian(const ElectrodeField& f, double x, double y, double h) {
  const Transverse xp = transverse_gradient(f, x + h, y);
  const Transverse xm = transverse_gradient(f, x - h, y);
  const Transverse yp = transverse_gradient(f, x, y + h);
  const Transverse ym = transverse_gradient(f, x, y - h);
  Matrix2 j{};
  j[0][0] = (xp.gx - xm.gx) / (2 * h);
  j[1][0] = (xp.gy - xm.gy) / (2 * h);
  j[0][1] = (yp.gx - ym.gx) / (2 * h);
  j[1][1] = (yp.gy - ym.gy) / (2 * h);
  return j;
}

// ∇|E|² = 2 Jᵀ g
double field_sq_gradient_norm(const Matrix2& j, Transverse g) {
  const double a = 2 * (j[0][0] * g.gx + j[1][0] * g.gy);
  const double b = 2 * (j[0][1] * g.gx + j[1][1] * g.gy);
  return std::hypot(a, b);
}

double initial_height_guess(const ElectrodeField& f, double x, double scale) {
  // The null is the lowest local minimum of |E|² on a vertical line; far
  // above the chip |E|² decays again, so the global scan minimum is not used.
  const int n = 2000;
  const double dy = 4.0 * scale / n;
  double prev = f.field_sq({x, dy, 0.0});
  double cur = f.field_sq({x, 2 * dy, 0.0});
  for (int i = 3; i <= n; ++i) {
    const double next = f.field_sq({x, i * dy, 0.0});
    if (cur < prev && cur <= next) return (i - 1) * dy;
    prev = cur;
    cur = next;
  }
  throw SolverError("no field minimum found above the electrode plane", x, 4.0 * scale);
}

}  // namespace

TrapSolution solve_rf_null(const TrapLayout& layout, const RfDrive& drive,
                           const NewtonOptions& opts) {
  drive.validate();
  const ElectrodeField field(layout.rf_electrodes(drive.voltage));
  const double scale = layout.ground_width() + layout.rf_width_left +
                       layout.rf_width_right + 2 * layout.gap;

  double x = 0.0;
  double y = initial_height_guess(field, x, scale);
  const double h = opts.fd_step;

  Transverse g = transverse_gradient(field, x, y);
  Matrix2 j = transverse_jacobian(field, x, y, h);
  const double g0 = field_sq_gradient_norm(j, g);
  double gnorm = g0;

  TrapSolution sol;
  int it = 0;
  for (; it < opts.max_iterations && gnorm > opts.tolerance * g0 && gnorm > 0.0; ++it) {
    const double det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    if (det == 0.0 || !std::isfinite(det))
      throw SolverError("singular Jacobian in rf-null search", x, y);
    double dx = -(j[1][1] * g.gx - j[0][1] * g.gy) / det;
    double dy = -(-j[1][0] * g.gx + j[0][0] * g.gy) / det;

    const double e_now = g.gx * g.gx + g.gy * g.gy;
    double step = 1.0;
    for (int k = 0; k < 30; ++k) {
      const double ny = y + step * dy;
      if (ny > 0.0) {
        const Transverse gn = transverse_gradient(field, x + step * dx, ny);
        if (gn.gx * gn.gx + gn.gy * gn.gy < e_now || k == 29) break;
      }
      step *= opts.damping;
    }
    x += step * dx;
    y += step * dy;
    if (!(y > 0.0) || !std::isfinite(x) || !std::isfinite(y))
      throw SolverError("rf-null iterate left the half-space", x, y);

    g = transverse_gradient(field, x, y);
    j = transverse_jacobian(field, x, y, h);
    gnorm = field_sq_gradient_norm(j, g);
  }
  if (gnorm > opts.tolerance * g0)
    throw SolverError("rf-null Newton iteration did not converge", x, y);

  sol.null_x = x;
  sol.height = y;
  sol.iterations = it;
  sol.gradient_ratio = g0 > 0 ? gnorm / g0 : 0.0;
  return sol;
}

TrapSolution radial_frequencies(const TrapLayout& layout, const RfDrive& drive,
                                const IonSpecies& ion) {
  ion.validate();
  TrapSolution sol = solve_rf_null(layout, drive);
  const ElectrodeField field(layout.rf_electrodes(drive.voltage));

  const double q = ion.charge * constants::elementary_charge;
  const double m = ion.mass_amu * constants::atomic_mass_unit;
  // Ψ in J from |E|² in (V/µm)²
  const double psi_scale = q * q * 1e12 / (4.0 * m * drive.omega * drive.omega);
  auto psi = [&](double x, double y) {
    return psi_scale * field.field_sq({x, y, 0.0});
  };

  const double h = 0.05;
  const double hm = h * um;
  const double x0 = sol.null_x, y0 = sol.height;
  const double f0 = psi(x0, y0);
  Matrix2 hess{};
  hess[0][0] = (psi(x0 + h, y0) - 2 * f0 + psi(x0 - h, y0)) / (hm * hm);
  hess[1][1] = (psi(x0, y0 + h) - 2 * f0 + psi(x0, y0 - h)) / (hm * hm);
  hess[0][1] = hess[1][0] = (psi(x0 + h, y0 + h) - psi(x0 + h, y0 - h) -
                             psi(x0 - h, y0 + h) + psi(x0 - h, y0 - h)) /
                            (4 * hm * hm);

  // symmetric 2x2 eigen-decomposition
  const double a = hess[0][0], b = hess[0][1], d = hess[1][1];
  const double mean = 0.5 * (a + d);
  const double rad = std::hypot(0.5 * (a - d), b);
  const double l1 = mean + rad, l2 = mean - rad;
  if (!(l2 > 0.0)) throw ConfinementError("no radial confinement: pseudopotential Hessian is not positive-definite");

  // eigenvector of l1 is (b, l1 - a) or (l1 - d, b)
  double vx = b, vy = l1 - a;
  if (std::hypot(vx, vy) < 1e-300) {
    vx = l1 - d;
    vy = b;
  }
  if (std::hypot(vx, vy) < 1e-300) {
    vx = a >= d ? 1.0 : 0.0;
    vy = a >= d ? 0.0 : 1.0;
  }
  const bool l1_is_x = std::abs(vx) >= std::abs(vy);
  const double lx = l1_is_x ? l1 : l2;
  const double ly = l1_is_x ? l2 : l1;

  auto to_mhz = [m](double lambda) { return std::sqrt(lambda / m) / two_pi / 1e6; };
  sol.omega_x_mhz = to_mhz(lx);
  sol.omega_y_mhz = to_mhz(ly);
  sol.hessian = hess;
  return sol;
}

GridMinimum grid_scan_null(const ElectrodeField& field, double center_x,
                           double half_window, double pitch, Exec exec) {
  if (!(pitch > 0.0) || !(half_window > 0.0))
    throw DomainError("grid scan requires positive pitch and window");
  const auto nx = static_cast<std::size_t>(std::llround(2 * half_window / pitch)) + 1;
  const auto ny = static_cast<std::size_t>(std::llround(2 * half_window / pitch));
  std::vector<GridMinimum> rows(ny);
  for_each_index(ny, exec, [&](std::size_t iy) {
    const double y = pitch * static_cast<double>(iy + 1);
    GridMinimum best{0, y, std::numeric_limits<double>::infinity()};
    for (std::size_t ix = 0; ix < nx; ++ix) {
      const double x = center_x - half_window + pitch * static_cast<double>(ix);
      const double e2 = field.field_sq({x, y, 0.0});
      if (e2 < best.field_sq) best = {x, y, e2};
    }
    rows[iy] = best;
  });
  GridMinimum best = rows.front();
  for (const auto& r : rows)
    if (r.field_sq < best.field_sq) best = r;
  return best;
}

std::string to_string(SweepParameter p) {
  return p == SweepParameter::aperture_width ? "aperture_width" : "aperture_length";
}

std::vector<TrapSweepPoint> sweep_trap(const TrapLayout& base, const RfDrive& drive,
                                       const IonSpecies& ion, SweepParameter parameter,
                                       std::span<const double> values, Exec exec) {
  for (std::size_t i = 1; i < values.size(); ++i)
    if (!(values[i] > values[i - 1]))
      throw DomainError("sweep values must be strictly increasing");

  TrapLayout reference = base;
  reference.aperture_width = 0.0;
  const double omega_ref = radial_frequencies(reference, drive, ion).omega_y_mhz;

  std::vector<TrapSweepPoint> out(values.size());
  for_each_index(values.size(), exec, [&](std::size_t i) {
    TrapLayout layout = base;
    if (parameter == SweepParameter::aperture_width)
      layout.aperture_width = values[i];
    else
      layout.aperture_length = values[i];
    try {
      TrapSweepPoint p;
      p.value = values[i];
      p.solution = radial_frequencies(layout, drive, ion);
      p.omega_y_norm = p.solution.omega_y_mhz / omega_ref;
      out[i] = p;
    } catch (const Error& e) {
      throw SweepError(values[i], e.what());
    }
  });
  return out;
}

}  // namespace trapscope::trap
