#include "trapscope/wave_optics.hpp"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include <set>

#include "trapscope/parallel.hpp"

namespace trapscope::optics {

namespace {

// FFTW planning is not thread-safe; execution of an existing plan is.
std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}

class Plan {
 public:
  Plan(int rank, const int* dims, complex* data, int sign) {
    std::lock_guard lock(plan_mutex());
    auto* p = reinterpret_cast<fftw_complex*>(data);
    plan_ = fftw_plan_dft(rank, dims, p, p, sign, FFTW_ESTIMATE);
    if (!plan_) throw PropagationError("FFTW could not create a plan");
  }
  ~Plan() {
    std::lock_guard lock(plan_mutex());
    fftw_destroy_plan(plan_);
  }
  Plan(const Plan&) = delete;
  Plan& operator=(const Plan&) = delete;
  void execute() const { fftw_execute(plan_); }

 private:
  fftw_plan plan_ = nullptr;
};

// Row-order reduction of a per-row quantity.
template <class RowFn>
double sum_rows(std::size_t rows, Exec exec, RowFn&& fn) {
  std::vector<double> partial(rows, 0.0);
  for_each_index(rows, exec, [&](std::size_t r) { partial[r] = fn(r); });
  double total = 0;
  for (double v : partial) total += v;
  return total;
}

double freq(std::size_t j, std::size_t n, double spacing) {
  const auto s = static_cast<double>(j < (n + 1) / 2 ? static_cast<long long>(j)
                                                     : static_cast<long long>(j) -
                                                           static_cast<long long>(n));
  return s / (static_cast<double>(n) * spacing);
}

}  // namespace

void GridSpec::validate() const {
  if (n < 8) throw DomainError("grid needs at least 8 samples per side");
  if (!(spacing_um > 0.0)) throw DomainError("grid spacing must be positive");
  if (2 * guard >= n) throw DomainError("absorbing guard band covers the whole grid");
}

void ComplexField2D::Free::operator()(complex* p) const { fftw_free(p); }

ComplexField2D::ComplexField2D(const GridSpec& grid) : grid_(grid) {
  grid_.validate();
  auto* raw = fftw_alloc_complex(grid_.n * grid_.n);
  if (!raw) throw Error("out of memory allocating a field grid");
  data_.reset(reinterpret_cast<complex*>(raw));
  std::fill_n(data_.get(), grid_.n * grid_.n, complex{});
}

ComplexField2D::ComplexField2D(const ComplexField2D& other) : ComplexField2D(other.grid_) {
  std::copy_n(other.data(), grid_.n * grid_.n, data());
}

ComplexField2D& ComplexField2D::operator=(const ComplexField2D& other) {
  if (this != &other) *this = ComplexField2D(other);
  return *this;
}

double ComplexField2D::power() const {
  const std::size_t n = grid_.n;
  const double s = sum_rows(n, Exec::parallel, [&](std::size_t iz) {
    double acc = 0;
    for (std::size_t ix = 0; ix < n; ++ix) acc += std::norm(at(ix, iz));
    return acc;
  });
  return s * grid_.spacing_um * grid_.spacing_um;
}

std::vector<double> ComplexField2D::intensity() const {
  std::vector<double> out(grid_.n * grid_.n);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::norm(data_[i]);
  return out;
}

PropagationStats angular_spectrum_propagate(ComplexField2D& field, double distance_um,
                                            double index, double wavelength_nm, Exec exec,
                                            bool check_aliasing) {
  if (!(index >= 1.0)) throw DomainError("refractive index must be >= 1");
  if (!(wavelength_nm > 0.0)) throw DomainError("wavelength must be positive");
  const std::size_t n = field.n();
  const double dx = field.grid().spacing_um;
  const double k = two_pi * index / (wavelength_nm * 1e-3);
  const double norm = 1.0 / static_cast<double>(n * n);

  PropagationStats stats;
  const int dims[2] = {static_cast<int>(n), static_cast<int>(n)};
  {
    Plan fwd(2, dims, field.data(), FFTW_FORWARD);
    fwd.execute();
  }
  // Transfer function; spectral power before filtering is summed over the
  // homogeneous-wave disk only.
  const double spec_in = sum_rows(n, exec, [&](std::size_t jz) {
    const double kz = two_pi * freq(jz, n, dx);
    double acc = 0;
    for (std::size_t jx = 0; jx < n; ++jx) {
      const double kx = two_pi * freq(jx, n, dx);
      const double q = k * k - kx * kx - kz * kz;
      complex& c = field.at(jx, jz);
      if (q <= 0.0) {
        c = 0.0;
        continue;
      }
      acc += std::norm(c);
      if (distance_um != 0.0) c *= std::polar(1.0, std::sqrt(q) * distance_um);
    }
    return acc;
  });
  {
    Plan inv(2, dims, field.data(), FFTW_BACKWARD);
    inv.execute();
  }
  for_each_index(n, exec, [&](std::size_t iz) {
    complex* row = field.data() + iz * n;
    for (std::size_t ix = 0; ix < n; ++ix) row[ix] *= norm;
  });

  // Parseval: Σ|E|² = Σ|F|² / N²
  stats.propagating_power_in = spec_in * norm * dx * dx;
  stats.power_out = field.power();

  const double edge = sum_rows(n, exec, [&](std::size_t iz) {
    double acc = 0;
    const bool edge_row = iz < 2 || iz >= n - 2;
    for (std::size_t ix = 0; ix < n; ++ix)
      if (edge_row || ix < 2 || ix >= n - 2) acc += std::norm(field.at(ix, iz));
    return acc;
  }) * dx * dx;
  stats.border_fraction = stats.power_out > 0 ? edge / stats.power_out : 0.0;
  if (check_aliasing && stats.border_fraction > 1e-3)
    throw PropagationError("field reaches the grid edge (" +
                           std::to_string(stats.border_fraction) +
                           " of the power); enlarge the grid");
  return stats;
}

void absorb_border(ComplexField2D& field, Exec exec) {
  const std::size_t n = field.n();
  const std::size_t g = field.grid().guard;
  if (g == 0) return;
  std::vector<double> ramp(n, 1.0);
  for (std::size_t i = 0; i < g; ++i) {
    const double s = std::sin(0.5 * pi * (static_cast<double>(i) + 0.5) / static_cast<double>(g));
    ramp[i] = ramp[n - 1 - i] = s * s;
  }
  for_each_index(n, exec, [&](std::size_t iz) {
    for (std::size_t ix = 0; ix < n; ++ix) field.at(ix, iz) *= ramp[ix] * ramp[iz];
  });
}

void apply_opening(ComplexField2D& field, const collection::RectOpening& o, Exec exec) {
  const auto& g = field.grid();
  for_each_index(g.n, exec, [&](std::size_t iz) {
    const bool z_in = std::abs(g.coord(iz) - o.center_z) <= o.half_length;
    for (std::size_t ix = 0; ix < g.n; ++ix)
      if (!z_in || std::abs(g.coord(ix) - o.center_x) > o.half_width) field.at(ix, iz) = 0.0;
  });
}

double fwhm(std::span<const double> p, double spacing_um) {
  if (p.size() < 3) throw MeasurementError("profile too short for a FWHM");
  const auto m = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
  if (m == 0 || m == p.size() - 1) throw MeasurementError("profile maximum lies on an endpoint");
  const double half = 0.5 * p[m];
  if (!(half > 0.0)) throw MeasurementError("profile has no positive maximum");

  std::size_t i = m;
  while (i > 0 && p[i - 1] >= half) --i;
  if (i == 0) throw MeasurementError("no half-maximum crossing left of the peak");
  const double left = static_cast<double>(i - 1) + (half - p[i - 1]) / (p[i] - p[i - 1]);

  std::size_t j = m;
  while (j + 1 < p.size() && p[j + 1] >= half) ++j;
  if (j + 1 == p.size()) throw MeasurementError("no half-maximum crossing right of the peak");
  const double right = static_cast<double>(j) + (p[j] - half) / (p[j] - p[j + 1]);
  return (right - left) * spacing_um;
}

double fwhm_bandlimited(std::span<const complex> cut, double spacing_um, std::size_t factor) {
  const std::size_t n = cut.size();
  if (n < 3 || factor < 1) throw MeasurementError("invalid cut for band-limited FWHM");
  const std::size_t m = n * factor;
  auto* raw = fftw_alloc_complex(m);
  std::unique_ptr<complex[], void (*)(complex*)> buf(reinterpret_cast<complex*>(raw),
                                                     [](complex* q) { fftw_free(q); });
  std::vector<complex> spec(cut.begin(), cut.end());
  std::fill_n(buf.get(), m, complex{});
  std::copy(spec.begin(), spec.end(), buf.get());
  const int dn = static_cast<int>(n), dm = static_cast<int>(m);
  {
    Plan fwd(1, &dn, buf.get(), FFTW_FORWARD);
    fwd.execute();
  }
  std::copy_n(buf.get(), n, spec.begin());
  std::fill_n(buf.get(), m, complex{});
  const std::size_t pos = (n + 1) / 2;  // non-negative frequencies
  for (std::size_t j = 0; j < pos; ++j) buf[j] = spec[j];
  for (std::size_t j = pos; j < n; ++j) buf[m - n + j] = spec[j];
  {
    Plan inv(1, &dm, buf.get(), FFTW_BACKWARD);
    inv.execute();
  }
  std::vector<double> intensity(m);
  for (std::size_t i = 0; i < m; ++i) intensity[i] = std::norm(buf[i]);
  return fwhm(intensity, spacing_um / static_cast<double>(factor));
}

namespace {

std::size_t walk_to_minimum(const std::vector<double>& p, std::size_t from, int dir) {
  std::size_t i = from;
  while (true) {
    const long long next = static_cast<long long>(i) + dir;
    if (next < 0 || next >= static_cast<long long>(p.size())) return i;
    if (p[static_cast<std::size_t>(next)] > p[i]) return i;
    i = static_cast<std::size_t>(next);
  }
}

}  // namespace

PsfMetrics measure_psf(const ComplexField2D& focal, double plane_height_um) {
  const std::size_t n = focal.n();
  const auto& g = focal.grid();
  std::size_t px = 0, pz = 0;
  double peak = -1;
  for (std::size_t iz = 0; iz < n; ++iz)
    for (std::size_t ix = 0; ix < n; ++ix) {
      const double v = std::norm(focal.at(ix, iz));
      if (v > peak) {
        peak = v;
        px = ix;
        pz = iz;
      }
    }
  if (!(peak > 0.0)) throw MeasurementError("focal plane carries no power");
  if (px < g.guard || pz < g.guard || px >= n - g.guard || pz >= n - g.guard)
    throw MeasurementError("PSF peak lies in the absorbing border");

  std::vector<complex> cx(n), cz(n);
  std::vector<double> ix_int(n), iz_int(n);
  for (std::size_t i = 0; i < n; ++i) {
    cx[i] = focal.at(i, pz);
    cz[i] = focal.at(px, i);
    ix_int[i] = std::norm(cx[i]);
    iz_int[i] = std::norm(cz[i]);
  }
  PsfMetrics m;
  m.fwhm_x_um = fwhm_bandlimited(cx, g.spacing_um);
  m.fwhm_z_um = fwhm_bandlimited(cz, g.spacing_um);
  m.peak_x_um = g.coord(px);
  m.peak_z_um = g.coord(pz);
  m.peak_y_um = plane_height_um;

  const std::size_t x0 = walk_to_minimum(ix_int, px, -1), x1 = walk_to_minimum(ix_int, px, 1);
  const std::size_t z0 = walk_to_minimum(iz_int, pz, -1), z1 = walk_to_minimum(iz_int, pz, 1);
  double inside = 0, total = 0, asym = 0;
  for (std::size_t iz = 0; iz < n; ++iz)
    for (std::size_t ix = 0; ix < n; ++ix) {
      const double v = std::norm(focal.at(ix, iz));
      total += v;
      if (ix >= x0 && ix <= x1 && iz >= z0 && iz <= z1) inside += v;
      asym = std::max({asym, std::abs(v - std::norm(focal.at(n - 1 - ix, iz))),
                       std::abs(v - std::norm(focal.at(ix, n - 1 - iz)))});
    }
  m.encircled_fraction = inside / total;
  m.asymmetry = asym / peak;
  return m;
}

LensMask lens_mask_from(const metalens::SampledMask& s) {
  return {s.phase_rad, s.amplitude};
}

LensMask lens_mask_from(const metalens::PhaseProfile& profile, const GridSpec& grid) {
  grid.validate();
  LensMask m;
  m.phase_rad.assign(grid.n * grid.n, 0.0);
  m.amplitude.assign(grid.n * grid.n, 0.0);
  const double R = profile.lens_radius_um();
  for_each_index(grid.n, Exec::parallel, [&](std::size_t iz) {
    for (std::size_t ix = 0; ix < grid.n; ++ix) {
      const double r = std::hypot(grid.coord(ix), grid.coord(iz));
      if (r > R) continue;
      m.phase_rad[iz * grid.n + ix] = profile.sampled_at(r);
      m.amplitude[iz * grid.n + ix] = 1.0;
    }
  });
  return m;
}

LensMask ideal_lens_mask(const GridSpec& grid, double focal_um, double radius_um,
                         double wavelength_nm) {
  grid.validate();
  const double k = two_pi / (wavelength_nm * 1e-3);
  LensMask m;
  m.phase_rad.assign(grid.n * grid.n, 0.0);
  m.amplitude.assign(grid.n * grid.n, 0.0);
  for_each_index(grid.n, Exec::parallel, [&](std::size_t iz) {
    for (std::size_t ix = 0; ix < grid.n; ++ix) {
      const double r = std::hypot(grid.coord(ix), grid.coord(iz));
      if (r > radius_um) continue;
      m.phase_rad[iz * grid.n + ix] = -k * (std::hypot(r, focal_um) - focal_um);
      m.amplitude[iz * grid.n + ix] = 1.0;
    }
  });
  return m;
}

PsfResult simulate_psf(const LensMask& lens, const metalens::LayerStack& layers,
                       const collection::ApertureStack& stack, const GridSpec& grid,
                       double wavelength_nm, Exec exec) {
  layers.validate();
  stack.validate();
  grid.validate();
  const std::size_t cells = grid.n * grid.n;
  if (lens.phase_rad.size() != cells || lens.amplitude.size() != cells)
    throw DomainError("lens mask does not match the simulation grid");

  PsfResult out{{}, ComplexField2D(grid), {}};
  ComplexField2D& f = out.focal;
  for_each_index(grid.n, exec, [&](std::size_t iz) {
    for (std::size_t ix = 0; ix < grid.n; ++ix) {
      const std::size_t i = iz * grid.n + ix;
      f.data()[i] = std::polar(lens.amplitude[i], lens.phase_rad[i]);
    }
  });

  // Stops measured as distance below the emitter.
  const double total = layers.total_thickness();
  std::set<double, std::greater<>> stops{0.0, total};
  double acc = 0;
  for (const auto& l : layers.layers) stops.insert(acc += l.thickness);
  for (const auto& o : stack.openings) {
    const double pos = stack.source_height + o.depth;
    if (!(pos > 0.0) || pos > total + 1e-9)
      throw DomainError("opening lies outside the layer stack");
    stops.insert(pos);
  }
  auto index_at = [&](double mid) {
    double top = 0;
    for (const auto& l : layers.layers) {
      if (mid < top + l.thickness) return l.index;
      top += l.thickness;
    }
    return layers.layers.back().index;
  };

  std::vector<double> seq(stops.begin(), stops.end());
  for (std::size_t s = 0; s + 1 < seq.size(); ++s) {
    for (const auto& o : stack.openings)
      if (std::abs(stack.source_height + o.depth - seq[s]) < 1e-9) apply_opening(f, o, exec);
    const double d = seq[s] - seq[s + 1];
    out.steps.push_back(
        angular_spectrum_propagate(f, d, index_at(0.5 * (seq[s] + seq[s + 1])), wavelength_nm, exec));
    absorb_border(f, exec);
  }
  out.metrics = measure_psf(f, stack.source_height);
  return out;
}

double fresnel_transmission(double n1, double n2) {
  if (!(n1 >= 1.0) || !(n2 >= 1.0)) throw DomainError("indices must be >= 1");
  const double r = (n1 - n2) / (n1 + n2);
  return 1.0 - r * r;
}

Budget transmittance_budget(const metalens::LayerStack& layers, double metalens_power) {
  layers.validate();
  if (!(metalens_power >= 0.0 && metalens_power <= 1.0))
    throw DomainError("metalens transmittance must lie in [0, 1]");
  Budget b;
  for (std::size_t i = 1; i < layers.layers.size(); ++i)
    if (layers.layers[i].index != layers.layers[i - 1].index)
      b.interfaces *= fresnel_transmission(layers.layers[i - 1].index, layers.layers[i].index);
  b.metalens = metalens_power;
  b.total = b.interfaces * b.metalens;
  return b;
}

double calibrate_metalens_transmittance(const metalens::LayerStack& layers, double target) {
  const double t = target / transmittance_budget(layers, 1.0).interfaces;
  if (!(t >= 0.0 && t <= 1.0))
    throw DomainError("target transmittance exceeds what the interfaces allow");
  return t;
}

namespace {

template <class T>
void put(std::ofstream& out, T v) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(bytes, sizeof(T));
}

}  // namespace

void write_intensity_raster(const std::filesystem::path& path, const ComplexField2D& field,
                            double half_window_um) {
  const auto& g = field.grid();
  std::size_t lo = g.n, hi = 0;
  for (std::size_t i = 0; i < g.n; ++i)
    if (std::abs(g.coord(i)) <= half_window_um) {
      lo = std::min(lo, i);
      hi = std::max(hi, i);
    }
  if (lo > hi) throw DomainError("raster window contains no samples");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write("TSRASTER", 8);
  const auto count = static_cast<std::uint32_t>(hi - lo + 1);
  put(out, count);
  put(out, count);
  put(out, g.spacing_um);
  put(out, g.coord(lo));
  put(out, g.coord(lo));
  for (std::size_t iz = lo; iz <= hi; ++iz)
    for (std::size_t ix = lo; ix <= hi; ++ix) put(out, std::norm(field.at(ix, iz)));
}

}  // namespace trapscope::optics
