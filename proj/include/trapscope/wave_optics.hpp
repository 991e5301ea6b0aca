#pragma once

// Scalar angular-spectrum propagation on square, cell-centred grids and the
// point-spread-function pipeline for backside illumination of the device.

#include <complex>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "trapscope/collection.hpp"
#include "trapscope/common.hpp"
#include "trapscope/metalens.hpp"

namespace trapscope::optics {

using complex = std::complex<double>;

/// n × n samples at `spacing_um`; sample i sits at (i - n/2 + 1/2) * spacing.
/// `guard` samples at each edge are an absorbing band used between steps.
struct GridSpec {
  std::size_t n = 4096;
  double spacing_um = 0.125;
  std::size_t guard = 256;

  double coord(std::size_t i) const {
    return (static_cast<double>(i) - 0.5 * static_cast<double>(n) + 0.5) * spacing_um;
  }
  double extent_um() const { return static_cast<double>(n) * spacing_um; }
  void validate() const;
};

/// Row-major (z rows, x fastest) complex field in FFTW-aligned storage.
class ComplexField2D {
 public:
  explicit ComplexField2D(const GridSpec& grid);
  ComplexField2D(const ComplexField2D& other);
  ComplexField2D& operator=(const ComplexField2D& other);
  ComplexField2D(ComplexField2D&&) noexcept = default;
  ComplexField2D& operator=(ComplexField2D&&) noexcept = default;

  const GridSpec& grid() const { return grid_; }
  std::size_t n() const { return grid_.n; }
  complex* data() { return data_.get(); }
  const complex* data() const { return data_.get(); }
  complex& at(std::size_t ix, std::size_t iz) { return data_[iz * grid_.n + ix]; }
  const complex& at(std::size_t ix, std::size_t iz) const { return data_[iz * grid_.n + ix]; }

  /// Σ|E|² dx² (row sums added in row order, so the value does not depend
  /// on the thread count).
  double power() const;
  std::vector<double> intensity() const;

 private:
  struct Free {
    void operator()(complex* p) const;
  };
  GridSpec grid_;
  std::unique_ptr<complex[], Free> data_;
};

class PropagationError : public Error {
 public:
  using Error::Error;
};

struct PropagationStats {
  double propagating_power_in = 0;  // power carried by homogeneous waves
  double power_out = 0;
  double border_fraction = 0;       // power within 2 samples of the edge / total
  double relative_power_error() const {
    return propagating_power_in > 0
               ? std::abs(power_out - propagating_power_in) / propagating_power_in
               : 0.0;
  }
};

/// Exact transfer-function propagation over `distance_um` (may be negative)
/// in a medium of refractive index `index`. Evanescent components are
/// removed. Throws PropagationError when the result has more than 1e-3 of
/// its power within two samples of the grid edge.
PropagationStats angular_spectrum_propagate(ComplexField2D& field, double distance_um,
                                            double index, double wavelength_nm,
                                            Exec exec = Exec::parallel,
                                            bool check_aliasing = true);

/// Smoothly attenuates the outer `grid.guard` samples (sin² ramp).
void absorb_border(ComplexField2D& field, Exec exec = Exec::parallel);

/// Multiplies by a hard binary rectangular mask (1 inside the opening).
void apply_opening(ComplexField2D& field, const collection::RectOpening& opening,
                   Exec exec = Exec::parallel);

/// Full width at half maximum by linear interpolation of the crossings
/// nearest the global maximum.
double fwhm(std::span<const double> profile, double spacing_um);

/// FWHM of |cut|² after band-limited (zero-padded FFT) upsampling of the
/// complex cut by `factor`.
double fwhm_bandlimited(std::span<const complex> cut, double spacing_um,
                        std::size_t factor = 8);

struct PsfMetrics {
  double fwhm_x_um = 0;
  double fwhm_z_um = 0;
  double peak_x_um = 0, peak_z_um = 0, peak_y_um = 0;
  double encircled_fraction = 0;  // power inside the first minima rectangle
  double asymmetry = 0;           // largest mirror difference in x or z, / I_peak
};

/// Locates the peak, takes x and z cuts through it and measures them.
PsfMetrics measure_psf(const ComplexField2D& focal, double plane_height_um);

struct PsfResult {
  PsfMetrics metrics;
  ComplexField2D focal;
  std::vector<PropagationStats> steps;
};

/// Lens-plane transmission: wrapped phase and amplitude per grid sample.
struct LensMask {
  std::vector<double> phase_rad;
  std::vector<double> amplitude;
};

LensMask lens_mask_from(const metalens::SampledMask& m);
/// Continuous (unquantized) profile phase inside the lens radius.
LensMask lens_mask_from(const metalens::PhaseProfile& profile, const GridSpec& grid);
/// Ideal focusing lens of focal length f in vacuum: −k(√(r²+f²) − f).
LensMask ideal_lens_mask(const GridSpec& grid, double focal_um, double radius_um,
                         double wavelength_nm);

/// Unit plane wave through the lens mask, then upward through `layers`
/// (bottom to top) to the emitter plane, applying each opening of `stack`
/// at its depth. The top layer thickness is the emitter height.
PsfResult simulate_psf(const LensMask& lens, const metalens::LayerStack& layers,
                       const collection::ApertureStack& stack, const GridSpec& grid,
                       double wavelength_nm, Exec exec = Exec::parallel);

/// Power transmission 1 − ((n1 − n2)/(n1 + n2))² at normal incidence.
double fresnel_transmission(double n1, double n2);

struct Budget {
  double interfaces = 1;   // product of Fresnel factors across index steps
  double metalens = 1;     // mean |t|² of the lens
  double total = 1;
};

Budget transmittance_budget(const metalens::LayerStack& layers, double metalens_power);

/// Metalens power transmittance that makes the total equal `target`.
double calibrate_metalens_transmittance(const metalens::LayerStack& layers, double target);

/// Intensity in a centred window of half-width `half_window_um`, as a
/// little-endian raster: "TSRASTER", uint32 nx, uint32 nz, float64 spacing,
/// float64 x0, float64 z0, then nx*nz float64 values (x fastest).
void write_intensity_raster(const std::filesystem::path& path, const ComplexField2D& field,
                            double half_window_um);

}  // namespace trapscope::optics
