#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "trapscope/wave_optics.hpp"

using namespace trapscope;
using namespace trapscope::optics;

namespace {

constexpr double lambda_nm = 397.0;

ComplexField2D gaussian(const GridSpec& g, double w0) {
  ComplexField2D f(g);
  for (std::size_t iz = 0; iz < g.n; ++iz)
    for (std::size_t ix = 0; ix < g.n; ++ix) {
      const double r2 = g.coord(ix) * g.coord(ix) + g.coord(iz) * g.coord(iz);
      f.at(ix, iz) = std::exp(-r2 / (w0 * w0));
    }
  return f;
}

}  // namespace

TEST(GridSpec, CellCentredCoordinates) {
  const GridSpec g{8, 0.5, 1};
  EXPECT_DOUBLE_EQ(g.coord(0), -1.75);
  EXPECT_DOUBLE_EQ(g.coord(7), 1.75);
  EXPECT_DOUBLE_EQ(g.extent_um(), 4.0);
  EXPECT_THROW((GridSpec{7, 0.5, 1}.validate()), DomainError);
  EXPECT_THROW((GridSpec{8, 0.0, 1}.validate()), DomainError);
}

TEST(AngularSpectrum, PlaneWaveComponentAcquiresExactPhase) {
  const GridSpec g{64, 0.1, 0};
  ComplexField2D f(g);
  const double fx = 5.0 / (64 * 0.1);  // an exact grid frequency
  for (std::size_t iz = 0; iz < g.n; ++iz)
    for (std::size_t ix = 0; ix < g.n; ++ix) f.at(ix, iz) = std::polar(1.0, two_pi * fx * g.coord(ix));
  const ComplexField2D before = f;
  const double d = 13.7, n = 1.5;
  angular_spectrum_propagate(f, d, n, lambda_nm, Exec::parallel, false);
  const double k = two_pi * n / 0.397;
  const double kz = std::sqrt(k * k - std::pow(two_pi * fx, 2));
  const complex phase = std::polar(1.0, kz * d);
  double err = 0;
  for (std::size_t i = 0; i < g.n * g.n; ++i)
    err = std::max(err, std::abs(f.data()[i] - before.data()[i] * phase));
  EXPECT_LT(err, 1e-11);
}

TEST(AngularSpectrum, EvanescentComponentsAreRemoved) {
  const GridSpec g{32, 0.1, 0};
  ComplexField2D f(g);
  const double fx = 12.0 / (32 * 0.1);  // 3.75 /µm, beyond 1/λ
  for (std::size_t iz = 0; iz < g.n; ++iz)
    for (std::size_t ix = 0; ix < g.n; ++ix) f.at(ix, iz) = std::polar(1.0, two_pi * fx * g.coord(ix));
  const auto s = angular_spectrum_propagate(f, 1.0, 1.0, lambda_nm, Exec::serial, false);
  EXPECT_LT(f.power(), 1e-20);
  EXPECT_LT(s.propagating_power_in, 1e-20);
}

TEST(AngularSpectrum, GaussianBeamFollowsItsWaist) {
  const GridSpec g{256, 0.25, 0};
  const double w0 = 5.0;
  auto f = gaussian(g, w0);
  const double p0 = std::norm(f.at(128, 128));
  const double zr = pi * w0 * w0 / 0.397;
  const double z = 150.0;
  angular_spectrum_propagate(f, z, 1.0, lambda_nm);
  // on-axis intensity of the paraxial beam falls as (w0 / w)²; the sampled
  // centre is a quarter pixel off axis.
  const double w = w0 * std::sqrt(1 + std::pow(z / zr, 2));
  const double r2 = 2 * std::pow(0.125, 2);
  const double expected = p0 * std::pow(w0 / w, 2) * std::exp(-2 * r2 / (w * w)) /
                          std::exp(-2 * r2 / (w0 * w0));
  EXPECT_NEAR(std::norm(f.at(128, 128)) / expected, 1.0, 5e-3);
}

TEST(AngularSpectrum, ConservesPowerAndIsReversible) {
  const GridSpec g{128, 0.2, 0};
  auto f = gaussian(g, 3.0);
  angular_spectrum_propagate(f, 0.0, 1.0, lambda_nm);  // band-limit once
  const ComplexField2D start = f;
  const auto s = angular_spectrum_propagate(f, 20.0, 1.2, lambda_nm);
  EXPECT_LT(s.relative_power_error(), 1e-12);
  angular_spectrum_propagate(f, -20.0, 1.2, lambda_nm);
  double err = 0;
  for (std::size_t i = 0; i < g.n * g.n; ++i)
    err = std::max(err, std::abs(f.data()[i] - start.data()[i]));
  EXPECT_LT(err, 1e-10);
}

TEST(AngularSpectrum, SerialAndParallelAreBitIdentical) {
  const GridSpec g{128, 0.2, 8};
  auto a = gaussian(g, 2.0);
  auto b = a;
  const auto sa = angular_spectrum_propagate(a, 12.0, 1.0, lambda_nm, Exec::serial);
  const auto sb = angular_spectrum_propagate(b, 12.0, 1.0, lambda_nm, Exec::parallel);
  EXPECT_EQ(sa.power_out, sb.power_out);
  for (std::size_t i = 0; i < g.n * g.n; ++i) ASSERT_EQ(a.data()[i], b.data()[i]);
}

TEST(AngularSpectrum, FieldReachingTheEdgeIsAnAliasingError) {
  const GridSpec g{64, 0.1, 0};
  auto f = gaussian(g, 0.3);
  EXPECT_THROW(angular_spectrum_propagate(f, 50.0, 1.0, lambda_nm), PropagationError);
  EXPECT_THROW(angular_spectrum_propagate(f, 1.0, 0.5, lambda_nm), DomainError);
}

TEST(AbsorbBorder, LeavesTheInteriorAndZeroesTheRim) {
  const GridSpec g{64, 0.1, 8};
  ComplexField2D f(g);
  std::fill_n(f.data(), 64 * 64, complex(1.0));
  absorb_border(f);
  EXPECT_EQ(f.at(32, 32), complex(1.0));
  EXPECT_LT(std::abs(f.at(0, 32)), 0.01);
  EXPECT_LT(std::abs(f.at(32, 63)), 0.01);
}

TEST(ApplyOpening, KeepsOnlyTheRectangle) {
  const GridSpec g{40, 1.0, 0};
  ComplexField2D f(g);
  std::fill_n(f.data(), 40 * 40, complex(1.0));
  apply_opening(f, {0, 4.0, 10.0, 0, 0});
  EXPECT_NEAR(f.power(), 8.0 * 20.0, 1e-12);
}

TEST(Fwhm, SampledGaussian) {
  const double sigma = 1.3, dx = 0.05;
  std::vector<double> p;
  for (int i = -200; i <= 200; ++i) p.push_back(std::exp(-0.5 * std::pow(i * dx / sigma, 2)));
  EXPECT_NEAR(fwhm(p, dx), 2 * std::sqrt(2 * std::log(2.0)) * sigma, 1e-3);
}

TEST(Fwhm, BandLimitedRecoversCoarselySampledGaussian) {
  // Amplitude exp(−x²/(2s²)) has intensity FWHM 2 s √(ln 2).
  const double s = 0.4, dx = 0.25;
  std::vector<complex> cut;
  for (int i = -32; i < 32; ++i) cut.emplace_back(std::exp(-0.5 * std::pow((i + 0.5) * dx / s, 2)));
  EXPECT_NEAR(fwhm_bandlimited(cut, dx, 16), 2 * s * std::sqrt(std::log(2.0)), 2e-3);
}

TEST(Fwhm, MeasurementErrors) {
  EXPECT_THROW(fwhm(std::vector<double>{1, 0.5}, 1.0), MeasurementError);
  EXPECT_THROW(fwhm(std::vector<double>{3, 2, 1}, 1.0), MeasurementError);
  EXPECT_THROW(fwhm(std::vector<double>{0, 1, 0.9}, 1.0), MeasurementError);
  EXPECT_THROW(fwhm(std::vector<double>{0, 0, 0}, 1.0), MeasurementError);
}

TEST(SimulatePsf, IdealLensApproachesTheAiryWidth) {
  const GridSpec g{512, 0.1, 32};
  const double f_um = 50.0, radius = 18.0;
  const metalens::LayerStack vacuum{{{f_um, 1.0}}};
  const auto wide = collection::ApertureStack::aperture_only(200, 200, f_um);
  const auto r = simulate_psf(ideal_lens_mask(g, f_um, radius, lambda_nm), vacuum, wide, g,
                              lambda_nm);
  const double na = radius / std::hypot(radius, f_um);
  const double airy = 0.5145 * 0.397 / na;
  EXPECT_NEAR(r.metrics.fwhm_x_um / airy, 1.0, 0.03);
  EXPECT_NEAR(r.metrics.fwhm_z_um / airy, 1.0, 0.03);
  EXPECT_LT(r.metrics.asymmetry, 1e-9);
  for (const auto& s : r.steps) EXPECT_LT(s.relative_power_error(), 1e-6);
}

TEST(SimulatePsf, SlitWidensTheSpotAcrossIt) {
  const GridSpec g{512, 0.1, 32};
  const double f_um = 50.0;
  const metalens::LayerStack vacuum{{{10.0, 1.0}, {f_um - 10.0, 1.0}}};
  auto slit = collection::ApertureStack::aperture_only(3, 200, 10.0);
  const auto r =
      simulate_psf(ideal_lens_mask(g, f_um, 18.0, lambda_nm), vacuum, slit, g, lambda_nm);
  EXPECT_GT(r.metrics.fwhm_x_um, 1.2 * r.metrics.fwhm_z_um);
}

TEST(SimulatePsf, MaskSizeMustMatchTheGrid) {
  const GridSpec g{64, 0.1, 4};
  LensMask m;
  EXPECT_THROW(simulate_psf(m, metalens::LayerStack::nominal(),
                            collection::ApertureStack::aperture_only(40, 100, 125), g, lambda_nm),
               DomainError);
}

TEST(Budget, FresnelAndCalibration) {
  EXPECT_NEAR(fresnel_transmission(1.0, 1.5262), 1 - std::pow(0.5262 / 2.5262, 2), 1e-15);
  EXPECT_DOUBLE_EQ(fresnel_transmission(1.3, 1.3), 1.0);
  const auto layers = metalens::LayerStack::nominal();
  const auto b = transmittance_budget(layers, 1.0);
  EXPECT_DOUBLE_EQ(b.interfaces, fresnel_transmission(1.0, metalens::nominal_glass_index));
  const double t = calibrate_metalens_transmittance(layers, 0.67);
  EXPECT_NEAR(transmittance_budget(layers, t).total, 0.67, 1e-15);
  EXPECT_THROW(calibrate_metalens_transmittance(layers, 0.99), DomainError);
  EXPECT_THROW(transmittance_budget(layers, 1.5), DomainError);
}

TEST(Raster, HeaderAndSize) {
  const GridSpec g{64, 0.5, 4};
  auto f = gaussian(g, 2.0);
  const auto path = std::filesystem::temp_directory_path() / "trapscope_raster.bin";
  write_intensity_raster(path, f, 4.0);
  std::ifstream in(path, std::ios::binary);
  char magic[8];
  in.read(magic, 8);
  EXPECT_EQ(std::string(magic, 8), "TSRASTER");
  std::uint32_t nx = 0, nz = 0;
  in.read(reinterpret_cast<char*>(&nx), 4);
  in.read(reinterpret_cast<char*>(&nz), 4);
  EXPECT_EQ(nx, 16u);
  EXPECT_EQ(nz, 16u);
  EXPECT_EQ(std::filesystem::file_size(path), 8 + 8 + 3 * 8 + 16 * 16 * 8u);
  std::filesystem::remove(path);
}
