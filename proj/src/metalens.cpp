#include "trapscope/metalens.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "trapscope/parallel.hpp"

namespace trapscope::metalens {

LayerStack LayerStack::nominal() {
  return {{{125.0, 1.0}, {275.0, 1.0}, {200.0, nominal_glass_index}}};
}

double LayerStack::total_thickness() const {
  double t = 0;
  for (const auto& l : layers) t += l.thickness;
  return t;
}

void LayerStack::validate() const {
  if (layers.empty()) throw DomainError("layer stack is empty");
  for (const auto& l : layers) {
    if (!(l.thickness > 0.0)) throw DomainError("layer thickness must be positive");
    if (!(l.index >= 1.0)) throw DomainError("layer index must be >= 1");
  }
}

double PhaseProfile::sampled_at(double r) const {
  if (radius_um.size() < 2) throw DomainError("phase profile has fewer than two samples");
  const double step = radius_um[1] - radius_um[0];
  const double pos = std::clamp(r / step, 0.0, static_cast<double>(radius_um.size() - 1));
  const auto i = std::min(static_cast<std::size_t>(pos), radius_um.size() - 2);
  const double f = pos - static_cast<double>(i);
  return (1.0 - f) * phase_rad[i] + f * phase_rad[i + 1];
}

double PhaseProfile::polynomial_at(double r) const {
  if (even_coeffs.empty()) throw DomainError("phase profile has no fitted coefficients");
  const double r2 = r * r;
  double acc = 0, pw = r2;
  for (double c : even_coeffs) {
    acc += c * pw;
    pw *= r2;
  }
  return acc;
}

double stationary_path(const LayerStack& stack, double r, std::vector<double>* crossing) {
  stack.validate();
  if (!(r >= 0.0)) throw DomainError("lens radius must be non-negative");
  double n_min = std::numeric_limits<double>::infinity();
  for (const auto& l : stack.layers) n_min = std::min(n_min, l.index);

  // β = n sinθ is conserved across planar interfaces; the lateral reach
  // Σ t β / sqrt(n² − β²) grows without bound as β → n_min, so every r has a
  // propagating solution.
  double beta = 0.0;
  if (r > 0.0) {
    auto reach = [&](double b) {
      double f = -r, df = 0;
      for (const auto& l : stack.layers) {
        const double c = l.index * l.index - b * b;
        const double s = std::sqrt(c);
        f += l.thickness * b / s;
        df += l.thickness * l.index * l.index / (c * s);
      }
      return std::make_pair(f, df);
    };
    std::uintmax_t iters = 200;
    const double hi = n_min * (1.0 - 1e-15);
    const double guess = std::min(0.5 * hi, r / std::hypot(r, stack.total_thickness()));
    beta = boost::math::tools::newton_raphson_iterate(reach, guess, 0.0, hi, 52, iters);
    if (std::abs(reach(beta).first) > 1e-9)
      throw DomainError("no refracted path reaches the requested lens radius");
  }

  double opl = 0;
  if (crossing) crossing->clear();
  for (const auto& l : stack.layers) {
    const double s = std::sqrt(l.index * l.index - beta * beta);
    opl += l.index * l.index * l.thickness / s;
    if (crossing) crossing->push_back(l.thickness * beta / s);
  }
  return opl;
}

PhaseProfile collimation_phase(const LayerStack& stack, double lens_diameter_um,
                               double wavelength_nm, std::size_t samples) {
  if (!(lens_diameter_um > 0.0)) throw DomainError("lens diameter must be positive");
  if (!(wavelength_nm > 0.0)) throw DomainError("wavelength must be positive");
  if (samples < 2) throw DomainError("need at least two radial samples");
  PhaseProfile p;
  p.wavelength_nm = wavelength_nm;
  p.lens_diameter_um = lens_diameter_um;
  p.radius_um.resize(samples);
  p.phase_rad.resize(samples);
  const double k = two_pi / (wavelength_nm * 1e-3);
  const double opl0 = stationary_path(stack, 0.0);
  const double step = 0.5 * lens_diameter_um / static_cast<double>(samples - 1);
  for (std::size_t i = 0; i < samples; ++i) {
    const double r = step * static_cast<double>(i);
    p.radius_um[i] = r;
    p.phase_rad[i] = k * (opl0 - stationary_path(stack, r));
  }
  return p;
}

EvenFit fit_even_powers(const PhaseProfile& profile, int order) {
  if (order < 2) throw FitError("even-power fit needs order >= 2");
  const auto m = static_cast<Eigen::Index>(profile.radius_um.size());
  if (m < order) throw FitError("fewer samples than fit terms");
  const double R = profile.radius_um.back();
  if (!(R > 0.0)) throw FitError("phase profile has zero radial extent");

  // Normalised radius keeps the columns O(1).
  Eigen::MatrixXd a(m, order);
  Eigen::VectorXd b(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const double rho2 = std::pow(profile.radius_um[j] / R, 2);
    double pw = rho2;
    for (int k = 0; k < order; ++k) {
      a(j, k) = pw;
      pw *= rho2;
    }
    b(j) = profile.phase_rad[j];
  }
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  if (qr.rank() < order) throw FitError("rank-deficient even-power fit");
  const Eigen::VectorXd x = qr.solve(b);
  const Eigen::VectorXd res = a * x - b;

  EvenFit fit;
  fit.max_residual = res.cwiseAbs().maxCoeff();
  double scale = 1.0;
  for (int k = 0; k < order; ++k) {
    scale *= R * R;
    fit.coeffs.push_back(x(k) / scale);
  }
  return fit;
}

double wrap_phase(double phase) {
  double w = std::fmod(phase, two_pi);
  if (w < 0) w += two_pi;
  if (w >= two_pi) w = 0.0;
  return w;
}

namespace {

double circular_distance(double a, double b) {
  const double d = wrap_phase(a - b);
  return std::min(d, two_pi - d);
}

}  // namespace

PillarLibrary PillarLibrary::synthetic_default() {
  PillarLibrary lib;
  lib.synthetic = true;
  for (int d = 60; d <= 240; d += 2) {
    const double t = (d - 60) / 180.0;
    lib.entries.push_back({static_cast<double>(d), 2.2 * pi * (0.6 * t + 0.4 * t * t),
                           0.97 - 0.12 * t * t});
  }
  return lib;
}

PillarLibrary PillarLibrary::load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LibraryError("cannot open pillar library " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("diameter_nm,phase_rad,transmittance", 0) != 0)
    throw LibraryError("pillar library header must be diameter_nm,phase_rad,transmittance");
  PillarLibrary lib;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    std::istringstream ss(line);
    PillarEntry e;
    char c1 = 0, c2 = 0;
    if (!(ss >> e.diameter_nm >> c1 >> e.phase_rad >> c2 >> e.transmittance) || c1 != ',' ||
        c2 != ',')
      throw LibraryError("malformed pillar library row " + std::to_string(row));
    lib.entries.push_back(e);
  }
  lib.validate();
  return lib;
}

void PillarLibrary::save_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(17);
  out << "diameter_nm,phase_rad,transmittance\n";
  for (const auto& e : entries)
    out << e.diameter_nm << ',' << e.phase_rad << ',' << e.transmittance << '\n';
}

double PillarLibrary::phase_span() const {
  if (entries.empty()) return 0.0;
  auto [lo, hi] = std::minmax_element(entries.begin(), entries.end(),
                                      [](auto& a, auto& b) { return a.phase_rad < b.phase_rad; });
  return hi->phase_rad - lo->phase_rad;
}

double PillarLibrary::phase_quantum() const {
  double q = 0;
  for (std::size_t i = 1; i < entries.size(); ++i)
    q = std::max(q, std::abs(entries[i].phase_rad - entries[i - 1].phase_rad));
  return q;
}

std::size_t PillarLibrary::find(double diameter_nm) const {
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (entries[i].diameter_nm == diameter_nm) return i;
  throw LibraryError("diameter " + std::to_string(diameter_nm) + " nm not in library");
}

std::size_t PillarLibrary::nearest(double phase) const {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const double d = circular_distance(entries[i].phase_rad, phase);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

void PillarLibrary::validate() const {
  if (!(period_nm > 0.0) || !(height_nm > 0.0))
    throw LibraryError("pillar period and height must be positive");
  if (entries.size() < 2) throw LibraryError("pillar library needs at least two entries");
  int direction = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (!(e.transmittance >= 0.0 && e.transmittance <= 1.0))
      throw LibraryError("transmittance outside [0, 1] at row " + std::to_string(i + 1));
    if (!(e.diameter_nm > 0.0)) throw LibraryError("diameters must be positive");
    if (i == 0) continue;
    if (!(e.diameter_nm > entries[i - 1].diameter_nm))
      throw LibraryError("diameters must be strictly increasing");
    const double step = e.phase_rad - entries[i - 1].phase_rad;
    const int dir = step > 0 ? 1 : (step < 0 ? -1 : 0);
    if (dir == 0 || (direction != 0 && dir != direction))
      throw LibraryError("phase delay must be strictly monotone in diameter");
    direction = dir;
  }
}

double FeatureMap::site_coord_um(std::size_t i) const {
  return (static_cast<double>(i) - 0.5 * static_cast<double>(n) + 0.5) * period_nm * 1e-3;
}

std::size_t FeatureMap::filled() const {
  return static_cast<std::size_t>(
      std::count_if(entry.begin(), entry.end(), [](std::size_t e) { return e != empty; }));
}

double FeatureMap::mean_abs_residual() const {
  double sum = 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < entry.size(); ++i)
    if (entry[i] != empty) {
      sum += std::abs(residual_rad[i]);
      ++count;
    }
  return count ? sum / static_cast<double>(count) : 0.0;
}

void FeatureMap::save_csv(const std::filesystem::path& path,
                          const PillarLibrary& library) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "ix,iz,x_nm,z_nm,diameter_nm\n";
  char buf[128];
  for (std::size_t iz = 0; iz < n; ++iz)
    for (std::size_t ix = 0; ix < n; ++ix) {
      const std::size_t e = at(ix, iz);
      if (e == empty) continue;
      std::snprintf(buf, sizeof buf, "%zu,%zu,%.1f,%.1f,%.6g\n", ix, iz,
                    site_coord_um(ix) * 1e3, site_coord_um(iz) * 1e3,
                    library.entries[e].diameter_nm);
      out << buf;
    }
}

FeatureMap phase_to_featuremap(const PhaseProfile& profile, const PillarLibrary& library,
                               Exec exec) {
  library.validate();
  if (library.phase_span() < two_pi)
    throw LibraryError("pillar library spans less than 2π of phase delay");
  FeatureMap map;
  map.period_nm = library.period_nm;
  map.lens_radius_um = profile.lens_radius_um();
  const double p_um = library.period_nm * 1e-3;
  map.n = 2 * static_cast<std::size_t>(std::ceil(map.lens_radius_um / p_um));
  map.entry.assign(map.n * map.n, FeatureMap::empty);
  map.residual_rad.assign(map.n * map.n, 0.0f);

  for_each_index(map.n, exec, [&](std::size_t iz) {
    const double z = map.site_coord_um(iz);
    for (std::size_t ix = 0; ix < map.n; ++ix) {
      const double x = map.site_coord_um(ix);
      const double r = std::hypot(x, z);
      if (r > map.lens_radius_um) continue;
      const double target = wrap_phase(profile.sampled_at(r));
      const std::size_t e = library.nearest(target);
      double res = wrap_phase(target - library.entries[e].phase_rad);
      if (res > pi) res -= two_pi;
      map.entry[iz * map.n + ix] = e;
      map.residual_rad[iz * map.n + ix] = static_cast<float>(res);
    }
  });
  return map;
}

SampledMask featuremap_phase(const FeatureMap& map, const PillarLibrary& library,
                             std::size_t n, double spacing_um, Exec exec) {
  if (n == 0 || !(spacing_um > 0.0)) throw DomainError("invalid sampling grid");
  SampledMask m;
  m.n = n;
  m.spacing_um = spacing_um;
  m.phase_rad.assign(n * n, 0.0);
  m.amplitude.assign(n * n, 0.0);
  const double p_um = map.period_nm * 1e-3;
  const double half_sites = 0.5 * static_cast<double>(map.n);

  auto site_of = [&](std::size_t i) -> long long {
    const double c = (static_cast<double>(i) - 0.5 * static_cast<double>(n) + 0.5) * spacing_um;
    return static_cast<long long>(std::floor(c / p_um + half_sites));
  };
  for_each_index(n, exec, [&](std::size_t iz) {
    const long long sz = site_of(iz);
    if (sz < 0 || sz >= static_cast<long long>(map.n)) return;
    for (std::size_t ix = 0; ix < n; ++ix) {
      const long long sx = site_of(ix);
      if (sx < 0 || sx >= static_cast<long long>(map.n)) continue;
      const std::size_t e = map.at(static_cast<std::size_t>(sx), static_cast<std::size_t>(sz));
      if (e == FeatureMap::empty) continue;
      if (e >= library.entries.size()) throw LibraryError("feature map refers to unknown pillar");
      m.phase_rad[iz * n + ix] = wrap_phase(library.entries[e].phase_rad);
      m.amplitude[iz * n + ix] = library.entries[e].transmittance;
    }
  });
  return m;
}

double mean_power_transmittance(const FeatureMap& map, const PillarLibrary& library) {
  double sum = 0;
  std::size_t count = 0;
  for (std::size_t e : map.entry)
    if (e != FeatureMap::empty) {
      const double t = library.entries.at(e).transmittance;
      sum += t * t;
      ++count;
    }
  if (count == 0) throw DomainError("feature map has no pillars");
  return sum / static_cast<double>(count);
}

}  // namespace trapscope::metalens
