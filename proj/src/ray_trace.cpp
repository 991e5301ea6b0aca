#include "trapscope/ray_trace.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "trapscope/parallel.hpp"

namespace trapscope::rays {

std::string to_string(Setup s) { return s == Setup::objective ? "objective" : "integrated"; }

Setup setup_from_string(const std::string& s) {
  if (s == "objective") return Setup::objective;
  if (s == "integrated") return Setup::integrated;
  throw DomainError("unknown setup '" + s + "' (expected objective or integrated)");
}

void ThinLens::validate() const {
  if (!(radius_mm > 0.0)) throw DomainError("lens aperture radius must be positive");
  if (focal_mm == 0.0 || !std::isfinite(focal_mm))
    throw DomainError("lens focal length must be finite and non-zero");
}

void TrainParams::validate() const {
  for (double v : {objective_focal_mm, objective_radius_mm, focusing_focal_mm,
                   focusing_radius_mm, relay_mm, detector_half_mm, metalens_radius_mm})
    if (!(v > 0.0) || !std::isfinite(v))
      throw DomainError("optical train lengths must be positive and finite");
}

void OpticalTrain::validate() const {
  stack.validate();
  layers.validate();
  if (1e-3 * (stack.source_height + stack.openings.back().depth) > chip_bottom_mm() + 1e-12)
    throw DomainError("aperture stack extends below the lens plane");
  double last = chip_bottom_mm();
  if (has_metalens) metalens.validate();
  for (const auto& l : lenses) {
    l.validate();
    if (!(l.position_mm > last)) throw DomainError("train elements must be strictly ordered");
    last = l.position_mm;
  }
  if (!(detector.position_mm > last)) throw DomainError("detector must follow every lens");
  if (!(detector.half_size_mm > 0.0)) throw DomainError("detector size must be positive");
}

double reduced_distance_mm(const metalens::LayerStack& layers) {
  layers.validate();
  double d = 0;
  for (const auto& l : layers.layers) d += l.thickness / l.index;
  return 1e-3 * d;
}

OpticalTrain build_train(Setup setup, const TrainParams& p,
                         const collection::ApertureStack& stack,
                         const metalens::LayerStack& layers) {
  p.validate();
  OpticalTrain t;
  t.setup = setup;
  t.stack = stack;
  t.layers = layers;
  const double bottom = t.chip_bottom_mm();
  const double reduced = reduced_distance_mm(layers);
  if (!(p.objective_focal_mm > reduced))
    throw DomainError("objective focal length shorter than the emitter's apparent depth");
  const double objective_at = bottom - reduced + p.objective_focal_mm;
  const double focusing_at = objective_at + p.relay_mm;
  if (setup == Setup::objective) {
    t.lenses.push_back({objective_at, p.objective_focal_mm, p.objective_radius_mm});
  } else {
    t.has_metalens = true;
    t.metalens = {bottom, reduced, p.metalens_radius_mm};
  }
  t.lenses.push_back({focusing_at, p.focusing_focal_mm, p.focusing_radius_mm});
  t.detector = {focusing_at + p.focusing_focal_mm, p.detector_half_mm};
  t.validate();
  return t;
}

TraceResult trace_ray(const OpticalTrain& train, const Ray& ray) {
  TraceResult r;
  r.x_mm = train.chip_offset_mm + 1e-3 * ray.x_um;
  r.z_mm = 1e-3 * ray.z_um;
  int element = 1;
  if (!collection::passes(train.stack, {ray.x_um, ray.z_um}, ray.u, ray.v)) {
    r.element = element;
    return r;
  }

  // Snell through the planar layers; the lateral walk depends only on the
  // direction sines, which are conserved up to the 1/n scaling.
  const double a = 1.0 / std::sqrt(1.0 + ray.u * ray.u + ray.v * ray.v);
  const double sx = ray.u * a, sz = ray.v * a;
  double s = 0;
  for (const auto& l : train.layers.layers) {
    const double n = l.index;
    const double c = std::sqrt(1.0 - (sx * sx + sz * sz) / (n * n));
    const double t_mm = 1e-3 * l.thickness;
    r.x_mm += t_mm * sx / (n * c);
    r.z_mm += t_mm * sz / (n * c);
    s += t_mm;
  }
  double u = ray.u, v = ray.v;

  if (train.has_metalens) {
    ++element;
    const double rx = r.x_mm - train.chip_offset_mm;
    if (std::hypot(rx, r.z_mm) > train.metalens.radius_mm) {
      r.element = element;
      return r;
    }
    u -= rx / train.metalens.focal_mm;
    v -= r.z_mm / train.metalens.focal_mm;
  }
  for (const auto& lens : train.lenses) {
    ++element;
    const double ds = lens.position_mm - s;
    r.x_mm += u * ds;
    r.z_mm += v * ds;
    s = lens.position_mm;
    if (std::hypot(r.x_mm, r.z_mm) > lens.radius_mm) {
      r.element = element;
      return r;
    }
    u -= r.x_mm / lens.focal_mm;
    v -= r.z_mm / lens.focal_mm;
  }
  ++element;
  const double ds = train.detector.position_mm - s;
  r.x_mm += u * ds;
  r.z_mm += v * ds;
  if (std::abs(r.x_mm) > train.detector.half_size_mm ||
      std::abs(r.z_mm) > train.detector.half_size_mm) {
    r.element = element;
    return r;
  }
  r.detected = true;
  return r;
}

void RaySource::validate() const {
  if (n_rays < 1000) throw DomainError("ray source needs at least 1000 rays");
  if (emission == Emission::cone && !(cone_half_angle_deg > 0.0 && cone_half_angle_deg < 90.0))
    throw DomainError("cone half-angle must lie in (0°, 90°)");
}

double bounding_cone(const collection::ApertureStack& stack,
                     std::span<const collection::SourceOffset> sources) {
  double tmax = 0;
  for (const auto& src : sources) {
    const auto w = collection::angular_window(stack, src);
    if (w.empty()) continue;
    const double tu = std::max(std::abs(w.u0), std::abs(w.u1));
    const double tv = std::max(std::abs(w.v0), std::abs(w.v1));
    tmax = std::max(tmax, std::hypot(tu, tv));
  }
  return tmax > 0 ? std::atan(tmax) * (1.0 + 1e-9) : 0.0;
}

Efficiency detection_efficiency(const OpticalTrain& train, const RaySource& source,
                                double transmittance, double cone_half_angle_rad, Exec exec) {
  source.validate();
  if (!(transmittance >= 0.0 && transmittance <= 1.0))
    throw DomainError("transmittance must lie in [0, 1]");
  double theta = cone_half_angle_rad;
  if (source.emission == Emission::cone) {
    theta = source.cone_half_angle_deg * pi / 180.0;
  } else if (theta <= 0.0) {
    const collection::SourceOffset src{source.x_um, source.z_um};
    theta = bounding_cone(train.stack, std::span(&src, 1));
  }
  Efficiency e;
  e.launched = source.n_rays;
  if (theta <= 0.0) return e;
  if (theta >= 0.5 * pi) throw DomainError("sampling cone must be narrower than a hemisphere");

  const double one_minus_cos = 1.0 - std::cos(theta);
  const rng::CounterRng gen(source.seed);
  e.hits = count_in_blocks(source.n_rays, 1u << 14, exec, [&](std::uint64_t b, std::uint64_t end) {
    std::uint64_t local = 0;
    for (std::uint64_t i = b; i < end; ++i) {
      const double c = 1.0 - gen.uniform(i, 0, 2) * one_minus_cos;
      const double t = std::sqrt(std::max(0.0, 1.0 - c * c)) / c;
      const double phi = two_pi * gen.uniform(i, 1, 2);
      if (trace_ray(train, {source.x_um, source.z_um, t * std::cos(phi), t * std::sin(phi)})
              .detected)
        ++local;
    }
    return local;
  });
  e.launch_fraction = 0.5 * one_minus_cos;
  const double p = static_cast<double>(e.hits) / static_cast<double>(e.launched);
  const double scale = 100.0 * e.launch_fraction * transmittance;
  e.percent = p * scale;
  e.stderr_percent = std::sqrt(p * (1.0 - p) / static_cast<double>(e.launched)) * scale;
  return e;
}

double cone_to_isotropic(double detected_fraction, double half_angle_deg) {
  if (!(half_angle_deg > 0.0)) throw DomainError("cone half-angle must be positive");
  if (half_angle_deg >= 90.0) throw DomainError("cone half-angle must be below 90°");
  if (!(detected_fraction >= 0.0 && detected_fraction <= 1.0))
    throw DomainError("detected fraction must lie in [0, 1]");
  return 100.0 * detected_fraction * 0.5 * (1.0 - std::cos(half_angle_deg * pi / 180.0));
}

double EfficiencyCurve::max_efficiency() const {
  return efficiency_pct.empty() ? 0.0
                                : *std::max_element(efficiency_pct.begin(), efficiency_pct.end());
}

namespace {

EfficiencyCurve run_points(std::string unit, std::span<const double> values,
                           const std::vector<OpticalTrain>& trains,
                           const std::vector<RaySource>& sources, double theta,
                           double transmittance, Exec exec) {
  EfficiencyCurve c;
  c.unit = std::move(unit);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const Efficiency e = detection_efficiency(trains[i], sources[i], transmittance, theta, exec);
    c.displacement.push_back(values[i]);
    c.efficiency_pct.push_back(e.percent);
    c.stderr_pct.push_back(e.stderr_percent);
  }
  return c;
}

}  // namespace

EfficiencyCurve lateral_scan(Setup setup, const TrainParams& params,
                             const collection::ApertureStack& stack,
                             const metalens::LayerStack& layers, std::span<const double> d_mm,
                             const RaySource& source, double transmittance, Exec exec) {
  const OpticalTrain base = build_train(setup, params, stack, layers);
  std::vector<OpticalTrain> trains;
  std::vector<RaySource> sources(d_mm.size(), source);
  for (double d : d_mm) {
    if (!(d >= 0.0)) throw DomainError("lateral displacements must be non-negative");
    trains.push_back(base);
    trains.back().chip_offset_mm = d;
  }
  const collection::SourceOffset src{source.x_um, source.z_um};
  const double theta = bounding_cone(stack, std::span(&src, 1));
  return run_points("mm", d_mm, trains, sources, theta, transmittance, exec);
}

EfficiencyCurve axial_scan(Setup setup, const TrainParams& params,
                           const collection::ApertureStack& stack,
                           const metalens::LayerStack& layers, std::span<const double> dprime_um,
                           const RaySource& source, double transmittance, Exec exec) {
  const OpticalTrain base = build_train(setup, params, stack, layers);
  const double limit = 2.0 * stack.aperture().half_length;
  std::vector<OpticalTrain> trains(dprime_um.size(), base);
  std::vector<RaySource> sources;
  std::vector<collection::SourceOffset> offsets;
  for (double d : dprime_um) {
    if (std::abs(d) > limit) throw DomainError("axial displacement exceeds the aperture length");
    sources.push_back(source);
    sources.back().z_um += d;
    offsets.push_back({source.x_um, source.z_um + d});
  }
  const double theta = bounding_cone(stack, offsets);
  return run_points("um", dprime_um, trains, sources, theta, transmittance, exec);
}

double falloff_displacement(const EfficiencyCurve& c, double level) {
  const auto& e = c.efficiency_pct;
  if (e.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto m = static_cast<std::size_t>(std::max_element(e.begin(), e.end()) - e.begin());
  const double thr = level * e[m];
  for (std::size_t i = m + 1; i < e.size(); ++i)
    if (e[i] < thr) {
      const double f = (e[i - 1] - thr) / (e[i - 1] - e[i]);
      return c.displacement[i - 1] + f * (c.displacement[i] - c.displacement[i - 1]);
    }
  return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace trapscope::rays
