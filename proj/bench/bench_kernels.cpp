// Serial reference path vs OpenMP path for the heavy kernels. The second
// benchmark argument selects the path: 0 serial, 1 parallel.

#include <benchmark/benchmark.h>

#include "trapscope/collection.hpp"
#include "trapscope/metalens.hpp"
#include "trapscope/ray_trace.hpp"
#include "trapscope/trap_model.hpp"
#include "trapscope/wave_optics.hpp"

using namespace trapscope;

namespace {

Exec exec_of(const benchmark::State& s) { return s.range(0) ? Exec::parallel : Exec::serial; }

const collection::ApertureStack& stack() {
  static const auto st =
      collection::ApertureStack::with_undercut(40, 100, 125, {275, 30.878, 176, 0, 0});
  return st;
}

void grid_scan_null(benchmark::State& s) {
  const trap::TrapLayout layout;
  const trap::ElectrodeField field(layout.rf_electrodes(50.0));
  for (auto _ : s) benchmark::DoNotOptimize(trap::grid_scan_null(field, 0.0, 100.0, 0.5, exec_of(s)));
}

void mc_collection(benchmark::State& s) {
  for (auto _ : s)
    benchmark::DoNotOptimize(collection::mc_collection(stack(), {}, 2'000'000, 1, exec_of(s)));
}

void detection_efficiency(benchmark::State& s) {
  const auto train = rays::build_train(rays::Setup::integrated, {}, stack(),
                                       metalens::LayerStack::nominal());
  rays::RaySource src;
  src.n_rays = 500'000;
  for (auto _ : s)
    benchmark::DoNotOptimize(rays::detection_efficiency(train, src, 0.67, 0.0, exec_of(s)));
}

void angular_spectrum(benchmark::State& s) {
  const optics::GridSpec g{1024, 0.125, 32};
  optics::ComplexField2D start(g);
  for (std::size_t iz = 0; iz < g.n; ++iz)
    for (std::size_t ix = 0; ix < g.n; ++ix) {
      const double r2 = g.coord(ix) * g.coord(ix) + g.coord(iz) * g.coord(iz);
      start.at(ix, iz) = std::exp(-r2 / 400.0);
    }
  for (auto _ : s) {
    auto f = start;
    benchmark::DoNotOptimize(optics::angular_spectrum_propagate(f, 50.0, 1.0, 397.0, exec_of(s)));
  }
}

void featuremap(benchmark::State& s) {
  const auto profile = metalens::collimation_phase(metalens::LayerStack::nominal(), 200.0, 397.0, 2001);
  const auto library = metalens::PillarLibrary::synthetic_default();
  for (auto _ : s)
    benchmark::DoNotOptimize(metalens::phase_to_featuremap(profile, library, exec_of(s)));
}

}  // namespace

BENCHMARK(grid_scan_null)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(mc_collection)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(detection_efficiency)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(angular_spectrum)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(featuremap)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
