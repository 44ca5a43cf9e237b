#include <benchmark/benchmark.h>

#include <cmath>

#include "slowdrive/hermitian.hpp"
#include "slowdrive/kato.hpp"
#include "slowdrive/lz.hpp"
#include "slowdrive/models.hpp"

using namespace slowdrive;

static void BM_PauliExp(benchmark::State& state) {
  double a = 0.3;
  const std::array<double, 3> b{0.4, -1.2, 0.7};
  for (auto _ : state) {
    benchmark::DoNotOptimize(pauli_exp(a, b));
    a += 1e-9;
  }
}
BENCHMARK(BM_PauliExp);

static void BM_ExpmHermitian(benchmark::State& state) {
  const Index n = state.range(0);
  const HermitianOperator h = lattice_hamiltonian(LatticeModel{n}, 0.0);
  for (auto _ : state) benchmark::DoNotOptimize(expm_hermitian(h, 0.05));
}
BENCHMARK(BM_ExpmHermitian)->Arg(8)->Arg(48)->Arg(128);

static void BM_LZSweep(benchmark::State& state) {
  const LZModel m{1.0, 0.1};
  const Generator g = [m](double t) { return lz_hamiltonian(m, t); };
  IntegratorConfig cfg;
  cfg.tolerance = 1e-8;
  for (auto _ : state) benchmark::DoNotOptimize(time_ordered_exp(g, -20.0, 20.0, cfg));
}
BENCHMARK(BM_LZSweep)->Unit(benchmark::kMillisecond);

static void BM_LatticeBlock(benchmark::State& state) {
  const Index n = state.range(0);
  const DrivenHamiltonian fam = lattice_family(LatticeModel{n});
  const SparseGenerator g = [fam](double t) { return fam.sparse(0.01 * t); };
  const Matrix x = Matrix::Identity(n, 4);
  IntegratorConfig cfg;
  cfg.step = 0.05;
  cfg.tolerance = 1e300;
  for (auto _ : state) benchmark::DoNotOptimize(propagate_block(g, 0.0, 10.0, x, cfg));
}
BENCHMARK(BM_LatticeBlock)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);

static void BM_KatoGenerator(benchmark::State& state) {
  LatticeModel m{static_cast<Index>(state.range(0))};
  m.potential = [](double x, double s) { return -(0.05 + 0.3 * s) * std::exp(-x * x / 4.0); };
  TrackOptions to;
  to.continuum_threshold = 0.0;
  const SpectralTrack tr(lattice_family(m), uniform_grid(0.0, 1.0, 201), to);
  const Generator k = kato_generator(tr, 0.01);
  double t = 1.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(k(t));
    t += 0.37;
    if (t > 99.0) t = 1.0;
  }
}
BENCHMARK(BM_KatoGenerator)->Arg(16)->Arg(48);

BENCHMARK_MAIN();
