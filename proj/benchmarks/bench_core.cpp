#include <benchmark/benchmark.h>

#include "ruio/experiments.hpp"
#include "ruio/lmi.hpp"
#include "ruio/matrix.hpp"
#include "ruio/rng.hpp"
#include "ruio/sim.hpp"
#include "ruio/uio.hpp"

namespace {

ruio::Matrix random_symmetric(int n, ruio::SplitMix64& rng) {
  ruio::Matrix m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) m(i, j) = m(j, i) = rng.uniform(-1.0, 1.0);
  return m;
}

void BM_sym_eig(benchmark::State& state) {
  ruio::SplitMix64 rng(7);
  const ruio::Matrix m = random_symmetric(static_cast<int>(state.range(0)), rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ruio::sym_eig(m));
  }
}
BENCHMARK(BM_sym_eig)->Arg(3)->Arg(6)->Arg(12);

void BM_solve_linear(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  ruio::SplitMix64 rng(11);
  ruio::Matrix a(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) a(i, j) = rng.uniform(-1.0, 1.0);
    a(i, i) += n;  // keep it well conditioned
  }
  ruio::Matrix b(n, 1);
  for (int i = 0; i < n; ++i) b(i, 0) = rng.uniform(-1.0, 1.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ruio::solve_linear(a, b));
  }
}
BENCHMARK(BM_solve_linear)->Arg(9)->Arg(21);

void BM_mat_exp(benchmark::State& state) {
  const ruio::ExperimentConfig cfg = ruio::default_config();
  const ruio::CuioParams design =
      ruio::assemble_cuio(cfg.plant(), cfg.k, cfg.y_free);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ruio::mat_exp(design.n_mat, 1.0));
  }
}
BENCHMARK(BM_mat_exp);

void BM_synthesize_certificate(benchmark::State& state) {
  const ruio::ExperimentConfig cfg = ruio::default_config();
  const ruio::CuioParams design =
      ruio::assemble_cuio(cfg.plant(), cfg.k, cfg.y_free);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        ruio::synthesize_certificate(design.m, design.n_mat, 1.1, 0.8, 1.0));
  }
}
BENCHMARK(BM_synthesize_certificate);

void BM_run_simulation(benchmark::State& state) {
  ruio::ExperimentConfig cfg = ruio::default_config();
  cfg.sim.t_end = 5.0;
  const ruio::PlantModel plant = cfg.plant();
  const ruio::CuioParams design = ruio::assemble_cuio(plant, cfg.k, cfg.y_free);
  const ruio::SynthesisResult synth =
      ruio::synthesize_certificate(design.m, design.n_mat, 1.1, 0.8, 1.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        ruio::run_simulation(plant, design, *synth.certificate, cfg.sim));
  }
}
BENCHMARK(BM_run_simulation);

}  // namespace

BENCHMARK_MAIN();
