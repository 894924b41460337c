#include <benchmark/benchmark.h>
#include <poctrl/measures.hpp>
#include <poctrl/rng.hpp>

#include "bench_models.hpp"

namespace {

using namespace poctrl;

EmpiricalMeasure random_measure(int dim, int atoms, uint64_t seed) {
  EmpiricalMeasure mu;
  mu.atoms.resize(dim, atoms);
  fill_gaussians(derive(seed, kTagExperiment), 0, dim * atoms, mu.atoms.data());
  return mu;
}

// One-dimensional transport cost: sort-and-pair, near-linear in the atom
// count once the sort dominates.
void BM_Wasserstein1d(benchmark::State& state) {
  const int atoms = int(state.range(0));
  const EmpiricalMeasure mu = random_measure(1, atoms, 21);
  const EmpiricalMeasure eta = random_measure(1, atoms, 22);
  for (auto _ : state) benchmark::DoNotOptimize(wasserstein2(mu, eta));
  state.SetItemsProcessed(state.iterations() * atoms);
}
BENCHMARK(BM_Wasserstein1d)->Arg(64)->Arg(512);

// Multi-dimensional transport cost runs the assignment solver, which is
// cubic in the atom count; this bounds usable ensemble sizes for metrics.
void BM_WassersteinAssignment(benchmark::State& state) {
  const int atoms = int(state.range(0));
  const EmpiricalMeasure mu = random_measure(3, atoms, 23);
  const EmpiricalMeasure eta = random_measure(3, atoms, 24);
  for (auto _ : state) benchmark::DoNotOptimize(wasserstein2(mu, eta));
  state.SetComplexityN(atoms);
}
BENCHMARK(BM_WassersteinAssignment)->Arg(32)->Arg(64)->Arg(128)->Complexity();

// Quadratic statistics of a measure: the inner loop of every value read.
void BM_QuadVar(benchmark::State& state) {
  const int atoms = int(state.range(0));
  const EmpiricalMeasure mu = random_measure(4, atoms, 25);
  const Matrix K = Matrix::Identity(4, 4);
  for (auto _ : state) benchmark::DoNotOptimize(quad_var(mu, K));
  state.SetItemsProcessed(state.iterations() * atoms);
}
BENCHMARK(BM_QuadVar)->Arg(256)->Arg(4096);

}  // namespace
