#include <benchmark/benchmark.h>
#include <poctrl/hjb.hpp>
#include <poctrl/lq_solve.hpp>
#include <poctrl/rng.hpp>

#include "bench_models.hpp"

namespace {

using namespace poctrl;

EmpiricalMeasure cloud(int dim, int atoms, uint64_t seed) {
  EmpiricalMeasure mu;
  mu.atoms.resize(dim, atoms);
  fill_gaussians(derive(seed, kTagExperiment), 0, dim * atoms, mu.atoms.data());
  return mu;
}

// Bellman residual at an empirical law: lifted derivatives plus the
// generator contraction, the unit of work behind every verification probe.
void BM_HjbResidual(benchmark::State& state) {
  const int atoms = int(state.range(0));
  const LqModel mo = bench::dense_model(2, 2, 2, 2, 31);
  const LqSolution sol = solve_backward(mo, mo.T / 500);
  const EmpiricalMeasure pi = cloud(mo.n, atoms, 33);
  for (auto _ : state) {
    const HjbResidualReport rep =
        hjb_residual(mo, sol, 0.37, pi, InfMode::closed_form, DtMode::ode_rhs);
    benchmark::DoNotOptimize(rep.residual);
  }
  state.SetItemsProcessed(state.iterations() * atoms);
}
BENCHMARK(BM_HjbResidual)->Arg(16)->Arg(64)->Arg(256);

// Same probe with the action bracket scanned over a grid instead of the
// closed-form minimiser; the gap between the two is the price of not
// knowing the quadratic structure.
void BM_HjbResidualGrid(benchmark::State& state) {
  const LqModel mo = bench::dense_model(2, 2, 2, 1, 31);
  const LqSolution sol = solve_backward(mo, mo.T / 500);
  const EmpiricalMeasure pi = cloud(mo.n, 32, 35);
  for (auto _ : state) {
    const HjbResidualReport rep =
        hjb_residual(mo, sol, 0.37, pi, InfMode::grid, DtMode::ode_rhs);
    benchmark::DoNotOptimize(rep.residual);
  }
}
BENCHMARK(BM_HjbResidualGrid);

}  // namespace
