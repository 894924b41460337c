#include <benchmark/benchmark.h>
#include <poctrl/lq_solve.hpp>

#include "bench_models.hpp"

namespace {

using namespace poctrl;

// Backward sweep cost as the state dimension grows; every stage is dense
// matrix work, so this tracks the n^3 core of the solver.
void BM_SolveBackward(benchmark::State& state) {
  const int n = int(state.range(0));
  const LqModel mo = bench::dense_model(n, 2, 2, 2, 17);
  for (auto _ : state) {
    LqSolution sol = solve_backward(mo, mo.T / 500);
    benchmark::DoNotOptimize(sol.chi[0]);
  }
  state.SetComplexityN(n);
}
BENCHMARK(BM_SolveBackward)->Arg(1)->Arg(4)->Arg(8)->Complexity();

// Grid resolution scaling at fixed dimension: linear in the step count.
void BM_SolveResolution(benchmark::State& state) {
  const LqModel mo = bench::scalar_model();
  const int steps = int(state.range(0));
  for (auto _ : state) {
    LqSolution sol = solve_backward(mo, mo.T / steps);
    benchmark::DoNotOptimize(sol.chi[0]);
  }
  state.SetItemsProcessed(state.iterations() * steps);
}
BENCHMARK(BM_SolveResolution)->Arg(250)->Arg(2000);

// Surface evaluation between nodes: the cubic interpolation read that sits
// inside every feedback-policy step.
void BM_EvalAt(benchmark::State& state) {
  const LqModel mo = bench::scalar_model();
  const LqSolution sol = solve_backward(mo, mo.T / 500);
  double t = 0.0;
  for (auto _ : state) {
    t += 1e-4;
    if (t >= mo.T) t = 0.0;
    const LqPoint p = eval_at(sol, t);
    benchmark::DoNotOptimize(p.chi);
  }
}
BENCHMARK(BM_EvalAt);

}  // namespace
