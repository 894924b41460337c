#include <benchmark/benchmark.h>
#include <poctrl/filter.hpp>
#include <poctrl/lq_solve.hpp>

#include "bench_models.hpp"

namespace {

using namespace poctrl;

// Particle-ensemble step throughput, reported as particle-steps per second.
// The ensemble is re-wound by restarting from a one-step trajectory so the
// measured work is the Euler update itself, not allocation.
void BM_EnsembleStep(benchmark::State& state) {
  const int particles = int(state.range(0));
  const LqModel mo = bench::scalar_model();
  const GeneralModel gm = lq_as_general(mo);
  const int steps = 64;
  const double dt = mo.T / 500;
  auto w = std::make_shared<NoisePath>(sample_noise(mo.d, dt, steps, derive(7, kTagCommonNoise)));
  ParticleEnsemble ens =
      make_ensemble(EmpiricalMeasure::dirac(mo.x0), particles, gm, w, derive(7, kTagExperiment));
  StepWorkspace ws;
  const Vector a = Vector::Constant(mo.q, 0.1);
  for (auto _ : state) {
    if (ens.t_index + 1 > steps) {
      state.PauseTiming();
      ens = make_ensemble(EmpiricalMeasure::dirac(mo.x0), particles, gm, w,
                          derive(7, kTagExperiment));
      state.ResumeTiming();
    }
    ensemble_step(ens, gm, a, ws);
    benchmark::DoNotOptimize(ens.states.data());
  }
  state.SetItemsProcessed(state.iterations() * particles);
}
BENCHMARK(BM_EnsembleStep)->Arg(256)->Arg(4096);

// Full closed-loop propagation with the feedback policy: solver read,
// conditional mean, and particle update together.
void BM_FeedbackPropagate(benchmark::State& state) {
  const LqModel mo = bench::scalar_model();
  const GeneralModel gm = lq_as_general(mo);
  const auto sol = std::make_shared<LqSolution>(solve_backward(mo, mo.T / 500));
  const int particles = 512;
  const int steps = 100;
  const double dt = mo.T / steps;
  const Policy policy = Policy::feedback(sol);
  uint64_t rep = 0;
  for (auto _ : state) {
    state.PauseTiming();
    auto w = std::make_shared<NoisePath>(
        sample_noise(mo.d, dt, steps, derive(9, kTagCommonNoise, rep)));
    ParticleEnsemble ens = make_ensemble(EmpiricalMeasure::dirac(mo.x0), particles, gm, w,
                                         derive(9, kTagExperiment, rep));
    ++rep;
    state.ResumeTiming();
    const EnsembleTrajectory traj = propagate(ens, gm, policy, steps);
    benchmark::DoNotOptimize(traj.states.back().data());
  }
  state.SetItemsProcessed(state.iterations() * particles * steps);
}
BENCHMARK(BM_FeedbackPropagate);

}  // namespace
