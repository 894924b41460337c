#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "poctrl/jump_process.hpp"
#include "poctrl/lq_solve.hpp"
#include "poctrl/measures.hpp"
#include "poctrl/model.hpp"
#include "poctrl/rng.hpp"

namespace poctrl {

// Discretised Brownian path: column k holds the increments of step k.
// Increments are an exact function of (key, dt, steps, dim), so a path can be
// regenerated or continued from any offset.
struct NoisePath {
  double dt = 0.0;
  int steps = 0;
  int dim = 0;
  uint64_t key = 0;
  Matrix increments;  // dim x steps
};

NoisePath sample_noise(int dim, double dt, int steps, uint64_t key);

// Explicitly stored private increments (row block p*m..p*m+m-1 = particle p),
// used when a study needs the same noise realisation across several grid
// resolutions.  Normally private noise is generated on the fly from streams.
struct PrivateNoise {
  int m = 0, particles = 0, steps = 0;
  double dt = 0.0;
  Matrix increments;  // (m*particles) x steps
};

PrivateNoise sample_private_noise(int m, int particles, double dt, int steps, uint64_t seed);

// Merge adjacent step pairs: the same Brownian path viewed on a grid twice as
// coarse.  `steps` must be even.
NoisePath coarsen(const NoisePath& w);
PrivateNoise coarsen(const PrivateNoise& v);

// Particle representation of the conditional state law: every particle shares
// the common path W and owns a private noise stream.
struct ParticleEnsemble {
  Matrix states;  // n x N
  std::shared_ptr<const NoisePath> common_w;
  std::vector<uint64_t> v_keys;                      // per-particle stream keys
  std::shared_ptr<const PrivateNoise> v_increments;  // optional explicit noise
  int m = 0;
  int t_index = 0;  // absolute step position on the common grid

  int n() const { return int(states.rows()); }
  int particles() const { return int(states.cols()); }
  double dt() const { return common_w->dt; }
  double time() const { return t_index * common_w->dt; }
};

// Particles initialised by cycling through the atoms of `init`; private
// stream keys derived from (seed, particle index).
ParticleEnsemble make_ensemble(const EmpiricalMeasure& init, int particles,
                               const GeneralModel& model,
                               std::shared_ptr<const NoisePath> common_w, uint64_t seed);

EmpiricalMeasure conditional_law(const ParticleEnsemble& ens);

// Action rule evaluated once per step from (t, conditional mean).  Only the
// feedback kind reads the mean, so policies are measurable with respect to
// the common-noise information by construction.
struct Policy {
  enum class Kind { zero, constant, feedback, jump_driven };
  Kind kind = Kind::zero;
  int q = 1;
  Vector a0;                                // constant kind
  std::shared_ptr<const LqSolution> sol;    // feedback kind
  double gain_scale = 1.0;                  // feedback kind: action multiplier
  std::shared_ptr<const JumpTrajectory> jumps;

  Vector action(double t, const Vector& mean) const;
  bool needs_mean() const { return kind == Kind::feedback; }

  static Policy zero(int q);
  static Policy constant(Vector a);
  static Policy feedback(std::shared_ptr<const LqSolution> sol, double gain_scale = 1.0);
  static Policy jump_driven(std::shared_ptr<const JumpTrajectory> jumps);
};

// Scratch buffers reused across steps (one per running simulation/thread).
struct StepWorkspace {
  Matrix dv, xn, tmp;
  Vector bc, gcol, b;
  Matrix sv, sw;
};

// One Euler step of the whole ensemble under the given action.  Reads the
// common increment at the ensemble's absolute step index, draws (or reads)
// the private increments at the same index, then advances t_index.
void ensemble_step(ParticleEnsemble& ens, const GeneralModel& model, const Vector& action,
                   StepWorkspace& ws);

using StepObserver =
    std::function<void(const ParticleEnsemble& ens, const Vector& action_applied)>;

// Advance n_steps without recording; observer (if any) runs after every step.
void propagate_steps(ParticleEnsemble& ens, const GeneralModel& model, const Policy& policy,
                     int n_steps, const StepObserver& observer = nullptr);

// Recorded run: state snapshot at every node plus each applied action.
struct EnsembleTrajectory {
  int start_index = 0;  // absolute step of snapshot 0
  double dt = 0.0;
  std::vector<Matrix> states;   // n_steps + 1 snapshots
  std::vector<Vector> actions;  // n_steps entries
};

EnsembleTrajectory propagate(ParticleEnsemble& ens, const GeneralModel& model,
                             const Policy& policy, int n_steps);

// Ensemble positioned at absolute step `theta` of a recorded run, private
// streams continuing the original per-particle streams.  Propagating it
// reproduces the direct run bit for bit.
ParticleEnsemble restart(const ParticleEnsemble& ens, const EnsembleTrajectory& traj, int theta);

// Same position, but fresh private streams drawn from `seed`: the restarted
// cloud now only approximates the direct one, at the sampling rate of the
// particle count.
ParticleEnsemble restart_decoupled(const ParticleEnsemble& ens, const EnsembleTrajectory& traj,
                                   int theta, uint64_t seed);

// Exact conditional mean/covariance recursion for additive-noise models
// (all D_v, D_w, F_v, F_w zero) under a zero or constant policy: the mean
// follows an Euler recursion on the same grid driven by the common
// increments, the covariance a Runge-Kutta Lyapunov integration.
struct GaussianFilterPath {
  std::vector<Vector> mean;  // per node
  std::vector<Matrix> cov;   // per node
};

GaussianFilterPath kalman_bucy(const LqModel& model, const NoisePath& w, const Policy& policy);

// Smooth test function with explicit first and second derivatives.
struct TestFunction {
  std::function<double(const Vector&)> value;
  std::function<void(const Vector&, Vector&)> gradient;
  std::function<void(const Vector&, Matrix&)> hessian;
};

// phi(x) = x'Ax + b'x + c with A symmetrised.
TestFunction quadratic_test(Matrix A, Vector b, double c);

// Weak-form defect of the recorded filter run against the test function:
//   r_k = rho_k[phi] - rho_0[phi]
//       - sum_{j<k} rho_j[drift . grad + (1/2) tr(sigma sigma' hess)] dt
//       - sum_{j<k} rho_j[sigma_w' grad] . dW_j
// evaluated with the recorded actions; returns r_0..r_K.
std::vector<double> zakai_residual(const EnsembleTrajectory& traj, const GeneralModel& model,
                                   const TestFunction& phi, const NoisePath& w);

}  // namespace poctrl
