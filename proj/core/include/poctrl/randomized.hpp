#pragma once

#include <functional>
#include <memory>

#include "poctrl/filter.hpp"
#include "poctrl/jump_process.hpp"
#include "poctrl/lq_solve.hpp"
#include "poctrl/model.hpp"
#include "poctrl/monte_carlo.hpp"

namespace poctrl {

// Bounded positive intensity tilt nu(s, mark index) relative to the reference
// weights.  State-dependent tilts additionally read the current particle
// mean; they are predictable because the simulation evaluates them at bin
// left endpoints.
struct IntensityControl {
  double nu_min = 1.0, nu_max = 1.0;
  bool state_dependent = false;
  std::function<double(double s, int a_index, const Vector& mean)> nu;

  // nu == c on every mark.
  static IntensityControl uniform(double c);
  // hi on the support action nearest the feedback action at (s, mean),
  // lo on all others: mass concentrates on the closed-form feedback.
  static IntensityControl concentrate(std::shared_ptr<const LqSolution> sol,
                                      std::shared_ptr<const ActionMeasure> actions, double hi,
                                      double lo);
};

void check_intensity(const IntensityControl& nu);

// Marked point process on (t, T] under the tilted law, by thinning a
// candidate stream of rate nu_max * total: accept at s with probability
// sum_a nu(s,a) weight(a) / (nu_max * total), mark proportionally to
// nu(s,.) weight(.).  nu == 1 samples the reference law itself.  Only
// state-free tilts: the state-coupled case lives inside randomized_gain.
JumpTrajectory sample_jump_process(std::shared_ptr<const ActionMeasure> lambda,
                                   const IntensityControl& nu, double t, double T,
                                   const Vector& a0, uint64_t seed);

// Density of the tilted law against the reference law on [t, T]:
//   kappa = exp(-int_t^T sum_a (nu_r(a) - 1) weight(a) dr) * prod_n nu(T_n, A_n),
// with nu frozen at the left endpoints of a uniform grid of `grid_steps`
// bins — the same predictable discretisation the gain estimators use, and
// exact for tilts constant on the bins.  Requires a reference-law trajectory.
double doleans_weight(const JumpTrajectory& traj, const IntensityControl& nu, double t, double T,
                      int grid_steps);

struct GainEstimate {
  double estimate = 0.0;
  double std_err = 0.0;
};

struct RandomizedGain {
  GainEstimate direct;    // jumps sampled under the tilted law
  GainEstimate weighted;  // reference jumps, payoffs weighted by kappa
  int n_outer = 0, n_inner = 0;
  double dt = 0.0;
  uint64_t seed = 0;
};

// Randomized gain J(pi, a0, nu): expected accumulated running gain plus
// terminal gain (gain convention) of the filter driven by the jump action
// path, estimated two interchangeable ways.  Per replicate the two
// estimators share the common path and the private streams and differ only
// in the jump stream, so their agreement isolates the change of measure.
RandomizedGain randomized_gain(const GeneralModel& model, const EmpiricalMeasure& pi,
                               const Vector& a0, std::shared_ptr<const ActionMeasure> lambda,
                               const IntensityControl& nu, const MCParams& mc);

}  // namespace poctrl
