#include "poctrl/jump_process.hpp"

#include <algorithm>

namespace poctrl {

void check_action_measure(const ActionMeasure& actions) {
  if (actions.n_actions() < 1) throw InvalidArgumentError("action measure: empty support");
  if (actions.weights.size() != actions.n_actions())
    throw InvalidArgumentError("action measure: weight count mismatch");
  if (!(actions.weights.minCoeff() > 0.0))
    throw InvalidArgumentError("action measure: weights must be positive");
  if (!actions.support.allFinite() || !actions.weights.allFinite())
    throw InvalidArgumentError("action measure: non-finite entries");
}

Vector jump_value(const JumpTrajectory& traj, double s) {
  const double span = std::max(1.0, traj.T - traj.t0);
  if (!(s >= traj.t0 - 1e-12 * span && s <= traj.T + 1e-12 * span))
    throw InvalidArgumentError("jump_value: time outside [t0, T]");
  // Last jump time <= s decides; before the first jump the initial action holds.
  int last = -1;
  for (size_t k = 0; k < traj.times.size() && traj.times[k] <= s; ++k) last = int(k);
  if (last < 0) return traj.a0;
  return traj.actions->support.col(traj.marks[last]);
}

JumpTrajectory jump_restart(const JumpTrajectory& traj, double theta) {
  JumpTrajectory out;
  out.t0 = theta;
  out.T = traj.T;
  out.actions = traj.actions;
  out.a0 = jump_value(traj, theta);
  for (size_t k = 0; k < traj.times.size(); ++k) {
    if (traj.times[k] > theta) {
      out.times.push_back(traj.times[k]);
      out.marks.push_back(traj.marks[k]);
    }
  }
  return out;
}

}  // namespace poctrl
