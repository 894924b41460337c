#pragma once

#include <memory>
#include <vector>

#include "poctrl/model.hpp"

namespace poctrl {

// Finite-support action measure: column k of `support` is an action in R^q,
// `weights` its (positive) reference intensity mass.
struct ActionMeasure {
  Matrix support;  // q x n_actions
  Vector weights;  // n_actions, positive

  int n_actions() const { return int(support.cols()); }
  int q() const { return int(support.rows()); }
  double total() const { return weights.sum(); }
};

void check_action_measure(const ActionMeasure& actions);

// Piecewise-constant action path: value a0 on [t0, times[0]), then
// support.col(marks[k]) on [times[k], times[k+1]), right-open throughout.
struct JumpTrajectory {
  double t0 = 0.0, T = 1.0;
  Vector a0;
  std::vector<double> times;  // strictly increasing, in (t0, T]
  std::vector<int> marks;     // indices into the support
  std::shared_ptr<const ActionMeasure> actions;
};

// Action in force at time s (throws outside [t0, T]).
Vector jump_value(const JumpTrajectory& traj, double s);

// Trajectory restarted at theta: initial action = value at theta, jumps
// strictly after theta kept.  The original and the restart agree on
// [theta, T] by construction.
JumpTrajectory jump_restart(const JumpTrajectory& traj, double theta);

}  // namespace poctrl
