#pragma once

#include <string>
#include <utility>
#include <vector>

#include "poctrl/filter.hpp"
#include "poctrl/lq_solve.hpp"
#include "poctrl/model.hpp"

namespace poctrl {

struct MCParams {
  int n_outer = 2000;  // independent common-noise paths
  int n_inner = 500;   // particles per path
  double dt = 0.0;     // 0: model.T / 250
  uint64_t seed = 7;
  int threads = 1;
  std::vector<double> checkpoints;  // optional, consumed by path-level checks
};

struct CostEstimate {
  double estimate = 0.0;
  double std_err = 0.0;
  int n_outer = 0, n_inner = 0;
  double dt = 0.0;
  uint64_t seed = 0;
};

// Nested Monte Carlo cost of a policy: outer average over common-noise
// paths of the particle-averaged running cost (left-endpoint rule) plus
// terminal cost.  Bit-identical for fixed inputs at any thread count.
CostEstimate evaluate_policy(const LqModel& model, const Policy& policy, const MCParams& mc);

// Additive error model  bias <= c1 * dt + c2 / sqrt(n_inner)  with constants
// fitted by Richardson runs at (dt/2) and (2 * n_inner); statistical noise in
// the fits is folded into the constants so the bound errs on the wide side.
struct BiasEnvelope {
  double c1 = 0.0;
  double c2 = 0.0;
  double bound(double dt, int n_inner) const;
};

BiasEnvelope calibrate_envelope(const LqModel& model, const Policy& policy, const MCParams& mc);

struct GapRow {
  std::string policy_id;
  CostEstimate cost;
  double gap = 0.0;            // estimate - optimal_cost
  bool lower_bound_ok = true;  // gap >= -3 stderr - envelope
};

struct GapReport {
  double optimal_cost = 0.0;
  BiasEnvelope envelope;
  std::vector<GapRow> rows;
  bool all_lower_bounds_ok = true;
};

// Cost of each labelled policy against the closed-form optimum: no policy
// may undercut it beyond noise plus the calibrated bias.
GapReport optimality_gap(const LqModel& model, const LqSolution& sol,
                         const std::vector<std::pair<std::string, Policy>>& perturbations,
                         const MCParams& mc);

std::string gap_report_csv(const GapReport& report);

}  // namespace poctrl
