#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "poctrl/hjb.hpp"
#include "poctrl/monte_carlo.hpp"

namespace poctrl {

// Self-contained verification studies.  Every suite carries its own pinned
// model instance and sample sizes, runs end to end from a seed, and reports
// named checks plus the CSV artifacts it produced.  The CLI fronts them; the
// determinism study reruns them at a different thread count and compares the
// artifact bytes.

struct CheckResult {
  std::string name;
  bool pass = false;
  double value = 0.0;      // measured statistic
  double threshold = 0.0;  // bound it was held against
  std::string detail;      // context: direction of the bound, sizes, etc.
};

struct Artifact {
  std::string name;  // file-style name, e.g. "hjb_residuals.csv"
  std::string csv;
};

struct SuiteReport {
  std::string suite;
  std::vector<CheckResult> checks;
  std::vector<Artifact> artifacts;
  double elapsed_s = 0.0;

  bool pass() const;
  std::string json() const;  // {"suite":..., "pass":..., "checks":[...], ...}
};

// Closed-form solution against an independent Riccati reference on an
// additive-noise two-state instance: the mean-quadratic coefficient must
// match a 16x finer independent integration, and the model value must match
// the classical estimate/control decomposition (Riccati plus noise-trace
// quadrature).
struct LqgSuiteParams {
  int grid_steps = 2000;       // solver grid; reference runs 16x finer
  double lambda_tol = 1e-8;    // max-norm over nodes
  double cost_rel_tol = 1e-6;  // relative value agreement
  int threads = 1;             // unused (serial study); kept for uniformity
};
SuiteReport verify_lqg(const LqgSuiteParams& params = {});

// Pointwise Bellman defect at random (t, measure) samples on a fully
// multiplicative instance, plus the tamper side: inflating the stored
// mean-quadratic coefficient by 10% must blow the residual up by orders of
// magnitude.
struct HjbSuiteParams {
  int grid_steps = 2000;
  int samples = 100;
  int max_atoms = 10;
  double tol_scale = 1e-9;        // bound: tol_scale * (1 + |w|)
  double tamper_factor = 1.1;
  double tamper_min_ratio = 1e3;  // tampered / clean residual inflation
  uint64_t seed = 2026;
  int threads = 1;  // unused (serial study); kept for uniformity
};
SuiteReport verify_hjb(const HjbSuiteParams& params = {});

// Particle filter against the exact Gaussian recursion on an additive scalar
// instance: per-path time-RMSE within the sampling envelope, and the error
// shrinking like 1/sqrt(particles) across three decades.
struct KalmanSuiteParams {
  int particles = 10000;
  double dt = 1e-3;
  int n_paths = 50;
  std::vector<int> scaling = {100, 1000, 10000};
  int scaling_paths = 10;
  double slope_tol = 0.15;  // fitted log-log slope within this of -1/2
  uint64_t seed = 5;
  int threads = 1;
};
SuiteReport verify_kalman(const KalmanSuiteParams& params = {});

// Flow property: restarting a recorded run at an interior node and
// propagating again reproduces the direct run exactly, bit for bit, on
// randomly drawn small instances under their own feedback policies.
struct FlowSuiteParams {
  int n_cases = 10;
  int particles = 64;
  int steps = 60;
  uint64_t seed = 11;
  int threads = 1;  // unused (serial study); kept for uniformity
};
SuiteReport verify_flow(const FlowSuiteParams& params = {});

// Weak-form filter dynamics under a jump-driven action path: the residual
// against quadratic test functions contracts by about 2 per grid halving
// with the noise realisation held fixed, and vanishes outright for linear
// and constant test functions.
struct ZakaiSuiteParams {
  int finest_steps = 1600;  // coarser levels at 1/2 and 1/4 of this
  int particles = 200;
  double factor_min = 1.8;
  double exact_tol = 1e-10;  // linear/constant rows, normalised
  uint64_t seed = 17;
  int threads = 1;  // unused (serial study); kept for uniformity
};
SuiteReport verify_zakai(const ZakaiSuiteParams& params = {});

// Nested Monte Carlo optimality: the feedback policy reproduces the solver
// value within noise plus the calibrated bias envelope, every perturbed
// policy costs at least as much (one-sided), and the zero policy is strictly
// separated.
struct GapSuiteParams {
  MCParams mc{2000, 500, 0.0, 23, 1, {}};
  double strict_sigma = 5.0;  // zero-policy separation in stderr units
};
SuiteReport verify_gap(const GapSuiteParams& params = {});

// Dynamic-programming drift along simulated paths: the cost-plus-value
// statistic is flat under the feedback policy at every checkpoint and drifts
// up under the zero policy.
struct MartingaleSuiteParams {
  MartingaleParams mart{200, 256, 200, 29, {}};
  MCParams envelope_mc{400, 256, 0.005, 29, 1, {}};  // dt matches mart grid
  double strict_sigma = 5.0;
  int threads = 1;  // envelope calibration only; drift study is serial
};
SuiteReport verify_martingale(const MartingaleSuiteParams& params = {});

// Point-process change of measure: thinned and density-weighted gain
// estimators agree for every tilt family, the density has unit mean over
// reference samples, and every randomized gain respects the one-sided bound
// by the negated optimal cost.
struct GirsanovSuiteParams {
  MCParams mc{400, 64, 0.0, 31, 1, {}};
  int kappa_samples = 100000;
  int kappa_grid = 250;  // bins for the frozen-tilt density
  double hi = 1.8, lo = 0.6;
};
SuiteReport verify_girsanov(const GirsanovSuiteParams& params = {});

}  // namespace poctrl
