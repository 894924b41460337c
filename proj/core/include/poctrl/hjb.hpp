#pragma once

#include <vector>

#include "poctrl/filter.hpp"
#include "poctrl/lq_solve.hpp"
#include "poctrl/measures.hpp"
#include "poctrl/model.hpp"

namespace poctrl {

// Derivatives of the quadratic value surface w(t, .) at (t, pi), in the
// lifted sense: a gradient per atom plus the two constant second-order
// blocks, and the time derivative.
struct LiftedDerivatives {
  Matrix d_pi;     // n x N: gradient of the first-order derivative at each atom
  Matrix dx_dpi;   // n x n: state derivative of d_pi (2K)
  Matrix d2_pi;    // n x n: second-order measure block (2(Lambda - K))
  double dt_w = 0.0;
};

// How the time derivative is obtained: ode_rhs reads the derivative of the
// stored coefficient curves (their Hermite slopes come from the equation
// right-hand sides); finite_diff differences the value itself.  The first is
// what the residual checks use; the second cross-validates it.
enum class DtMode { ode_rhs, finite_diff };

LiftedDerivatives lifted_derivatives(const LqSolution& sol, double t, const EmpiricalMeasure& pi,
                                     DtMode mode = DtMode::ode_rhs, double fd_step = 1e-5);

// Drift and noise-trace part of the generator applied to the value surface:
//   pi[b(.,a) . d_pi] + (1/2) pi[sum_i s_v_i' (2K) s_v_i + sum_j s_w_j' (2K) s_w_j]
double generator_L(const LqModel& model, const EmpiricalMeasure& pi, const Vector& a,
                   const LiftedDerivatives& der);

// Common-noise quadratic term.  The second-order block is constant, so the
// double integral factorises through the mean loading s_bar_j = pi[s_w_j]:
//   (1/2) sum_j s_bar_j' (2(Lambda - K)) s_bar_j
double generator_M(const LqModel& model, const EmpiricalMeasure& pi, const Vector& a,
                   const LiftedDerivatives& der);

// Inner minimisation: the closed-form feedback action, or a brute-force grid
// around it (21 points per dimension over +-5; diagnostic only).
enum class InfMode { closed_form, grid };

struct HjbResidualReport {
  double residual = 0.0;
  double value = 0.0;        // w(t, pi)
  double best_bracket = 0.0; // inf over actions of cost + generators
  Vector best_action;
};

// Pointwise Bellman defect of the stored solution at (t, pi):
//   residual = dt_w + inf_a { pi[x'Qx + a'Na] + generator_L + generator_M }.
// Zero (to interpolation order) when the stored curves solve the backward
// system; any corruption of the stored coefficients breaks the cancellation.
HjbResidualReport hjb_residual(const LqModel& model, const LqSolution& sol, double t,
                               const EmpiricalMeasure& pi,
                               InfMode action_search = InfMode::closed_form,
                               DtMode dt_mode = DtMode::ode_rhs);

// Dynamic-programming check along simulated filter paths: the accumulated
// running cost plus the value at the current filter state,
//   Z_t = sum_{steps before t} rho[f(., a)] dt + w(t, rho_t),
// has zero drift under the feedback policy and positive drift under any
// other, up to discretisation and particle bias.
struct MartingaleParams {
  int n_paths = 200;
  int particles = 256;
  int steps = 200;  // simulation grid: dt = T / steps
  uint64_t seed = 1;
  std::vector<double> checkpoints;  // times in (0, T]; empty = 5 even points
};

struct MartingaleReport {
  double z0 = 0.0;  // w(0, rho_0)
  std::vector<double> t;
  std::vector<double> drift;    // mean of Z_t - Z_0 across paths
  std::vector<double> std_err;  // standard error of that mean
};

MartingaleReport martingale_check(const LqSolution& sol, const Policy& policy,
                                  const MartingaleParams& params);

}  // namespace poctrl
