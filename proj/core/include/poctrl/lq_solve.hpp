#pragma once

#include <string>
#include <vector>

#include "poctrl/measures.hpp"
#include "poctrl/model.hpp"

namespace poctrl {

// Relative floor on the smallest eigenvalue of the action-weight matrix.
// Below it the solver raises GammaSingularError instead of regularizing.
constexpr double kGammaFloorRel = 1e-10;

// Coefficients of the per-action quadratic  a'Gamma a + (2 U' mean + R)' a
// appearing in the pointwise minimisation.
struct FeedbackCoefficients {
  Matrix Gamma;  // q x q, symmetric
  Matrix U;      // n x q
  Vector R;      // q
};

FeedbackCoefficients gain_coefficients(const LqModel& model, const Matrix& k,
                                       const Matrix& ell, const Vector& y);

// Inverse through a symmetric eigendecomposition, guarded by the relative
// floor; optionally reports the smallest eigenvalue seen.
Matrix inv_gamma(const Matrix& gamma, double* min_eig = nullptr);

// Forward-time derivatives of the solution coefficients at the given values.
// The backward integrator steps their negatives; the residual checks read
// them as the time derivative of the value surface.  `gamma_min`, when
// given, accumulates the smallest eigenvalue seen in the minimisations.
Matrix coeff_rate_K(const LqModel& model, const Matrix& k);
Matrix coeff_rate_Lambda(const LqModel& model, const Matrix& k, const Matrix& ell,
                         double* gamma_min = nullptr);
Vector coeff_rate_Y(const LqModel& model, const Matrix& k, const Matrix& ell, const Vector& y,
                    double* gamma_min = nullptr);
double coeff_rate_chi(const LqModel& model, const Matrix& k, const Matrix& ell, const Vector& y,
                      double* gamma_min = nullptr);

// Backward-in-time solution of the four-component ODE system defining the
// quadratic value surface
//   w(t, pi) = quad_var(pi, K(t)) + v2(pi, Lambda(t)) + v1(pi, Y(t)) + chi(t)
// on the uniform grid t_i = i * dt.
struct LqSolution {
  LqModel model;
  double dt = 0.0;
  int steps = 0;
  std::vector<Matrix> K;       // steps+1 nodes, n x n
  std::vector<Matrix> Lambda;  // steps+1 nodes, n x n
  std::vector<Vector> Y;       // steps+1 nodes, n
  std::vector<double> chi;     // steps+1 nodes

  // Forward-time derivatives at the nodes, from the equation right-hand
  // sides.  They make evaluation between nodes cubic Hermite and give the
  // residual checks the curve's derivative rather than a re-derived one.
  std::vector<Matrix> dK, dLambda;
  std::vector<Vector> dY;
  std::vector<double> dchi;

  // Diagnostics gathered during the solve.
  double gamma_min = 0.0;       // min eigenvalue of Gamma over all evaluations
  double min_eig_K = 0.0;       // min eigenvalue of K over the grid
  double min_eig_Lambda = 0.0;  // min eigenvalue of Lambda over the grid
};

// Fixed-step classical Runge-Kutta in reversed time; K first, then Lambda
// (reading K through linear interpolation at stage times), then Y, then the
// scalar component by Simpson quadrature.  Refuses models that fail
// validate_lq.  Default step: T / 2000.
LqSolution solve_backward(const LqModel& model, double dt = 0.0);

struct LqPoint {
  Matrix K, Lambda;
  Vector Y;
  double chi = 0.0;
};

// Cubic Hermite interpolation between grid nodes; t must lie in [0, T].
LqPoint eval_at(const LqSolution& sol, double t);

// Time derivative of the same Hermite interpolant, so eval_rate_at is
// exactly d/dt of eval_at between nodes and the stored rates at the nodes.
LqPoint eval_rate_at(const LqSolution& sol, double t);

// Pointwise minimiser of the action quadratic at (t, mean).
Vector optimal_action(const LqSolution& sol, double t, const Vector& mean);

// Value surface at (t, pi), in cost convention.
double value(const LqSolution& sol, double t, const EmpiricalMeasure& pi);

// Value at (0, dirac(x0)): x0' Lambda(0) x0 + Y(0)' x0 + chi(0).
double optimal_cost(const LqSolution& sol);

// One row per grid node: t, K row-major, Lambda row-major, Y, chi; 17
// significant digits throughout.
std::string solution_csv(const LqSolution& sol);

}  // namespace poctrl
