#include "poctrl/lq_solve.hpp"

#include <cmath>
#include <limits>

#include "poctrl/csv.hpp"

namespace poctrl {

FeedbackCoefficients gain_coefficients(const LqModel& model, const Matrix& k,
                                       const Matrix& ell, const Vector& y) {
  FeedbackCoefficients co;
  co.Gamma = model.N;
  co.U = ell * model.C;
  co.R = model.C.transpose() * y;
  for (int i = 0; i < model.m; ++i) {
    co.Gamma.noalias() += model.F_v[i].transpose() * k * model.F_v[i];
    co.U.noalias() += model.D_v[i].transpose() * k * model.F_v[i];
    co.R.noalias() += 2.0 * model.F_v[i].transpose() * (k * model.gamma_v[i]);
  }
  for (int j = 0; j < model.d; ++j) {
    co.Gamma.noalias() += model.F_w[j].transpose() * ell * model.F_w[j];
    co.U.noalias() += model.D_w[j].transpose() * ell * model.F_w[j];
    co.R.noalias() += 2.0 * model.F_w[j].transpose() * (ell * model.gamma_w[j]);
  }
  co.Gamma = sym(co.Gamma);
  return co;
}

Matrix inv_gamma(const Matrix& gamma, double* min_eig) {
  if (!gamma.allFinite()) throw NonFiniteError("gamma: non-finite entries");
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym(gamma));
  const Vector& ev = es.eigenvalues();
  const double lo = ev.minCoeff();
  const double norm = std::max(std::abs(ev.minCoeff()), std::abs(ev.maxCoeff()));
  if (min_eig) *min_eig = std::min(*min_eig, lo);
  if (!(lo > 0.0) || lo <= kGammaFloorRel * norm)
    throw GammaSingularError("gamma: smallest eigenvalue " + fmt17(lo) +
                             " under the positivity floor");
  return es.eigenvectors() * ev.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
}

Matrix coeff_rate_K(const LqModel& mo, const Matrix& K) {
  Matrix s = mo.Q;
  s.noalias() += K * mo.B;
  s.noalias() += mo.B.transpose() * K;
  for (int i = 0; i < mo.m; ++i) s.noalias() += mo.D_v[i].transpose() * K * mo.D_v[i];
  for (int j = 0; j < mo.d; ++j) s.noalias() += mo.D_w[j].transpose() * K * mo.D_w[j];
  return -s;
}

Matrix coeff_rate_Lambda(const LqModel& mo, const Matrix& K, const Matrix& L, double* gmin) {
  Matrix s = mo.Q;
  s.noalias() += L * mo.B;
  s.noalias() += mo.B.transpose() * L;
  for (int i = 0; i < mo.m; ++i) s.noalias() += mo.D_v[i].transpose() * K * mo.D_v[i];
  for (int j = 0; j < mo.d; ++j) s.noalias() += mo.D_w[j].transpose() * L * mo.D_w[j];
  const FeedbackCoefficients co = gain_coefficients(mo, K, L, Vector::Zero(mo.n));
  const Matrix gi = inv_gamma(co.Gamma, gmin);
  s.noalias() -= co.U * gi * co.U.transpose();
  return -s;
}

Vector coeff_rate_Y(const LqModel& mo, const Matrix& K, const Matrix& L, const Vector& Y,
                    double* gmin) {
  Vector s = mo.B.transpose() * Y;
  s.noalias() += 2.0 * (L * mo.b0);
  for (int i = 0; i < mo.m; ++i) s.noalias() += 2.0 * mo.D_v[i].transpose() * (K * mo.gamma_v[i]);
  for (int j = 0; j < mo.d; ++j) s.noalias() += 2.0 * mo.D_w[j].transpose() * (L * mo.gamma_w[j]);
  const FeedbackCoefficients co = gain_coefficients(mo, K, L, Y);
  const Matrix gi = inv_gamma(co.Gamma, gmin);
  s.noalias() -= co.U * (gi * co.R);
  return -s;
}

static double chi_integrand(const LqModel& mo, const Matrix& K, const Matrix& L, const Vector& Y,
                            double* gmin) {
  double s = Y.dot(mo.b0);
  for (int i = 0; i < mo.m; ++i) s += mo.gamma_v[i].dot(K * mo.gamma_v[i]);
  for (int j = 0; j < mo.d; ++j) s += mo.gamma_w[j].dot(L * mo.gamma_w[j]);
  const FeedbackCoefficients co = gain_coefficients(mo, K, L, Y);
  const Matrix gi = inv_gamma(co.Gamma, gmin);
  s -= 0.25 * co.R.dot(gi * co.R);
  return s;
}

double coeff_rate_chi(const LqModel& mo, const Matrix& k, const Matrix& ell, const Vector& y,
                      double* gamma_min) {
  return -chi_integrand(mo, k, ell, y, gamma_min);
}

namespace {

void check_finite(const Matrix& a, const char* what) {
  if (!a.allFinite()) throw NonFiniteError(std::string(what) + ": non-finite node");
}

}  // namespace

LqSolution solve_backward(const LqModel& model, double dt) {
  check_dimensions(model);
  const ValidationReport rep = validate_lq(model);
  if (!rep.ok())
    throw ValidationError(std::string("model rejected: c1=") + (rep.c1_holds ? "ok" : "fail") +
                          ", c2=" + c2_branch_name(rep.c2_branch));

  LqSolution sol;
  sol.model = model;
  sol.model.Q = sym(model.Q);
  sol.model.P = sym(model.P);
  sol.model.N = sym(model.N);
  const LqModel& mo = sol.model;

  if (dt <= 0.0) dt = mo.T / 2000.0;
  sol.steps = std::max(1, int(std::llround(mo.T / dt)));
  sol.dt = mo.T / sol.steps;
  const int M = sol.steps;
  const double h = sol.dt;

  sol.gamma_min = std::numeric_limits<double>::infinity();
  double* gmin = &sol.gamma_min;

  sol.K.assign(M + 1, Matrix());
  sol.Lambda.assign(M + 1, Matrix());
  sol.Y.assign(M + 1, Vector());
  sol.chi.assign(M + 1, 0.0);

  // K: linear backward equation, self-contained.
  sol.K[M] = mo.P;
  for (int i = M - 1; i >= 0; --i) {
    const Matrix& kb = sol.K[i + 1];
    const Matrix g1 = -coeff_rate_K(mo, kb);
    const Matrix g2 = -coeff_rate_K(mo, sym(kb + 0.5 * h * g1));
    const Matrix g3 = -coeff_rate_K(mo, sym(kb + 0.5 * h * g2));
    const Matrix g4 = -coeff_rate_K(mo, sym(kb + h * g3));
    sol.K[i] = sym(kb + (h / 6.0) * (g1 + 2.0 * g2 + 2.0 * g3 + g4));
    check_finite(sol.K[i], "K");
  }

  // Lambda: Riccati equation reading the already-solved K at stage times.
  // Midpoint reads use the Hermite-corrected average (node values plus the
  // equation slopes), which keeps the stage coupling at Runge-Kutta order.
  sol.Lambda[M] = mo.P;
  for (int i = M - 1; i >= 0; --i) {
    const Matrix& lb = sol.Lambda[i + 1];
    const Matrix dK0 = coeff_rate_K(mo, sol.K[i]), dK1 = coeff_rate_K(mo, sol.K[i + 1]);
    const Matrix k_mid = sym(0.5 * (sol.K[i] + sol.K[i + 1]) + (h / 8.0) * (dK0 - dK1));
    const Matrix g1 = -coeff_rate_Lambda(mo, sol.K[i + 1], lb, gmin);
    const Matrix g2 = -coeff_rate_Lambda(mo, k_mid, sym(lb + 0.5 * h * g1), gmin);
    const Matrix g3 = -coeff_rate_Lambda(mo, k_mid, sym(lb + 0.5 * h * g2), gmin);
    const Matrix g4 = -coeff_rate_Lambda(mo, sol.K[i], sym(lb + h * g3), gmin);
    sol.Lambda[i] = sym(lb + (h / 6.0) * (g1 + 2.0 * g2 + 2.0 * g3 + g4));
    check_finite(sol.Lambda[i], "Lambda");
  }

  // Y: linear backward equation with K- and Lambda-dependent forcing, the
  // stage coupling read through the same corrected midpoints.
  sol.Y[M] = Vector::Zero(mo.n);
  for (int i = M - 1; i >= 0; --i) {
    const Vector& yb = sol.Y[i + 1];
    const Matrix dK0 = coeff_rate_K(mo, sol.K[i]), dK1 = coeff_rate_K(mo, sol.K[i + 1]);
    const Matrix dL0 = coeff_rate_Lambda(mo, sol.K[i], sol.Lambda[i], gmin);
    const Matrix dL1 = coeff_rate_Lambda(mo, sol.K[i + 1], sol.Lambda[i + 1], gmin);
    const Matrix k_mid = sym(0.5 * (sol.K[i] + sol.K[i + 1]) + (h / 8.0) * (dK0 - dK1));
    const Matrix l_mid = sym(0.5 * (sol.Lambda[i] + sol.Lambda[i + 1]) + (h / 8.0) * (dL0 - dL1));
    const Vector g1 = -coeff_rate_Y(mo, sol.K[i + 1], sol.Lambda[i + 1], yb, gmin);
    const Vector g2 = -coeff_rate_Y(mo, k_mid, l_mid, yb + 0.5 * h * g1, gmin);
    const Vector g3 = -coeff_rate_Y(mo, k_mid, l_mid, yb + 0.5 * h * g2, gmin);
    const Vector g4 = -coeff_rate_Y(mo, sol.K[i], sol.Lambda[i], yb + h * g3, gmin);
    sol.Y[i] = yb + (h / 6.0) * (g1 + 2.0 * g2 + 2.0 * g3 + g4);
    if (!sol.Y[i].allFinite()) throw NonFiniteError("Y: non-finite node");
  }

  // chi: cumulative Simpson per interval.  Midpoint states come from cubic
  // Hermite interpolation with the exact node derivatives, keeping the
  // quadrature at the order of the Runge-Kutta stages.
  std::vector<double> psi(M + 1);
  for (int i = 0; i <= M; ++i)
    psi[i] = chi_integrand(mo, sol.K[i], sol.Lambda[i], sol.Y[i], gmin);
  sol.chi[M] = 0.0;
  for (int i = M - 1; i >= 0; --i) {
    const Matrix dK0 = coeff_rate_K(mo, sol.K[i]), dK1 = coeff_rate_K(mo, sol.K[i + 1]);
    const Matrix dL0 = coeff_rate_Lambda(mo, sol.K[i], sol.Lambda[i], gmin);
    const Matrix dL1 = coeff_rate_Lambda(mo, sol.K[i + 1], sol.Lambda[i + 1], gmin);
    const Vector dY0 = coeff_rate_Y(mo, sol.K[i], sol.Lambda[i], sol.Y[i], gmin);
    const Vector dY1 = coeff_rate_Y(mo, sol.K[i + 1], sol.Lambda[i + 1], sol.Y[i + 1], gmin);
    const Matrix k_mid = sym(0.5 * (sol.K[i] + sol.K[i + 1]) + (h / 8.0) * (dK0 - dK1));
    const Matrix l_mid = sym(0.5 * (sol.Lambda[i] + sol.Lambda[i + 1]) + (h / 8.0) * (dL0 - dL1));
    const Vector y_mid = 0.5 * (sol.Y[i] + sol.Y[i + 1]) + (h / 8.0) * (dY0 - dY1);
    const double psi_mid = chi_integrand(mo, k_mid, l_mid, y_mid, gmin);
    sol.chi[i] = sol.chi[i + 1] + (h / 6.0) * (psi[i] + 4.0 * psi_mid + psi[i + 1]);
    if (!std::isfinite(sol.chi[i])) throw NonFiniteError("chi: non-finite node");
  }

  // Node derivatives for Hermite evaluation and residual checks.
  sol.dK.assign(M + 1, Matrix());
  sol.dLambda.assign(M + 1, Matrix());
  sol.dY.assign(M + 1, Vector());
  sol.dchi.assign(M + 1, 0.0);
  for (int i = 0; i <= M; ++i) {
    sol.dK[i] = coeff_rate_K(mo, sol.K[i]);
    sol.dLambda[i] = coeff_rate_Lambda(mo, sol.K[i], sol.Lambda[i], gmin);
    sol.dY[i] = coeff_rate_Y(mo, sol.K[i], sol.Lambda[i], sol.Y[i], gmin);
    sol.dchi[i] = -psi[i];
  }

  // Positivity diagnostics over the grid.
  double mk = std::numeric_limits<double>::infinity();
  double ml = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= M; ++i) {
    Eigen::SelfAdjointEigenSolver<Matrix> ek(sol.K[i]);
    Eigen::SelfAdjointEigenSolver<Matrix> el(sol.Lambda[i]);
    mk = std::min(mk, ek.eigenvalues().minCoeff());
    ml = std::min(ml, el.eigenvalues().minCoeff());
  }
  sol.min_eig_K = mk;
  sol.min_eig_Lambda = ml;
  return sol;
}

namespace {

struct GridPos {
  int i;      // left node
  double w;   // interpolation weight toward node i+1
};

GridPos locate(const LqSolution& sol, double t) {
  const double T = sol.model.T;
  if (!(t >= -1e-12 * std::max(1.0, T) && t <= T * (1.0 + 1e-12)))
    throw InvalidArgumentError("eval_at: time outside [0, T]");
  double s = std::min(std::max(t, 0.0), T);
  int i = std::min(int(s / sol.dt), sol.steps - 1);
  double w = s / sol.dt - i;
  if (w < 0.0) w = 0.0;
  if (w > 1.0) w = 1.0;
  return {i, w};
}

}  // namespace

LqPoint eval_at(const LqSolution& sol, double t) {
  const GridPos p = locate(sol, t);
  const int i = p.i;
  const double s = p.w, h = sol.dt;
  const double c0 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
  const double c1 = h * s * (1.0 - s) * (1.0 - s);
  const double c2 = s * s * (3.0 - 2.0 * s);
  const double c3 = h * s * s * (s - 1.0);
  LqPoint out;
  out.K = c0 * sol.K[i] + c1 * sol.dK[i] + c2 * sol.K[i + 1] + c3 * sol.dK[i + 1];
  out.Lambda =
      c0 * sol.Lambda[i] + c1 * sol.dLambda[i] + c2 * sol.Lambda[i + 1] + c3 * sol.dLambda[i + 1];
  out.Y = c0 * sol.Y[i] + c1 * sol.dY[i] + c2 * sol.Y[i + 1] + c3 * sol.dY[i + 1];
  out.chi = c0 * sol.chi[i] + c1 * sol.dchi[i] + c2 * sol.chi[i + 1] + c3 * sol.dchi[i + 1];
  return out;
}

LqPoint eval_rate_at(const LqSolution& sol, double t) {
  const GridPos p = locate(sol, t);
  const int i = p.i;
  const double s = p.w, h = sol.dt;
  const double c0 = 6.0 * s * (s - 1.0) / h;
  const double c1 = (3.0 * s - 1.0) * (s - 1.0);
  const double c2 = -c0;
  const double c3 = s * (3.0 * s - 2.0);
  LqPoint out;
  out.K = c0 * sol.K[i] + c1 * sol.dK[i] + c2 * sol.K[i + 1] + c3 * sol.dK[i + 1];
  out.Lambda =
      c0 * sol.Lambda[i] + c1 * sol.dLambda[i] + c2 * sol.Lambda[i + 1] + c3 * sol.dLambda[i + 1];
  out.Y = c0 * sol.Y[i] + c1 * sol.dY[i] + c2 * sol.Y[i + 1] + c3 * sol.dY[i + 1];
  out.chi = c0 * sol.chi[i] + c1 * sol.dchi[i] + c2 * sol.chi[i + 1] + c3 * sol.dchi[i + 1];
  return out;
}

Vector optimal_action(const LqSolution& sol, double t, const Vector& mean) {
  if (mean.size() != sol.model.n) throw InvalidArgumentError("optimal_action: mean size mismatch");
  const LqPoint pt = eval_at(sol, t);
  const FeedbackCoefficients co = gain_coefficients(sol.model, pt.K, pt.Lambda, pt.Y);
  const Matrix gi = inv_gamma(co.Gamma);
  return -(gi * (co.U.transpose() * mean + 0.5 * co.R));
}

double value(const LqSolution& sol, double t, const EmpiricalMeasure& pi) {
  if (pi.dim() != sol.model.n) throw InvalidArgumentError("value: measure dimension mismatch");
  const LqPoint pt = eval_at(sol, t);
  return quad_var(pi, pt.K) + v2(pi, pt.Lambda) + v1(pi, pt.Y) + pt.chi;
}

double optimal_cost(const LqSolution& sol) {
  const Vector& x0 = sol.model.x0;
  return x0.dot(sol.Lambda[0] * x0) + sol.Y[0].dot(x0) + sol.chi[0];
}

std::string solution_csv(const LqSolution& sol) {
  const int n = sol.model.n;
  CsvWriter csv;
  std::vector<std::string> head{"t"};
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) head.push_back("K_" + std::to_string(r) + std::to_string(c));
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) head.push_back("Lambda_" + std::to_string(r) + std::to_string(c));
  for (int r = 0; r < n; ++r) head.push_back("Y_" + std::to_string(r));
  head.push_back("chi");
  csv.header(head);
  for (int i = 0; i <= sol.steps; ++i) {
    csv.cell(i * sol.dt);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) csv.cell(sol.K[i](r, c));
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) csv.cell(sol.Lambda[i](r, c));
    for (int r = 0; r < n; ++r) csv.cell(sol.Y[i](r));
    csv.cell(sol.chi[i]);
    csv.endrow();
  }
  return csv.text;
}

}  // namespace poctrl
