#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <poctrl/lq_solve.hpp>
#include <poctrl/rng.hpp>

using namespace poctrl;

namespace {

LqModel scalar_model() {
  LqModel mo;
  mo.n = mo.m = mo.d = mo.q = 1;
  mo.T = 1.0;
  mo.b0 = Vector::Constant(1, 0.1);
  mo.B = Matrix::Constant(1, 1, 0.5);
  mo.C = Matrix::Constant(1, 1, 1.0);
  mo.gamma_v = {Vector::Constant(1, 0.3)};
  mo.D_v = {Matrix::Constant(1, 1, 0.2)};
  mo.F_v = {Matrix::Constant(1, 1, 0.1)};
  mo.gamma_w = {Vector::Constant(1, 0.2)};
  mo.D_w = {Matrix::Constant(1, 1, 0.15)};
  mo.F_w = {Matrix::Constant(1, 1, 0.05)};
  mo.Q = Matrix::Constant(1, 1, 1.0);
  mo.N = Matrix::Constant(1, 1, 0.2);
  mo.P = Matrix::Constant(1, 1, 1.0);
  mo.x0 = Vector::Constant(1, 1.0);
  finalize(mo);
  return mo;
}

// Loop evaluation of the feedback coefficients, channel by channel.
FeedbackCoefficients loop_coefficients(const LqModel& mo, const Matrix& k, const Matrix& ell,
                                       const Vector& y) {
  FeedbackCoefficients co;
  co.Gamma = mo.N;
  co.U = ell * mo.C;
  co.R = mo.C.transpose() * y;
  for (int i = 0; i < mo.m; ++i) {
    co.Gamma += mo.F_v[size_t(i)].transpose() * k * mo.F_v[size_t(i)];
    co.U += mo.D_v[size_t(i)].transpose() * k * mo.F_v[size_t(i)];
    co.R += 2.0 * mo.F_v[size_t(i)].transpose() * k * mo.gamma_v[size_t(i)];
  }
  for (int j = 0; j < mo.d; ++j) {
    co.Gamma += mo.F_w[size_t(j)].transpose() * ell * mo.F_w[size_t(j)];
    co.U += mo.D_w[size_t(j)].transpose() * ell * mo.F_w[size_t(j)];
    co.R += 2.0 * mo.F_w[size_t(j)].transpose() * ell * mo.gamma_w[size_t(j)];
  }
  return co;
}

double max_node_gap(const LqSolution& a, const LqSolution& b) {
  // Both grids share node 0 (time zero); compare the full tuple there.
  double gap = (a.K.front() - b.K.front()).cwiseAbs().maxCoeff();
  gap = std::max(gap, (a.Lambda.front() - b.Lambda.front()).cwiseAbs().maxCoeff());
  gap = std::max(gap, (a.Y.front() - b.Y.front()).cwiseAbs().maxCoeff());
  gap = std::max(gap, std::fabs(a.chi.front() - b.chi.front()));
  return gap;
}

}  // namespace

TEST_CASE("feedback coefficients: hand-checked scalar case") {
  LqModel mo;
  mo.n = mo.m = mo.d = mo.q = 1;
  mo.b0 = Vector::Zero(1);
  mo.B = Matrix::Zero(1, 1);
  mo.C = Matrix::Constant(1, 1, 1.0);
  mo.gamma_v = {Vector::Constant(1, 1.0)};
  mo.D_v = {Matrix::Constant(1, 1, 1.0)};
  mo.F_v = {Matrix::Constant(1, 1, 1.0)};
  mo.gamma_w = {Vector::Constant(1, 1.0)};
  mo.D_w = {Matrix::Constant(1, 1, 1.0)};
  mo.F_w = {Matrix::Constant(1, 1, 1.0)};
  mo.Q = mo.P = Matrix::Identity(1, 1);
  mo.N = Matrix::Constant(1, 1, 1.0);
  mo.x0 = Vector::Zero(1);
  finalize(mo);

  const Matrix k = Matrix::Constant(1, 1, 2.0);
  const Matrix ell = Matrix::Constant(1, 1, 3.0);
  const Vector y = Vector::Constant(1, 4.0);
  const FeedbackCoefficients co = gain_coefficients(mo, k, ell, y);
  // Gamma = N + k F_v^2 + ell F_w^2 = 1 + 2 + 3; U = k D_v F_v + ell D_w F_w
  // + ell C = 2 + 3 + 3; R = 2 k F_v gamma_v + 2 ell F_w gamma_w + C y.
  CHECK(co.Gamma(0, 0) == doctest::Approx(6.0).epsilon(1e-15));
  CHECK(co.U(0, 0) == doctest::Approx(8.0).epsilon(1e-15));
  CHECK(co.R(0) == doctest::Approx(14.0).epsilon(1e-15));
}

TEST_CASE("feedback coefficients: degenerate specializations") {
  const LqModel mo = scalar_model();

  const FeedbackCoefficients zero =
      gain_coefficients(mo, Matrix::Zero(1, 1), Matrix::Zero(1, 1), Vector::Zero(1));
  CHECK(zero.Gamma(0, 0) == mo.N(0, 0));
  CHECK(zero.U(0, 0) == 0.0);
  CHECK(zero.R(0) == 0.0);

  // Additive-noise model: only the ell C and C'y terms survive.
  LqModel add = mo;
  add.D_v[0].setZero();
  add.F_v[0].setZero();
  add.D_w[0].setZero();
  add.F_w[0].setZero();
  const Matrix k = Matrix::Constant(1, 1, 1.7);
  const Matrix ell = Matrix::Constant(1, 1, 0.9);
  const Vector y = Vector::Constant(1, -0.3);
  const FeedbackCoefficients co = gain_coefficients(add, k, ell, y);
  CHECK(co.Gamma(0, 0) == doctest::Approx(add.N(0, 0)).epsilon(1e-15));
  CHECK(co.U(0, 0) == doctest::Approx((ell * add.C)(0, 0)).epsilon(1e-15));
  CHECK(co.R(0) == doctest::Approx((add.C.transpose() * y)(0)).epsilon(1e-15));
}

TEST_CASE("feedback coefficients match a loop evaluator on a dense instance") {
  LqModel mo;
  mo.n = 3;
  mo.m = 2;
  mo.d = 2;
  mo.q = 2;
  UniformCursor cur{derive(21, kTagExperiment), 0};
  auto mat = [&](int r, int c, double s) {
    Matrix out(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) out(i, j) = s * (cur.next() - 0.5);
    return out;
  };
  mo.b0 = mat(3, 1, 0.5);
  mo.B = mat(3, 3, 0.8);
  mo.C = mat(3, 2, 0.7);
  for (int i = 0; i < 2; ++i) {
    mo.gamma_v.push_back(mat(3, 1, 0.5));
    mo.D_v.push_back(mat(3, 3, 0.4));
    mo.F_v.push_back(mat(3, 2, 0.4));
    mo.gamma_w.push_back(mat(3, 1, 0.5));
    mo.D_w.push_back(mat(3, 3, 0.4));
    mo.F_w.push_back(mat(3, 2, 0.4));
  }
  mo.Q = Matrix::Identity(3, 3);
  mo.P = 0.5 * Matrix::Identity(3, 3);
  mo.N = 0.5 * Matrix::Identity(2, 2);
  mo.x0 = mat(3, 1, 1.0);
  finalize(mo);

  for (int rep = 0; rep < 4; ++rep) {
    Matrix kroot = mat(3, 3, 1.0), lroot = mat(3, 3, 1.0);
    const Matrix k = kroot.transpose() * kroot;
    const Matrix ell = lroot.transpose() * lroot;
    const Vector y = mat(3, 1, 2.0);
    const FeedbackCoefficients got = gain_coefficients(mo, k, ell, y);
    const FeedbackCoefficients want = loop_coefficients(mo, k, ell, y);
    CHECK((got.Gamma - want.Gamma).cwiseAbs().maxCoeff() <= 1e-13);
    CHECK((got.U - want.U).cwiseAbs().maxCoeff() <= 1e-13);
    CHECK((got.R - want.R).cwiseAbs().maxCoeff() <= 1e-13);
    CHECK((got.Gamma - got.Gamma.transpose()).norm() <= 1e-13);
  }
}

TEST_CASE("pointwise minimiser: hand value and grid cross-check") {
  // Constant-coefficient surface chosen so Gamma = 2, U = 4, R = 6.
  LqModel mo;
  mo.n = mo.m = mo.d = mo.q = 1;
  mo.b0 = Vector::Zero(1);
  mo.B = Matrix::Zero(1, 1);
  mo.C = Matrix::Constant(1, 1, 1.0);
  mo.gamma_v = {Vector::Zero(1)};
  mo.D_v = {Matrix::Zero(1, 1)};
  mo.F_v = {Matrix::Zero(1, 1)};
  mo.gamma_w = {Vector::Zero(1)};
  mo.D_w = {Matrix::Zero(1, 1)};
  mo.F_w = {Matrix::Zero(1, 1)};
  mo.Q = mo.P = Matrix::Identity(1, 1);
  mo.N = Matrix::Constant(1, 1, 2.0);
  mo.x0 = Vector::Zero(1);
  finalize(mo);

  LqSolution sol;
  sol.model = mo;
  sol.dt = mo.T;
  sol.steps = 1;
  sol.K = {Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 1.0)};
  sol.Lambda = {Matrix::Constant(1, 1, 4.0), Matrix::Constant(1, 1, 4.0)};
  sol.Y = {Vector::Constant(1, 6.0), Vector::Constant(1, 6.0)};
  sol.chi = {0.0, 0.0};
  sol.dK = {Matrix::Zero(1, 1), Matrix::Zero(1, 1)};
  sol.dLambda = {Matrix::Zero(1, 1), Matrix::Zero(1, 1)};
  sol.dY = {Vector::Zero(1), Vector::Zero(1)};
  sol.dchi = {0.0, 0.0};

  const Vector mean = Vector::Constant(1, 1.0);
  const Vector a_hat = optimal_action(sol, 0.0, mean);
  CHECK(a_hat(0) == doctest::Approx(-3.5).epsilon(1e-14));

  // Brute-force scan of the action quadratic a'Gamma a + (2 U m + R)' a.
  double best = 1e300, best_a = 0.0;
  for (int i = 0; i <= 20000; ++i) {
    const double a = -10.0 + 20.0 * i / 20000.0;
    const double g = 2.0 * a * a + (2.0 * 4.0 * 1.0 + 6.0) * a;
    if (g < best) {
      best = g;
      best_a = a;
    }
  }
  CHECK(std::fabs(best_a - a_hat(0)) <= 1e-3);
}

TEST_CASE("terminal conditions anchor the backward solution") {
  const LqModel mo = scalar_model();
  const LqSolution sol = solve_backward(mo, mo.T / 200);
  CHECK((sol.K.back() - mo.P).norm() == 0.0);
  CHECK((sol.Lambda.back() - mo.P).norm() == 0.0);
  CHECK(sol.Y.back().norm() == 0.0);
  CHECK(sol.chi.back() == 0.0);
  CHECK(sol.steps == 200);
  CHECK(sol.gamma_min > 0.0);
}

TEST_CASE("closed-form scalar additive oracle") {
  // With B = 0, C = N = Q = 1, P = 0 and additive noise only, the mean
  // coefficient solves dL/dtau = 1 - L^2 from zero, i.e. tanh, the variance
  // coefficient integrates Q linearly, and the scalar part has an explicit
  // primitive.  A closed form none of the solver internals know about.
  LqModel mo;
  mo.n = mo.m = mo.d = mo.q = 1;
  mo.T = 1.25;
  mo.b0 = Vector::Zero(1);
  mo.B = Matrix::Zero(1, 1);
  mo.C = Matrix::Constant(1, 1, 1.0);
  mo.gamma_v = {Vector::Constant(1, 0.6)};
  mo.D_v = {Matrix::Zero(1, 1)};
  mo.F_v = {Matrix::Zero(1, 1)};
  mo.gamma_w = {Vector::Constant(1, 0.35)};
  mo.D_w = {Matrix::Zero(1, 1)};
  mo.F_w = {Matrix::Zero(1, 1)};
  mo.Q = Matrix::Constant(1, 1, 1.0);
  mo.N = Matrix::Constant(1, 1, 1.0);
  mo.P = Matrix::Zero(1, 1);
  mo.x0 = Vector::Constant(1, 0.8);
  finalize(mo);

  const LqSolution sol = solve_backward(mo, mo.T / 500);
  const double gv2 = 0.36, gw2 = 0.1225;
  for (double t : {0.0, 0.31, 0.77, 1.1, mo.T}) {
    const double tau = mo.T - t;
    const LqPoint pt = eval_at(sol, t);
    CHECK(pt.Lambda(0, 0) == doctest::Approx(std::tanh(tau)).epsilon(1e-10));
    CHECK(pt.K(0, 0) == doctest::Approx(tau).epsilon(1e-10));
    CHECK(std::fabs(pt.Y(0)) <= 1e-12);
    const double chi_exact = gv2 * tau * tau / 2.0 + gw2 * std::log(std::cosh(tau));
    CHECK(pt.chi == doctest::Approx(chi_exact).epsilon(1e-9));
  }
  const double cost_exact =
      0.64 * std::tanh(mo.T) + gv2 * mo.T * mo.T / 2.0 + gw2 * std::log(std::cosh(mo.T));
  CHECK(optimal_cost(sol) == doctest::Approx(cost_exact).epsilon(1e-9));
}

TEST_CASE("grid refinement shows fourth-order convergence") {
  // Fully coupled instance: the mean and constant equations read the
  // variance curve at stage times, so this exercises the corrected
  // midpoint interpolation as well as the stage arithmetic itself.
  const LqModel mo = scalar_model();

  const LqSolution coarse = solve_backward(mo, mo.T / 16);
  const LqSolution mid = solve_backward(mo, mo.T / 32);
  const LqSolution fine = solve_backward(mo, mo.T / 64);
  const double d1 = max_node_gap(coarse, mid);
  const double d2 = max_node_gap(mid, fine);
  CHECK(d1 > 1e-13);  // errors must sit above roundoff for the ratio to mean anything
  const double ratio = d1 / d2;
  CHECK(ratio >= 12.0);
  CHECK(ratio <= 20.0);
}

TEST_CASE("coefficients stay symmetric positive semidefinite along the grid") {
  const LqModel mo = scalar_model();
  const LqSolution sol = solve_backward(mo, mo.T / 400);
  CHECK(sol.min_eig_K >= -1e-10);
  CHECK(sol.min_eig_Lambda >= -1e-10);
  for (int i = 0; i <= sol.steps; i += 50) {
    CHECK(sol.K[size_t(i)](0, 0) >= 0.0);
    CHECK(sol.Lambda[size_t(i)](0, 0) >= 0.0);
    CHECK((sol.K[size_t(i)] - sol.K[size_t(i)].transpose()).norm() == 0.0);
  }
}

TEST_CASE("optimal cost is monotone in the state weight") {
  const LqModel base = scalar_model();
  double last = -1e300;
  for (double scale : {1.0, 1.5, 2.0}) {
    LqModel mo = base;
    mo.Q = scale * base.Q;
    const double cost = optimal_cost(solve_backward(mo, mo.T / 250));
    CHECK(cost > last);
    last = cost;
  }
}

TEST_CASE("optimal action is affine in the conditional mean") {
  const LqModel mo = scalar_model();
  const LqSolution sol = solve_backward(mo, mo.T / 250);
  UniformCursor cur{derive(31, kTagExperiment), 0};
  for (int rep = 0; rep < 8; ++rep) {
    const double t = 0.999 * mo.T * cur.next();
    const Vector m1 = Vector::Constant(1, 4.0 * (cur.next() - 0.5));
    const Vector m2 = Vector::Constant(1, 4.0 * (cur.next() - 0.5));
    const double alpha = cur.next();
    const Vector lhs = optimal_action(sol, t, alpha * m1 + (1.0 - alpha) * m2);
    const Vector rhs = alpha * optimal_action(sol, t, m1) + (1.0 - alpha) * optimal_action(sol, t, m2);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + lhs.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("interpolation is exact at nodes and differentiates consistently") {
  const LqModel mo = scalar_model();
  const LqSolution sol = solve_backward(mo, mo.T / 100);
  for (int i : {0, 17, 50, 100}) {
    const LqPoint pt = eval_at(sol, sol.dt * i);
    CHECK(pt.K(0, 0) == sol.K[size_t(i)](0, 0));
    CHECK(pt.Lambda(0, 0) == sol.Lambda[size_t(i)](0, 0));
    CHECK(pt.Y(0) == sol.Y[size_t(i)](0));
    CHECK(pt.chi == sol.chi[size_t(i)]);
  }

  // Central differences of eval_at recover eval_rate_at between nodes.
  const double h = 1e-6;
  for (double t : {0.123, 0.5004, 0.871}) {
    const LqPoint up = eval_at(sol, t + h);
    const LqPoint dn = eval_at(sol, t - h);
    const LqPoint rate = eval_rate_at(sol, t);
    CHECK(rate.Lambda(0, 0) == doctest::Approx((up.Lambda(0, 0) - dn.Lambda(0, 0)) / (2 * h)).epsilon(1e-6));
    CHECK(rate.K(0, 0) == doctest::Approx((up.K(0, 0) - dn.K(0, 0)) / (2 * h)).epsilon(1e-6));
    CHECK(rate.chi == doctest::Approx((up.chi - dn.chi) / (2 * h)).epsilon(1e-6));
  }
}

TEST_CASE("value at the initial point-mass equals the reported optimal cost") {
  const LqModel mo = scalar_model();
  const LqSolution sol = solve_backward(mo, mo.T / 250);
  const double v = value(sol, 0.0, EmpiricalMeasure::dirac(mo.x0));
  CHECK(v == doctest::Approx(optimal_cost(sol)).epsilon(1e-14));
}

TEST_CASE("solver rejects inadmissible inputs") {
  LqModel bad = scalar_model();
  bad.Q = -Matrix::Identity(1, 1);
  CHECK_THROWS_AS(solve_backward(bad), ValidationError);

  CHECK_THROWS_AS(inv_gamma(Matrix::Zero(1, 1)), GammaSingularError);
  Matrix near = Matrix::Identity(2, 2);
  near(1, 1) = 1e-12;  // below the relative eigenvalue floor
  CHECK_THROWS_AS(inv_gamma(near), GammaSingularError);
}
