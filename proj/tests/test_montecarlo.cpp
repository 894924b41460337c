#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>
#include <poctrl/monte_carlo.hpp>
#include <poctrl/rng.hpp>
#include <vector>

using namespace poctrl;

namespace {

LqModel scalar_full() {
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

LqModel noise_free() {
  LqModel mo = scalar_full();
  mo.gamma_v[0].setZero();
  mo.D_v[0].setZero();
  mo.F_v[0].setZero();
  mo.gamma_w[0].setZero();
  mo.D_w[0].setZero();
  mo.F_w[0].setZero();
  mo.b0(0) = 0.2;
  mo.B(0, 0) = -0.5;
  finalize(mo);
  return mo;
}

}  // namespace

TEST_CASE("zero cost weights give an exactly zero estimate") {
  LqModel mo = scalar_full();
  mo.Q.setZero();
  mo.N.setZero();
  mo.P.setZero();
  finalize(mo);

  MCParams mc;
  mc.n_outer = 50;
  mc.n_inner = 16;
  mc.dt = 0.02;
  mc.seed = 3;
  const CostEstimate est = evaluate_policy(mo, Policy::constant(Vector::Constant(1, 0.4)), mc);
  CHECK(est.estimate == 0.0);
  CHECK(est.std_err == 0.0);
}

TEST_CASE("deterministic constant state integrates the cost exactly") {
  // No noise, no drift: X stays at x0, so the cost is x0'Qx0 T + x0'Px0 up
  // to summation roundoff, independent of every Monte Carlo parameter.
  LqModel mo = noise_free();
  mo.b0.setZero();
  mo.B.setZero();
  finalize(mo);

  MCParams mc;
  mc.n_outer = 10;
  mc.n_inner = 4;
  mc.dt = 0.01;
  mc.seed = 5;
  const CostEstimate est = evaluate_policy(mo, Policy::zero(1), mc);
  const double exact = 1.0 * mo.T + 1.0;  // x0 = 1, Q = P = 1
  CHECK(est.estimate == doctest::Approx(exact).epsilon(1e-12));
  CHECK(est.std_err <= 1e-13);
}

TEST_CASE("estimates are bit-identical across thread counts") {
  const LqModel mo = scalar_full();
  MCParams mc;
  mc.n_outer = 60;
  mc.n_inner = 24;
  mc.dt = 0.02;
  mc.seed = 7;

  mc.threads = 1;
  const CostEstimate serial = evaluate_policy(mo, Policy::constant(Vector::Constant(1, -0.3)), mc);
  mc.threads = 3;
  const CostEstimate threaded = evaluate_policy(mo, Policy::constant(Vector::Constant(1, -0.3)), mc);
  CHECK(serial.estimate == threaded.estimate);
  CHECK(serial.std_err == threaded.std_err);

  // And across repeated runs at the same thread count.
  const CostEstimate again = evaluate_policy(mo, Policy::constant(Vector::Constant(1, -0.3)), mc);
  CHECK(again.estimate == threaded.estimate);
}

TEST_CASE("standard error shrinks like the square root of the replicate count") {
  const LqModel mo = scalar_full();
  std::vector<double> log_n, log_se;
  for (int n_outer : {100, 1000, 10000}) {
    MCParams mc;
    mc.n_outer = n_outer;
    mc.n_inner = 8;
    mc.dt = 0.04;
    mc.seed = 11;
    const CostEstimate est = evaluate_policy(mo, Policy::zero(1), mc);
    log_n.push_back(std::log10(double(n_outer)));
    log_se.push_back(std::log10(est.std_err));
  }
  // Least-squares slope over the three points.
  const double mx = (log_n[0] + log_n[1] + log_n[2]) / 3.0;
  const double my = (log_se[0] + log_se[1] + log_se[2]) / 3.0;
  double num = 0.0, den = 0.0;
  for (int i = 0; i < 3; ++i) {
    num += (log_n[size_t(i)] - mx) * (log_se[size_t(i)] - my);
    den += (log_n[size_t(i)] - mx) * (log_n[size_t(i)] - mx);
  }
  const double slope = num / den;
  CHECK(std::fabs(slope + 0.5) <= 0.1);
}

TEST_CASE("time-step bias is first order on a noise-free instance") {
  // With the noise switched off the estimator is deterministic and its only
  // error is the Euler/Riemann discretisation, so successive refinements
  // must contract by about a factor two.
  const LqModel mo = noise_free();
  auto run = [&](double dt) {
    MCParams mc;
    mc.n_outer = 2;
    mc.n_inner = 1;
    mc.dt = dt;
    mc.seed = 13;
    return evaluate_policy(mo, Policy::constant(Vector::Constant(1, 0.15)), mc).estimate;
  };
  const double d1 = run(0.05) - run(0.025);
  const double d2 = run(0.025) - run(0.0125);
  CHECK(std::fabs(d1) > 1e-9);  // the bias itself must be visible
  const double ratio = d1 / d2;
  CHECK(ratio >= 1.6);
  CHECK(ratio <= 2.5);
}

TEST_CASE("bias envelope calibration orders as designed") {
  const LqModel mo = scalar_full();
  MCParams mc;
  mc.n_outer = 200;
  mc.n_inner = 32;
  mc.dt = 0.02;
  mc.seed = 17;
  const BiasEnvelope env = calibrate_envelope(mo, Policy::zero(1), mc);
  CHECK(env.bound(0.02, 32) > 0.0);
  CHECK(env.bound(0.01, 32) <= env.bound(0.02, 32));
  CHECK(env.bound(0.02, 64) <= env.bound(0.02, 32));
  CHECK(std::isfinite(env.c1));
  CHECK(std::isfinite(env.c2));
}

TEST_CASE("gap study reports one row per policy in submission order") {
  const LqModel mo = scalar_full();
  const LqSolution sol = solve_backward(mo, mo.T / 150);
  MCParams mc;
  mc.n_outer = 120;
  mc.n_inner = 24;
  mc.dt = 0.02;
  mc.seed = 19;

  auto solp = std::make_shared<LqSolution>(sol);
  std::vector<std::pair<std::string, Policy>> policies;
  policies.emplace_back("optimal", Policy::feedback(solp));
  policies.emplace_back("zero", Policy::zero(1));
  const GapReport rep = optimality_gap(mo, sol, policies, mc);

  REQUIRE(rep.rows.size() == 2);
  CHECK(rep.rows[0].policy_id == "optimal");
  CHECK(rep.rows[1].policy_id == "zero");
  CHECK(rep.optimal_cost == doctest::Approx(optimal_cost(sol)).epsilon(1e-15));
  for (const GapRow& row : rep.rows)
    CHECK(row.gap == doctest::Approx(row.cost.estimate - rep.optimal_cost).epsilon(1e-12));
  // The zero policy is far from optimal on this instance.
  CHECK(rep.rows[1].gap > 0.5);

  const std::string csv = gap_report_csv(rep);
  CHECK(csv.find("policy_id") != std::string::npos);
  CHECK(csv.find("optimal") != std::string::npos);
  CHECK(csv.find("zero") != std::string::npos);
}
