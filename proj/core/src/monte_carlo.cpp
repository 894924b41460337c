#include "poctrl/monte_carlo.hpp"

#include <cmath>
#include <memory>

#include "poctrl/csv.hpp"
#include "poctrl/errors.hpp"
#include "poctrl/parallel.hpp"

namespace poctrl {

namespace {

double mean_quad(const Matrix& states, const Matrix& Q) {
  return (states.cwiseProduct(Q * states)).sum() / double(states.cols());
}

struct Grid {
  double dt;
  int steps;
};

Grid make_grid(const LqModel& model, double dt) {
  if (dt <= 0.0) dt = model.T / 250.0;
  const int steps = std::max(1, int(std::llround(model.T / dt)));
  return {model.T / steps, steps};
}

}  // namespace

CostEstimate evaluate_policy(const LqModel& model, const Policy& policy, const MCParams& mc) {
  check_dimensions(model);
  if (mc.n_outer < 2 || mc.n_inner <= 0)
    throw InvalidArgumentError("evaluate_policy: need n_outer >= 2 and n_inner >= 1");
  const Grid grid = make_grid(model, mc.dt);
  const GeneralModel gm = lq_as_general(model);
  const EmpiricalMeasure init = EmpiricalMeasure::dirac(model.x0);

  std::vector<double> costs(size_t(mc.n_outer), 0.0);
  parallel_for(mc.n_outer, mc.threads, [&](int rep) {
    auto w = std::make_shared<NoisePath>(sample_noise(
        model.d, grid.dt, grid.steps, derive(mc.seed, kTagCommonNoise, uint64_t(rep))));
    ParticleEnsemble ens = make_ensemble(init, mc.n_inner, gm, w,
                                         derive(mc.seed, kTagExperiment, uint64_t(rep)));
    StepWorkspace ws;
    Vector mean(model.n);
    double acc = 0.0;
    for (int k = 0; k < grid.steps; ++k) {
      mean = ens.states.rowwise().mean();
      const Vector a = policy.action(ens.time(), mean);
      acc += grid.dt * (mean_quad(ens.states, model.Q) + a.dot(model.N * a));
      ensemble_step(ens, gm, a, ws);
    }
    acc += mean_quad(ens.states, model.P);
    if (!std::isfinite(acc)) throw NonFiniteError("evaluate_policy: cost diverged");
    costs[size_t(rep)] = acc;
  });

  double sum = 0.0;
  for (double c : costs) sum += c;
  const double mean = sum / double(mc.n_outer);
  double ss = 0.0;
  for (double c : costs) ss += (c - mean) * (c - mean);

  CostEstimate est;
  est.estimate = mean;
  est.std_err = std::sqrt(ss / double(mc.n_outer - 1) / double(mc.n_outer));
  est.n_outer = mc.n_outer;
  est.n_inner = mc.n_inner;
  est.dt = grid.dt;
  est.seed = mc.seed;
  return est;
}

double BiasEnvelope::bound(double dt, int n_inner) const {
  return c1 * dt + c2 / std::sqrt(double(n_inner));
}

BiasEnvelope calibrate_envelope(const LqModel& model, const Policy& policy, const MCParams& mc) {
  const Grid grid = make_grid(model, mc.dt);
  MCParams base = mc;
  base.dt = grid.dt;

  MCParams half_dt = base;
  half_dt.dt = grid.dt / 2.0;
  MCParams twice_inner = base;
  twice_inner.n_inner = 2 * base.n_inner;

  const CostEstimate a = evaluate_policy(model, policy, base);
  const CostEstimate b = evaluate_policy(model, policy, half_dt);
  const CostEstimate c = evaluate_policy(model, policy, twice_inner);

  BiasEnvelope env;
  // J(dt) - J(dt/2) ~ c1 dt / 2; widen by the noise of the difference.
  const double se_ab = std::sqrt(a.std_err * a.std_err + b.std_err * b.std_err);
  env.c1 = (std::fabs(a.estimate - b.estimate) + se_ab) * 2.0 / grid.dt;
  // bias(n) - bias(2n) ~ c2 (1 - 1/sqrt(2)) / sqrt(n).
  const double se_ac = std::sqrt(a.std_err * a.std_err + c.std_err * c.std_err);
  env.c2 = (std::fabs(a.estimate - c.estimate) + se_ac) * std::sqrt(double(base.n_inner)) /
           (1.0 - 1.0 / std::sqrt(2.0));
  return env;
}

GapReport optimality_gap(const LqModel& model, const LqSolution& sol,
                         const std::vector<std::pair<std::string, Policy>>& perturbations,
                         const MCParams& mc) {
  GapReport report;
  report.optimal_cost = optimal_cost(sol);
  report.envelope =
      calibrate_envelope(model, Policy::feedback(std::make_shared<LqSolution>(sol)), mc);
  const Grid grid = make_grid(model, mc.dt);
  const double envelope = report.envelope.bound(grid.dt, mc.n_inner);
  for (const auto& [id, policy] : perturbations) {
    GapRow row;
    row.policy_id = id;
    row.cost = evaluate_policy(model, policy, mc);
    row.gap = row.cost.estimate - report.optimal_cost;
    row.lower_bound_ok = row.gap >= -(3.0 * row.cost.std_err + envelope);
    report.all_lower_bounds_ok = report.all_lower_bounds_ok && row.lower_bound_ok;
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::string gap_report_csv(const GapReport& report) {
  CsvWriter csv;
  csv.header({"policy_id", "estimate", "stderr", "gap", "dt", "n_outer", "n_inner", "seed"});
  for (const auto& row : report.rows) {
    csv.cell(row.policy_id);
    csv.cell(row.cost.estimate);
    csv.cell(row.cost.std_err);
    csv.cell(row.gap);
    csv.cell(row.cost.dt);
    csv.cell(row.cost.n_outer);
    csv.cell(row.cost.n_inner);
    csv.cell(std::to_string(row.cost.seed));
    csv.endrow();
  }
  return csv.text;
}

}  // namespace poctrl
