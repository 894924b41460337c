#include "poctrl/hjb.hpp"

#include <algorithm>
#include <cmath>

#include "poctrl/errors.hpp"

namespace poctrl {

namespace {

// (1/N) sum_p x_p' Q x_p over the columns of a state block.
double mean_quad(const Matrix& states, const Matrix& Q) {
  return (states.cwiseProduct(Q * states)).sum() / double(states.cols());
}

}  // namespace

LiftedDerivatives lifted_derivatives(const LqSolution& sol, double t, const EmpiricalMeasure& pi,
                                     DtMode mode, double fd_step) {
  if (pi.dim() != sol.model.n)
    throw InvalidArgumentError("lifted_derivatives: measure dimension mismatch");
  const LqPoint pt = eval_at(sol, t);
  const Vector mean = pi.mean();
  LiftedDerivatives der;
  der.dx_dpi = 2.0 * pt.K;
  der.d2_pi = 2.0 * (pt.Lambda - pt.K);
  der.d_pi.resize(pi.dim(), pi.count());
  Vector shift = 2.0 * (pt.Lambda * mean);
  shift += pt.Y;
  for (int p = 0; p < pi.count(); ++p)
    der.d_pi.col(p) = 2.0 * (pt.K * (pi.atoms.col(p) - mean)) + shift;
  if (mode == DtMode::ode_rhs) {
    const LqPoint rate = eval_rate_at(sol, t);
    der.dt_w = quad_var(pi, rate.K) + v2(pi, rate.Lambda) + v1(pi, rate.Y) + rate.chi;
  } else {
    if (!(fd_step > 0.0)) throw InvalidArgumentError("lifted_derivatives: need fd_step > 0");
    const double lo = std::max(0.0, t - fd_step);
    const double hi = std::min(sol.model.T, t + fd_step);
    der.dt_w = (value(sol, hi, pi) - value(sol, lo, pi)) / (hi - lo);
  }
  return der;
}

double generator_L(const LqModel& model, const EmpiricalMeasure& pi, const Vector& a,
                   const LiftedDerivatives& der) {
  const int N = pi.count(), n = model.n;
  if (der.d_pi.cols() != N || der.d_pi.rows() != n)
    throw InvalidArgumentError("generator_L: derivative block does not match the measure");
  double drift_term = 0.0, trace_term = 0.0;
  Vector x(n), b(n), s(n);
  for (int p = 0; p < N; ++p) {
    x = pi.atoms.col(p);
    b = model.b0;
    b.noalias() += model.B * x;
    b.noalias() += model.C * a;
    drift_term += b.dot(der.d_pi.col(p));
    for (int i = 0; i < model.m; ++i) {
      s = model.gamma_v[i];
      s.noalias() += model.D_v[i] * x;
      s.noalias() += model.F_v[i] * a;
      trace_term += s.dot(der.dx_dpi * s);
    }
    for (int j = 0; j < model.d; ++j) {
      s = model.gamma_w[j];
      s.noalias() += model.D_w[j] * x;
      s.noalias() += model.F_w[j] * a;
      trace_term += s.dot(der.dx_dpi * s);
    }
  }
  return (drift_term + 0.5 * trace_term) / double(N);
}

double generator_M(const LqModel& model, const EmpiricalMeasure& pi, const Vector& a,
                   const LiftedDerivatives& der) {
  const Vector mean = pi.mean();
  double out = 0.0;
  Vector sbar(model.n);
  for (int j = 0; j < model.d; ++j) {
    sbar = model.gamma_w[j];
    sbar.noalias() += model.D_w[j] * mean;
    sbar.noalias() += model.F_w[j] * a;
    out += sbar.dot(der.d2_pi * sbar);
  }
  return 0.5 * out;
}

HjbResidualReport hjb_residual(const LqModel& model, const LqSolution& sol, double t,
                               const EmpiricalMeasure& pi, InfMode action_search,
                               DtMode dt_mode) {
  if (pi.dim() != model.n) throw InvalidArgumentError("hjb_residual: measure dimension mismatch");
  if (!(t >= 0.0 && t < model.T)) throw InvalidArgumentError("hjb_residual: need t in [0, T)");
  const LiftedDerivatives der = lifted_derivatives(sol, t, pi, dt_mode);
  const double cost_x = second_moment(pi, model.Q);
  auto bracket = [&](const Vector& a) {
    return cost_x + a.dot(model.N * a) + generator_L(model, pi, a, der) +
           generator_M(model, pi, a, der);
  };

  // The bracket is quadratic in the action with Hessian 2 Gamma, so the
  // closed-form feedback at the interpolated coefficients is its exact
  // minimiser.
  const LqPoint pt = eval_at(sol, t);
  const Vector mean = pi.mean();
  const FeedbackCoefficients co = gain_coefficients(model, pt.K, pt.Lambda, pt.Y);
  const Matrix gi = inv_gamma(co.Gamma);
  Vector best = -(gi * (co.U.transpose() * mean + 0.5 * co.R));

  if (action_search == InfMode::grid) {
    if (model.q > 3)
      throw InvalidArgumentError("hjb_residual: grid search supports at most 3 action dims");
    const int pts = 21;
    const double span = 5.0;
    long long total = 1;
    for (int k = 0; k < model.q; ++k) total *= pts;
    const Vector center = best;
    Vector cand(model.q);
    double best_val = bracket(center);
    for (long long c = 0; c < total; ++c) {
      long long r = c;
      for (int k = 0; k < model.q; ++k) {
        cand(k) = center(k) - span + (2.0 * span) * double(r % pts) / double(pts - 1);
        r /= pts;
      }
      const double v = bracket(cand);
      if (v < best_val) {
        best_val = v;
        best = cand;
      }
    }
  }

  HjbResidualReport rep;
  rep.best_action = best;
  rep.best_bracket = bracket(best);
  rep.value = value(sol, t, pi);
  rep.residual = der.dt_w + rep.best_bracket;
  return rep;
}

MartingaleReport martingale_check(const LqSolution& sol, const Policy& policy,
                                  const MartingaleParams& params) {
  const LqModel& mo = sol.model;
  if (params.n_paths < 2 || params.particles <= 0 || params.steps <= 0)
    throw InvalidArgumentError("martingale_check: bad sizes");
  const double dt = mo.T / params.steps;

  std::vector<double> cps = params.checkpoints;
  if (cps.empty())
    for (int i = 1; i <= 5; ++i) cps.push_back(mo.T * double(i) / 5.0);
  std::vector<int> nodes;
  for (double c : cps) {
    int k = int(std::llround(c / dt));
    nodes.push_back(std::clamp(k, 1, params.steps));
  }
  for (size_t i = 1; i < nodes.size(); ++i)
    if (nodes[i] <= nodes[i - 1])
      throw InvalidArgumentError("martingale_check: checkpoints must be increasing on the grid");

  const GeneralModel gm = lq_as_general(mo);
  const EmpiricalMeasure init = EmpiricalMeasure::dirac(mo.x0);
  const double z0 = value(sol, 0.0, init);

  Matrix z(int(nodes.size()), params.n_paths);
  StepWorkspace ws;
  for (int path = 0; path < params.n_paths; ++path) {
    auto w = std::make_shared<NoisePath>(sample_noise(
        mo.d, dt, params.steps, derive(params.seed, kTagCommonNoise, uint64_t(path))));
    ParticleEnsemble ens = make_ensemble(init, params.particles, gm, w,
                                         derive(params.seed, kTagExperiment, uint64_t(path)));
    double cost_acc = 0.0;
    size_t next = 0;
    Vector mean(mo.n);
    for (int k = 0; k < params.steps && next < nodes.size(); ++k) {
      mean = ens.states.rowwise().mean();
      const Vector a = policy.action(ens.time(), mean);
      cost_acc += dt * (mean_quad(ens.states, mo.Q) + a.dot(mo.N * a));
      ensemble_step(ens, gm, a, ws);
      while (next < nodes.size() && nodes[next] == k + 1) {
        z(int(next), path) = cost_acc + value(sol, ens.time(), conditional_law(ens));
        ++next;
      }
    }
    if (!ens.states.allFinite())
      throw NonFiniteError("martingale_check: particle states diverged");
  }

  MartingaleReport rep;
  rep.z0 = z0;
  for (size_t i = 0; i < nodes.size(); ++i) {
    rep.t.push_back(nodes[i] * dt);
    const auto row = z.row(int(i));
    const double m = row.mean();
    const double var = (row.array() - m).square().sum() / double(params.n_paths - 1);
    rep.drift.push_back(m - z0);
    rep.std_err.push_back(std::sqrt(var / double(params.n_paths)));
  }
  return rep;
}

}  // namespace poctrl
