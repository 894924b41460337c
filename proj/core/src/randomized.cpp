#include "poctrl/randomized.hpp"

#include <cmath>
#include <memory>
#include <utility>
#include <vector>

#include "poctrl/errors.hpp"
#include "poctrl/parallel.hpp"

namespace poctrl {

namespace {

double mean_quad(const Matrix& states, const Matrix& Q) {
  return (states.cwiseProduct(Q * states)).sum() / double(states.cols());
}

// Index into a discrete distribution given by nonnegative masses summing to
// `mass_sum`, from one uniform draw.
int pick_mark(const std::vector<double>& masses, double mass_sum, double u) {
  double c = 0.0;
  for (size_t j = 0; j < masses.size(); ++j) {
    c += masses[j];
    if (u * mass_sum <= c) return int(j);
  }
  return int(masses.size()) - 1;
}

// Exponential spacing with the (0,1] uniform mapped through -log1p(-u):
// always strictly positive, and the astronomically rare u == 1 maps to
// +infinity (stream exhausted) rather than a zero step.
double exp_spacing(double u, double rate) { return -std::log1p(-u) / rate; }

GainEstimate reduce_mean(const std::vector<double>& xs) {
  double sum = 0.0;
  for (double x : xs) sum += x;
  const double mean = sum / double(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  GainEstimate est;
  est.estimate = mean;
  est.std_err = std::sqrt(ss / double(xs.size() - 1) / double(xs.size()));
  return est;
}

struct JumpRun {
  double payoff = 0.0;
  double log_kappa = 0.0;
};

// One closed-loop filter run driven by an interleaved jump stream.  With
// `tilted` the jumps are thinned under the tilted law; otherwise they follow
// the reference law and the density log is accumulated alongside.  The tilt
// is frozen at each bin's left endpoint, which keeps it predictable and the
// density exact for the discretised functional.
JumpRun run_jump_driven(const GeneralModel& model, const EmpiricalMeasure& pi, const Vector& a0,
                        const ActionMeasure& lambda, const IntensityControl& nu, bool tilted,
                        int n_inner, double dt, int steps,
                        std::shared_ptr<const NoisePath> w, uint64_t ens_seed,
                        uint64_t jump_key) {
  ParticleEnsemble ens = make_ensemble(pi, n_inner, model, std::move(w), ens_seed);
  StepWorkspace ws;
  UniformCursor cur{jump_key, 0};
  const int na = lambda.n_actions();
  const double total = lambda.total();
  const double rate = (tilted ? nu.nu_max : 1.0) * total;
  std::vector<double> nus(size_t(na), 0.0), masses(size_t(na), 0.0);
  Vector a = a0, a_next = a0;
  Vector mean(model.n), x(model.n);
  double payoff = 0.0, log_kappa = 0.0;
  double next_cand = exp_spacing(cur.next(), rate);
  const LqModel* lq = model.lq.get();

  for (int k = 0; k < steps; ++k) {
    const double tk = k * dt;
    const double bin_end = (k + 1) * dt;
    mean = ens.states.rowwise().mean();
    double tilt_mass = 0.0;
    for (int j = 0; j < na; ++j) {
      const double v = nu.nu(tk, j, mean);
      if (!(v >= nu.nu_min * (1.0 - 1e-12) && v <= nu.nu_max * (1.0 + 1e-12)))
        throw InvalidArgumentError("intensity tilt outside its declared bounds");
      nus[size_t(j)] = v;
      masses[size_t(j)] = v * lambda.weights(j);
      tilt_mass += masses[size_t(j)];
    }
    if (!tilted) log_kappa -= dt * (tilt_mass - total);

    // Running gain on this bin uses the action in force at its left endpoint.
    if (lq) {
      payoff -= dt * (mean_quad(ens.states, lq->Q) + a.dot(lq->N * a));
    } else {
      double g = 0.0;
      for (int p = 0; p < ens.particles(); ++p) {
        x = ens.states.col(p);
        g += model.running_gain(x, a);
      }
      payoff += dt * g / double(ens.particles());
    }
    ensemble_step(ens, model, a, ws);

    // Jumps landing in (tk, bin_end] take effect from the next bin.
    while (next_cand <= bin_end) {
      if (tilted) {
        const double u_acc = cur.next();
        if (u_acc * rate <= tilt_mass) {
          const int mark = pick_mark(masses, tilt_mass, cur.next());
          a_next = lambda.support.col(mark);
        }
      } else {
        std::vector<double>& ref = masses;  // reuse buffer for plain weights
        for (int j = 0; j < na; ++j) ref[size_t(j)] = lambda.weights(j);
        const int mark = pick_mark(ref, total, cur.next());
        log_kappa += std::log(nus[size_t(mark)]);
        a_next = lambda.support.col(mark);
      }
      next_cand += exp_spacing(cur.next(), rate);
    }
    a = a_next;
  }

  if (lq) {
    payoff -= mean_quad(ens.states, lq->P);
  } else {
    double g = 0.0;
    for (int p = 0; p < ens.particles(); ++p) {
      x = ens.states.col(p);
      g += model.terminal_gain(x);
    }
    payoff += g / double(ens.particles());
  }
  if (!std::isfinite(payoff) || !std::isfinite(log_kappa))
    throw NonFiniteError("jump-driven run diverged");
  return {payoff, log_kappa};
}

}  // namespace

void check_intensity(const IntensityControl& nu) {
  if (!nu.nu)
    throw InvalidArgumentError("intensity: missing tilt function");
  if (!(nu.nu_min > 0.0) || !(nu.nu_max >= nu.nu_min) || !std::isfinite(nu.nu_max))
    throw InvalidArgumentError("intensity: need 0 < nu_min <= nu_max < inf");
}

IntensityControl IntensityControl::uniform(double c) {
  if (!(c > 0.0) || !std::isfinite(c))
    throw InvalidArgumentError("intensity: uniform tilt must be positive and finite");
  IntensityControl out;
  out.nu_min = out.nu_max = c;
  out.state_dependent = false;
  out.nu = [c](double, int, const Vector&) { return c; };
  return out;
}

IntensityControl IntensityControl::concentrate(std::shared_ptr<const LqSolution> sol,
                                               std::shared_ptr<const ActionMeasure> actions,
                                               double hi, double lo) {
  if (!sol || !actions) throw InvalidArgumentError("intensity: missing solution or support");
  if (!(lo > 0.0) || !(hi > 0.0))
    throw InvalidArgumentError("intensity: concentration levels must be positive");
  check_action_measure(*actions);
  IntensityControl out;
  out.nu_min = std::min(lo, hi);
  out.nu_max = std::max(lo, hi);
  out.state_dependent = true;
  out.nu = [sol = std::move(sol), actions = std::move(actions), hi, lo](double s, int idx,
                                                                        const Vector& mean) {
    const Vector target = optimal_action(*sol, s, mean);
    int best = 0;
    double best_d = (actions->support.col(0) - target).squaredNorm();
    for (int j = 1; j < actions->n_actions(); ++j) {
      const double dj = (actions->support.col(j) - target).squaredNorm();
      if (dj < best_d) {
        best_d = dj;
        best = j;
      }
    }
    return idx == best ? hi : lo;
  };
  return out;
}

JumpTrajectory sample_jump_process(std::shared_ptr<const ActionMeasure> lambda,
                                   const IntensityControl& nu, double t, double T,
                                   const Vector& a0, uint64_t seed) {
  if (!lambda) throw InvalidArgumentError("sample_jump_process: missing action support");
  check_action_measure(*lambda);
  check_intensity(nu);
  if (nu.state_dependent)
    throw InvalidArgumentError(
        "sample_jump_process: state-coupled tilts only exist inside the gain estimator");
  if (!(T >= t)) throw InvalidArgumentError("sample_jump_process: need t <= T");
  if (a0.size() != lambda->q())
    throw InvalidArgumentError("sample_jump_process: initial action dimension mismatch");

  JumpTrajectory traj;
  traj.t0 = t;
  traj.T = T;
  traj.a0 = a0;
  traj.actions = lambda;

  const int na = lambda->n_actions();
  const double total = lambda->total();
  const double rate = nu.nu_max * total;
  UniformCursor cur{seed, 0};
  std::vector<double> masses(size_t(na), 0.0);
  const Vector no_mean;
  double s = t + exp_spacing(cur.next(), rate);
  while (s <= T) {
    double tilt_mass = 0.0;
    for (int j = 0; j < na; ++j) {
      const double v = nu.nu(s, j, no_mean);
      if (!(v >= nu.nu_min * (1.0 - 1e-12) && v <= nu.nu_max * (1.0 + 1e-12)))
        throw InvalidArgumentError("intensity tilt outside its declared bounds");
      masses[size_t(j)] = v * lambda->weights(j);
      tilt_mass += masses[size_t(j)];
    }
    const double u_acc = cur.next();
    if (u_acc * rate <= tilt_mass) {
      const int mark = pick_mark(masses, tilt_mass, cur.next());
      traj.times.push_back(s);
      traj.marks.push_back(mark);
    }
    s += exp_spacing(cur.next(), rate);
  }
  return traj;
}

double doleans_weight(const JumpTrajectory& traj, const IntensityControl& nu, double t, double T,
                      int grid_steps) {
  check_intensity(nu);
  if (nu.state_dependent)
    throw InvalidArgumentError("doleans_weight: tilt must not read the state");
  if (!traj.actions) throw InvalidArgumentError("doleans_weight: trajectory has no support");
  if (grid_steps < 1) throw InvalidArgumentError("doleans_weight: need at least one bin");
  const double tol = 1e-9 * std::max(1.0, std::fabs(T));
  if (std::fabs(traj.t0 - t) > tol || std::fabs(traj.T - T) > tol)
    throw InvalidArgumentError("doleans_weight: window does not match the trajectory");
  const ActionMeasure& lambda = *traj.actions;
  const int na = lambda.n_actions();
  const double dt = (T - t) / grid_steps;
  const Vector no_mean;

  double integral = 0.0;
  for (int k = 0; k < grid_steps; ++k) {
    const double sk = t + k * dt;
    for (int j = 0; j < na; ++j)
      integral += dt * (nu.nu(sk, j, no_mean) - 1.0) * lambda.weights(j);
  }
  double log_prod = 0.0;
  for (size_t i = 0; i < traj.times.size(); ++i) {
    // A jump in (t_k, t_{k+1}] reads the tilt frozen at t_k.
    int k = int(std::ceil((traj.times[i] - t) / dt)) - 1;
    k = std::max(0, std::min(grid_steps - 1, k));
    const double v = nu.nu(t + k * dt, traj.marks[i], no_mean);
    if (!(v > 0.0)) throw InvalidArgumentError("doleans_weight: nonpositive tilt at a jump");
    log_prod += std::log(v);
  }
  return std::exp(-integral + log_prod);
}

RandomizedGain randomized_gain(const GeneralModel& model, const EmpiricalMeasure& pi,
                               const Vector& a0, std::shared_ptr<const ActionMeasure> lambda,
                               const IntensityControl& nu, const MCParams& mc) {
  if (!lambda) throw InvalidArgumentError("randomized_gain: missing action support");
  check_action_measure(*lambda);
  check_intensity(nu);
  if (pi.dim() != model.n || pi.count() == 0)
    throw InvalidArgumentError("randomized_gain: initial law does not match the model");
  if (a0.size() != model.q || lambda->q() != model.q)
    throw InvalidArgumentError("randomized_gain: action dimension mismatch");
  if (mc.n_outer < 2 || mc.n_inner <= 0)
    throw InvalidArgumentError("randomized_gain: need n_outer >= 2 and n_inner >= 1");

  double dt = mc.dt;
  if (dt <= 0.0) dt = model.T / 250.0;
  const int steps = std::max(1, int(std::llround(model.T / dt)));
  dt = model.T / steps;

  std::vector<double> direct_vals(size_t(mc.n_outer), 0.0);
  std::vector<double> weighted_vals(size_t(mc.n_outer), 0.0);
  parallel_for(mc.n_outer, mc.threads, [&](int rep) {
    auto w = std::make_shared<NoisePath>(sample_noise(
        model.d, dt, steps, derive(mc.seed, kTagCommonNoise, uint64_t(rep))));
    const uint64_t ens_seed = derive(mc.seed, kTagExperiment, uint64_t(rep));
    const JumpRun rd = run_jump_driven(model, pi, a0, *lambda, nu, true, mc.n_inner, dt, steps,
                                       w, ens_seed, derive(mc.seed, kTagJumps, uint64_t(rep), 1));
    const JumpRun rw = run_jump_driven(model, pi, a0, *lambda, nu, false, mc.n_inner, dt, steps,
                                       w, ens_seed, derive(mc.seed, kTagJumps, uint64_t(rep), 2));
    direct_vals[size_t(rep)] = rd.payoff;
    weighted_vals[size_t(rep)] = std::exp(rw.log_kappa) * rw.payoff;
  });

  RandomizedGain out;
  out.direct = reduce_mean(direct_vals);
  out.weighted = reduce_mean(weighted_vals);
  out.n_outer = mc.n_outer;
  out.n_inner = mc.n_inner;
  out.dt = dt;
  out.seed = mc.seed;
  return out;
}

}  // namespace poctrl
