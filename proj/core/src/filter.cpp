#include "poctrl/filter.hpp"

#include <cmath>
#include <cstdint>
#include <utility>

#include "poctrl/errors.hpp"

namespace poctrl {

namespace {

void check_even(int steps, const char* who) {
  if (steps <= 0 || steps % 2 != 0)
    throw InvalidArgumentError(std::string(who) + ": step count must be positive and even");
}

uint64_t particle_key(uint64_t seed, int p) {
  return derive(seed, uint64_t(kTagPrivateNoise), uint64_t(p));
}

}  // namespace

NoisePath sample_noise(int dim, double dt, int steps, uint64_t key) {
  if (dim <= 0 || steps < 0 || !(dt > 0.0))
    throw InvalidArgumentError("sample_noise: need dim > 0, steps >= 0, dt > 0");
  NoisePath w;
  w.dt = dt;
  w.steps = steps;
  w.dim = dim;
  w.key = key;
  w.increments.resize(dim, steps);
  const double root_dt = std::sqrt(dt);
  for (int k = 0; k < steps; ++k)
    for (int j = 0; j < dim; ++j)
      w.increments(j, k) = root_dt * gaussian(key, uint64_t(k) * uint64_t(dim) + uint64_t(j));
  return w;
}

// Stored increments match what ensemble_step would draw on the fly from the
// same seed at the same dt, so the explicit form only matters once coarsened.
PrivateNoise sample_private_noise(int m, int particles, double dt, int steps, uint64_t seed) {
  if (m <= 0 || particles <= 0 || steps < 0 || !(dt > 0.0))
    throw InvalidArgumentError("sample_private_noise: bad shape");
  PrivateNoise v;
  v.m = m;
  v.particles = particles;
  v.steps = steps;
  v.dt = dt;
  v.increments.resize(m * particles, steps);
  const double root_dt = std::sqrt(dt);
  for (int p = 0; p < particles; ++p) {
    const uint64_t key = particle_key(seed, p);
    for (int k = 0; k < steps; ++k)
      for (int c = 0; c < m; ++c)
        v.increments(p * m + c, k) =
            root_dt * gaussian(key, uint64_t(k) * uint64_t(m) + uint64_t(c));
  }
  return v;
}

NoisePath coarsen(const NoisePath& w) {
  check_even(w.steps, "coarsen");
  NoisePath c;
  c.dt = 2.0 * w.dt;
  c.steps = w.steps / 2;
  c.dim = w.dim;
  c.key = w.key;  // provenance only; the coarse path is not regenerable from it
  c.increments.resize(w.dim, c.steps);
  for (int k = 0; k < c.steps; ++k)
    c.increments.col(k) = w.increments.col(2 * k) + w.increments.col(2 * k + 1);
  return c;
}

PrivateNoise coarsen(const PrivateNoise& v) {
  check_even(v.steps, "coarsen");
  PrivateNoise c;
  c.m = v.m;
  c.particles = v.particles;
  c.steps = v.steps / 2;
  c.dt = 2.0 * v.dt;
  c.increments.resize(v.increments.rows(), c.steps);
  for (int k = 0; k < c.steps; ++k)
    c.increments.col(k) = v.increments.col(2 * k) + v.increments.col(2 * k + 1);
  return c;
}

ParticleEnsemble make_ensemble(const EmpiricalMeasure& init, int particles,
                               const GeneralModel& model,
                               std::shared_ptr<const NoisePath> common_w, uint64_t seed) {
  if (!common_w) throw InvalidArgumentError("make_ensemble: missing common path");
  if (particles <= 0) throw InvalidArgumentError("make_ensemble: need at least one particle");
  if (init.count() == 0 || init.dim() != model.n)
    throw InvalidArgumentError("make_ensemble: initial law does not match the state dimension");
  if (common_w->dim != model.d)
    throw InvalidArgumentError("make_ensemble: common path dimension mismatch");
  ParticleEnsemble ens;
  ens.states.resize(model.n, particles);
  for (int p = 0; p < particles; ++p) ens.states.col(p) = init.atoms.col(p % init.count());
  ens.common_w = std::move(common_w);
  ens.v_keys.resize(size_t(particles));
  for (int p = 0; p < particles; ++p) ens.v_keys[size_t(p)] = particle_key(seed, p);
  ens.m = model.m;
  ens.t_index = 0;
  return ens;
}

EmpiricalMeasure conditional_law(const ParticleEnsemble& ens) {
  return EmpiricalMeasure(ens.states);
}

Vector Policy::action(double t, const Vector& mean) const {
  switch (kind) {
    case Kind::zero:
      return Vector::Zero(q);
    case Kind::constant:
      return a0;
    case Kind::feedback:
      return gain_scale * optimal_action(*sol, t, mean);
    case Kind::jump_driven:
      return jump_value(*jumps, t);
  }
  throw InvalidArgumentError("policy: unknown kind");
}

Policy Policy::zero(int q) {
  if (q <= 0) throw InvalidArgumentError("policy: action dimension must be positive");
  Policy p;
  p.kind = Kind::zero;
  p.q = q;
  return p;
}

Policy Policy::constant(Vector a) {
  if (a.size() == 0) throw InvalidArgumentError("policy: empty constant action");
  Policy p;
  p.kind = Kind::constant;
  p.q = int(a.size());
  p.a0 = std::move(a);
  return p;
}

Policy Policy::feedback(std::shared_ptr<const LqSolution> sol, double gain_scale) {
  if (!sol) throw InvalidArgumentError("policy: missing feedback solution");
  Policy p;
  p.kind = Kind::feedback;
  p.q = sol->model.q;
  p.sol = std::move(sol);
  p.gain_scale = gain_scale;
  return p;
}

Policy Policy::jump_driven(std::shared_ptr<const JumpTrajectory> jumps) {
  if (!jumps || !jumps->actions)
    throw InvalidArgumentError("policy: missing jump trajectory");
  Policy p;
  p.kind = Kind::jump_driven;
  p.q = jumps->actions->q();
  p.jumps = std::move(jumps);
  return p;
}

void ensemble_step(ParticleEnsemble& ens, const GeneralModel& model, const Vector& action,
                   StepWorkspace& ws) {
  const NoisePath& w = *ens.common_w;
  const int k = ens.t_index;
  if (k < 0 || k >= w.steps)
    throw InvalidArgumentError("ensemble_step: no common increment at this step");
  const int n = ens.n(), N = ens.particles(), m = ens.m, d = w.dim;
  if (n != model.n || m != model.m || d != model.d)
    throw InvalidArgumentError("ensemble_step: model/ensemble dimension mismatch");
  if (int(action.size()) != model.q)
    throw InvalidArgumentError("ensemble_step: action dimension mismatch");
  const double dt = w.dt;
  const double root_dt = std::sqrt(dt);

  // Private increments for this step.  Values depend only on (key, absolute
  // index), so a restarted ensemble continues the same streams.
  ws.dv.resize(m, N);
  if (ens.v_increments) {
    const PrivateNoise& v = *ens.v_increments;
    if (v.m != m || v.particles != N || k >= v.steps)
      throw InvalidArgumentError("ensemble_step: stored private noise does not cover this step");
    for (int p = 0; p < N; ++p) ws.dv.col(p) = v.increments.block(p * m, k, m, 1);
  } else {
    const uint64_t base = uint64_t(k) * uint64_t(m);
    for (int p = 0; p < N; ++p) {
      const uint64_t key = ens.v_keys[size_t(p)];
      for (int c = 0; c < m; ++c) ws.dv(c, p) = root_dt * gaussian(key, base + uint64_t(c));
    }
  }
  const auto dw = w.increments.col(k);

  ws.xn.resize(n, N);
  if (model.lq) {
    // Block-affine form: every term is a GEMM or a broadcast over the whole
    // ensemble, all reading the pre-step states.
    const LqModel& lq = *model.lq;
    ws.bc = lq.b0;
    ws.bc.noalias() += lq.C * action;
    ws.xn = ens.states;
    ws.tmp.resize(n, N);
    ws.tmp.noalias() = lq.B * ens.states;
    ws.xn += dt * ws.tmp;
    ws.xn.colwise() += dt * ws.bc;
    for (int i = 0; i < m; ++i) {
      ws.gcol = lq.gamma_v[size_t(i)];
      ws.gcol.noalias() += lq.F_v[size_t(i)] * action;
      ws.tmp.noalias() = lq.D_v[size_t(i)] * ens.states;
      ws.xn.array() += ws.tmp.array().rowwise() * ws.dv.row(i).array();
      ws.xn.noalias() += ws.gcol * ws.dv.row(i);
    }
    for (int j = 0; j < d; ++j) {
      const double dwj = dw(j);
      ws.gcol = lq.gamma_w[size_t(j)];
      ws.gcol.noalias() += lq.F_w[size_t(j)] * action;
      ws.tmp.noalias() = lq.D_w[size_t(j)] * ens.states;
      ws.xn += dwj * ws.tmp;
      ws.xn.colwise() += dwj * ws.gcol;
    }
  } else {
    ws.b.resize(n);
    ws.sv.resize(n, m);
    ws.sw.resize(n, d);
    ws.gcol.resize(n);
    for (int p = 0; p < N; ++p) {
      ws.gcol = ens.states.col(p);
      model.drift(ws.gcol, action, ws.b);
      model.diffusion_v(ws.gcol, action, ws.sv);
      model.diffusion_w(ws.gcol, action, ws.sw);
      ws.xn.col(p) = ws.gcol + dt * ws.b;
      ws.xn.col(p).noalias() += ws.sv * ws.dv.col(p);
      ws.xn.col(p).noalias() += ws.sw * dw;
    }
  }
  ens.states.swap(ws.xn);
  ens.t_index = k + 1;
}

void propagate_steps(ParticleEnsemble& ens, const GeneralModel& model, const Policy& policy,
                     int n_steps, const StepObserver& observer) {
  if (n_steps < 0) throw InvalidArgumentError("propagate: negative step count");
  StepWorkspace ws;
  Vector mean = Vector::Zero(ens.n());
  for (int s = 0; s < n_steps; ++s) {
    const double t = ens.time();
    if (policy.needs_mean()) mean = ens.states.rowwise().mean();
    const Vector a = policy.action(t, mean);
    ensemble_step(ens, model, a, ws);
    if (observer) observer(ens, a);
  }
  if (!ens.states.allFinite())
    throw NonFiniteError("particle states diverged (non-finite values)");
}

EnsembleTrajectory propagate(ParticleEnsemble& ens, const GeneralModel& model,
                             const Policy& policy, int n_steps) {
  EnsembleTrajectory traj;
  traj.start_index = ens.t_index;
  traj.dt = ens.dt();
  traj.states.reserve(size_t(n_steps) + 1);
  traj.actions.reserve(size_t(n_steps));
  traj.states.push_back(ens.states);
  propagate_steps(ens, model, policy, n_steps,
                  [&traj](const ParticleEnsemble& e, const Vector& a) {
                    traj.states.push_back(e.states);
                    traj.actions.push_back(a);
                  });
  return traj;
}

ParticleEnsemble restart(const ParticleEnsemble& ens, const EnsembleTrajectory& traj,
                         int theta) {
  const int node = theta - traj.start_index;
  if (node < 0 || node >= int(traj.states.size()))
    throw InvalidArgumentError("restart: step outside the recorded range");
  ParticleEnsemble out;
  out.states = traj.states[size_t(node)];
  out.common_w = ens.common_w;
  out.v_keys = ens.v_keys;
  out.v_increments = ens.v_increments;
  out.m = ens.m;
  out.t_index = theta;
  return out;
}

ParticleEnsemble restart_decoupled(const ParticleEnsemble& ens, const EnsembleTrajectory& traj,
                                   int theta, uint64_t seed) {
  ParticleEnsemble out = restart(ens, traj, theta);
  for (int p = 0; p < out.particles(); ++p) out.v_keys[size_t(p)] = particle_key(seed, p);
  out.v_increments.reset();  // fresh streams, not the recorded realisation
  return out;
}

GaussianFilterPath kalman_bucy(const LqModel& model, const NoisePath& w, const Policy& policy) {
  check_dimensions(model);
  if (w.dim != model.d)
    throw InvalidArgumentError("kalman_bucy: common path dimension mismatch");
  auto nonzero = [](const Matrix& M) { return M.size() > 0 && M.cwiseAbs().maxCoeff() > 0.0; };
  for (const auto& M : model.D_v)
    if (nonzero(M))
      throw InvalidArgumentError("kalman_bucy: requires additive noise, D_v is nonzero");
  for (const auto& M : model.F_v)
    if (nonzero(M))
      throw InvalidArgumentError("kalman_bucy: requires additive noise, F_v is nonzero");
  for (const auto& M : model.D_w)
    if (nonzero(M))
      throw InvalidArgumentError("kalman_bucy: requires additive noise, D_w is nonzero");
  for (const auto& M : model.F_w)
    if (nonzero(M))
      throw InvalidArgumentError("kalman_bucy: requires additive noise, F_w is nonzero");
  if (policy.kind != Policy::Kind::zero && policy.kind != Policy::Kind::constant)
    throw InvalidArgumentError("kalman_bucy: exact recursion needs an open-loop policy");
  const Vector a =
      policy.kind == Policy::Kind::constant ? policy.a0 : Vector::Zero(model.q);
  if (int(a.size()) != model.q)
    throw InvalidArgumentError("kalman_bucy: action dimension mismatch");

  const int n = model.n;
  const double dt = w.dt;
  Matrix sig_v = Matrix::Zero(n, n);
  for (const auto& g : model.gamma_v) sig_v.noalias() += g * g.transpose();
  // Conditional covariance given the common path solves the Lyapunov equation
  // driven by the private loadings only; the conditional mean follows the
  // drift plus the common loadings, on the same grid as the particles.
  auto lyap = [&](const Matrix& s) {
    return sym(model.B * s + s * model.B.transpose() + sig_v);
  };
  GaussianFilterPath out;
  out.mean.resize(size_t(w.steps) + 1);
  out.cov.resize(size_t(w.steps) + 1);
  Vector mean = model.x0;
  Matrix cov = Matrix::Zero(n, n);
  out.mean[0] = mean;
  out.cov[0] = cov;
  Vector bc = model.b0;
  bc.noalias() += model.C * a;
  for (int k = 0; k < w.steps; ++k) {
    Vector drift = bc;
    drift.noalias() += model.B * mean;
    mean += dt * drift;
    for (int j = 0; j < model.d; ++j) mean += model.gamma_w[size_t(j)] * w.increments(j, k);
    const Matrix g1 = lyap(cov);
    const Matrix g2 = lyap(cov + (0.5 * dt) * g1);
    const Matrix g3 = lyap(cov + (0.5 * dt) * g2);
    const Matrix g4 = lyap(cov + dt * g3);
    cov = sym(cov + (dt / 6.0) * (g1 + 2.0 * g2 + 2.0 * g3 + g4));
    out.mean[size_t(k) + 1] = mean;
    out.cov[size_t(k) + 1] = cov;
  }
  return out;
}

TestFunction quadratic_test(Matrix A, Vector b, double c) {
  if (A.rows() != A.cols() || A.rows() != b.size())
    throw InvalidArgumentError("quadratic_test: shape mismatch");
  auto As = std::make_shared<const Matrix>(sym(A));
  auto bs = std::make_shared<const Vector>(std::move(b));
  TestFunction f;
  f.value = [As, bs, c](const Vector& x) { return x.dot((*As) * x) + bs->dot(x) + c; };
  f.gradient = [As, bs](const Vector& x, Vector& g) {
    g.noalias() = 2.0 * ((*As) * x);
    g += *bs;
  };
  f.hessian = [As](const Vector&, Matrix& h) { h = 2.0 * (*As); };
  return f;
}

std::vector<double> zakai_residual(const EnsembleTrajectory& traj, const GeneralModel& model,
                                   const TestFunction& phi, const NoisePath& w) {
  const int K = int(traj.actions.size());
  if (int(traj.states.size()) != K + 1)
    throw InvalidArgumentError("zakai_residual: snapshots and actions are inconsistent");
  if (std::fabs(traj.dt - w.dt) > 1e-12 * std::max(1.0, w.dt))
    throw InvalidArgumentError("zakai_residual: trajectory and path use different grids");
  const int n = model.n;
  const double dt = traj.dt;

  auto mean_phi = [&](const Matrix& states) {
    double s = 0.0;
    Vector x(n);
    for (int p = 0; p < states.cols(); ++p) {
      x = states.col(p);
      s += phi.value(x);
    }
    return s / double(states.cols());
  };

  std::vector<double> r(size_t(K) + 1, 0.0);
  const double phi0 = mean_phi(traj.states[0]);
  Vector grad(n), b(n), x(n);
  Matrix hess(n, n), sv(n, model.m), sw(n, model.d);
  double acc = 0.0;
  for (int k = 0; k < K; ++k) {
    const Matrix& st = traj.states[size_t(k)];
    const Vector& a = traj.actions[size_t(k)];
    const int kw = traj.start_index + k;
    if (kw >= w.steps)
      throw InvalidArgumentError("zakai_residual: common path too short for the recorded run");
    const int N = int(st.cols());
    double gen = 0.0;
    Vector mart = Vector::Zero(model.d);
    for (int p = 0; p < N; ++p) {
      x = st.col(p);
      model.drift(x, a, b);
      model.diffusion_v(x, a, sv);
      model.diffusion_w(x, a, sw);
      phi.gradient(x, grad);
      phi.hessian(x, hess);
      gen += b.dot(grad);
      gen += 0.5 * ((sv.transpose() * hess * sv).trace() + (sw.transpose() * hess * sw).trace());
      mart.noalias() += sw.transpose() * grad;
    }
    gen /= double(N);
    mart /= double(N);
    acc += gen * dt + mart.dot(w.increments.col(kw));
    r[size_t(k) + 1] = mean_phi(traj.states[size_t(k) + 1]) - phi0 - acc;
  }
  return r;
}

}  // namespace poctrl
