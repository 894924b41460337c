#include "poctrl/model.hpp"

#include <Eigen/SVD>

namespace poctrl {

namespace {

void require(bool cond, const std::string& what) {
  if (!cond) throw InvalidArgumentError("model: " + what);
}

void check_block(const Matrix& a, int rows, int cols, const std::string& name) {
  require(a.rows() == rows && a.cols() == cols,
          name + " must be " + std::to_string(rows) + "x" + std::to_string(cols));
  require(a.allFinite(), name + " must be finite");
}

void check_vec(const Vector& v, int size, const std::string& name) {
  require(v.size() == size, name + " must have size " + std::to_string(size));
  require(v.allFinite(), name + " must be finite");
}

}  // namespace

void check_dimensions(const LqModel& model) {
  require(model.n >= 1, "state dimension n must be >= 1");
  require(model.m >= 0 && model.d >= 0, "noise dimensions must be >= 0");
  require(model.q >= 1, "action dimension q must be >= 1");
  require(model.T > 0.0 && std::isfinite(model.T), "horizon T must be positive");
  check_vec(model.b0, model.n, "b0");
  check_block(model.B, model.n, model.n, "B");
  check_block(model.C, model.n, model.q, "C");
  require(int(model.gamma_v.size()) == model.m, "gamma_v must have m entries");
  require(int(model.D_v.size()) == model.m, "D_v must have m entries");
  require(int(model.F_v.size()) == model.m, "F_v must have m entries");
  require(int(model.gamma_w.size()) == model.d, "gamma_w must have d entries");
  require(int(model.D_w.size()) == model.d, "D_w must have d entries");
  require(int(model.F_w.size()) == model.d, "F_w must have d entries");
  for (int i = 0; i < model.m; ++i) {
    check_vec(model.gamma_v[i], model.n, "gamma_v[" + std::to_string(i) + "]");
    check_block(model.D_v[i], model.n, model.n, "D_v[" + std::to_string(i) + "]");
    check_block(model.F_v[i], model.n, model.q, "F_v[" + std::to_string(i) + "]");
  }
  for (int j = 0; j < model.d; ++j) {
    check_vec(model.gamma_w[j], model.n, "gamma_w[" + std::to_string(j) + "]");
    check_block(model.D_w[j], model.n, model.n, "D_w[" + std::to_string(j) + "]");
    check_block(model.F_w[j], model.n, model.q, "F_w[" + std::to_string(j) + "]");
  }
  check_block(model.Q, model.n, model.n, "Q");
  check_block(model.P, model.n, model.n, "P");
  check_block(model.N, model.q, model.q, "N");
  check_vec(model.x0, model.n, "x0");
}

void finalize(LqModel& model) {
  check_dimensions(model);
  model.Q = sym(model.Q);
  model.P = sym(model.P);
  model.N = sym(model.N);
}

ValidationReport validate_lq(const LqModel& model, double eps) {
  check_dimensions(model);
  ValidationReport rep;
  const auto min_eig = [](const Matrix& a) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym(a));
    return es.eigenvalues().minCoeff();
  };
  rep.min_eig_Q = min_eig(model.Q);
  rep.min_eig_P = min_eig(model.P);
  rep.min_eig_N = min_eig(model.N);
  rep.c1_holds = rep.min_eig_Q >= -eps && rep.min_eig_P >= -eps && rep.min_eig_N >= -eps;

  rep.best_F_v_sigma_min = 0.0;
  for (int i = 0; i < model.m; ++i) {
    Eigen::JacobiSVD<Matrix> svd(model.F_v[i]);
    const double smin = svd.singularValues().size() > 0 && model.F_v[i].rows() >= model.F_v[i].cols()
                            ? svd.singularValues().minCoeff()
                            : 0.0;
    rep.best_F_v_sigma_min = std::max(rep.best_F_v_sigma_min, smin);
  }

  if (rep.min_eig_N >= eps) {
    rep.c2_branch = C2Branch::n_uniformly_positive;
  } else if ((rep.min_eig_P >= eps || rep.min_eig_Q >= eps) && rep.best_F_v_sigma_min >= eps) {
    rep.c2_branch = C2Branch::state_cost_with_private_noise;
  } else {
    rep.c2_branch = C2Branch::fails;
  }
  return rep;
}

const char* c2_branch_name(C2Branch b) {
  switch (b) {
    case C2Branch::n_uniformly_positive: return "n_uniformly_positive";
    case C2Branch::state_cost_with_private_noise: return "state_cost_with_private_noise";
    default: return "fails";
  }
}

GeneralModel lq_as_general(const LqModel& model) {
  check_dimensions(model);
  auto lq = std::make_shared<const LqModel>(model);
  GeneralModel g;
  g.n = lq->n; g.m = lq->m; g.d = lq->d; g.q = lq->q;
  g.T = lq->T;
  g.lq = lq;
  g.drift = [lq](const Vector& x, const Vector& a, Vector& out) {
    out = lq->b0;
    out.noalias() += lq->B * x;
    out.noalias() += lq->C * a;
  };
  g.diffusion_v = [lq](const Vector& x, const Vector& a, Matrix& out) {
    out.resize(lq->n, lq->m);
    for (int i = 0; i < lq->m; ++i) {
      out.col(i) = lq->gamma_v[i];
      out.col(i).noalias() += lq->D_v[i] * x;
      out.col(i).noalias() += lq->F_v[i] * a;
    }
  };
  g.diffusion_w = [lq](const Vector& x, const Vector& a, Matrix& out) {
    out.resize(lq->n, lq->d);
    for (int j = 0; j < lq->d; ++j) {
      out.col(j) = lq->gamma_w[j];
      out.col(j).noalias() += lq->D_w[j] * x;
      out.col(j).noalias() += lq->F_w[j] * a;
    }
  };
  // Gain convention: the wrapped quadratic costs enter with a single sign flip.
  g.running_gain = [lq](const Vector& x, const Vector& a) {
    return -(x.dot(lq->Q * x) + a.dot(lq->N * a));
  };
  g.terminal_gain = [lq](const Vector& x) { return -x.dot(lq->P * x); };
  return g;
}

}  // namespace poctrl
