#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <vector>

#include "poctrl/errors.hpp"

namespace poctrl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline Matrix sym(const Matrix& a) { return 0.5 * (a + a.transpose()); }

// Controlled linear dynamics with control-affine multiplicative noise and
// quadratic costs to be minimised.  Dimensions: state n, private noise m,
// common (observed) noise d, action q.
//
//   dX = (b0 + B X + C a) dt
//      + sum_i (gamma_v[i] + D_v[i] X + F_v[i] a) dV^i
//      + sum_j (gamma_w[j] + D_w[j] X + F_w[j] a) dW^j
//
//   cost(a) = E[ int_0^T (X'QX + a'N a) dt + X_T' P X_T ],  X_0 = x0.
struct LqModel {
  int n = 0, m = 0, d = 0, q = 0;
  double T = 1.0;
  Vector b0;                    // n
  Matrix B;                     // n x n
  Matrix C;                     // n x q
  std::vector<Vector> gamma_v;  // m entries of size n
  std::vector<Matrix> D_v;      // m entries, n x n
  std::vector<Matrix> F_v;      // m entries, n x q
  std::vector<Vector> gamma_w;  // d entries of size n
  std::vector<Matrix> D_w;      // d entries, n x n
  std::vector<Matrix> F_w;      // d entries, n x q
  Matrix Q, P;                  // n x n, symmetric PSD
  Matrix N;                     // q x q, symmetric PSD
  Vector x0;                    // n
};

// Throws InvalidArgumentError on any dimensional inconsistency and
// symmetrizes Q, P, N in place.  Call once after assembling a model.
void finalize(LqModel& model);

// Same checks without mutation; used by entry points on already-built models.
void check_dimensions(const LqModel& model);

// Which coercivity condition admits the closed-form feedback:
//   n_uniformly_positive .......... N >= eps * I
//   state_cost_with_private_noise . (P or Q uniformly positive) and some
//                                   F_v[i] with smallest singular value >= eps
enum class C2Branch { n_uniformly_positive, state_cost_with_private_noise, fails };

struct ValidationReport {
  bool c1_holds = false;  // Q, P, N all PSD (to -eps tolerance)
  C2Branch c2_branch = C2Branch::fails;
  double min_eig_Q = 0.0, min_eig_P = 0.0, min_eig_N = 0.0;
  double best_F_v_sigma_min = 0.0;  // max over i of sigma_min(F_v[i])
  bool ok() const { return c1_holds && c2_branch != C2Branch::fails; }
};

ValidationReport validate_lq(const LqModel& model, double eps = 1e-9);

const char* c2_branch_name(C2Branch b);

// Coefficient-function view of a model, in gain convention (rewards are
// maximised): running_gain = -(x'Qx + a'Na), terminal_gain = -x'Px for a
// wrapped LQ instance.  Simulation code that only needs coefficient
// evaluations works against this interface; `lq` keeps the originating LQ
// instance (when there is one) so hot loops can use its block-affine form.
struct GeneralModel {
  int n = 0, m = 0, d = 0, q = 0;
  double T = 1.0;
  std::function<void(const Vector& x, const Vector& a, Vector& out)> drift;          // n
  std::function<void(const Vector& x, const Vector& a, Matrix& out)> diffusion_v;    // n x m
  std::function<void(const Vector& x, const Vector& a, Matrix& out)> diffusion_w;    // n x d
  std::function<double(const Vector& x, const Vector& a)> running_gain;
  std::function<double(const Vector& x)> terminal_gain;
  std::shared_ptr<const LqModel> lq;
};

GeneralModel lq_as_general(const LqModel& model);

}  // namespace poctrl
