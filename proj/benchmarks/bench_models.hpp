#pragma once

// Shared model builders for the micro-benchmarks: a pinned scalar instance
// with every coupling active, and a dense random instance whose coefficient
// scale keeps the backward system well inside its stable regime.

#include <poctrl/model.hpp>
#include <poctrl/rng.hpp>

namespace poctrl::bench {

inline LqModel scalar_model() {
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

inline Matrix random_matrix(int rows, int cols, double scale, UniformCursor& cur) {
  Matrix out(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) out(i, j) = scale * (cur.next() - 0.5);
  return out;
}

inline LqModel dense_model(int n, int m, int d, int q, uint64_t seed) {
  UniformCursor cur{derive(seed, kTagExperiment), 0};
  const double scale = 0.4 / double(n);
  LqModel mo;
  mo.n = n;
  mo.m = m;
  mo.d = d;
  mo.q = q;
  mo.T = 1.0;
  mo.b0 = random_matrix(n, 1, scale, cur);
  mo.B = random_matrix(n, n, scale, cur);
  mo.C = random_matrix(n, q, scale, cur);
  for (int i = 0; i < m; ++i) {
    mo.gamma_v.push_back(random_matrix(n, 1, scale, cur));
    mo.D_v.push_back(random_matrix(n, n, scale, cur));
    mo.F_v.push_back(random_matrix(n, q, scale, cur));
  }
  for (int j = 0; j < d; ++j) {
    mo.gamma_w.push_back(random_matrix(n, 1, scale, cur));
    mo.D_w.push_back(random_matrix(n, n, scale, cur));
    mo.F_w.push_back(random_matrix(n, q, scale, cur));
  }
  mo.Q = Matrix::Identity(n, n);
  mo.N = Matrix::Identity(q, q);
  mo.P = Matrix::Identity(n, n);
  mo.x0 = Vector::Constant(n, 1.0);
  finalize(mo);
  return mo;
}

}  // namespace poctrl::bench
