#pragma once

#include <Eigen/Dense>

#include "poctrl/errors.hpp"
#include "poctrl/model.hpp"

namespace poctrl {

// Equal-weight empirical measure on R^n, one atom per column.
struct EmpiricalMeasure {
  Matrix atoms;  // n x N

  EmpiricalMeasure() = default;
  explicit EmpiricalMeasure(Matrix atom_columns);
  static EmpiricalMeasure dirac(const Vector& x);

  int dim() const { return int(atoms.rows()); }
  int count() const { return int(atoms.cols()); }
  Vector mean() const { return atoms.rowwise().mean(); }
};

// Centered quadratic statistic: (1/N) sum_p (x_p - mean)' k (x_p - mean).
double quad_var(const EmpiricalMeasure& pi, const Matrix& k);

// Quadratic form of the mean: mean' ell mean.
double v2(const EmpiricalMeasure& pi, const Matrix& ell);

// Linear form of the mean: y' mean.
double v1(const EmpiricalMeasure& pi, const Vector& y);

// Plain integral of a quadratic x'kx against the measure.
double second_moment(const EmpiricalMeasure& pi, const Matrix& k);

// Exact 2-Wasserstein distance between equal-weight empirical measures.
// One-dimensional inputs use the sorted quantile coupling (any atom counts);
// higher dimensions solve the assignment problem exactly and require equal
// atom counts (or counts where one divides the other, handled by atom
// replication), capped at kMaxMatchingAtoms atoms.
constexpr int kMaxMatchingAtoms = 512;
double wasserstein2(const EmpiricalMeasure& a, const EmpiricalMeasure& b);

}  // namespace poctrl
