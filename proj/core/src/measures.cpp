#include "poctrl/measures.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace poctrl {

EmpiricalMeasure::EmpiricalMeasure(Matrix atom_columns) : atoms(std::move(atom_columns)) {
  if (atoms.cols() < 1 || atoms.rows() < 1)
    throw InvalidArgumentError("measure: needs at least one atom and one dimension");
  if (!atoms.allFinite()) throw InvalidArgumentError("measure: atoms must be finite");
}

EmpiricalMeasure EmpiricalMeasure::dirac(const Vector& x) {
  Matrix a(x.size(), 1);
  a.col(0) = x;
  return EmpiricalMeasure(std::move(a));
}

double quad_var(const EmpiricalMeasure& pi, const Matrix& k) {
  if (k.rows() != pi.dim() || k.cols() != pi.dim())
    throw InvalidArgumentError("quad_var: matrix shape mismatch");
  const Vector mu = pi.mean();
  const Matrix centered = pi.atoms.colwise() - mu;
  return (k * centered).cwiseProduct(centered).sum() / double(pi.count());
}

double v2(const EmpiricalMeasure& pi, const Matrix& ell) {
  if (ell.rows() != pi.dim() || ell.cols() != pi.dim())
    throw InvalidArgumentError("v2: matrix shape mismatch");
  const Vector mu = pi.mean();
  return mu.dot(ell * mu);
}

double v1(const EmpiricalMeasure& pi, const Vector& y) {
  if (y.size() != pi.dim()) throw InvalidArgumentError("v1: vector size mismatch");
  return y.dot(pi.mean());
}

double second_moment(const EmpiricalMeasure& pi, const Matrix& k) {
  if (k.rows() != pi.dim() || k.cols() != pi.dim())
    throw InvalidArgumentError("second_moment: matrix shape mismatch");
  return (k * pi.atoms).cwiseProduct(pi.atoms).sum() / double(pi.count());
}

namespace {

// Exact W2 on the line: both quantile functions are step functions, so the
// squared distance is a finite sum over the merged probability breakpoints.
double wasserstein2_1d(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  std::vector<double> xs(a.atoms.data(), a.atoms.data() + a.count());
  std::vector<double> ys(b.atoms.data(), b.atoms.data() + b.count());
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());
  const int na = int(xs.size()), nb = int(ys.size());
  double total = 0.0, level = 0.0;
  int i = 0, j = 0;
  while (i < na && j < nb) {
    const double next_a = double(i + 1) / na;
    const double next_b = double(j + 1) / nb;
    const double next = std::min(next_a, next_b);
    const double diff = xs[i] - ys[j];
    total += (next - level) * diff * diff;
    level = next;
    if (next_a <= next) ++i;
    if (next_b <= next) ++j;
  }
  return std::sqrt(total);
}

// O(N^3) shortest-augmenting-path assignment (Hungarian with potentials) on
// the squared-distance matrix; exact minimum-cost perfect matching.
double assignment_cost(const Matrix& cost) {
  const int n = int(cost.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> assigned(n + 1, 0);  // assigned[col] = row occupying it (1-based)
  std::vector<int> way(n + 1, 0);
  for (int row = 1; row <= n; ++row) {
    assigned[0] = row;
    int col0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[col0] = 1;
      const int row0 = assigned[col0];
      double delta = inf;
      int col1 = -1;
      for (int col = 1; col <= n; ++col) {
        if (used[col]) continue;
        const double cur = cost(row0 - 1, col - 1) - u[row0] - v[col];
        if (cur < minv[col]) {
          minv[col] = cur;
          way[col] = col0;
        }
        if (minv[col] < delta) {
          delta = minv[col];
          col1 = col;
        }
      }
      for (int col = 0; col <= n; ++col) {
        if (used[col]) {
          u[assigned[col]] += delta;
          v[col] -= delta;
        } else {
          minv[col] -= delta;
        }
      }
      col0 = col1;
    } while (assigned[col0] != 0);
    do {
      const int col1 = way[col0];
      assigned[col0] = assigned[col1];
      col0 = col1;
    } while (col0 != 0);
  }
  double total = 0.0;
  for (int col = 1; col <= n; ++col) total += cost(assigned[col] - 1, col - 1);
  return total;
}

Matrix replicate_atoms(const Matrix& atoms, int copies) {
  Matrix out(atoms.rows(), atoms.cols() * copies);
  for (int c = 0; c < int(atoms.cols()); ++c)
    for (int r = 0; r < copies; ++r) out.col(c * copies + r) = atoms.col(c);
  return out;
}

}  // namespace

double wasserstein2(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  if (a.dim() != b.dim()) throw InvalidArgumentError("wasserstein2: dimension mismatch");
  if (a.dim() == 1) return wasserstein2_1d(a, b);

  Matrix xa = a.atoms, xb = b.atoms;
  if (a.count() != b.count()) {
    if (a.count() % b.count() == 0) {
      xb = replicate_atoms(xb, a.count() / b.count());
    } else if (b.count() % a.count() == 0) {
      xa = replicate_atoms(xa, b.count() / a.count());
    } else {
      throw InvalidArgumentError(
          "wasserstein2: atom counts must match (or one divide the other) above one dimension");
    }
  }
  const int n = int(xa.cols());
  if (n > kMaxMatchingAtoms)
    throw InvalidArgumentError("wasserstein2: too many atoms for the exact matching solver");

  Matrix cost(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) cost(i, j) = (xa.col(i) - xb.col(j)).squaredNorm();
  return std::sqrt(assignment_cost(cost) / double(n));
}

}  // namespace poctrl
