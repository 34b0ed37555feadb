#include "eendvc/assignment.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "eendvc/error.h"

namespace eendvc {

Matrix pad_square(const Matrix& cost, double fill) {
  const Index n = std::max(cost.rows(), cost.cols());
  Matrix out = Matrix::Constant(n, n, fill);
  out.topLeftCorner(cost.rows(), cost.cols()) = cost;
  return out;
}

std::vector<int> hungarian(const Matrix& cost) {
  // Shortest augmenting path formulation (Jonker-Volgenant style potentials),
  // 1-based internally.
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw ConfigError("hungarian: cost matrix must be square");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> assignment(n, -1);
  for (int j = 1; j <= n; ++j) {
    if (p[j] > 0) assignment[p[j] - 1] = j - 1;
  }
  return assignment;
}

std::vector<int> min_cost_assignment(const Matrix& cost) {
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw ConfigError("min_cost_assignment: cost matrix must be square");
  if (!cost.allFinite()) throw NumericalError("min_cost_assignment: non-finite cost");
  if (n == 0) return {};
  if (n > kExhaustiveLimit) return hungarian(cost);

  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_cost = std::numeric_limits<double>::infinity();
  const double scale = std::max(1.0, cost.cwiseAbs().maxCoeff() * n);
  do {
    double c = 0.0;
    for (int i = 0; i < n; ++i) c += cost(i, perm[i]);
    if (c < best_cost - 1e-12 * scale) {
      best_cost = c;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace eendvc
