#pragma once

#include <algorithm>
#include <limits>
#include <numeric>
#include <vector>

#include "gmmem/linalg.hpp"

namespace gmmem {

/// Largest size solved by exhaustive enumeration; bigger problems use the
/// Hungarian method.
inline constexpr Eigen::Index kExhaustiveAssignmentLimit = 8;

using Permutation = std::vector<int>;

inline Permutation identity_permutation(Eigen::Index k) {
  Permutation p(static_cast<std::size_t>(k));
  std::iota(p.begin(), p.end(), 0);
  return p;
}

inline Permutation inverse_permutation(const Permutation& p) {
  Permutation inv(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) inv[static_cast<std::size_t>(p[i])] = static_cast<int>(i);
  return inv;
}

namespace detail {

inline Permutation hungarian(const Matrix& cost) {
  // Potentials formulation, rows 1..n matched to columns 1..n.
  const int n = static_cast<int>(cost.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
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
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  Permutation p(static_cast<std::size_t>(n));
  for (int j = 1; j <= n; ++j) p[static_cast<std::size_t>(match[j] - 1)] = j - 1;
  return p;
}

}  // namespace detail

/// Permutation p minimising sum_l cost(l, p[l]). Exhaustive search keeps the
/// lexicographically smallest minimiser.
inline Permutation min_cost_assignment(const Matrix& cost) {
  const Eigen::Index k = cost.rows();
  if (cost.cols() != k) fail(ErrorCode::ShapeMismatch, "assignment cost must be square");
  if (k > kExhaustiveAssignmentLimit) return detail::hungarian(cost);
  Permutation p = identity_permutation(k);
  Permutation best = p;
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (Eigen::Index l = 0; l < k; ++l) c += cost(l, p[static_cast<std::size_t>(l)]);
    if (c < best_cost) {
      best_cost = c;
      best = p;
    }
  } while (std::next_permutation(p.begin(), p.end()));
  return best;
}

}  // namespace gmmem
