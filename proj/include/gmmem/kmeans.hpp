#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "gmmem/linalg.hpp"
#include "gmmem/rng.hpp"

namespace gmmem {

struct KMeansResult {
  std::vector<int> labels;
  Matrix centers;  // d x k
  double cost = 0.0;
  int iterations = 0;
  /// Within-cluster sum of squares after every assignment pass of the winning
  /// restart.
  std::vector<double> cost_history;
};

inline constexpr int kMaxEmptyClusterRepairs = 3;

namespace detail {

inline Matrix kmeanspp_seed(const Matrix& x, int k, Rng& rng) {
  const Eigen::Index n = x.rows();
  Matrix centers(x.cols(), k);
  centers.col(0) = x.row(static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(n)))).transpose();
  Vector nearest = (x.rowwise() - centers.col(0).transpose()).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = nearest.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += nearest(i);
        if (acc > target && nearest(i) > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(n)));
    }
    centers.col(c) = x.row(pick).transpose();
    nearest = nearest.cwiseMin((x.rowwise() - centers.col(c).transpose()).rowwise().squaredNorm());
  }
  return centers;
}

inline KMeansResult lloyd_run(const Matrix& x, int k, int max_iters, Rng& rng) {
  const Eigen::Index n = x.rows();
  KMeansResult r;
  r.centers = kmeanspp_seed(x, k, rng);
  r.labels.assign(static_cast<std::size_t>(n), -1);
  Vector dist(n);
  int repairs = 0;
  for (int it = 0;; ++it) {
    bool changed = false;
    double cost = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double dd = (x.row(i).transpose() - r.centers.col(c)).squaredNorm();
        if (dd < best_d) {
          best_d = dd;
          best = c;
        }
      }
      auto& slot = r.labels[static_cast<std::size_t>(i)];
      changed |= slot != best;
      slot = best;
      dist(i) = best_d;
      cost += best_d;
    }
    r.cost = cost;
    r.cost_history.push_back(cost);
    r.iterations = it;
    if (!changed || it >= max_iters) break;

    Matrix sums = Matrix::Zero(x.cols(), k);
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int c = r.labels[static_cast<std::size_t>(i)];
      sums.col(c) += x.row(i).transpose();
      ++counts[static_cast<std::size_t>(c)];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        r.centers.col(c) = sums.col(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
        continue;
      }
      if (++repairs > kMaxEmptyClusterRepairs) {
        fail(ErrorCode::EmptyCluster, "cluster " + std::to_string(c + 1) + " stayed empty after repairs");
      }
      Eigen::Index far = 0;
      dist.maxCoeff(&far);
      r.centers.col(c) = x.row(far).transpose();
      dist(far) = 0.0;
    }
  }
  return r;
}

}  // namespace detail

/// Best-of-restarts Lloyd iteration with k-means++ seeding on Euclidean
/// distance. Restart r draws from stream r of `seed`; the lowest-cost restart
/// wins, ties going to the earlier restart.
inline KMeansResult lloyd_kmeans(const Matrix& x, int k, int restarts, int max_iters, std::uint64_t seed) {
  if (k < 1) fail(ErrorCode::InvalidArgument, "k must be positive");
  if (x.rows() < k) fail(ErrorCode::InvalidArgument, "need at least k observations");
  if (restarts < 1) fail(ErrorCode::InvalidArgument, "restarts must be >= 1");
  if (max_iters < 0) fail(ErrorCode::InvalidArgument, "max_iters must be nonnegative");
  KMeansResult best;
  best.cost = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    KMeansResult run = detail::lloyd_run(x, k, max_iters, rng);
    if (run.cost < best.cost) best = std::move(run);
  }
  return best;
}

}  // namespace gmmem
