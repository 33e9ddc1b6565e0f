#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "gmmem/linalg.hpp"
#include "gmmem/rng.hpp"

namespace gmmem {

/// Parameters of an L-component Gaussian location mixture with one shared
/// covariance: weights (length L), means (d x L, one column per component)
/// and covariance (d x d).
struct MixtureParams {
  Vector weights;
  Matrix means;
  Matrix covariance;

  Eigen::Index components() const { return weights.size(); }
  Eigen::Index dim() const { return means.rows(); }
};

/// Observations (n x d, one row per draw) with their latent labels.
///
/// Labels are 0-based here; files and the CLI use 1-based labels and convert
/// at the boundary.
struct LabeledDataset {
  Matrix observations;
  std::vector<int> labels;
  int num_components = 0;

  Eigen::Index size() const { return observations.rows(); }
  Eigen::Index dim() const { return observations.cols(); }
};

struct SeparationStats {
  double delta_min = 0.0;
  double delta_max = 0.0;
  double pi_min = 0.0;
  Matrix pairwise;
};

inline double mahalanobis_sq(const Vector& u, const Vector& v, const Cholesky& chol) {
  return chol.whiten(u - v).squaredNorm();
}

/// (u - v)^T cov^{-1} (u - v) through a Cholesky solve.
inline double mahalanobis_sq(const Vector& u, const Vector& v, const Matrix& cov) {
  if (u.size() != v.size() || u.size() != cov.rows()) {
    fail(ErrorCode::ShapeMismatch, "mahalanobis_sq dimension mismatch");
  }
  return mahalanobis_sq(u, v, Cholesky(cov));
}

/// Pairwise squared Mahalanobis distances between the columns of `means`.
inline Matrix pairwise_mahalanobis(const Matrix& means, const Cholesky& chol) {
  const Matrix white = chol.whiten(means);
  const Eigen::Index k = means.cols();
  Matrix out = Matrix::Zero(k, k);
  for (Eigen::Index a = 0; a < k; ++a) {
    for (Eigen::Index b = a + 1; b < k; ++b) {
      out(a, b) = out(b, a) = (white.col(a) - white.col(b)).squaredNorm();
    }
  }
  return out;
}

inline void check_shapes(const MixtureParams& p) {
  const auto k = p.weights.size();
  if (k == 0) fail(ErrorCode::ShapeMismatch, "mixture needs at least one component");
  if (p.means.cols() != k) fail(ErrorCode::ShapeMismatch, "means must have one column per weight");
  if (p.means.rows() == 0) fail(ErrorCode::ShapeMismatch, "dimension must be positive");
  if (p.covariance.rows() != p.means.rows() || p.covariance.cols() != p.means.rows()) {
    fail(ErrorCode::ShapeMismatch, "covariance must be d x d");
  }
}

/// Throws unless the parameters describe an identifiable mixture.
inline void validate_params(const MixtureParams& p) {
  check_shapes(p);
  if (!p.weights.allFinite() || p.weights.minCoeff() <= 0.0) {
    fail(ErrorCode::NonSimplexWeights, "weights must be strictly positive");
  }
  if (std::abs(p.weights.sum() - 1.0) > 1e-12) {
    fail(ErrorCode::NonSimplexWeights, "weights must sum to one");
  }
  if (!p.means.allFinite()) fail(ErrorCode::InvalidArgument, "means must be finite");
  if (!is_symmetric(p.covariance)) {
    fail(ErrorCode::AsymmetricCovariance, "covariance is not symmetric");
  }
  const Cholesky chol(p.covariance);
  if (p.components() > 1) {
    Matrix pair = pairwise_mahalanobis(p.means, chol);
    pair.diagonal().setConstant(std::numeric_limits<double>::infinity());
    if (!(pair.minCoeff() > 0.0)) fail(ErrorCode::DegenerateMeans, "two component means coincide");
  }
}

inline SeparationStats separation_stats(const MixtureParams& p) {
  check_shapes(p);
  if (p.components() < 2) fail(ErrorCode::SingleComponent, "separation needs L >= 2");
  SeparationStats s;
  s.pairwise = pairwise_mahalanobis(p.means, Cholesky(p.covariance));
  s.delta_min = std::numeric_limits<double>::infinity();
  s.delta_max = 0.0;
  for (Eigen::Index a = 0; a < p.components(); ++a) {
    for (Eigen::Index b = 0; b < p.components(); ++b) {
      if (a == b) continue;
      s.delta_min = std::min(s.delta_min, s.pairwise(a, b));
      s.delta_max = std::max(s.delta_max, s.pairwise(a, b));
    }
  }
  s.pi_min = p.weights.minCoeff();
  return s;
}

inline constexpr Eigen::Index kSampleBlockRows = 1024;

/// Draws n labelled observations. Rows are generated in fixed blocks of
/// `kSampleBlockRows`, each block from its own stream derived from `seed`, so
/// the result does not depend on `jobs`.
inline LabeledDataset sample_dataset(const MixtureParams& params, Eigen::Index n,
                                     std::uint64_t seed, unsigned jobs = 1) {
  if (n <= 0) fail(ErrorCode::InvalidSampleSize, "sample size must be positive");
  validate_params(params);
  const Eigen::Index d = params.dim();
  const Matrix factor = Cholesky(params.covariance).lower();
  Vector cdf(params.components());
  double acc = 0.0;
  for (Eigen::Index j = 0; j < cdf.size(); ++j) cdf(j) = (acc += params.weights(j));

  LabeledDataset data;
  data.num_components = static_cast<int>(params.components());
  data.observations.resize(n, d);
  data.labels.assign(static_cast<std::size_t>(n), 0);

  const Eigen::Index blocks = (n + kSampleBlockRows - 1) / kSampleBlockRows;
  auto fill_block = [&](Eigen::Index b) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(b)));
    const Eigen::Index lo = b * kSampleBlockRows;
    const Eigen::Index hi = std::min(n, lo + kSampleBlockRows);
    Vector z(d);
    for (Eigen::Index i = lo; i < hi; ++i) {
      const Eigen::Index y = rng.categorical(cdf);
      for (Eigen::Index j = 0; j < d; ++j) z(j) = rng.normal();
      data.labels[static_cast<std::size_t>(i)] = static_cast<int>(y);
      data.observations.row(i) = (params.means.col(y) + factor * z).transpose();
    }
  };

  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(blocks)));
  if (jobs == 1) {
    for (Eigen::Index b = 0; b < blocks; ++b) fill_block(b);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < jobs; ++t) {
      pool.emplace_back([&, t] {
        for (Eigen::Index b = t; b < blocks; b += jobs) fill_block(b);
      });
    }
    for (auto& th : pool) th.join();
  }
  return data;
}

/// Returns a copy with the empirical column means subtracted.
inline LabeledDataset center_dataset(const LabeledDataset& data) {
  if (data.size() < 1) fail(ErrorCode::InvalidSampleSize, "cannot center an empty dataset");
  LabeledDataset out = data;
  const Eigen::RowVectorXd mean = data.observations.colwise().mean();
  out.observations.rowwise() -= mean;
  return out;
}

inline void validate_dataset(const LabeledDataset& data) {
  if (data.size() < 1) fail(ErrorCode::InvalidSampleSize, "dataset is empty");
  if (data.num_components < 1) fail(ErrorCode::InvalidArgument, "num_components must be >= 1");
  if (static_cast<Eigen::Index>(data.labels.size()) != data.size()) {
    fail(ErrorCode::LengthMismatch, "one label per observation required");
  }
  for (int y : data.labels) {
    if (y < 0 || y >= data.num_components) {
      fail(ErrorCode::InvalidArgument, "label " + std::to_string(y + 1) + " out of range");
    }
  }
}

/// n_a for every label a.
inline std::vector<Eigen::Index> group_counts(const LabeledDataset& data) {
  std::vector<Eigen::Index> counts(static_cast<std::size_t>(data.num_components), 0);
  for (int y : data.labels) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

}  // namespace gmmem
