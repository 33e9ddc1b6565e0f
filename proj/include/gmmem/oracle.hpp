#pragma once

#include <string>

#include "gmmem/estep.hpp"
#include "gmmem/model.hpp"

namespace gmmem {

/// Maximum-likelihood estimate when the labels are observed: group
/// frequencies, group means and the pooled within-group scatter divided by n.
inline MixtureParams labeled_mle(const LabeledDataset& data) {
  validate_dataset(data);
  const Eigen::Index n = data.size();
  const Eigen::Index d = data.dim();
  const int k = data.num_components;
  const auto counts = group_counts(data);
  for (int a = 0; a < k; ++a) {
    if (counts[static_cast<std::size_t>(a)] == 0) {
      fail(ErrorCode::MissingComponent, "no observation carries label " + std::to_string(a + 1));
    }
  }
  MixtureParams p;
  p.weights.resize(k);
  p.means = Matrix::Zero(d, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    p.means.col(data.labels[static_cast<std::size_t>(i)]) += data.observations.row(i).transpose();
  }
  for (int a = 0; a < k; ++a) {
    const double na = static_cast<double>(counts[static_cast<std::size_t>(a)]);
    p.weights(a) = na / static_cast<double>(n);
    p.means.col(a) /= na;
  }
  p.covariance = Matrix::Zero(d, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector r = data.observations.row(i).transpose() - p.means.col(data.labels[static_cast<std::size_t>(i)]);
    p.covariance.noalias() += r * r.transpose();
  }
  p.covariance = symmetrize(p.covariance) / static_cast<double>(n);
  Cholesky check(p.covariance, ErrorCode::CovarianceSingular);
  return p;
}

/// One-hot rows from the true labels.
inline Responsibilities oracle_responsibilities(const LabeledDataset& data) {
  validate_dataset(data);
  Responsibilities r = Responsibilities::Zero(data.size(), data.num_components);
  for (Eigen::Index i = 0; i < data.size(); ++i) r(i, data.labels[static_cast<std::size_t>(i)]) = 1.0;
  return r;
}

}  // namespace gmmem
