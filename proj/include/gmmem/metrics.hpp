#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Eigenvalues>

#include "gmmem/assignment.hpp"
#include "gmmem/estep.hpp"

namespace gmmem {

// ----- distances ------------------------------------------------------------

/// max_l |pi_l - pi*_l| / pi*_l
inline double dist_pi(const Vector& pi, const Vector& pi_star) {
  if (pi.size() != pi_star.size()) fail(ErrorCode::LengthMismatch, "weight vectors differ in length");
  if (pi_star.size() > 0 && !(pi_star.minCoeff() > 0.0)) {
    fail(ErrorCode::ZeroReferenceWeight, "reference weights must be positive");
  }
  return ((pi - pi_star).array().abs() / pi_star.array()).maxCoeff();
}

inline double dist_means(const Matrix& means, const Matrix& means_star, const Cholesky& chol_star) {
  if (means.rows() != means_star.rows() || means.cols() != means_star.cols() ||
      means.rows() != chol_star.dim()) {
    fail(ErrorCode::ShapeMismatch, "mean matrices must agree in shape");
  }
  return std::sqrt(chol_star.whiten(means - means_star).colwise().squaredNorm().maxCoeff());
}

/// max_l ||mu_l - mu*_l||_{Sigma*}
inline double dist_means(const Matrix& means, const Matrix& means_star, const Matrix& cov_star) {
  if (cov_star.rows() != means_star.rows()) fail(ErrorCode::ShapeMismatch, "cov_star must be d x d");
  return dist_means(means, means_star, Cholesky(cov_star));
}

/// ||W^{-1} diff W^{-T}||_op for the Cholesky factor W of the reference.
inline double whitened_op_norm(const Matrix& diff, const Cholesky& chol_star) {
  if (diff.rows() != chol_star.dim() || diff.cols() != chol_star.dim()) {
    fail(ErrorCode::ShapeMismatch, "covariances must agree in shape");
  }
  const Matrix half = chol_star.whiten(diff);
  const Matrix congruent = symmetrize(chol_star.whiten(half.transpose()));
  return congruent.cwiseAbs().maxCoeff() == 0.0
             ? 0.0
             : Eigen::SelfAdjointEigenSolver<Matrix>(congruent, Eigen::EigenvaluesOnly)
                   .eigenvalues()
                   .cwiseAbs()
                   .maxCoeff();
}

/// Operator norm of W^{-1}(S - S*)W^{-T} with W W^T = S*; spectrally the same
/// as the symmetric-root congruence.
inline double dist_cov(const Matrix& cov, const Matrix& cov_star) {
  if (cov.rows() != cov_star.rows() || cov.cols() != cov_star.cols()) {
    fail(ErrorCode::ShapeMismatch, "covariances must agree in shape");
  }
  return whitened_op_norm(cov - cov_star, Cholesky(cov_star));
}

/// (1/2) max_{a,l} ||W^T (J - J*)(e_a - e_l)||_2 where W W^T = Sigma*.
inline double dist_j(const Matrix& j, const Matrix& j_star, const Matrix& cov_star) {
  if (j.rows() != j_star.rows() || j.cols() != j_star.cols() || cov_star.rows() != j.rows() ||
      cov_star.cols() != j.rows()) {
    fail(ErrorCode::ShapeMismatch, "J matrices must agree in shape");
  }
  const Matrix lift = Cholesky(cov_star).lower().transpose() * (j - j_star);
  double best = 0.0;
  for (Eigen::Index a = 0; a < lift.cols(); ++a) {
    for (Eigen::Index l = a + 1; l < lift.cols(); ++l) {
      best = std::max(best, (lift.col(a) - lift.col(l)).norm());
    }
  }
  return 0.5 * best;
}

// ----- label alignment ------------------------------------------------------

struct Alignment {
  MixtureParams params;
  /// params.means.col(l) == est.means.col(permutation[l])
  Permutation permutation;
};

inline MixtureParams permute_components(const MixtureParams& p, const Permutation& perm) {
  MixtureParams out = p;
  for (std::size_t l = 0; l < perm.size(); ++l) {
    out.weights(static_cast<Eigen::Index>(l)) = p.weights(perm[l]);
    out.means.col(static_cast<Eigen::Index>(l)) = p.means.col(perm[l]);
  }
  return out;
}

/// Relabels `est` to minimise sum_l ||mu_{sigma(l)} - mu*_l||^2 in the
/// reference metric.
inline Alignment align_labels(const MixtureParams& est, const MixtureParams& ref) {
  check_shapes(est);
  check_shapes(ref);
  if (est.components() != ref.components() || est.dim() != ref.dim()) {
    fail(ErrorCode::ShapeMismatch, "cannot align mixtures of different shape");
  }
  const Cholesky chol(ref.covariance);
  const Matrix white_est = chol.whiten(est.means);
  const Matrix white_ref = chol.whiten(ref.means);
  const Eigen::Index k = est.components();
  Matrix cost(k, k);
  for (Eigen::Index l = 0; l < k; ++l)
    for (Eigen::Index j = 0; j < k; ++j) cost(l, j) = (white_est.col(j) - white_ref.col(l)).squaredNorm();
  Alignment out;
  out.permutation = min_cost_assignment(cost);
  out.params = permute_components(est, out.permutation);
  return out;
}

struct DistanceReport {
  double d_pi = 0.0;
  double d_means = 0.0;
  double d_cov = 0.0;
  double d_j = 0.0;
  Permutation permutation;
};

inline DistanceReport distance_report(const MixtureParams& est, const MixtureParams& ref, bool align) {
  check_shapes(est);
  check_shapes(ref);
  if (est.components() != ref.components() || est.dim() != ref.dim()) {
    fail(ErrorCode::ShapeMismatch, "cannot compare mixtures of different shape");
  }
  DistanceReport r;
  MixtureParams aligned;
  if (align) {
    Alignment a = align_labels(est, ref);
    aligned = std::move(a.params);
    r.permutation = std::move(a.permutation);
  } else {
    aligned = est;
    r.permutation = identity_permutation(est.components());
  }
  const Cholesky chol(ref.covariance);
  r.d_pi = dist_pi(aligned.weights, ref.weights);
  r.d_means = dist_means(aligned.means, ref.means, chol);
  r.d_cov = whitened_op_norm(aligned.covariance - ref.covariance, chol);
  r.d_j = dist_j(reparam_J(aligned), reparam_J(ref), ref.covariance);
  return r;
}

// ----- surrogate loss and clustering ----------------------------------------

/// sum_i sum_{l != Y_i} resp(i, l) * Delta*_{l, Y_i}
inline double surrogate_phi(const Responsibilities& resp, const std::vector<int>& labels,
                            const Matrix& pairwise_star) {
  if (static_cast<Eigen::Index>(labels.size()) != resp.rows()) {
    fail(ErrorCode::LengthMismatch, "one label per responsibility row required");
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < resp.rows(); ++i) {
    const int a = labels[static_cast<std::size_t>(i)];
    total += resp.row(i).dot(pairwise_star.col(a));
  }
  return total;
}

inline double surrogate_phi(const LabeledDataset& data, const MixtureParams& params,
                            const MixtureParams& ref) {
  validate_dataset(data);
  if (data.num_components != ref.components() || params.components() != ref.components()) {
    fail(ErrorCode::ShapeMismatch, "label count differs from component count");
  }
  const Matrix pairwise = pairwise_mahalanobis(ref.means, Cholesky(ref.covariance));
  return surrogate_phi(e_step(data.observations, params), data.labels, pairwise);
}

/// Row-wise argmax, smallest index on ties.
inline std::vector<int> argmax_rows(const Matrix& scores) {
  std::vector<int> out(static_cast<std::size_t>(scores.rows()), 0);
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index l = 1; l < scores.cols(); ++l) {
      if (scores(i, l) > scores(i, best)) best = l;
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

inline std::vector<int> bayes_classify(const Matrix& x, const MixtureParams& params) {
  return argmax_rows(e_step(x, params));
}

inline double hamming_fraction(const std::vector<int>& truth, const std::vector<int>& predicted) {
  if (truth.size() != predicted.size()) fail(ErrorCode::LengthMismatch, "label vectors differ in length");
  if (truth.empty()) return 0.0;
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) wrong += truth[i] != predicted[i];
  return static_cast<double>(wrong) / static_cast<double>(truth.size());
}

/// Hamming fraction minimised over relabelings of `predicted`.
inline double min_hamming_fraction(const std::vector<int>& truth, const std::vector<int>& predicted,
                                   int components) {
  if (truth.size() != predicted.size()) fail(ErrorCode::LengthMismatch, "label vectors differ in length");
  if (truth.empty()) return 0.0;
  Matrix cost = Matrix::Zero(components, components);
  for (std::size_t i = 0; i < truth.size(); ++i) cost(truth[i], predicted[i]) -= 1.0;
  const Permutation p = min_cost_assignment(cost);
  double matched = 0.0;
  for (int a = 0; a < components; ++a) matched -= cost(a, p[static_cast<std::size_t>(a)]);
  const double n = static_cast<double>(truth.size());
  return (n - matched) / n;
}

/// Fraction of rows whose Bayes label disagrees with the truth. With
/// `align_ref` the parameters are first relabeled against it; without, the
/// error is minimised over all relabelings.
inline double misclustering_error(const LabeledDataset& data, const MixtureParams& params,
                                  const std::optional<MixtureParams>& align_ref = std::nullopt) {
  validate_dataset(data);
  if (align_ref) {
    const Alignment a = align_labels(params, *align_ref);
    return hamming_fraction(data.labels, bayes_classify(data.observations, a.params));
  }
  return min_hamming_fraction(data.labels, bayes_classify(data.observations, params),
                              static_cast<int>(params.components()));
}

// ----- theory diagnostics ---------------------------------------------------

/// Constants left unspecified by the theory; exposed for reporting only.
struct TheoryConstants {
  double c = 0.05;
  double C = 4.0;
};

/// C * (Delta_max^2 / pi_min) * exp(-c * Delta_min)
inline double theoretical_kappa(const SeparationStats& stats, double c, double C) {
  return C * (stats.delta_max * stats.delta_max / stats.pi_min) * std::exp(-c * stats.delta_min);
}

/// Right-hand side of the separation condition
/// C * (log(Delta_max / Delta_min) + log(1 / pi_min)).
inline double separation_threshold(const SeparationStats& stats, double C) {
  return C * (std::log(stats.delta_max / stats.delta_min) + std::log(1.0 / stats.pi_min));
}

struct InitConditionReport {
  double d_pi = 0.0;
  double d_means = 0.0;
  double d_cov = 0.0;
  bool weights_ok = false;
  bool means_ok = false;
  bool covariance_ok = false;
  bool constants_ok = false;

  bool all() const { return weights_ok && means_ok && covariance_ok && constants_ok; }
};

inline InitConditionReport init_condition_check(const MixtureParams& init, const MixtureParams& ref,
                                                double c_mu, double c_sigma) {
  const DistanceReport dist = distance_report(init, ref, true);
  const SeparationStats stats = separation_stats(ref);
  InitConditionReport r;
  r.d_pi = dist.d_pi;
  r.d_means = dist.d_means;
  r.d_cov = dist.d_cov;
  r.weights_ok = dist.d_pi <= 0.5;
  r.means_ok = dist.d_means <= c_mu * std::sqrt(stats.delta_min);
  r.covariance_ok = dist.d_cov <= c_sigma;
  r.constants_ok = c_mu >= 0.0 && c_sigma >= 0.0 &&
                   2.0 * c_mu + std::sqrt(2.0) * c_sigma < std::sqrt(2.0) - 1.0;
  return r;
}

}  // namespace gmmem
