#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "gmmem/estep.hpp"
#include "gmmem/metrics.hpp"
#include "gmmem/model.hpp"

namespace gmmem {

/// Either a fixed, known covariance that the M-step never refits, or an
/// unknown covariance estimated every iteration.
class CovarianceMode {
 public:
  static CovarianceMode unknown() { return CovarianceMode(); }
  static CovarianceMode known(Matrix sigma) {
    CovarianceMode m;
    m.fixed_ = std::move(sigma);
    return m;
  }

  bool is_known() const { return fixed_.has_value(); }
  const Matrix& fixed() const { return *fixed_; }

 private:
  std::optional<Matrix> fixed_;
};

/// Column sums below this make the mean update meaningless.
inline constexpr double kEmptyComponentMass = 1e-300;

/// n^{-1} sum_i X_i X_i^T
inline Matrix scatter_total(const Matrix& x) {
  if (x.rows() == 0) fail(ErrorCode::InvalidSampleSize, "no observations");
  Matrix s = Matrix::Zero(x.cols(), x.cols());
  s.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose());
  s = s.selfadjointView<Eigen::Lower>();
  return s / static_cast<double>(x.rows());
}

/// sum_l E_n[gamma_l (X - mu_l)(X - mu_l)^T], the direct form of the
/// covariance update.
inline Matrix weighted_scatter(const Matrix& x, const Responsibilities& resp, const Matrix& means) {
  const Eigen::Index d = x.cols();
  Matrix s = Matrix::Zero(d, d);
  for (Eigen::Index l = 0; l < resp.cols(); ++l) {
    const Matrix centred =
        (x.rowwise() - means.col(l).transpose()).array().colwise() * resp.col(l).array().sqrt();
    s.noalias() += centred.transpose() * centred;
  }
  return symmetrize(s) / static_cast<double>(x.rows());
}

namespace detail {

inline MixtureParams m_step_impl(const Matrix& x, const Responsibilities& resp,
                                 const CovarianceMode& mode, const Matrix* total) {
  const Eigen::Index n = x.rows();
  if (n == 0) fail(ErrorCode::InvalidSampleSize, "no observations");
  if (resp.rows() != n) fail(ErrorCode::ShapeMismatch, "responsibilities must have one row per observation");
  const Vector mass = resp.colwise().sum().transpose();
  for (Eigen::Index l = 0; l < mass.size(); ++l) {
    if (!(mass(l) >= kEmptyComponentMass)) {
      fail(ErrorCode::EmptyComponent, "component " + std::to_string(l + 1) + " received no mass");
    }
  }
  MixtureParams p;
  p.weights = mass / static_cast<double>(n);
  p.means = x.transpose() * resp;
  p.means.array().rowwise() /= mass.transpose().array();
  if (mode.is_known()) {
    p.covariance = mode.fixed();
  } else {
    const Matrix between = p.means * p.weights.asDiagonal() * p.means.transpose();
    p.covariance = symmetrize((total ? *total : scatter_total(x)) - between);
    Cholesky check(p.covariance, ErrorCode::CovarianceSingular);
  }
  return p;
}

}  // namespace detail

/// Closed-form maximiser given responsibilities. The unknown-covariance
/// update uses Sigma_T - M diag(pi) M^T.
inline MixtureParams m_step(const Matrix& x, const Responsibilities& resp, const CovarianceMode& mode) {
  return detail::m_step_impl(x, resp, mode, nullptr);
}

inline MixtureParams em_iterate(const Matrix& x, const MixtureParams& params, const CovarianceMode& mode) {
  validate_params(params);
  return m_step(x, e_step(x, params), mode);
}

struct EmConfig {
  int max_iters = 500;
  double tol = 1e-10;
  CovarianceMode mode = CovarianceMode::unknown();
  bool record_trace = true;
  /// Ground truth for distance tracking.
  std::optional<MixtureParams> reference;
  /// Relabel each iterate against `reference` before measuring.
  bool align = true;
};

struct TraceEntry {
  int iteration = 0;
  MixtureParams params;
  double log_likelihood = 0.0;
  /// Present when a reference was supplied.
  std::optional<DistanceReport> distances;
  /// Present when a reference and labels were supplied.
  std::optional<double> phi;
  std::optional<double> misclustering;
};

using EmTrace = std::vector<TraceEntry>;

struct EmResult {
  MixtureParams params;
  EmTrace trace;
  int iterations = 0;
  double log_likelihood = 0.0;
  bool converged = false;
};

/// Largest of the three distances between consecutive iterates, weighted by
/// `weight` (the reference when known, else the newer iterate).
inline double successive_change(const MixtureParams& next, const MixtureParams& prev,
                                const MixtureParams& weight, bool known_cov) {
  const Cholesky chol(weight.covariance);
  double change = ((next.weights - prev.weights).array().abs() / weight.weights.array()).maxCoeff();
  change = std::max(change, dist_means(next.means, prev.means, chol));
  if (!known_cov) change = std::max(change, whitened_op_norm(next.covariance - prev.covariance, chol));
  return change;
}

namespace detail {

inline EmResult run_em_impl(const Matrix& x, const std::vector<int>* labels, const MixtureParams& init,
                            const EmConfig& config) {
  if (config.max_iters < 0) fail(ErrorCode::InvalidArgument, "max_iters must be nonnegative");
  if (!(config.tol >= 0.0)) fail(ErrorCode::InvalidArgument, "tol must be nonnegative");
  MixtureParams current = init;
  if (config.mode.is_known()) current.covariance = config.mode.fixed();
  validate_params(current);
  if (x.cols() != current.dim()) fail(ErrorCode::ShapeMismatch, "data dimension differs from parameters");

  std::optional<Matrix> pairwise_star;
  if (config.reference) {
    validate_params(*config.reference);
    if (config.reference->components() != current.components() ||
        config.reference->dim() != current.dim()) {
      fail(ErrorCode::ShapeMismatch, "reference shape differs from initialisation");
    }
    pairwise_star = pairwise_mahalanobis(config.reference->means, Cholesky(config.reference->covariance));
  }
  const Matrix total = config.mode.is_known() ? Matrix() : scatter_total(x);

  EmResult result;
  auto record = [&](int t, const MixtureParams& p, const Posterior& post) {
    if (!config.record_trace) return;
    TraceEntry e;
    e.iteration = t;
    e.params = p;
    e.log_likelihood = post.log_norm.sum();
    if (config.reference) {
      e.distances = distance_report(p, *config.reference, config.align);
      if (labels) {
        const Permutation& perm = e.distances->permutation;
        Responsibilities aligned(post.resp.rows(), post.resp.cols());
        for (std::size_t l = 0; l < perm.size(); ++l) {
          aligned.col(static_cast<Eigen::Index>(l)) = post.resp.col(perm[l]);
        }
        e.phi = surrogate_phi(aligned, *labels, *pairwise_star);
        e.misclustering = hamming_fraction(*labels, argmax_rows(aligned));
      }
    }
    result.trace.push_back(std::move(e));
  };

  Posterior post = posterior(x, current);
  record(0, current, post);
  int t = 0;
  for (t = 1; t <= config.max_iters; ++t) {
    MixtureParams next = m_step_impl(x, post.resp, config.mode, config.mode.is_known() ? nullptr : &total);
    Posterior next_post = posterior(x, next);
    const double before = post.log_norm.sum();
    const double after = next_post.log_norm.sum();
    if (!(after >= before - 1e-6 * std::abs(before))) {
      fail(ErrorCode::DivergedLikelihood, "log-likelihood fell from " + std::to_string(before) + " to " +
                                              std::to_string(after) + " at iteration " + std::to_string(t));
    }
    record(t, next, next_post);
    const MixtureParams& weight = config.reference ? *config.reference : next;
    const double change = successive_change(next, current, weight, config.mode.is_known());
    current = std::move(next);
    post = std::move(next_post);
    if (change < config.tol) {
      result.converged = true;
      break;
    }
  }
  result.iterations = std::min(t, config.max_iters);
  validate_params(current);
  result.log_likelihood = post.log_norm.sum();
  result.params = std::move(current);
  return result;
}

}  // namespace detail

/// Alternates E- and M-steps from `init` until `config.max_iters` steps or
/// until every successive-iterate distance drops below `config.tol`.
inline EmResult run_em(const Matrix& x, const MixtureParams& init, const EmConfig& config) {
  return detail::run_em_impl(x, nullptr, init, config);
}

/// As above; with a reference configured the trace also carries the
/// surrogate loss and the misclustering fraction against the true labels.
inline EmResult run_em(const LabeledDataset& data, const MixtureParams& init, const EmConfig& config) {
  validate_dataset(data);
  return detail::run_em_impl(data.observations, &data.labels, init, config);
}

/// Monte-Carlo surrogate for the population EM operator: fresh draws from
/// `truth`, responsibilities under `params`, then the sample M-step.
inline MixtureParams population_em_step(const MixtureParams& truth, const MixtureParams& params,
                                        Eigen::Index mc_n, std::uint64_t seed,
                                        const CovarianceMode& mode = CovarianceMode::unknown()) {
  validate_params(params);
  const LabeledDataset draw = sample_dataset(truth, mc_n, seed);
  return m_step(draw.observations, e_step(draw.observations, params), mode);
}

}  // namespace gmmem
