#pragma once

#include <cmath>
#include <numbers>

#include "gmmem/model.hpp"

namespace gmmem {

/// E-step output: n x L matrix whose (i, l) entry is P(Y_i = l | X_i) under
/// the parameters it was computed from.
using Responsibilities = Matrix;

/// Responsibilities together with the per-row log normaliser
/// log sum_l pi_l N(x_i; mu_l, Sigma); the normalisers sum to the
/// log-likelihood.
struct Posterior {
  Responsibilities resp;
  Vector log_norm;
};

/// log pi_l + log N(x_i; mu_l, Sigma) for every row and component.
inline Matrix component_log_densities(const Matrix& x, const MixtureParams& params,
                                      const Cholesky& chol) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  const Eigen::Index k = params.components();
  if (d != params.dim()) fail(ErrorCode::ShapeMismatch, "observation dimension mismatch");
  const Matrix white_x = chol.whiten(x.transpose());
  const Matrix white_mu = chol.whiten(params.means);
  const double log_const =
      -0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi) - 0.5 * chol.log_det();
  Matrix logp(n, k);
  for (Eigen::Index l = 0; l < k; ++l) {
    logp.col(l) = (-0.5 * (white_x.colwise() - white_mu.col(l)).colwise().squaredNorm())
                      .transpose()
                      .array() +
                  (std::log(params.weights(l)) + log_const);
  }
  return logp;
}

/// Row-wise log-sum-exp normalisation of `logp` into a posterior.
inline Posterior normalize_log_rows(const Matrix& logp) {
  Posterior post;
  const Vector row_max = logp.rowwise().maxCoeff();
  post.resp = (logp.colwise() - row_max).array().exp();
  const Vector row_sum = post.resp.rowwise().sum();
  post.log_norm = row_max.array() + row_sum.array().log();
  post.resp.array().colwise() /= row_sum.array();
  return post;
}

inline Posterior posterior(const Matrix& x, const MixtureParams& params) {
  check_shapes(params);
  const Cholesky chol(params.covariance);
  return normalize_log_rows(component_log_densities(x, params, chol));
}

inline Responsibilities e_step(const Matrix& x, const MixtureParams& params) {
  return posterior(x, params).resp;
}

/// Sum over rows of log sum_l pi_l N(x_i; mu_l, Sigma), normalising constants
/// included.
inline double log_likelihood(const Matrix& x, const MixtureParams& params) {
  return posterior(x, params).log_norm.sum();
}

/// J = Sigma^{-1} M.
inline Matrix reparam_J(const MixtureParams& params) {
  check_shapes(params);
  return Cholesky(params.covariance).solve(params.means);
}

}  // namespace gmmem
