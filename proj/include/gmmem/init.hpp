#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gmmem/em.hpp"
#include "gmmem/kmeans.hpp"
#include "gmmem/model.hpp"
#include "gmmem/rng.hpp"

namespace gmmem {

/// Perturbation of the truth:
///   weights  = mix * pi* + (1 - mix) * Dirichlet(dir_alpha)
///   mean_l   = mu*_l + radius * (uniform unit vector)
///   cov      = Sigma* + cov_scale * A A^T / d,  A_ij ~ N(0, 1)
/// Defaults are the reference simulation settings.
struct PerturbSpec {
  double radius = 0.4;
  double dir_alpha = 5.0;
  double mix = 0.7;
  double cov_scale = 0.2 * 0.4 * 0.4;
};

inline MixtureParams perturb_init(const MixtureParams& truth, const PerturbSpec& spec, std::uint64_t seed) {
  validate_params(truth);
  if (!(spec.radius >= 0.0)) fail(ErrorCode::InvalidArgument, "radius must be >= 0");
  if (!(spec.mix >= 0.0 && spec.mix <= 1.0)) fail(ErrorCode::InvalidArgument, "mix must lie in [0, 1]");
  if (!(spec.dir_alpha > 0.0)) fail(ErrorCode::InvalidArgument, "dir_alpha must be positive");
  if (!(spec.cov_scale >= 0.0)) fail(ErrorCode::InvalidArgument, "cov_scale must be >= 0");
  Rng rng(seed);
  const Eigen::Index k = truth.components();
  const Eigen::Index d = truth.dim();
  MixtureParams p = truth;
  p.weights = spec.mix * truth.weights + (1.0 - spec.mix) * rng.dirichlet(spec.dir_alpha, k);
  for (Eigen::Index l = 0; l < k; ++l) p.means.col(l) += spec.radius * rng.unit_sphere(d);
  const Matrix a = rng.normal_matrix(d, d);
  p.covariance = truth.covariance + (spec.cov_scale / static_cast<double>(d)) * symmetrize(a * a.transpose());
  validate_params(p);
  return p;
}

/// (pi0, M0, Sigma_T - M0 diag(pi0) M0^T)
inline MixtureParams sigma_t_init(const Matrix& x, const Vector& pi0, const Matrix& m0) {
  if (m0.rows() != x.cols() || m0.cols() != pi0.size()) {
    fail(ErrorCode::ShapeMismatch, "initial means must be d x L");
  }
  const Matrix total = scatter_total(x);
  Cholesky check(total, ErrorCode::CovarianceSingular);
  MixtureParams p;
  p.weights = pi0;
  p.means = m0;
  p.covariance = symmetrize(total - m0 * pi0.asDiagonal() * m0.transpose());
  Cholesky pd(p.covariance);
  return p;
}

/// One M-step from the one-hot responsibilities of `labels` (0-based).
inline MixtureParams labels_init(const Matrix& x, const std::vector<int>& labels, int components,
                                 const CovarianceMode& mode) {
  if (static_cast<Eigen::Index>(labels.size()) != x.rows()) {
    fail(ErrorCode::LengthMismatch, "one label per observation required");
  }
  Responsibilities r = Responsibilities::Zero(x.rows(), components);
  std::vector<bool> seen(static_cast<std::size_t>(components), false);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= components) fail(ErrorCode::InvalidArgument, "label out of range");
    r(i, y) = 1.0;
    seen[static_cast<std::size_t>(y)] = true;
  }
  for (int a = 0; a < components; ++a) {
    if (!seen[static_cast<std::size_t>(a)]) {
      fail(ErrorCode::MissingComponent, "no observation carries label " + std::to_string(a + 1));
    }
  }
  return m_step(x, r, mode);
}

inline MixtureParams labels_init(const LabeledDataset& data, const CovarianceMode& mode) {
  return labels_init(data.observations, data.labels, data.num_components, mode);
}

}  // namespace gmmem
