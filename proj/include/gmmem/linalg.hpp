#pragma once

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "gmmem/error.hpp"

namespace gmmem {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Relative pivot floor for the positive-definiteness test: every squared
/// Cholesky diagonal must exceed this times the largest diagonal entry.
inline constexpr double kPivotTolerance = 1e-10;

/// Lower Cholesky factor of a symmetric positive definite matrix.
///
/// Construction fails with `on_failure` when the factorisation breaks down or
/// a pivot falls below `kPivotTolerance * max_i a(i, i)`. All solves go
/// through the factor; no explicit inverse is ever formed.
class Cholesky {
 public:
  explicit Cholesky(const Matrix& a, ErrorCode on_failure = ErrorCode::NotPositiveDefinite) {
    if (a.rows() != a.cols() || a.rows() == 0) {
      fail(ErrorCode::ShapeMismatch, "Cholesky requires a nonempty square matrix");
    }
    if (!a.allFinite()) fail(on_failure, "matrix has non-finite entries");
    llt_.compute(a);
    if (llt_.info() != Eigen::Success) fail(on_failure, "Cholesky factorisation failed");
    const double scale = a.diagonal().maxCoeff();
    const Vector pivots = llt_.matrixLLT().diagonal().array().square();
    if (!(scale > 0.0) || !(pivots.minCoeff() > kPivotTolerance * scale)) {
      fail(on_failure, "smallest Cholesky pivot below tolerance");
    }
  }

  Eigen::Index dim() const { return llt_.matrixLLT().rows(); }

  Matrix lower() const { return llt_.matrixL(); }

  /// a^{-1} b
  Matrix solve(const Matrix& b) const { return llt_.solve(b); }

  /// L^{-1} b, so that ||L^{-1}(u - v)||^2 is the Mahalanobis form.
  Matrix whiten(const Matrix& b) const { return llt_.matrixL().solve(b); }

  /// L b
  Matrix color(const Matrix& b) const { return llt_.matrixL() * b; }

  double log_det() const {
    return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
  }

 private:
  Eigen::LLT<Matrix> llt_;
};

inline bool is_positive_definite(const Matrix& a) {
  try {
    Cholesky chol(a);
    return true;
  } catch (const Error&) {
    return false;
  }
}

/// True when max |a - a^T| <= rel_tol * max |a|.
inline bool is_symmetric(const Matrix& a, double rel_tol = 1e-12) {
  if (a.rows() != a.cols()) return false;
  const double scale = a.cwiseAbs().maxCoeff();
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

inline Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

inline double relative_frobenius(const Matrix& a, const Matrix& b) {
  const double denom = std::max(a.norm(), b.norm());
  if (denom == 0.0) return 0.0;
  return (a - b).norm() / denom;
}

}  // namespace gmmem
