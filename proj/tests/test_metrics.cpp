#include <gtest/gtest.h>

#include <cmath>

#include <Eigen/Eigenvalues>

#include "gmmem/metrics.hpp"
#include "gmmem/oracle.hpp"
#include "test_support.hpp"

namespace gmmem {
namespace {

using testing::basis_params;
using testing::naive_density;
using testing::random_params;
using testing::random_spd;
using testing::uniform_weights;

// Symmetric inverse square root through an eigendecomposition; oracle only.
Matrix inv_sqrt(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a);
  return es.eigenvectors() * es.eigenvalues().array().rsqrt().matrix().asDiagonal() * es.eigenvectors().transpose();
}

Matrix sqrt_spd(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a);
  return es.eigenvectors() * es.eigenvalues().array().sqrt().matrix().asDiagonal() * es.eigenvectors().transpose();
}

TEST(DistPi, DirectValues) {
  const Vector u = uniform_weights(3);
  EXPECT_EQ(dist_pi(u, u), 0.0);
  EXPECT_NEAR(dist_pi(Vector{{0.4, 0.3, 0.3}}, u), 0.2, 1e-14);
  EXPECT_NEAR(dist_pi(Vector{{1.0, 0.0, 0.0}}, u), 2.0, 1e-14);
}

TEST(DistPi, Errors) {
  EXPECT_THROW(dist_pi(Vector::Ones(2), Vector::Ones(3)), Error);
  try {
    dist_pi(Vector{{0.5, 0.5}}, Vector{{1.0, 0.0}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroReferenceWeight);
  }
}

TEST(DistMeans, ClosedFormAndOracle) {
  Matrix m = Matrix::Zero(2, 2);
  EXPECT_EQ(dist_means(m, m, Matrix::Identity(2, 2)), 0.0);
  Matrix m2 = m;
  m2.col(1) << 3, 4;
  EXPECT_NEAR(dist_means(m2, m, Matrix::Identity(2, 2)), 5.0, 1e-14);
  Rng rng(1);
  for (int rep = 0; rep < 10; ++rep) {
    const Matrix a = rng.normal_matrix(4, 3), b = rng.normal_matrix(4, 3);
    const Matrix cov = random_spd(4, rng);
    const Matrix inv = cov.inverse();
    double best = 0.0;
    for (int l = 0; l < 3; ++l) {
      const Vector r = a.col(l) - b.col(l);
      best = std::max(best, std::sqrt(r.dot(inv * r)));
    }
    EXPECT_NEAR(dist_means(a, b, cov), best, 1e-10);
  }
  EXPECT_THROW(dist_means(Matrix::Zero(2, 2), Matrix::Zero(2, 3), Matrix::Identity(2, 2)), Error);
}

TEST(DistCov, ClosedFormAndSymmetricRootOracle) {
  const Matrix id = Matrix::Identity(3, 3);
  EXPECT_EQ(dist_cov(id, id), 0.0);
  EXPECT_NEAR(dist_cov(2.0 * id, id), 1.0, 1e-12);
  Rng rng(2);
  for (int rep = 0; rep < 10; ++rep) {
    const Matrix s = random_spd(5, rng), s_star = random_spd(5, rng);
    const Matrix w = inv_sqrt(s_star);
    const Matrix t = w * (s - s_star) * w;
    const double oracle = Eigen::SelfAdjointEigenSolver<Matrix>(symmetrize(t)).eigenvalues().cwiseAbs().maxCoeff();
    EXPECT_NEAR(dist_cov(s, s_star), oracle, 1e-8);
    // Weyl-style reduction: |lambda(W S W) - 1|.
    const Vector lam = Eigen::SelfAdjointEigenSolver<Matrix>(symmetrize(w * s * w)).eigenvalues();
    EXPECT_NEAR(dist_cov(s, s_star), (lam.array() - 1.0).abs().maxCoeff(), 1e-8);
  }
}

TEST(DistJ, ZeroAndBruteForce) {
  Rng rng(3);
  const Matrix j = rng.normal_matrix(4, 3);
  const Matrix cov = random_spd(4, rng);
  EXPECT_EQ(dist_j(j, j, cov), 0.0);
  for (int rep = 0; rep < 10; ++rep) {
    const Matrix a = rng.normal_matrix(4, 3), b = rng.normal_matrix(4, 3);
    const Matrix root = sqrt_spd(cov);
    double best = 0.0;
    for (int p = 0; p < 3; ++p)
      for (int q = 0; q < 3; ++q) {
        Vector e = Vector::Zero(3);
        e(p) += 1.0;
        e(q) -= 1.0;
        best = std::max(best, (root * (a - b) * e).norm());
      }
    EXPECT_NEAR(dist_j(a, b, cov), 0.5 * best, 1e-10);
  }
}

TEST(Distances, TriangleInequality) {
  Rng rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    const auto ref = random_params(3, 3, rng);
    const auto a = random_params(3, 3, rng), b = random_params(3, 3, rng), c = random_params(3, 3, rng);
    auto tri = [](double ab, double bc, double ac) { EXPECT_LE(ac, ab + bc + 1e-8); };
    auto dpi = [&](const Vector& u, const Vector& v) {
      return ((u - v).array().abs() / ref.weights.array()).maxCoeff();
    };
    tri(dpi(a.weights, b.weights), dpi(b.weights, c.weights), dpi(a.weights, c.weights));
    tri(dist_means(a.means, b.means, ref.covariance), dist_means(b.means, c.means, ref.covariance),
        dist_means(a.means, c.means, ref.covariance));
    const Cholesky chol(ref.covariance);
    tri(whitened_op_norm(a.covariance - b.covariance, chol), whitened_op_norm(b.covariance - c.covariance, chol),
        whitened_op_norm(a.covariance - c.covariance, chol));
    const Matrix ja = reparam_J(a), jb = reparam_J(b), jc = reparam_J(c);
    tri(dist_j(ja, jb, ref.covariance), dist_j(jb, jc, ref.covariance), dist_j(ja, jc, ref.covariance));
  }
}

TEST(AlignLabels, RecoversPermutation) {
  Rng rng(5);
  const auto ref = random_params(4, 3, rng, 3.0);
  const Permutation sigma0{2, 3, 0, 1};
  const auto est = permute_components(ref, sigma0);
  const auto a = align_labels(est, ref);
  EXPECT_EQ(a.permutation, inverse_permutation(sigma0));
  const auto rep = distance_report(est, ref, true);
  EXPECT_EQ(rep.d_pi, 0.0);
  EXPECT_EQ(rep.d_means, 0.0);
  EXPECT_EQ(rep.d_cov, 0.0);
  EXPECT_EQ(rep.d_j, 0.0);
  EXPECT_EQ(align_labels(ref, ref).permutation, identity_permutation(4));
}

TEST(AlignLabels, RobustToSmallNoise) {
  Rng rng(6);
  int recovered = 0;
  for (int seed = 0; seed < 100; ++seed) {
    const auto ref = random_params(4, 3, rng, 3.0);
    const double radius = std::sqrt(separation_stats(ref).delta_min) / 4.0;
    auto noisy = ref;
    const Matrix factor = Cholesky(ref.covariance).lower();
    for (int l = 0; l < 4; ++l) noisy.means.col(l) += factor * (0.99 * radius * rng.unit_sphere(3));
    Permutation sigma = identity_permutation(4);
    for (int i = 3; i > 0; --i) std::swap(sigma[i], sigma[rng.uniform_index(i + 1)]);
    const auto est = permute_components(noisy, sigma);
    recovered += align_labels(est, ref).permutation == inverse_permutation(sigma);
  }
  EXPECT_EQ(recovered, 100);
}

TEST(AlignLabels, HungarianMatchesExhaustive) {
  Rng rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix cost = rng.normal_matrix(7, 7);
    const Permutation exhaustive = min_cost_assignment(cost);
    const Permutation hung = detail::hungarian(cost);
    double ce = 0.0, ch = 0.0;
    for (int l = 0; l < 7; ++l) ce += cost(l, exhaustive[l]), ch += cost(l, hung[l]);
    EXPECT_NEAR(ce, ch, 1e-12);
  }
  // Above the exhaustive limit.
  const auto ref = random_params(10, 12, rng, 5.0);
  Permutation sigma{3, 1, 4, 0, 9, 2, 6, 5, 8, 7};
  EXPECT_EQ(align_labels(permute_components(ref, sigma), ref).permutation, inverse_permutation(sigma));
}

TEST(DistanceReport, SwappedWithoutAlignmentSeesSeparation) {
  Rng rng(8);
  const auto ref = random_params(2, 3, rng, 2.0);
  const auto swapped = permute_components(ref, Permutation{1, 0});
  const auto aligned = distance_report(swapped, ref, true);
  EXPECT_EQ(aligned.d_means, 0.0);
  const auto raw = distance_report(swapped, ref, false);
  EXPECT_GE(raw.d_means, std::sqrt(separation_stats(ref).delta_min) - 1e-12);
}

TEST(SurrogatePhi, ZeroOnHardOracleResponsibilities) {
  const auto truth = basis_params(3, uniform_weights(3), 2.0, 1.0);
  const auto data = sample_dataset(truth, 200, 9);
  const Matrix pairwise = pairwise_mahalanobis(truth.means, Cholesky(truth.covariance));
  EXPECT_EQ(surrogate_phi(oracle_responsibilities(data), data.labels, pairwise), 0.0);
  // Huge separation makes the Bayes posterior one-hot numerically.
  const auto far = basis_params(3, uniform_weights(3), 200.0, 1.0);
  const auto far_data = sample_dataset(far, 200, 9);
  EXPECT_EQ(surrogate_phi(far_data, far, far), 0.0);
}

TEST(SurrogatePhi, UniformResponsibilitiesClosedForm) {
  const auto truth = basis_params(4, uniform_weights(4), 3.0, 1.0);  // Delta = 18 for every pair
  const auto data = sample_dataset(truth, 300, 10);
  const Matrix pairwise = pairwise_mahalanobis(truth.means, Cholesky(truth.covariance));
  const double phi = surrogate_phi(Matrix::Constant(300, 4, 0.25), data.labels, pairwise);
  EXPECT_NEAR(phi, 300.0 * 18.0 * 3.0 / 4.0, 1e-9);
}

TEST(SurrogatePhi, MatchesTripleLoop) {
  Rng rng(11);
  for (int rep = 0; rep < 5; ++rep) {
    const auto truth = random_params(3, 3, rng, 1.5);
    const auto params = random_params(3, 3, rng, 1.5);
    const auto data = sample_dataset(truth, 100, rng.next_u64());
    const Matrix gamma = e_step(data.observations, params);
    const Matrix inv = truth.covariance.inverse();
    double naive = 0.0;
    for (int l = 0; l < 3; ++l)
      for (int a = 0; a < 3; ++a) {
        if (a == l) continue;
        const Vector r = truth.means.col(l) - truth.means.col(a);
        for (Eigen::Index i = 0; i < data.size(); ++i)
          if (data.labels[i] == a) naive += gamma(i, l) * r.dot(inv * r);
      }
    const double phi = surrogate_phi(data, params, truth);
    EXPECT_GE(phi, 0.0);
    EXPECT_NEAR(phi, naive, 1e-10 * std::max(1.0, naive));
  }
}

TEST(BayesClassify, ModesAndTies) {
  const auto truth = basis_params(3, uniform_weights(3), 2.0, 1.0);
  const Matrix at_means = truth.means.transpose();
  EXPECT_EQ(bayes_classify(at_means, truth), (std::vector<int>{0, 1, 2}));
  MixtureParams two;
  two.weights = uniform_weights(2);
  two.means = Matrix(2, 2);
  two.means << 1, -1, 0, 0;
  two.covariance = Matrix::Identity(2, 2);
  EXPECT_EQ(bayes_classify(Matrix::Zero(1, 2), two), std::vector<int>{0});
}

TEST(BayesClassify, MatchesDensityArgmaxAndScaleInvariance) {
  Rng rng(12);
  const auto p = random_params(4, 3, rng, 1.0);
  const Matrix x = sample_dataset(p, 200, 1).observations;
  const auto labels = bayes_classify(x, p);
  const Matrix resp = e_step(x, p);
  Matrix scaled = resp;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    scaled.row(i) *= 0.1 + 10.0 * rng.uniform();
    Vector dens(4);
    for (int l = 0; l < 4; ++l) dens(l) = p.weights(l) * naive_density(x.row(i).transpose(), p.means.col(l), p.covariance);
    Eigen::Index best;
    dens.maxCoeff(&best);
    EXPECT_EQ(labels[i], best);
  }
  EXPECT_EQ(argmax_rows(scaled), labels);
}

TEST(Misclustering, PermutationInvarianceAndAlignment) {
  const auto truth = basis_params(5, Vector{{0.5, 0.3, 0.2}}, 1.0, 0.6);
  const auto data = sample_dataset(truth, 1000, 13);
  const auto swapped = permute_components(truth, Permutation{1, 0, 2});
  EXPECT_DOUBLE_EQ(misclustering_error(data, truth), misclustering_error(data, swapped));
  EXPECT_DOUBLE_EQ(misclustering_error(data, swapped, truth), misclustering_error(data, truth, truth));
  EXPECT_GT(misclustering_error(data, truth), 0.0);
}

TEST(Misclustering, BoundedBySurrogateLoss) {
  Rng rng(14);
  for (int rep = 0; rep < 30; ++rep) {
    const auto truth = random_params(3, 4, rng, 1.2);
    const auto params = random_params(3, 4, rng, 1.2);
    const auto data = sample_dataset(truth, 300, rng.next_u64());
    const double ell = hamming_fraction(data.labels, bayes_classify(data.observations, params));
    const double bound = 2.0 * surrogate_phi(data, params, truth) / (300.0 * separation_stats(truth).delta_min);
    EXPECT_LE(ell, bound + 1e-12);
    EXPECT_LE(misclustering_error(data, params), ell);
  }
}

TEST(Kappa, DirectValues) {
  SeparationStats s;
  s.delta_min = s.delta_max = 12.25;
  s.pi_min = 1.0 / 3.0;
  EXPECT_NEAR(theoretical_kappa(s, 1.0, 1.0), 3.0 * 12.25 * 12.25 * std::exp(-12.25), 1e-15);
  EXPECT_NEAR(theoretical_kappa(s, 1.0, 1.0), 2.16e-3, 1e-5);
  EXPECT_DOUBLE_EQ(theoretical_kappa(s, 0.0, 1.0), 12.25 * 12.25 * 3.0);
}

TEST(Kappa, DecreasesInSeparation) {
  SeparationStats s;
  s.pi_min = 0.2;
  s.delta_max = 50.0;
  const double c = 0.5;
  double prev = 1e300;
  for (double dmin = 2.0 / c * std::log(50.0) + 0.1; dmin < 50.0; dmin += 1.0) {
    s.delta_min = dmin;
    const double k = theoretical_kappa(s, c, 1.0);
    EXPECT_LT(k, prev);
    prev = k;
  }
}

TEST(InitCondition, TruthPassesAndThresholds) {
  const auto truth = basis_params(4, uniform_weights(3), 2.0, 0.5);
  const auto ok = init_condition_check(truth, truth, 0.2, 0.01);
  EXPECT_TRUE(ok.all());
  EXPECT_LT(2 * 0.2 + std::sqrt(2.0) * 0.01, std::sqrt(2.0) - 1.0);
  EXPECT_FALSE(init_condition_check(truth, truth, 0.25, 0.01).constants_ok);

  const double delta_min = separation_stats(truth).delta_min;
  auto far = truth;
  far.means.col(0) += Vector::Unit(4, 3) * (2.0 * 0.2 * std::sqrt(delta_min) * 0.5);  // Sigma* = 0.25 I
  const auto bad = init_condition_check(far, truth, 0.2, 0.01);
  EXPECT_NEAR(bad.d_means, 2.0 * 0.2 * std::sqrt(delta_min), 1e-12);
  EXPECT_FALSE(bad.means_ok);
  EXPECT_TRUE(bad.weights_ok);
}

}  // namespace
}  // namespace gmmem
