#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

#include "gmmem/linalg.hpp"

namespace gmmem {

/// SplitMix64 finaliser; used to decorrelate derived seeds.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed for an independent stream `stream` below `seed`. Streams are a pure
/// function of (seed, stream), so work split over blocks or trials can be
/// regenerated in any order.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix64(mix64(seed) ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return derive_seed(seed, h);
}

/// Portable random source. The engine is std::mt19937_64 (bit-exact across
/// standard libraries); every distribution is implemented here because the
/// std:: distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix64(seed)) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on the open interval (0, 1).
  double uniform_open() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  std::uint64_t uniform_index(std::uint64_t n) {
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
  }

  /// Standard normal via the Marsaglia polar method.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  Vector normal_vector(Eigen::Index d) {
    Vector z(d);
    for (Eigen::Index j = 0; j < d; ++j) z(j) = normal();
    return z;
  }

  Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols) {
    Matrix a(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) a(i, j) = normal();
    return a;
  }

  /// Gamma(shape, 1) by Marsaglia-Tsang; shape < 1 uses the u^{1/shape} boost.
  double gamma(double shape) {
    if (shape < 1.0) {
      const double g = gamma(shape + 1.0);
      return g * std::pow(uniform_open(), 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform_open();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  /// Symmetric Dirichlet(alpha, ..., alpha) on `k` categories.
  Vector dirichlet(double alpha, Eigen::Index k) {
    Vector g(k);
    for (Eigen::Index j = 0; j < k; ++j) g(j) = gamma(alpha);
    return g / g.sum();
  }

  /// Uniform direction on the unit sphere in R^d.
  Vector unit_sphere(Eigen::Index d) {
    for (;;) {
      Vector z = normal_vector(d);
      const double norm = z.norm();
      if (norm > 0.0) return z / norm;
    }
  }

  /// Index drawn from the categorical law with cumulative weights `cdf`
  /// (last entry 1 up to rounding).
  Eigen::Index categorical(const Vector& cdf) {
    const double u = uniform();
    for (Eigen::Index j = 0; j + 1 < cdf.size(); ++j) {
      if (u < cdf(j)) return j;
    }
    return cdf.size() - 1;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace gmmem
