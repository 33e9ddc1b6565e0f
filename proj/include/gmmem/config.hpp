#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gmmem/init.hpp"
#include "gmmem/io.hpp"
#include "gmmem/model.hpp"

namespace gmmem {

inline constexpr int kConfigSchemaVersion = 1;

enum class Scenario { ConvergenceCurves, SeparationSweep, RateRegression, SingleFit };

inline std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::ConvergenceCurves: return "convergence_curves";
    case Scenario::SeparationSweep: return "separation_sweep";
    case Scenario::RateRegression: return "rate_regression";
    case Scenario::SingleFit: return "single_fit";
  }
  return "unknown";
}

/// Component means. `Basis` places mu_l = scale * e_{basis[l]} (1-based
/// coordinates, default 1..L); scale may be given as delta0 / sqrt(2).
struct MeansRecipe {
  enum class Kind { Basis, Explicit } kind = Kind::Basis;
  double scale = 1.0;
  std::optional<double> delta0;
  std::vector<int> basis;
  Matrix columns;  // d x L for Explicit
};

/// isotropic: sigma^2 I; compound_symmetry: identity * I + ones * 1 1^T.
struct CovarianceRecipe {
  enum class Kind { Isotropic, CompoundSymmetry, Explicit } kind = Kind::Isotropic;
  double sigma = 1.0;
  double identity = 1.0;
  double ones = 0.0;
  Matrix matrix;

  std::string label() const {
    switch (kind) {
      case Kind::Isotropic: return "isotropic(sigma=" + io::format_short(sigma) + ")";
      case Kind::CompoundSymmetry:
        return "compound_symmetry(" + io::format_short(identity) + "*I+" + io::format_short(ones) + "*11T)";
      case Kind::Explicit: return "explicit";
    }
    return "unknown";
  }

  Matrix build(Eigen::Index d) const {
    switch (kind) {
      case Kind::Isotropic: return sigma * sigma * Matrix::Identity(d, d);
      case Kind::CompoundSymmetry: return identity * Matrix::Identity(d, d) + ones * Matrix::Ones(d, d);
      case Kind::Explicit:
        if (matrix.rows() != d || matrix.cols() != d) fail(ErrorCode::ConfigError, "covariance matrix must be d x d");
        return matrix;
    }
    return {};
  }
};

struct ModelSpec {
  int components = 0;
  int dim = 0;
  MeansRecipe means;
  CovarianceRecipe covariance;
  Vector weights;  // empty means uniform

  Vector effective_weights() const {
    return weights.size() ? weights : Vector::Constant(components, 1.0 / components);
  }

  MixtureParams build(std::optional<double> delta0, const Vector& w, const CovarianceRecipe& cov) const {
    MixtureParams p;
    p.weights = w;
    if (means.kind == MeansRecipe::Kind::Explicit) {
      p.means = means.columns;
    } else {
      const double scale = delta0 ? *delta0 / std::sqrt(2.0) : (means.delta0 ? *means.delta0 / std::sqrt(2.0) : means.scale);
      p.means = Matrix::Zero(dim, components);
      for (int l = 0; l < components; ++l) {
        const int coord = means.basis.empty() ? l : means.basis[static_cast<std::size_t>(l)] - 1;
        p.means(coord, l) = scale;
      }
    }
    p.covariance = cov.build(dim);
    validate_params(p);
    return p;
  }
};

struct GridSpec {
  std::vector<Eigen::Index> n;
  std::vector<double> delta0;  // empty: use the model's means
  std::vector<Vector> weights;
  std::vector<CovarianceRecipe> covariances;
  std::vector<bool> known_modes;  // true = known covariance
  int trials = 10;
};

struct InitSpec {
  enum class Scheme { Perturb, SigmaT, Labels } scheme = Scheme::Perturb;
  PerturbSpec perturb;
  enum class Source { True, KMeans } source = Source::KMeans;
  int restarts = 10;
  int kmeans_iters = 100;
};

struct EmSettings {
  int max_iters = 500;
  double tol = 1e-10;
};

/// Declarative description of one experiment, loaded from JSON.
struct ExperimentConfig {
  Scenario scenario = Scenario::ConvergenceCurves;
  ModelSpec model;
  GridSpec grid;
  InitSpec init;
  EmSettings em;
  bool align = true;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  std::string data_path;  // single_fit input
  unsigned jobs = 1;
  /// The validated input document; echoed into manifests.
  io::Json source;
};

namespace detail {

inline void check_keys(const io::Json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) fail(ErrorCode::ConfigError, where + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!ok.count(it.key())) fail(ErrorCode::ConfigError, "unknown key '" + it.key() + "' in " + where);
  }
}

template <class T>
T get_or(const io::Json& obj, const char* key, T fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorCode::ConfigError, std::string("bad value for '") + key + "' in " + where);
  }
}

inline Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline CovarianceRecipe parse_covariance(const io::Json& j, const std::string& where) {
  CovarianceRecipe c;
  const auto recipe = get_or<std::string>(j, "recipe", "", where);
  if (recipe == "isotropic") {
    check_keys(j, {"recipe", "sigma"}, where);
    c.kind = CovarianceRecipe::Kind::Isotropic;
    c.sigma = get_or<double>(j, "sigma", 1.0, where);
    if (!(c.sigma > 0.0)) fail(ErrorCode::ConfigError, where + ": sigma must be positive");
  } else if (recipe == "compound_symmetry") {
    check_keys(j, {"recipe", "identity", "ones"}, where);
    c.kind = CovarianceRecipe::Kind::CompoundSymmetry;
    c.identity = get_or<double>(j, "identity", 1.0, where);
    c.ones = get_or<double>(j, "ones", 0.0, where);
  } else if (recipe == "explicit") {
    check_keys(j, {"recipe", "matrix"}, where);
    c.kind = CovarianceRecipe::Kind::Explicit;
    if (!j.contains("matrix")) fail(ErrorCode::ConfigError, where + ": explicit covariance needs 'matrix'");
    c.matrix = io::matrix_from_rows(j.at("matrix"), where + ".matrix");
  } else {
    fail(ErrorCode::ConfigError, where + ": recipe must be isotropic, compound_symmetry or explicit");
  }
  return c;
}

inline void check_weights(const Vector& w, int k, const std::string& where) {
  if (w.size() != k) fail(ErrorCode::ConfigError, where + ": weights need one entry per component");
  if (w.minCoeff() <= 0.0 || std::abs(w.sum() - 1.0) > 1e-12) {
    fail(ErrorCode::ConfigError, where + ": weights must be positive and sum to one");
  }
}

}  // namespace detail

inline ExperimentConfig parse_config(const io::Json& j) {
  using detail::check_keys;
  using detail::get_or;
  check_keys(j, {"schema_version", "scenario", "model", "grid", "init", "em", "align", "seed", "output_dir", "data", "jobs"},
             "config");
  ExperimentConfig c;
  c.source = j;
  if (get_or<int>(j, "schema_version", -1, "config") != kConfigSchemaVersion) {
    fail(ErrorCode::ConfigError, "schema_version must be " + std::to_string(kConfigSchemaVersion));
  }
  const auto scenario = get_or<std::string>(j, "scenario", "", "config");
  if (scenario == "convergence_curves") c.scenario = Scenario::ConvergenceCurves;
  else if (scenario == "separation_sweep") c.scenario = Scenario::SeparationSweep;
  else if (scenario == "rate_regression") c.scenario = Scenario::RateRegression;
  else if (scenario == "single_fit") c.scenario = Scenario::SingleFit;
  else fail(ErrorCode::ConfigError, "unknown scenario '" + scenario + "'");

  // model
  if (!j.contains("model")) fail(ErrorCode::ConfigError, "config needs a 'model' section");
  const auto& m = j.at("model");
  check_keys(m, {"components", "dim", "means", "covariance", "weights"}, "model");
  c.model.components = get_or<int>(m, "components", 0, "model");
  c.model.dim = get_or<int>(m, "dim", 0, "model");
  if (c.model.components < 1 || c.model.dim < 1) fail(ErrorCode::ConfigError, "model needs positive components and dim");
  if (m.contains("weights")) {
    c.model.weights = detail::to_vector(get_or<std::vector<double>>(m, "weights", {}, "model"));
    detail::check_weights(c.model.weights, c.model.components, "model");
  }
  if (m.contains("means")) {
    const auto& mm = m.at("means");
    const auto recipe = get_or<std::string>(mm, "recipe", "basis", "model.means");
    if (recipe == "basis") {
      check_keys(mm, {"recipe", "scale", "delta0", "basis"}, "model.means");
      c.model.means.kind = MeansRecipe::Kind::Basis;
      c.model.means.scale = get_or<double>(mm, "scale", 1.0, "model.means");
      if (mm.contains("delta0")) c.model.means.delta0 = get_or<double>(mm, "delta0", 1.0, "model.means");
      c.model.means.basis = get_or<std::vector<int>>(mm, "basis", {}, "model.means");
      if (!c.model.means.basis.empty() &&
          static_cast<int>(c.model.means.basis.size()) != c.model.components) {
        fail(ErrorCode::ConfigError, "model.means.basis needs one coordinate per component");
      }
      for (int b : c.model.means.basis)
        if (b < 1 || b > c.model.dim) fail(ErrorCode::ConfigError, "model.means.basis entries must lie in 1..dim");
      if (c.model.means.basis.empty() && c.model.components > c.model.dim) {
        fail(ErrorCode::ConfigError, "basis means need components <= dim");
      }
    } else if (recipe == "explicit") {
      check_keys(mm, {"recipe", "columns"}, "model.means");
      c.model.means.kind = MeansRecipe::Kind::Explicit;
      if (!mm.contains("columns")) fail(ErrorCode::ConfigError, "explicit means need 'columns'");
      c.model.means.columns = io::matrix_from_rows(mm.at("columns"), "model.means.columns").transpose();
      if (c.model.means.columns.rows() != c.model.dim || c.model.means.columns.cols() != c.model.components) {
        fail(ErrorCode::ConfigError, "model.means.columns must list L vectors of length dim");
      }
    } else {
      fail(ErrorCode::ConfigError, "model.means.recipe must be basis or explicit");
    }
  } else if (c.model.components > c.model.dim) {
    fail(ErrorCode::ConfigError, "basis means need components <= dim");
  }
  if (m.contains("covariance")) c.model.covariance = detail::parse_covariance(m.at("covariance"), "model.covariance");

  // grid
  const io::Json grid = j.contains("grid") ? j.at("grid") : io::Json::object();
  check_keys(grid, {"n", "delta0", "weights", "covariances", "modes", "trials"}, "grid");
  for (auto v : get_or<std::vector<long long>>(grid, "n", {}, "grid")) {
    if (v < 1) fail(ErrorCode::ConfigError, "grid.n values must be positive");
    c.grid.n.push_back(static_cast<Eigen::Index>(v));
  }
  if (c.grid.n.empty() && c.scenario != Scenario::SingleFit) fail(ErrorCode::ConfigError, "grid.n must list sample sizes");
  c.grid.delta0 = get_or<std::vector<double>>(grid, "delta0", {}, "grid");
  for (double v : c.grid.delta0)
    if (!(v > 0.0)) fail(ErrorCode::ConfigError, "grid.delta0 values must be positive");
  if (!c.grid.delta0.empty() && c.model.means.kind != MeansRecipe::Kind::Basis) {
    fail(ErrorCode::ConfigError, "grid.delta0 requires basis means");
  }
  for (const auto& w : get_or<std::vector<std::vector<double>>>(grid, "weights", {}, "grid")) {
    c.grid.weights.push_back(detail::to_vector(w));
    detail::check_weights(c.grid.weights.back(), c.model.components, "grid.weights");
  }
  if (c.grid.weights.empty()) c.grid.weights.push_back(c.model.effective_weights());
  if (grid.contains("covariances")) {
    if (!grid.at("covariances").is_array()) fail(ErrorCode::ConfigError, "grid.covariances must be an array");
    for (const auto& cv : grid.at("covariances")) c.grid.covariances.push_back(detail::parse_covariance(cv, "grid.covariances"));
  }
  if (c.grid.covariances.empty()) c.grid.covariances.push_back(c.model.covariance);
  for (const auto& mode : get_or<std::vector<std::string>>(grid, "modes", {}, "grid")) {
    if (mode == "known") c.grid.known_modes.push_back(true);
    else if (mode == "unknown") c.grid.known_modes.push_back(false);
    else fail(ErrorCode::ConfigError, "grid.modes entries must be known or unknown");
  }
  if (c.grid.known_modes.empty()) c.grid.known_modes.push_back(false);
  c.grid.trials = get_or<int>(grid, "trials", 10, "grid");
  if (c.grid.trials < 1) fail(ErrorCode::ConfigError, "grid.trials must be >= 1");

  // init
  const bool external = c.scenario == Scenario::SingleFit;
  c.init.scheme = external ? InitSpec::Scheme::Labels : InitSpec::Scheme::Perturb;
  if (j.contains("init")) {
    const auto& in = j.at("init");
    check_keys(in, {"scheme", "radius", "dir_alpha", "mix", "cov_scale", "source", "restarts", "max_iters"}, "init");
    const auto scheme = get_or<std::string>(in, "scheme", external ? "labels" : "perturb", "init");
    if (scheme == "perturb") c.init.scheme = InitSpec::Scheme::Perturb;
    else if (scheme == "sigma_t") c.init.scheme = InitSpec::Scheme::SigmaT;
    else if (scheme == "labels") c.init.scheme = InitSpec::Scheme::Labels;
    else fail(ErrorCode::ConfigError, "init.scheme must be perturb, sigma_t or labels");
    c.init.perturb.radius = get_or<double>(in, "radius", c.init.perturb.radius, "init");
    c.init.perturb.dir_alpha = get_or<double>(in, "dir_alpha", c.init.perturb.dir_alpha, "init");
    c.init.perturb.mix = get_or<double>(in, "mix", c.init.perturb.mix, "init");
    c.init.perturb.cov_scale = get_or<double>(in, "cov_scale", c.init.perturb.cov_scale, "init");
    const auto source = get_or<std::string>(in, "source", "kmeans", "init");
    if (source == "kmeans") c.init.source = InitSpec::Source::KMeans;
    else if (source == "true") c.init.source = InitSpec::Source::True;
    else fail(ErrorCode::ConfigError, "init.source must be kmeans or true");
    c.init.restarts = get_or<int>(in, "restarts", c.init.restarts, "init");
    c.init.kmeans_iters = get_or<int>(in, "max_iters", c.init.kmeans_iters, "init");
    if (c.init.perturb.radius < 0 || c.init.perturb.mix < 0 || c.init.perturb.mix > 1 || c.init.restarts < 1) {
      fail(ErrorCode::ConfigError, "init: need radius >= 0, mix in [0,1], restarts >= 1");
    }
  }

  if (j.contains("em")) {
    const auto& em = j.at("em");
    check_keys(em, {"max_iters", "tol"}, "em");
    c.em.max_iters = get_or<int>(em, "max_iters", c.em.max_iters, "em");
    c.em.tol = get_or<double>(em, "tol", c.em.tol, "em");
    if (c.em.max_iters < 0 || !(c.em.tol >= 0.0)) fail(ErrorCode::ConfigError, "em: need max_iters >= 0 and tol >= 0");
  }

  c.align = get_or<bool>(j, "align", true, "config");
  c.seed = get_or<std::uint64_t>(j, "seed", 0, "config");
  c.output_dir = get_or<std::string>(j, "output_dir", "out", "config");
  c.data_path = get_or<std::string>(j, "data", "", "config");
  c.jobs = std::max(1u, get_or<unsigned>(j, "jobs", 1u, "config"));
  return c;
}

inline io::Json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::ConfigError, "cannot open config " + path);
  try {
    return io::Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ConfigError, path + ": " + e.what());
  }
}

inline ExperimentConfig load_config(const std::string& path) { return parse_config(load_json(path)); }

}  // namespace gmmem
