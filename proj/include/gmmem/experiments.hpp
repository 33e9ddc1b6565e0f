#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "gmmem/config.hpp"
#include "gmmem/em.hpp"
#include "gmmem/init.hpp"
#include "gmmem/io.hpp"
#include "gmmem/kmeans.hpp"
#include "gmmem/metrics.hpp"
#include "gmmem/model.hpp"
#include "gmmem/rng.hpp"
#include "gmmem/svg.hpp"

namespace gmmem {

/// Continuation run that defines the convergent point for the
/// optimisation error.
inline constexpr double kConvergentTol = 1e-12;
inline constexpr int kConvergentMaxIters = 2000;
/// "Close to the plateau" band for iterations-to-plateau.
inline constexpr double kPlateauBand = 0.10;

/// Per-trial trace columns, in order.
inline const std::vector<std::string>& trial_columns() {
  static const std::vector<std::string> cols = {
      "iteration",          "log_likelihood_nats",   "d_pi_rel",
      "d_means_mahal",      "d_cov_op",              "d_j_mahal",
      "phi_sq_mahal",       "misclustering_frac",    "opt_error_means_mahal",
      "log_stat_error_means", "log_opt_error_means"};
  return cols;
}

/// One point of the experiment grid.
struct Cell {
  int index = 0;
  std::string key;       // seeds data and init; depends on truth and n only
  std::string group;     // everything but n
  Eigen::Index n = 0;
  std::optional<double> delta0;
  std::size_t weights_index = 0;
  std::size_t cov_index = 0;
  bool known = false;
  MixtureParams truth;

  std::string label() const {
    return "cell_" + std::string(index < 100 ? (index < 10 ? "00" : "0") : "") + std::to_string(index);
  }
};

inline std::string join_values(const Vector& v, char sep = ';') {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? std::string(1, sep) : "") + io::format_double(v(i));
  return s;
}

/// Digest of the exact parameter values, so equal truths share data however
/// they were specified.
inline std::string truth_key(const MixtureParams& p) {
  std::string all;
  auto add = [&](const Matrix& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) all += io::format_double(m.data()[i]) + ",";
    all += "|";
  };
  add(p.weights);
  add(p.means);
  add(p.covariance);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(derive_seed(0, all)));
  return buf;
}

inline std::vector<Cell> expand_cells(const ExperimentConfig& c) {
  std::vector<std::optional<double>> deltas;
  for (double d0 : c.grid.delta0) deltas.emplace_back(d0);
  if (deltas.empty()) deltas.emplace_back(std::nullopt);
  std::vector<Cell> cells;
  for (std::size_t ci = 0; ci < c.grid.covariances.size(); ++ci)
    for (std::size_t wi = 0; wi < c.grid.weights.size(); ++wi)
      for (const auto& d0 : deltas)
        for (bool known : c.grid.known_modes)
          for (Eigen::Index n : c.grid.n) {
            Cell cell;
            cell.index = static_cast<int>(cells.size());
            cell.n = n;
            cell.delta0 = d0;
            cell.weights_index = wi;
            cell.cov_index = ci;
            cell.known = known;
            cell.truth = c.model.build(d0, c.grid.weights[wi], c.grid.covariances[ci]);
            const std::string common = "cov=" + c.grid.covariances[ci].label() + "|w=" + join_values(c.grid.weights[wi]) +
                                       "|delta0=" + (d0 ? io::format_double(*d0) : "model");
            cell.key = truth_key(cell.truth) + "-n" + std::to_string(n);
            cell.group = common + "|mode=" + (known ? "known" : "unknown");
            cells.push_back(std::move(cell));
          }
  return cells;
}

/// Seeds for trial `trial` of `cell`; independent of grid order and of how
/// many trials are run.
inline std::uint64_t trial_seed(std::uint64_t master, const Cell& cell, int trial) {
  return derive_seed(derive_seed(master, cell.key), static_cast<std::uint64_t>(trial));
}

inline CovarianceMode cell_mode(const Cell& cell) {
  return cell.known ? CovarianceMode::known(cell.truth.covariance) : CovarianceMode::unknown();
}

/// Initial parameters according to `spec`. `truth` is needed by the
/// perturbation schemes only.
inline MixtureParams initialize(const InitSpec& spec, const Matrix& x, const std::vector<int>* labels,
                                int components, const MixtureParams* truth, const CovarianceMode& mode,
                                std::uint64_t seed) {
  switch (spec.scheme) {
    case InitSpec::Scheme::Perturb:
    case InitSpec::Scheme::SigmaT: {
      if (!truth) fail(ErrorCode::ConfigError, "perturbation init needs a model to perturb");
      MixtureParams p = perturb_init(*truth, spec.perturb, seed);
      if (spec.scheme == InitSpec::Scheme::SigmaT) p = sigma_t_init(x, p.weights, p.means);
      return p;
    }
    case InitSpec::Scheme::Labels: {
      if (spec.source == InitSpec::Source::True) {
        if (!labels) fail(ErrorCode::ConfigError, "init from true labels needs labelled data");
        return labels_init(x, *labels, components, mode);
      }
      const KMeansResult km = lloyd_kmeans(x, components, spec.restarts, spec.kmeans_iters, seed);
      return labels_init(x, km.labels, components, mode);
    }
  }
  fail(ErrorCode::ConfigError, "unknown init scheme");
}

inline double safe_log(double v) { return v > 0.0 ? std::log(v) : -INFINITY; }

/// Runs one trial and returns its trace table.
inline io::Table run_trial_table(const ExperimentConfig& c, const Cell& cell, int trial, int* iterations = nullptr,
                                 bool* converged = nullptr) {
  const std::uint64_t seed = trial_seed(c.seed, cell, trial);
  const LabeledDataset data = sample_dataset(cell.truth, cell.n, derive_seed(seed, "data"));
  const CovarianceMode mode = cell_mode(cell);
  const MixtureParams init = initialize(c.init, data.observations, &data.labels, cell.truth.components(),
                                        &cell.truth, mode, derive_seed(seed, "init"));
  EmConfig em;
  em.max_iters = c.em.max_iters;
  em.tol = c.em.tol;
  em.mode = mode;
  em.reference = cell.truth;
  em.align = c.align;
  const EmResult run = run_em(data, init, em);

  EmConfig more = em;
  more.tol = kConvergentTol;
  more.max_iters = kConvergentMaxIters;
  more.record_trace = false;
  more.reference.reset();
  const MixtureParams limit = run_em(data.observations, run.params, more).params;
  const Permutation limit_perm =
      c.align ? align_labels(limit, cell.truth).permutation : identity_permutation(limit.components());
  const Matrix limit_means = permute_components(limit, limit_perm).means;
  const Cholesky chol_star(cell.truth.covariance);

  io::Table t;
  t.header = trial_columns();
  for (const TraceEntry& e : run.trace) {
    const DistanceReport& d = *e.distances;
    const Matrix aligned = permute_components(e.params, d.permutation).means;
    const double opt = dist_means(aligned, limit_means, chol_star);
    t.rows.push_back({static_cast<double>(e.iteration), e.log_likelihood, d.d_pi, d.d_means, d.d_cov, d.d_j,
                      e.phi.value_or(NAN), e.misclustering.value_or(NAN), opt, safe_log(d.d_means), safe_log(opt)});
  }
  if (iterations) *iterations = run.iterations;
  if (converged) *converged = run.converged;
  return t;
}

struct TrialRecord {
  int trial = 0;
  std::string file;
  bool ok = false;
  std::string error;
  int iterations = 0;
  bool converged = false;
};

struct ExperimentSummary {
  std::string output_dir;
  int trials_total = 0;
  int trials_failed = 0;
};

inline io::Json config_echo(const ExperimentConfig& c) {
  io::Json echo = c.source;
  echo.erase("output_dir");
  echo.erase("jobs");
  return echo;
}

inline std::string trial_file(const Cell& cell, int trial) {
  std::string t = std::to_string(trial);
  if (t.size() < 2) t = "0" + t;
  return "trials/" + cell.label() + "_t" + t + ".csv";
}

inline ExperimentSummary aggregate(const std::string& dir);

/// Runs every (cell, trial) on `c.jobs` threads, writes the trial CSVs and
/// manifest.json, then aggregates.
inline ExperimentSummary run_experiment(const ExperimentConfig& c) {
  if (c.scenario == Scenario::SingleFit) fail(ErrorCode::ConfigError, "single_fit is not a grid experiment");
  namespace fs = std::filesystem;
  const fs::path dir(c.output_dir);
  std::error_code ec;
  fs::create_directories(dir / "trials", ec);
  if (ec) fail(ErrorCode::ConfigError, "cannot create output directory " + c.output_dir + ": " + ec.message());

  const std::vector<Cell> cells = expand_cells(c);
  const int trials = c.grid.trials;
  const std::size_t total = cells.size() * static_cast<std::size_t>(trials);
  std::vector<TrialRecord> records(total);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t job = next++; job < total; job = next++) {
      const Cell& cell = cells[job / static_cast<std::size_t>(trials)];
      TrialRecord& r = records[job];
      r.trial = static_cast<int>(job % static_cast<std::size_t>(trials));
      r.file = trial_file(cell, r.trial);
      try {
        const io::Table t = run_trial_table(c, cell, r.trial, &r.iterations, &r.converged);
        io::write_table((dir / r.file).string(), t);
        r.ok = true;
      } catch (const Error& e) {
        r.error = std::string(to_string(e.code())) + ": " + e.what();
      } catch (const std::exception& e) {
        r.error = e.what();
      }
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(c.jobs, static_cast<unsigned>(total)));
  std::vector<std::thread> pool;
  for (unsigned i = 1; i < threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  io::Json manifest;
  manifest["schema_version"] = kConfigSchemaVersion;
  manifest["scenario"] = to_string(c.scenario);
  manifest["config"] = config_echo(c);
  io::Json jc = io::Json::array();
  for (const Cell& cell : cells) {
    io::Json e;
    e["cell"] = cell.label();
    e["key"] = cell.key;
    e["group"] = cell.group;
    e["n"] = cell.n;
    e["dim"] = cell.truth.dim();
    e["components"] = cell.truth.components();
    e["delta0"] = cell.delta0 ? io::Json(*cell.delta0) : io::Json(nullptr);
    e["weights"] = std::vector<double>(cell.truth.weights.data(), cell.truth.weights.data() + cell.truth.weights.size());
    e["covariance"] = c.grid.covariances[cell.cov_index].label();
    e["mode"] = cell.known ? "known" : "unknown";
    e["pi_min"] = cell.truth.weights.minCoeff();
    e["delta_min"] = cell.truth.components() > 1 ? io::Json(separation_stats(cell.truth).delta_min) : io::Json(nullptr);
    io::Json jt = io::Json::array();
    for (int k = 0; k < trials; ++k) {
      const TrialRecord& r = records[static_cast<std::size_t>(cell.index * trials + k)];
      io::Json t;
      t["trial"] = r.trial;
      t["status"] = r.ok ? "ok" : "failed";
      if (r.ok) {
        t["file"] = r.file;
        t["iterations"] = r.iterations;
        t["converged"] = r.converged;
      } else {
        t["error"] = r.error;
      }
      jt.push_back(std::move(t));
    }
    e["trials"] = std::move(jt);
    jc.push_back(std::move(e));
  }
  manifest["cells"] = std::move(jc);
  io::write_text((dir / "manifest.json").string(), manifest.dump(2) + "\n");
  return aggregate(c.output_dir);
}

// ----- aggregation ------------------------------------------------------

/// Zero-intercept least squares y ~ slope * x with the uncentred R^2.
struct RateFit {
  double slope = 0.0;
  double r_squared = 0.0;
};

inline RateFit fit_through_origin(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.empty()) fail(ErrorCode::LengthMismatch, "fit needs matching nonempty x and y");
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
    syy += y[i] * y[i];
  }
  if (!(sxx > 0.0)) fail(ErrorCode::InvalidArgument, "fit needs a nonzero abscissa");
  RateFit f;
  f.slope = sxy / sxx;
  double sse = 0;
  for (std::size_t i = 0; i < x.size(); ++i) sse += (y[i] - f.slope * x[i]) * (y[i] - f.slope * x[i]);
  f.r_squared = syy > 0.0 ? 1.0 - sse / syy : (sse == 0.0 ? 1.0 : -INFINITY);
  return f;
}

/// Trial-averaged curves of one cell. Shorter traces are padded with their
/// last row.
struct CellCurves {
  std::vector<std::string> columns;      // averaged trace columns
  std::vector<std::vector<double>> mean;  // [iteration][column]
  int trials_ok = 0;
  int trials_failed = 0;
  std::vector<double> final_values;  // mean of each trial's last row
};

inline CellCurves average_trials(const std::vector<io::Table>& tables) {
  CellCurves out;
  out.columns = trial_columns();
  out.trials_ok = static_cast<int>(tables.size());
  if (tables.empty()) return out;
  std::size_t len = 0;
  for (const auto& t : tables) len = std::max(len, t.rows.size());
  const std::size_t cols = out.columns.size();
  out.mean.assign(len, std::vector<double>(cols, 0.0));
  out.final_values.assign(cols, 0.0);
  const double inv = 1.0 / static_cast<double>(tables.size());
  for (const auto& t : tables) {
    if (t.header != out.columns) fail(ErrorCode::ParseError, "trial table has unexpected columns");
    if (t.rows.empty()) fail(ErrorCode::ParseError, "trial table has no rows");
    for (std::size_t i = 0; i < len; ++i) {
      const auto& row = t.rows[std::min(i, t.rows.size() - 1)];
      for (std::size_t j = 0; j < cols; ++j) out.mean[i][j] += inv * row[j];
    }
    for (std::size_t j = 0; j < cols; ++j) out.final_values[j] += inv * t.rows.back()[j];
  }
  for (std::size_t i = 0; i < len; ++i) out.mean[i][0] = static_cast<double>(i);
  return out;
}

/// First iteration whose value is within the plateau band of the final one.
inline int iterations_to_plateau(const std::vector<double>& curve) {
  if (curve.empty()) return 0;
  const double plateau = curve.back();
  for (std::size_t t = 0; t < curve.size(); ++t)
    if (curve[t] <= (1.0 + kPlateauBand) * plateau) return static_cast<int>(t);
  return static_cast<int>(curve.size() - 1);
}

inline std::vector<double> column_of(const CellCurves& c, const std::string& name) {
  const auto it = std::find(c.columns.begin(), c.columns.end(), name);
  if (it == c.columns.end()) fail(ErrorCode::ParseError, "missing column " + name);
  const std::size_t j = static_cast<std::size_t>(it - c.columns.begin());
  std::vector<double> v;
  for (const auto& row : c.mean) v.push_back(row[j]);
  return v;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return q + "\"";
}

namespace detail {

struct LoadedCell {
  io::Json meta;
  CellCurves curves;
};

inline std::vector<LoadedCell> load_cells(const std::filesystem::path& dir, const io::Json& manifest) {
  std::vector<LoadedCell> out;
  for (const auto& cell : manifest.at("cells")) {
    std::vector<io::Table> tables;
    int failed = 0;
    for (const auto& t : cell.at("trials")) {
      if (t.at("status") == "ok") tables.push_back(io::read_table((dir / t.at("file").get<std::string>()).string()));
      else ++failed;
    }
    LoadedCell lc;
    lc.meta = cell;
    lc.curves = average_trials(tables);
    lc.curves.trials_failed = failed;
    out.push_back(std::move(lc));
  }
  return out;
}

inline std::string weights_text(const io::Json& w) {
  std::string s;
  for (std::size_t i = 0; i < w.size(); ++i) s += (i ? ";" : "") + io::format_short(w[i].get<double>());
  return s;
}

inline std::string cell_title(const io::Json& m) {
  std::string s = "pi=(" + weights_text(m.at("weights")) + ")";
  for (auto& ch : s)
    if (ch == ';') ch = ',';
  if (!m.at("delta0").is_null()) s += " delta0=" + io::format_short(m.at("delta0").get<double>());
  return s + " " + m.at("mode").get<std::string>() + " cov";
}

inline void write_curves(const std::filesystem::path& dir, const std::vector<LoadedCell>& cells) {
  std::filesystem::create_directories(dir / "curves");
  for (const auto& lc : cells) {
    if (!lc.curves.trials_ok) continue;
    io::Table t;
    t.header = {"iteration", "trials"};
    for (std::size_t j = 1; j < lc.curves.columns.size(); ++j) t.header.push_back("mean_" + lc.curves.columns[j]);
    for (const auto& row : lc.curves.mean) {
      std::vector<double> r = {row[0], static_cast<double>(lc.curves.trials_ok)};
      r.insert(r.end(), row.begin() + 1, row.end());
      t.rows.push_back(std::move(r));
    }
    io::write_table((dir / "curves" / (lc.meta.at("cell").get<std::string>() + ".csv")).string(), t);
  }
}

inline void write_summary(const std::filesystem::path& dir, const std::vector<LoadedCell>& cells) {
  std::ostringstream os;
  os << "cell,n,delta0,weights,covariance,mode,trials_ok,trials_failed,plateau_d_means_mahal,"
        "iterations_to_plateau,plateau_d_cov_op,cov_iterations_to_plateau,final_log_opt_error_means,"
        "min_log_opt_error_means,rate_reference_mahal\n";
  for (const auto& lc : cells) {
    const auto& m = lc.meta;
    const double n = m.at("n").get<double>();
    const double d = m.at("dim").get<double>();
    const double rate = std::sqrt(d * std::log(n) / (n * m.at("pi_min").get<double>()));
    os << m.at("cell").get<std::string>() << ',' << m.at("n").get<long long>() << ','
       << (m.at("delta0").is_null() ? std::string("") : io::format_short(m.at("delta0").get<double>())) << ','
       << weights_text(m.at("weights")) << ',' << csv_field(m.at("covariance").get<std::string>()) << ','
       << m.at("mode").get<std::string>() << ',' << lc.curves.trials_ok << ',' << lc.curves.trials_failed << ',';
    if (lc.curves.trials_ok) {
      const auto dm = column_of(lc.curves, "d_means_mahal");
      const auto dc = column_of(lc.curves, "d_cov_op");
      const auto lo = column_of(lc.curves, "log_opt_error_means");
      os << io::format_double(dm.back()) << ',' << iterations_to_plateau(dm) << ',' << io::format_double(dc.back())
         << ',' << (m.at("mode") == "known" ? 0 : iterations_to_plateau(dc)) << ','
         << io::format_double(lo.back()) << ',' << io::format_double(*std::min_element(lo.begin(), lo.end())) << ',';
    } else {
      os << "nan,,nan,,nan,nan,";
    }
    os << io::format_double(rate) << '\n';
  }
  io::write_text((dir / "summary.csv").string(), os.str());
}

inline void write_curve_plot(const std::filesystem::path& dir, const std::vector<LoadedCell>& cells,
                             const std::string& scenario) {
  std::vector<svg::Panel> panels;
  int columns = 2;
  if (scenario == "convergence_curves") {
    for (const auto& lc : cells) {
      if (!lc.curves.trials_ok) continue;
      svg::Panel p;
      p.title = cell_title(lc.meta) + " n=" + std::to_string(lc.meta.at("n").get<long long>());
      p.x_label = "iteration";
      p.y_label = "log error";
      std::vector<double> it = column_of(lc.curves, "iteration");
      p.series.push_back({"log statistical error", it, column_of(lc.curves, "log_stat_error_means")});
      p.series.push_back({"log optimisation error", it, column_of(lc.curves, "log_opt_error_means")});
      panels.push_back(std::move(p));
    }
  } else {
    // One column per weight setting; rows: known-mode means, unknown-mode
    // means, unknown-mode covariance. Series are the delta0 values.
    std::vector<std::string> wkeys;
    for (const auto& lc : cells) {
      const std::string w = weights_text(lc.meta.at("weights")) + "|" + lc.meta.at("covariance").get<std::string>();
      if (std::find(wkeys.begin(), wkeys.end(), w) == wkeys.end()) wkeys.push_back(w);
    }
    columns = static_cast<int>(wkeys.size());
    struct RowSpec {
      const char* mode;
      const char* column;
      const char* what;
    };
    const RowSpec rowspec[] = {{"known", "d_means_mahal", "mean error"},
                               {"unknown", "d_means_mahal", "mean error"},
                               {"unknown", "d_cov_op", "covariance error"}};
    for (const auto& rs : rowspec) {
      for (const auto& wk : wkeys) {
        svg::Panel p;
        p.x_label = "iteration";
        p.y_label = std::string("log ") + rs.what;
        for (const auto& lc : cells) {
          const std::string w = weights_text(lc.meta.at("weights")) + "|" + lc.meta.at("covariance").get<std::string>();
          if (w != wk || lc.meta.at("mode") != rs.mode || !lc.curves.trials_ok) continue;
          if (p.title.empty()) {
            std::string t = "pi=(" + weights_text(lc.meta.at("weights")) + ")";
            std::replace(t.begin(), t.end(), ';', ',');
            p.title = t + " " + rs.mode + " cov: " + rs.what;
          }
          std::vector<double> y = column_of(lc.curves, rs.column);
          for (double& v : y) v = safe_log(v);
          const std::string name =
              lc.meta.at("delta0").is_null() ? lc.meta.at("cell").get<std::string>()
                                             : "delta0=" + io::format_short(lc.meta.at("delta0").get<double>());
          p.series.push_back({name, column_of(lc.curves, "iteration"), y});
        }
        if (!p.series.empty()) panels.push_back(std::move(p));
      }
    }
  }
  io::write_text((dir / "plot.svg").string(), svg::render(panels, columns, scenario));
}

inline io::Json fit_json(const RateFit& f) {
  io::Json j;
  j["slope"] = f.slope;
  j["r_squared"] = f.r_squared;
  return j;
}

inline void write_rate(const std::filesystem::path& dir, const std::vector<LoadedCell>& cells) {
  std::vector<std::string> groups;
  for (const auto& lc : cells) {
    const auto g = lc.meta.at("group").get<std::string>();
    if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
  }
  io::Json out;
  out["groups"] = io::Json::array();
  std::vector<svg::Panel> panels;
  std::ostringstream pts;
  pts << "group,n,trials_ok,mean_abscissa,cov_abscissa,mean_error_mahal,cov_error_op\n";
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    std::vector<const LoadedCell*> members;
    for (const auto& lc : cells)
      if (lc.meta.at("group") == groups[gi] && lc.curves.trials_ok) members.push_back(&lc);
    std::sort(members.begin(), members.end(), [](const LoadedCell* a, const LoadedCell* b) {
      return a->meta.at("n").get<long long>() < b->meta.at("n").get<long long>();
    });
    if (members.empty()) continue;
    const auto& m0 = members.front()->meta;
    const bool known = m0.at("mode") == "known";
    std::vector<double> ns, xm, xc, ym, yc;
    const std::size_t jm = 3, jc = 4;  // d_means_mahal, d_cov_op
    for (const LoadedCell* lc : members) {
      const double n = lc->meta.at("n").get<double>();
      const double d = lc->meta.at("dim").get<double>();
      ns.push_back(n);
      xm.push_back(std::sqrt(d / (n * lc->meta.at("pi_min").get<double>())));
      xc.push_back(std::sqrt(d / n));
      ym.push_back(lc->curves.final_values[jm]);
      yc.push_back(lc->curves.final_values[jc]);
      pts << gi << ',' << lc->meta.at("n").get<long long>() << ',' << lc->curves.trials_ok << ','
          << io::format_double(xm.back()) << ',' << io::format_double(xc.back()) << ','
          << io::format_double(ym.back()) << ',' << io::format_double(yc.back()) << '\n';
    }
    io::Json g;
    g["group"] = gi;
    g["covariance"] = m0.at("covariance");
    g["weights"] = m0.at("weights");
    g["delta0"] = m0.at("delta0");
    g["mode"] = m0.at("mode");
    g["n"] = ns;
    g["mean_abscissa"] = xm;
    g["cov_abscissa"] = xc;
    g["mean_error"] = ym;
    g["cov_error"] = yc;
    const RateFit fm = fit_through_origin(xm, ym);
    g["mean_fit"] = fit_json(fm);
    std::optional<RateFit> fc;
    if (!known) fc = fit_through_origin(xc, yc);
    g["cov_fit"] = fc ? fit_json(*fc) : io::Json(nullptr);
    out["groups"].push_back(std::move(g));

    auto panel = [&](const std::string& what, const std::vector<double>& x, const std::vector<double>& y,
                     const RateFit& f, const std::string& xl) {
      svg::Panel p;
      p.title = m0.at("covariance").get<std::string>() + ": " + what;
      p.x_label = xl;
      p.y_label = what;
      p.series.push_back({"observed", x, y, false, true});
      const double xmax = *std::max_element(x.begin(), x.end());
      p.series.push_back({"fit R2=" + svg::detail::num(f.r_squared), {0.0, xmax}, {0.0, f.slope * xmax}});
      panels.push_back(std::move(p));
    };
    panel("mean error", xm, ym, fm, "sqrt(d/(n pi_min))");
    if (fc) panel("covariance error", xc, yc, *fc, "sqrt(d/n)");
  }
  io::write_text((dir / "rate_fit.json").string(), out.dump(2) + "\n");
  io::write_text((dir / "rate_points.csv").string(), pts.str());
  io::write_text((dir / "rate_fit.svg").string(), svg::render(panels, 2, "rate regression"));
}

}  // namespace detail

/// Rebuilds every derived output in `dir` from manifest.json and the trial
/// CSVs.
inline ExperimentSummary aggregate(const std::string& dir_name) {
  namespace fs = std::filesystem;
  const fs::path dir(dir_name);
  io::Json manifest;
  {
    std::ifstream in(dir / "manifest.json");
    if (!in) fail(ErrorCode::ParseError, "cannot open " + (dir / "manifest.json").string());
    try {
      manifest = io::Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::ParseError, std::string("manifest.json: ") + e.what());
    }
  }
  const auto cells = detail::load_cells(dir, manifest);
  const std::string scenario = manifest.at("scenario").get<std::string>();
  ExperimentSummary s;
  s.output_dir = dir_name;
  for (const auto& lc : cells) {
    s.trials_total += lc.curves.trials_ok + lc.curves.trials_failed;
    s.trials_failed += lc.curves.trials_failed;
  }
  detail::write_curves(dir, cells);
  detail::write_summary(dir, cells);
  if (scenario == "rate_regression") detail::write_rate(dir, cells);
  else detail::write_curve_plot(dir, cells, scenario);
  return s;
}

inline ExperimentSummary run_convergence(const ExperimentConfig& c) {
  if (c.scenario != Scenario::ConvergenceCurves) fail(ErrorCode::ConfigError, "scenario must be convergence_curves");
  return run_experiment(c);
}

inline ExperimentSummary run_separation_sweep(const ExperimentConfig& c) {
  if (c.scenario != Scenario::SeparationSweep) fail(ErrorCode::ConfigError, "scenario must be separation_sweep");
  return run_experiment(c);
}

inline ExperimentSummary run_rate_regression(const ExperimentConfig& c) {
  if (c.scenario != Scenario::RateRegression) fail(ErrorCode::ConfigError, "scenario must be rate_regression");
  return run_experiment(c);
}

// ----- single fits and simulation --------------------------------------------

struct FitReport {
  MixtureParams params;
  double log_likelihood = 0.0;
  int iterations = 0;
  bool converged = false;
  std::optional<double> misclustering;
};

/// The model's first grid point, used as the truth for simulation and as
/// the perturbation centre for fits.
inline MixtureParams model_truth(const ExperimentConfig& c) {
  return c.model.build(c.grid.delta0.empty() ? std::nullopt : std::optional<double>(c.grid.delta0.front()),
                       c.grid.weights.front(), c.grid.covariances.front());
}

inline FitReport fit_data(const ExperimentConfig& c, const io::DataFile& data) {
  const Matrix& x = data.observations;
  const int k = c.model.components;
  if (x.cols() != c.model.dim) fail(ErrorCode::ShapeMismatch, "data dimension differs from model.dim");
  if (x.rows() < k) fail(ErrorCode::InvalidSampleSize, "fewer observations than components");
  const std::vector<int>* labels = data.has_labels() ? &data.labels : nullptr;
  if (labels)
    for (int y : *labels)
      if (y < 0 || y >= k) fail(ErrorCode::ParseError, "label outside 1..components");

  const bool known = c.grid.known_modes.front();
  std::optional<MixtureParams> truth;
  if (known || c.init.scheme != InitSpec::Scheme::Labels) truth = model_truth(c);
  const CovarianceMode mode = known ? CovarianceMode::known(truth->covariance) : CovarianceMode::unknown();
  const std::uint64_t seed = derive_seed(c.seed, "fit");
  MixtureParams init;
  if (c.init.scheme == InitSpec::Scheme::SigmaT && c.scenario == Scenario::SingleFit) {
    const KMeansResult km = lloyd_kmeans(x, k, c.init.restarts, c.init.kmeans_iters, derive_seed(seed, "init"));
    const MixtureParams p = labels_init(x, km.labels, k, mode);
    init = sigma_t_init(x, p.weights, p.means);
  } else {
    init = initialize(c.init, x, labels, k, truth ? &*truth : nullptr, mode, derive_seed(seed, "init"));
  }
  EmConfig em;
  em.max_iters = c.em.max_iters;
  em.tol = c.em.tol;
  em.mode = mode;
  em.record_trace = false;
  const EmResult r = run_em(x, init, em);
  FitReport rep;
  rep.params = r.params;
  rep.log_likelihood = r.log_likelihood;
  rep.iterations = r.iterations;
  rep.converged = r.converged;
  if (labels) {
    const std::vector<int> pred = bayes_classify(x, r.params);
    rep.misclustering = min_hamming_fraction(*labels, pred, k);
  }
  return rep;
}

inline io::Json fit_report_json(const FitReport& r, const io::DataFile& data) {
  io::Json j;
  j["n"] = data.observations.rows();
  j["dim"] = data.observations.cols();
  j["components"] = r.params.components();
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  j["log_likelihood_nats"] = r.log_likelihood;
  j["misclustering_frac"] = r.misclustering ? io::Json(*r.misclustering) : io::Json(nullptr);
  j["params"] = io::params_to_json(r.params);
  return j;
}

/// Fits `data_path` and writes fit.json into the output directory.
inline FitReport run_single_fit(const ExperimentConfig& c, const std::string& data_path) {
  const io::DataFile data = io::read_data(data_path);
  const FitReport r = fit_data(c, data);
  std::filesystem::create_directories(c.output_dir);
  io::write_text((std::filesystem::path(c.output_dir) / "fit.json").string(), fit_report_json(r, data).dump(2) + "\n");
  return r;
}

/// Draws grid.n[0] labelled observations from the model's first grid point;
/// writes data.csv and truth.json.
inline LabeledDataset run_simulate(const ExperimentConfig& c) {
  if (c.grid.n.empty()) fail(ErrorCode::ConfigError, "grid.n must give the sample size");
  const MixtureParams truth = model_truth(c);
  const LabeledDataset data = sample_dataset(truth, c.grid.n.front(), derive_seed(c.seed, "simulate"), c.jobs);
  namespace fs = std::filesystem;
  fs::create_directories(c.output_dir);
  io::write_data((fs::path(c.output_dir) / "data.csv").string(), data);
  io::write_text((fs::path(c.output_dir) / "truth.json").string(), io::params_to_json(truth).dump(2) + "\n");
  return data;
}

}  // namespace gmmem
