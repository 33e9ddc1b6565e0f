#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "gmmem/config.hpp"
#include "gmmem/experiments.hpp"
#include "gmmem/oracle.hpp"
#include "test_support.hpp"

using namespace gmmem;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gmmem_test_" + name);
  fs::remove_all(p);
  return p;
}

io::Json small_config(const std::string& scenario, const fs::path& out) {
  io::Json j = io::Json::parse(R"({
    "schema_version": 1,
    "model": {"components": 3, "dim": 4, "means": {"recipe": "basis", "delta0": 1.4},
              "covariance": {"recipe": "isotropic", "sigma": 0.4}},
    "grid": {"n": [600], "trials": 3},
    "em": {"max_iters": 40, "tol": 1e-10}
  })");
  j["scenario"] = scenario;
  j["output_dir"] = out.string();
  j["seed"] = 99;
  return j;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Relative path -> contents for every CSV and JSON under `dir`.
std::map<std::string, std::string> payloads(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    const auto ext = e.path().extension();
    if (ext == ".csv" || ext == ".json") out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  }
  return out;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(GMMEM_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_json(const fs::path& p, const io::Json& j) {
  fs::create_directories(p.parent_path());
  io::write_text(p.string(), j.dump(2));
}

}  // namespace

TEST(Experiment, RerunsAreByteIdenticalAcrossJobCounts) {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  io::Json j = small_config("separation_sweep", a);
  j["grid"]["delta0"] = {1.4, 2.0};
  j["grid"].erase("n");
  j["grid"]["n"] = {400};
  j["grid"]["modes"] = {"known", "unknown"};
  run_experiment(parse_config(j));
  j["output_dir"] = b.string();
  j["jobs"] = 3;
  run_experiment(parse_config(j));
  const auto pa = payloads(a), pb = payloads(b);
  EXPECT_FALSE(pa.empty());
  EXPECT_EQ(pa, pb);
  EXPECT_EQ(slurp(a / "plot.svg"), slurp(b / "plot.svg"));
}

TEST(Experiment, TraceHeaderIsSelfDescribing) {
  const fs::path out = scratch("header");
  run_experiment(parse_config(small_config("convergence_curves", out)));
  const io::Table t = io::read_table((out / "trials" / "cell_000_t00.csv").string());
  EXPECT_EQ(t.header, trial_columns());
  ASSERT_GE(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[0][0], 0.0);
  EXPECT_DOUBLE_EQ(t.rows[0][t.column("d_means_mahal")], 1.0);  // radius 0.4 / sigma 0.4
}

TEST(Experiment, ZeroIterationsGivesOnlyTheInitialRow) {
  const fs::path out = scratch("zero");
  io::Json j = small_config("convergence_curves", out);
  j["em"]["max_iters"] = 0;
  const auto s = run_experiment(parse_config(j));
  EXPECT_EQ(s.trials_failed, 0);
  for (int k = 0; k < 3; ++k) {
    const io::Table t = io::read_table((out / ("trials/cell_000_t0" + std::to_string(k) + ".csv")).string());
    ASSERT_EQ(t.rows.size(), 1u);
    EXPECT_EQ(t.rows[0][0], 0.0);
  }
}

TEST(Experiment, AddingTrialsKeepsEarlierTrials) {
  const fs::path a = scratch("grow_a"), b = scratch("grow_b");
  io::Json j = small_config("convergence_curves", a);
  run_experiment(parse_config(j));
  j["output_dir"] = b.string();
  j["grid"]["trials"] = 5;
  run_experiment(parse_config(j));
  for (const char* f : {"trials/cell_000_t00.csv", "trials/cell_000_t01.csv", "trials/cell_000_t02.csv"}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
}

TEST(Experiment, SingleDeltaSweepMatchesConvergenceRun) {
  const fs::path a = scratch("single_conv"), b = scratch("single_sweep");
  run_convergence(parse_config(small_config("convergence_curves", a)));
  io::Json j = small_config("separation_sweep", b);
  j["model"]["means"] = io::Json::parse(R"({"recipe": "basis"})");
  j["grid"]["delta0"] = {1.4};
  run_separation_sweep(parse_config(j));
  EXPECT_EQ(slurp(a / "curves/cell_000.csv"), slurp(b / "curves/cell_000.csv"));
  EXPECT_EQ(slurp(a / "trials/cell_000_t01.csv"), slurp(b / "trials/cell_000_t01.csv"));
}

TEST(Experiment, ScenarioGuards) {
  const fs::path out = scratch("guard");
  EXPECT_THROW(run_rate_regression(parse_config(small_config("convergence_curves", out))), Error);
  EXPECT_THROW(run_convergence(parse_config(small_config("separation_sweep", out))), Error);
}

TEST(Experiment, ReportRebuildsIdenticalOutputs) {
  const fs::path out = scratch("report");
  run_experiment(parse_config(small_config("convergence_curves", out)));
  const auto before = payloads(out);
  fs::remove_all(out / "curves");
  fs::remove(out / "summary.csv");
  aggregate(out.string());
  EXPECT_EQ(before, payloads(out));
}

TEST(Experiment, FailedTrialsAreRecordedNotRetried) {
  // Two points in four dimensions: the total scatter is singular.
  const fs::path out = scratch("fail");
  io::Json j = small_config("convergence_curves", out);
  j["grid"]["n"] = {2};
  const auto s = run_experiment(parse_config(j));
  EXPECT_EQ(s.trials_total, 3);
  EXPECT_EQ(s.trials_failed, 3);
  const io::Json m = io::Json::parse(slurp(out / "manifest.json"));
  for (const auto& t : m["cells"][0]["trials"]) {
    EXPECT_EQ(t["status"], "failed");
    EXPECT_FALSE(t["error"].get<std::string>().empty());
  }
}

TEST(RateRegression, SingleSampleSizeFitsExactly) {
  const fs::path out = scratch("rate1");
  io::Json j = small_config("rate_regression", out);
  j["model"]["means"] = io::Json::parse(R"({"recipe": "basis", "scale": 2.0})");
  j["grid"]["n"] = {800};
  j["grid"]["trials"] = 2;
  run_rate_regression(parse_config(j));
  const io::Json r = io::Json::parse(slurp(out / "rate_fit.json"));
  ASSERT_EQ(r["groups"].size(), 1u);
  EXPECT_EQ(r["groups"][0]["mean_fit"]["r_squared"].get<double>(), 1.0);
  EXPECT_EQ(r["groups"][0]["cov_fit"]["r_squared"].get<double>(), 1.0);
  EXPECT_TRUE(fs::exists(out / "rate_fit.svg"));
}

TEST(RateRegression, AbscissaeDecreaseInN) {
  const fs::path out = scratch("rate3");
  io::Json j = small_config("rate_regression", out);
  j["grid"]["n"] = {900, 300, 600};
  j["grid"]["trials"] = 1;
  run_rate_regression(parse_config(j));
  const io::Json g = io::Json::parse(slurp(out / "rate_fit.json"))["groups"][0];
  const auto xm = g["mean_abscissa"].get<std::vector<double>>();
  const auto xc = g["cov_abscissa"].get<std::vector<double>>();
  ASSERT_EQ(xm.size(), 3u);
  for (std::size_t i = 1; i < 3; ++i) {
    EXPECT_LT(xm[i], xm[i - 1]);
    EXPECT_LT(xc[i], xc[i - 1]);
  }
  EXPECT_NEAR(xm[0], std::sqrt(4.0 / (300.0 / 3.0)), 1e-12);
  EXPECT_LE(g["mean_fit"]["r_squared"].get<double>(), 1.0);
}

TEST(SingleFit, FileRoundTripMatchesInMemoryFit) {
  const fs::path out = scratch("fit_rt");
  io::Json j = small_config("single_fit", out);
  j["grid"]["n"] = {1500};
  const ExperimentConfig c = parse_config(j);
  const LabeledDataset data = run_simulate(c);
  io::DataFile mem;
  mem.observations = data.observations;
  mem.labels = data.labels;
  const FitReport direct = fit_data(c, mem);
  const FitReport via_file = run_single_fit(c, (out / "data.csv").string());
  EXPECT_TRUE((direct.params.means.array() == via_file.params.means.array()).all());
  EXPECT_TRUE((direct.params.covariance.array() == via_file.params.covariance.array()).all());
  EXPECT_EQ(direct.log_likelihood, via_file.log_likelihood);
  ASSERT_TRUE(via_file.misclustering.has_value());
  EXPECT_LT(*via_file.misclustering, 0.2);
  const MixtureParams truth = io::params_from_json(io::Json::parse(slurp(out / "truth.json")));
  EXPECT_LT(distance_report(via_file.params, truth, true).d_means, 0.5);
  EXPECT_TRUE(fs::exists(out / "fit.json"));
}

TEST(SingleFit, OneComponentIsSampleMeanAndCovariance) {
  Rng rng(4);
  io::DataFile f;
  f.observations = rng.normal_matrix(200, 3);
  f.observations.col(1) *= 2.0;
  io::Json j = io::Json::parse(R"({"schema_version": 1, "scenario": "single_fit",
                                   "model": {"components": 1, "dim": 3}})");
  const FitReport r = fit_data(parse_config(j), f);
  const Vector mean = f.observations.colwise().mean();
  const Matrix centered = f.observations.rowwise() - mean.transpose();
  const Matrix cov = centered.transpose() * centered / 200.0;
  EXPECT_NEAR(r.params.weights(0), 1.0, 1e-15);
  EXPECT_LT((r.params.means.col(0) - mean).norm(), 1e-12);
  EXPECT_LT(relative_frobenius(r.params.covariance, cov), 1e-12);
}

TEST(Cli, ExitCodes) {
  const fs::path dir = scratch("cli");
  fs::create_directories(dir);
  io::Json good = small_config("convergence_curves", dir / "run");
  write_json(dir / "good.json", good);
  EXPECT_EQ(run_cli("experiment --config " + (dir / "good.json").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "run/summary.csv"));
  EXPECT_EQ(run_cli("report --out " + (dir / "run").string()), 0);

  io::Json bad = good;
  bad["surprise"] = true;
  write_json(dir / "bad.json", bad);
  EXPECT_EQ(run_cli("experiment --config " + (dir / "bad.json").string()), 2);
  EXPECT_EQ(run_cli("experiment --config " + (dir / "missing.json").string()), 2);
  EXPECT_EQ(run_cli("experiment"), 2);

  io::Json failing = good;
  failing["grid"]["n"] = {2};
  failing["output_dir"] = (dir / "failing").string();
  write_json(dir / "failing.json", failing);
  EXPECT_EQ(run_cli("experiment --config " + (dir / "failing.json").string()), 3);
}

TEST(Cli, SimulateThenFit) {
  const fs::path dir = scratch("cli_fit");
  io::Json cfg = small_config("single_fit", dir / "sim");
  write_json(dir / "sim.json", cfg);
  ASSERT_EQ(run_cli("simulate --config " + (dir / "sim.json").string()), 0);
  ASSERT_EQ(run_cli("fit --data " + (dir / "sim/data.csv").string() + " --components 3 --seed 5 --out " +
                    (dir / "fit").string()),
            0);
  const io::Json fit = io::Json::parse(slurp(dir / "fit/fit.json"));
  EXPECT_EQ(fit["components"], 3);
  EXPECT_TRUE(fit["misclustering_frac"].is_number());

  std::ofstream(dir / "broken.csv") << "x1,x2\n1,2\n3\n";
  EXPECT_EQ(run_cli("fit --data " + (dir / "broken.csv").string() + " --components 2"), 2);
}
