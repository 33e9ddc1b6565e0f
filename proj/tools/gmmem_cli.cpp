// Command-line front end: simulate, fit, experiment, report.
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "gmmem/config.hpp"
#include "gmmem/experiments.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct Overrides {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> jobs;
  bool no_align = false;
  bool known_sigma = false;
};

void apply(gmmem::io::Json& j, const Overrides& o) {
  if (!o.out.empty()) j["output_dir"] = o.out;
  if (o.seed) j["seed"] = *o.seed;
  if (o.jobs) j["jobs"] = *o.jobs;
  if (o.no_align) j["align"] = false;
  if (o.known_sigma) {
    if (!j.contains("grid")) j["grid"] = gmmem::io::Json::object();
    j["grid"]["modes"] = {"known"};
  }
}

bool is_input_error(gmmem::ErrorCode c) {
  using gmmem::ErrorCode;
  switch (c) {
    case ErrorCode::ConfigError:
    case ErrorCode::ParseError:
    case ErrorCode::ShapeMismatch:
    case ErrorCode::LengthMismatch:
    case ErrorCode::InvalidArgument:
    case ErrorCode::InvalidSampleSize:
    case ErrorCode::NonSimplexWeights:
    case ErrorCode::AsymmetricCovariance:
    case ErrorCode::NotPositiveDefinite:
    case ErrorCode::DegenerateMeans:
      return true;
    default:
      return false;
  }
}

void add_common(CLI::App* cmd, Overrides& o, bool needs_config) {
  auto* opt = cmd->add_option("--config", o.config, "experiment config (JSON)");
  if (needs_config) opt->required();
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--jobs", o.jobs, "worker threads")->check(CLI::PositiveNumber);
}

int run_simulate(const Overrides& o) {
  auto j = gmmem::load_json(o.config);
  apply(j, o);
  const auto c = gmmem::parse_config(j);
  const auto data = gmmem::run_simulate(c);
  std::cout << "wrote " << data.size() << " observations to " << c.output_dir << "\n";
  return 0;
}

int run_fit(const Overrides& o, const std::string& data_path, std::optional<int> components) {
  const auto data = gmmem::io::read_data(data_path);
  gmmem::io::Json j = o.config.empty() ? gmmem::io::Json{{"schema_version", gmmem::kConfigSchemaVersion}}
                                       : gmmem::load_json(o.config);
  j["scenario"] = "single_fit";
  if (!j.contains("model")) j["model"] = gmmem::io::Json::object();
  if (components) j["model"]["components"] = *components;
  if (!j["model"].contains("dim")) j["model"]["dim"] = data.observations.cols();
  if (o.known_sigma && !j["model"].contains("covariance")) {
    gmmem::fail(gmmem::ErrorCode::ConfigError, "--known-sigma needs model.covariance in the config");
  }
  apply(j, o);
  const auto c = gmmem::parse_config(j);
  const auto report = gmmem::fit_data(c, data);
  std::filesystem::create_directories(c.output_dir);
  gmmem::io::write_text((std::filesystem::path(c.output_dir) / "fit.json").string(),
                        gmmem::fit_report_json(report, data).dump(2) + "\n");
  std::cout << "iterations " << report.iterations << " log-likelihood "
            << gmmem::io::format_double(report.log_likelihood);
  if (report.misclustering) std::cout << " misclustering " << gmmem::io::format_double(*report.misclustering);
  std::cout << "\n";
  return 0;
}

int report_summary(const gmmem::ExperimentSummary& s) {
  std::cout << s.output_dir << ": " << (s.trials_total - s.trials_failed) << "/" << s.trials_total
            << " trials ok\n";
  if (s.trials_failed) std::cerr << s.trials_failed << " trial(s) failed; see manifest.json\n";
  return s.trials_total > 0 && s.trials_failed == s.trials_total ? kExitNumerical : 0;
}

int run_experiment(const Overrides& o) {
  auto j = gmmem::load_json(o.config);
  apply(j, o);
  const auto c = gmmem::parse_config(j);
  if (c.scenario == gmmem::Scenario::SingleFit) {
    if (c.data_path.empty()) gmmem::fail(gmmem::ErrorCode::ConfigError, "single_fit needs 'data'");
    const auto r = gmmem::run_single_fit(c, c.data_path);
    std::cout << "iterations " << r.iterations << " log-likelihood " << gmmem::io::format_double(r.log_likelihood)
              << "\n";
    return 0;
  }
  return report_summary(gmmem::run_experiment(c));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian location mixtures fitted by EM"};
  app.require_subcommand(1);

  Overrides o;
  std::string data_path;
  std::optional<int> components;
  std::string report_dir;

  auto* sim = app.add_subcommand("simulate", "draw a labelled dataset from a config's model");
  add_common(sim, o, true);

  auto* fit = app.add_subcommand("fit", "fit a mixture to a CSV data file");
  add_common(fit, o, false);
  fit->add_option("--data", data_path, "input CSV")->required();
  fit->add_option("--components", components, "number of components")->check(CLI::PositiveNumber);
  fit->add_flag("--known-sigma", o.known_sigma, "hold the covariance at the config's value");

  auto* exp = app.add_subcommand("experiment", "run the scenario declared in a config");
  add_common(exp, o, true);
  exp->add_flag("--no-align", o.no_align, "measure distances without label alignment");
  exp->add_flag("--known-sigma", o.known_sigma, "run only the known-covariance mode");

  auto* rep = app.add_subcommand("report", "re-aggregate trial CSVs of an experiment directory");
  rep->add_option("--out", report_dir, "experiment output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*sim) return run_simulate(o);
    if (*fit) {
      if (!o.config.empty() || components) return run_fit(o, data_path, components);
      std::cerr << "fit needs --components or a config with model.components\n";
      return kExitConfig;
    }
    if (*exp) return run_experiment(o);
    if (*rep) return report_summary(gmmem::aggregate(report_dir));
  } catch (const gmmem::Error& e) {
    std::cerr << "error (" << gmmem::to_string(e.code()) << "): " << e.what() << "\n";
    return is_input_error(e.code()) ? kExitConfig : kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return 0;
}
