// balancekit: batch CLI for propensity-score balancing weights with
// multiple treatment groups. Subcommands compose the library: fit, balance,
// estimate, trim, simulate, ternary. All stochastic commands require --seed
// and every output directory carries a manifest sufficient to reproduce the
// run.

#include "balancekit/csv.hpp"
#include "balancekit/diagnostics.hpp"
#include "balancekit/estimators.hpp"
#include "balancekit/gps.hpp"
#include "balancekit/io.hpp"
#include "balancekit/pipeline.hpp"
#include "balancekit/simulate.hpp"
#include "balancekit/tilt.hpp"
#include "balancekit/variance.hpp"
#include "balancekit/version.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace balancekit;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitMethod = 4;
constexpr int kExitSimulation = 5;

struct CommonArgs {
  std::string input;
  std::string treatment_col;
  std::string outcome_col;
  std::vector<std::string> covariate_cols;
  std::string out_dir;
  std::string scheme = "overlap";
  std::string variance = "sandwich";
  std::uint64_t seed = 0;
  bool seed_set = false;
  int workers = 0;
  double grad_tol = 1e-8;
  int max_iter = 100;
  double ridge = 0.0;
  bool bootstrap_audit = false;
};

TiltScheme parse_scheme(const std::string& text) {
  const auto split = text.find(':');
  const std::string head = split == std::string::npos ? text : text.substr(0, split);
  int focal = 0;
  if (split != std::string::npos) {
    try {
      focal = std::stoi(text.substr(split + 1));
    } catch (const std::exception&) {
      throw ValidationError("bad focal group in scheme '" + text + "'");
    }
  }
  if (head == "ipw") return TiltScheme::ipw();
  if (head == "overlap") return TiltScheme::overlap();
  if (head == "matching") return TiltScheme::matching();
  if (head == "trim") return TiltScheme::trimming();
  if (head == "treated") return TiltScheme::treated(focal);
  if (head == "restricted") return TiltScheme::treated_restricted(focal);
  if (head == "varwt") return TiltScheme::variance_weighted(focal);
  throw ValidationError("unknown scheme '" + text +
                        "' (expected ipw|treated:<j>|restricted:<j>|trim|matching|varwt:<j>|overlap)");
}

struct VarianceChoice {
  VarianceMethod method = VarianceMethod::sandwich;
  int bootstrap_reps = 1000;
};

VarianceChoice parse_variance(const std::string& text) {
  VarianceChoice choice;
  if (text == "sandwich") {
    choice.method = VarianceMethod::sandwich;
  } else if (text == "none") {
    choice.method = VarianceMethod::none;
  } else if (text.rfind("bootstrap", 0) == 0) {
    choice.method = VarianceMethod::bootstrap;
    const auto split = text.find(':');
    if (split != std::string::npos) choice.bootstrap_reps = std::stoi(text.substr(split + 1));
  } else {
    throw ValidationError("unknown variance method '" + text +
                          "' (expected sandwich|bootstrap:<reps>|none)");
  }
  return choice;
}

ObservationalSample load_input(const CommonArgs& args, CsvSchema* schema_out) {
  CsvSchema schema;
  schema.treatment_column = args.treatment_col;
  schema.outcome_column = args.outcome_col;
  schema.covariate_columns = args.covariate_cols;
  if (schema_out != nullptr) *schema_out = schema;
  return load_sample(args.input, schema);
}

FitOptions fit_options(const CommonArgs& args) {
  FitOptions options;
  options.grad_tol = args.grad_tol;
  options.max_iter = args.max_iter;
  options.ridge = args.ridge;
  return options;
}

void ensure_out_dir(const std::string& out_dir) {
  if (out_dir.empty()) throw ValidationError("an output directory (--out) is required");
  fs::create_directories(out_dir);
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

nlohmann::json base_manifest(const std::string& command, const CommonArgs& args) {
  nlohmann::json m;
  m["command"] = command;
  m["version"] = kVersion;
  if (!args.input.empty()) m["input"] = args.input;
  if (!args.treatment_col.empty()) m["treatment_col"] = args.treatment_col;
  if (!args.outcome_col.empty()) m["outcome_col"] = args.outcome_col;
  if (!args.covariate_cols.empty()) m["covariate_cols"] = args.covariate_cols;
  m["scheme"] = args.scheme;
  m["variance"] = args.variance;
  if (args.seed_set) m["seed"] = args.seed;
  m["workers"] = args.workers;
  m["grad_tol"] = args.grad_tol;
  m["max_iter"] = args.max_iter;
  m["ridge"] = args.ridge;
  return m;
}

void write_manifest(const std::string& out_dir, const nlohmann::json& manifest) {
  write_text_file(join_path(out_dir, "manifest.json"), manifest.dump(2) + "\n");
}

int cmd_fit(const CommonArgs& args) {
  ensure_out_dir(args.out_dir);
  CsvSchema schema;
  const ObservationalSample sample = load_input(args, &schema);
  const GpsModel model = fit_multinomial(sample, fit_options(args));
  const PropensityMatrix scores = predict_gps(model, sample.covariates);

  write_text_file(join_path(args.out_dir, "model.json"), gps_model_to_json(model) + "\n");
  write_scores_csv(join_path(args.out_dir, "scores.csv"), sample, scores);
  write_text_file(join_path(args.out_dir, "schema.json"),
                  schema_echo_json(sample, schema) + "\n");

  nlohmann::json report;
  report["converged"] = model.converged;
  report["iterations"] = model.iterations;
  report["final_gradient_norm"] = model.final_gradient_norm;
  report["log_likelihood"] = model.log_likelihood;
  report["warnings"] = model.warnings;
  write_text_file(join_path(args.out_dir, "fit_report.json"), report.dump(2) + "\n");
  write_manifest(args.out_dir, base_manifest("fit", args));
  std::cout << "fit: converged=" << (model.converged ? "true" : "false")
            << " iterations=" << model.iterations << "\n";
  return kExitOk;
}

void write_design_outputs(const std::string& out_dir, const DesignPipelineResult& pipeline) {
  const ObservationalSample& sample = pipeline.analysis_sample;
  write_weights_csv(join_path(out_dir, "weights.csv"), sample, pipeline.weights);
  write_text_file(
      join_path(out_dir, "weights_meta.json"),
      weights_sidecar_json(pipeline.weights, pipeline.trimmed ? &pipeline.trim : nullptr) + "\n");
  const BalanceReport balance = balance_report(sample, pipeline.weights);
  write_balance_csv(join_path(out_dir, "balance.csv"), balance);
  write_text_file(join_path(out_dir, "balance.json"), balance_summary_json(balance) + "\n");
  write_balance_long_csv(join_path(out_dir, "balance_long.csv"), balance);
  const EssReport ess = effective_sample_size(pipeline.weights, sample.treatment);
  write_ess_csv(join_path(out_dir, "ess.csv"), ess, sample.treatment_levels);
}

int cmd_balance(const CommonArgs& args) {
  ensure_out_dir(args.out_dir);
  CsvSchema schema;
  const ObservationalSample sample = load_input(args, &schema);
  write_text_file(join_path(args.out_dir, "schema.json"),
                  schema_echo_json(sample, schema) + "\n");

  if (args.scheme == "crude") {
    const WeightSet w = unit_weights(sample.size(), sample.groups);
    BalanceReport balance = balance_report(sample, w);
    balance.scheme = "crude";
    write_balance_csv(join_path(args.out_dir, "balance.csv"), balance);
    write_text_file(join_path(args.out_dir, "balance.json"), balance_summary_json(balance) + "\n");
    write_balance_long_csv(join_path(args.out_dir, "balance_long.csv"), balance);
    const EssReport ess = effective_sample_size(w, sample.treatment);
    write_ess_csv(join_path(args.out_dir, "ess.csv"), ess, sample.treatment_levels);
    write_manifest(args.out_dir, base_manifest("balance", args));
    return kExitOk;
  }

  const TiltScheme scheme = parse_scheme(args.scheme);
  const DesignPipelineResult pipeline = run_design_pipeline(sample, scheme, fit_options(args));
  write_text_file(join_path(args.out_dir, "model.json"), gps_model_to_json(pipeline.model) + "\n");
  write_design_outputs(args.out_dir, pipeline);
  write_manifest(args.out_dir, base_manifest("balance", args));
  return kExitOk;
}

int cmd_estimate(const CommonArgs& args) {
  ensure_out_dir(args.out_dir);
  if (args.outcome_col.empty()) throw ValidationError("estimate needs --outcome-col");
  CsvSchema schema;
  const ObservationalSample sample = load_input(args, &schema);
  require_outcome(sample, "estimation");
  const TiltScheme scheme = parse_scheme(args.scheme);
  const VarianceChoice variance = parse_variance(args.variance);

  if (variance.method == VarianceMethod::sandwich && !scheme.smooth_in_theta() &&
      scheme.kind != TiltKind::trimming) {
    throw MethodError("scheme '" + scheme.name() +
                      "' has a non-differentiable weight function; use --variance bootstrap:<reps>");
  }
  if (variance.method == VarianceMethod::bootstrap && !args.seed_set)
    throw ValidationError("--seed is required for bootstrap intervals");

  const DesignPipelineResult pipeline = run_design_pipeline(sample, scheme, fit_options(args));
  const auto means = weighted_group_means(pipeline.analysis_sample, pipeline.weights);

  std::vector<ContrastEstimate> estimates;
  if (variance.method == VarianceMethod::sandwich) {
    estimates = sandwich_pairwise(pipeline.analysis_sample, pipeline.weights, pipeline.model);
  } else if (variance.method == VarianceMethod::bootstrap) {
    BootstrapOptions options;
    options.reps = variance.bootstrap_reps;
    options.seed = args.seed;
    options.workers = args.workers;
    options.fit = fit_options(args);
    if (args.bootstrap_audit)
      options.replicate_csv_path = join_path(args.out_dir, "bootstrap_replicates.csv");
    estimates = bootstrap_pairwise(sample, scheme, options);
  } else {
    estimates = all_pairwise(pipeline.analysis_sample, pipeline.weights);
  }

  write_estimates_csv(join_path(args.out_dir, "estimates.csv"), estimates, means);
  write_text_file(join_path(args.out_dir, "estimates.json"),
                  estimates_json(estimates, means, sample.treatment_levels) + "\n");
  write_text_file(join_path(args.out_dir, "model.json"), gps_model_to_json(pipeline.model) + "\n");
  write_text_file(join_path(args.out_dir, "schema.json"),
                  schema_echo_json(sample, schema) + "\n");
  write_design_outputs(args.out_dir, pipeline);
  write_manifest(args.out_dir, base_manifest("estimate", args));
  std::cout << "estimate: " << estimates.size() << " contrasts (" << scheme.name() << ", "
            << args.variance << ")\n";
  return kExitOk;
}

int cmd_trim(const CommonArgs& args) {
  ensure_out_dir(args.out_dir);
  CsvSchema schema;
  const ObservationalSample sample = load_input(args, &schema);
  write_text_file(join_path(args.out_dir, "schema.json"),
                  schema_echo_json(sample, schema) + "\n");
  const GpsModel model = fit_multinomial(sample, fit_options(args));
  const PropensityMatrix scores = predict_gps(model, sample.covariates);
  const TrimResult trim = optimal_alpha(scores);

  const Eigen::VectorXd s = scores.e.cwiseInverse().rowwise().sum();
  std::vector<Eigen::Index> kept;
  for (Eigen::Index i = 0; i < sample.size(); ++i)
    if (s[i] <= trim.alpha) kept.push_back(i);
  const ObservationalSample trimmed = sample.subset(kept);

  save_sample(join_path(args.out_dir, "trimmed.csv"), trimmed);
  nlohmann::json report;
  report["alpha"] = trim.alpha;
  report["kept_fraction"] = trim.kept_fraction;
  report["no_candidate"] = trim.no_candidate;
  report["n"] = sample.size();
  report["n_kept"] = trimmed.size();
  const Eigen::VectorXi before = sample.group_sizes();
  const Eigen::VectorXi after = trimmed.group_sizes();
  report["group_sizes_before"] = std::vector<int>(before.data(), before.data() + before.size());
  report["group_sizes_after"] = std::vector<int>(after.data(), after.data() + after.size());
  write_text_file(join_path(args.out_dir, "trim_report.json"), report.dump(2) + "\n");
  write_manifest(args.out_dir, base_manifest("trim", args));
  std::cout << "trim: alpha=" << trim.alpha << " kept " << trimmed.size() << "/" << sample.size()
            << "\n";
  return kExitOk;
}

int cmd_ternary(const CommonArgs& args, int resolution) {
  ensure_out_dir(args.out_dir);
  write_ternary_csv(join_path(args.out_dir, "ternary.csv"), ternary_grid(resolution));
  nlohmann::json m = base_manifest("ternary", args);
  m["resolution"] = resolution;
  write_manifest(args.out_dir, m);
  return kExitOk;
}

int cmd_simulate(const CommonArgs& args, const std::string& preset, const std::string& spec_json,
                 int reps, int sample_size, const std::string& estimators, int bootstrap_reps,
                 int estimand_draws) {
  ensure_out_dir(args.out_dir);
  if (!args.seed_set) throw ValidationError("--seed is required for simulate");

  DgpSpec spec;
  if (!spec_json.empty()) {
    std::ifstream in(spec_json);
    if (!in) throw ValidationError("cannot open scenario file '" + spec_json + "'");
    const std::string text((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    spec = dgp_spec_from_json(text);
  } else if (preset == "adequate_overlap") {
    spec = DgpSpec::adequate_overlap();
  } else if (preset == "lack_of_overlap") {
    spec = DgpSpec::lack_of_overlap();
  } else {
    throw ValidationError("unknown preset '" + preset +
                          "' (available: adequate_overlap, lack_of_overlap)");
  }
  if (sample_size > 0) spec.sample_size = sample_size;

  std::vector<EstimatorConfig> roster;
  std::stringstream list(estimators);
  std::string token;
  while (std::getline(list, token, ',')) {
    if (token.empty()) continue;
    EstimatorConfig config;
    config.method = method_from_name(token);
    if (config.method == Method::gmw) {
      config.variance = bootstrap_reps > 0 ? VarianceMethod::bootstrap : VarianceMethod::none;
      config.bootstrap_reps = bootstrap_reps;
    } else {
      config.variance = VarianceMethod::sandwich;
    }
    roster.push_back(config);
  }
  if (roster.empty()) throw ValidationError("empty estimator roster");

  McOptions options;
  options.reps = reps;
  options.seed = args.seed;
  options.workers = args.workers;
  options.estimand_draws = estimand_draws;
  options.fit = fit_options(args);

  const auto start = std::chrono::steady_clock::now();
  const DgpSpec ready = calibrated_spec(spec);
  const McResult result = run_monte_carlo(ready, roster, options);
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  write_mc_csv(join_path(args.out_dir, "mc_results.csv"), result);
  write_text_file(join_path(args.out_dir, "scenario.json"), dgp_spec_to_json(ready) + "\n");

  nlohmann::json m = base_manifest("simulate", args);
  m["preset"] = spec_json.empty() ? preset : spec_json;
  m["reps"] = reps;
  m["sample_size"] = ready.sample_size;
  m["estimators"] = estimators;
  m["bootstrap_reps"] = bootstrap_reps;
  m["estimand_draws"] = estimand_draws;
  m["failed_replicates"] = result.failed;
  m["trim_kept_fraction_mean"] = result.trim_kept_fraction_mean;
  m["covariance_clipped"] = result.covariance.clipped;
  std::vector<double> cov_used;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) cov_used.push_back(result.covariance.used(r, c));
  m["covariance_used"] = cov_used;
  m["runtime_seconds"] = elapsed;
  write_manifest(args.out_dir, m);
  std::cout << "simulate: " << result.reps << " replicates, " << result.failed << " failed, "
            << elapsed << "s\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"balancekit: propensity-score balancing weights for multiple treatments"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  CommonArgs args;
  int resolution = 60;
  std::string preset = "adequate_overlap";
  std::string spec_json;
  int reps = 1000;
  int sample_size = 0;
  std::string estimators = "DIF,IPW,TIPW,GMW,GOW";
  int bootstrap_reps = 1000;
  int estimand_draws = 1000000;

  const auto add_io = [&](CLI::App* cmd, bool needs_input) {
    if (needs_input) {
      cmd->add_option("--input", args.input, "input CSV")->required();
      cmd->add_option("--treatment-col", args.treatment_col, "treatment column name")->required();
      cmd->add_option("--outcome-col", args.outcome_col, "outcome column name");
      cmd->add_option("--covariate-cols", args.covariate_cols,
                      "covariate columns (default: all remaining)")
          ->delimiter(',');
    }
    cmd->add_option("--out", args.out_dir, "output directory")->required();
    cmd->add_option("--workers", args.workers, "worker threads (0 = all cores)");
    cmd->add_option("--grad-tol", args.grad_tol, "fit gradient tolerance");
    cmd->add_option("--max-iter", args.max_iter, "fit iteration cap");
    cmd->add_option("--ridge", args.ridge, "l2 stabilizer for separation");
    cmd->add_option_function<std::uint64_t>(
        "--seed",
        [&](const std::uint64_t value) {
          args.seed = value;
          args.seed_set = true;
        },
        "RNG seed (required for stochastic commands)");
  };

  CLI::App* fit = app.add_subcommand("fit", "fit the multinomial GPS model");
  add_io(fit, true);

  CLI::App* balance = app.add_subcommand("balance", "weights, balance metrics and ESS");
  add_io(balance, true);
  balance->add_option("--scheme", args.scheme, "tilting scheme or 'crude'");

  CLI::App* estimate = app.add_subcommand("estimate", "pairwise contrasts with intervals");
  add_io(estimate, true);
  estimate->add_option("--scheme", args.scheme,
                       "ipw|treated:<j>|restricted:<j>|trim|matching|varwt:<j>|overlap");
  estimate->add_option("--variance", args.variance, "sandwich|bootstrap:<reps>|none");
  estimate->add_flag("--bootstrap-audit", args.bootstrap_audit,
                     "write per-replicate bootstrap estimates");

  CLI::App* trim = app.add_subcommand("trim", "optimal trimming threshold and trimmed sample");
  add_io(trim, true);

  CLI::App* ternary = app.add_subcommand("ternary", "overlap tilting values on the simplex");
  add_io(ternary, false);
  ternary->add_option("--resolution", resolution, "lattice resolution");

  CLI::App* simulate = app.add_subcommand("simulate", "replicated estimator comparison");
  add_io(simulate, false);
  simulate->add_option("--preset", preset, "adequate_overlap|lack_of_overlap");
  simulate->add_option("--spec-json", spec_json, "scenario file overriding the preset");
  simulate->add_option("--reps", reps, "Monte Carlo replicates");
  simulate->add_option("--sample-size", sample_size, "per-replicate sample size");
  simulate->add_option("--estimators", estimators, "comma list from DIF,IPW,TIPW,GMW,GOW");
  simulate->add_option("--bootstrap-reps", bootstrap_reps, "GMW bootstrap replicates (0 = none)");
  simulate->add_option("--estimand-draws", estimand_draws, "MC draws for true estimands");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (fit->parsed()) return cmd_fit(args);
    if (balance->parsed()) return cmd_balance(args);
    if (estimate->parsed()) return cmd_estimate(args);
    if (trim->parsed()) return cmd_trim(args);
    if (ternary->parsed()) return cmd_ternary(args, resolution);
    if (simulate->parsed())
      return cmd_simulate(args, preset, spec_json, reps, sample_size, estimators, bootstrap_reps,
                          estimand_draws);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const MethodError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitMethod;
  } catch (const SimulationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSimulation;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitInput;
}
