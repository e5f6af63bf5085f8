#include <CLI11.hpp>

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "geesub/cli.hpp"
#include "geesub/error.hpp"
#include "geesub/gee_solver.hpp"
#include "geesub/inference.hpp"
#include "geesub/json_io.hpp"
#include "geesub/kernels.hpp"
#include "geesub/panel_data.hpp"
#include "geesub/sim_bench.hpp"
#include "geesub/subsampling.hpp"

namespace geesub::cli {

namespace {

struct GlobalOptions {
  std::size_t threads = 1;
  std::string kernel;
};

struct SimulateOptions {
  std::string covariate_case = "t3";
  std::size_t n = 1000;
  std::size_t m = 5;
  std::size_t p = 30;
  std::string true_structure = "ar1";
  double alpha = 0.5;
  std::uint64_t seed = 1;
  std::string out = "panel.csv";
  std::string sidecar;
};

struct FitOptionsCli {
  std::string data;
  std::string family = "gaussian";
  std::string structure = "ar1";
  std::string out = "-";
  bool sandwich = false;
  double level = 0.95;
  std::string contrast;
  int max_iterations = 100;
  double tolerance = 1e-4;
};

struct SubsampleOptions {
  std::string data;
  std::string family = "gaussian";
  std::string structure = "ar1";
  std::string method = "pmvc";
  double r1 = 200.0;
  double r2 = 600.0;
  double rho = 0.2;
  std::uint64_t seed = 1;
  double level = 0.95;
  std::string contrast;
  std::string allocation = "shrinkage";
  std::string weighting = "ht";
  std::string out = "-";
  std::string h_scores;
};

struct BenchmarkOptions {
  std::string profile = "desk";
  std::string covariate_case = "t3";
  std::string true_structure = "ar1";
  double alpha = 0.5;
  std::string working_structure = "ar1";
  std::size_t n = 10000;
  std::size_t m = 5;
  std::size_t p = 30;
  std::optional<std::size_t> reps;
  double r1 = 200.0;
  std::vector<double> r2_grid{100, 200, 400, 600, 800, 1000};
  std::string methods = "punif,pmv,pmvc";
  double rho = 0.2;
  std::uint64_t seed = 20240601;
  std::string uniform_budget = "parity";
  bool no_full = false;
  bool dry_run = false;
  std::string out_csv = "benchmark.csv";
  std::string out_json = "benchmark.json";
};

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void require(bool ok, const std::string& message) {
  if (!ok) throw Error(ErrorKind::kConfig, message);
}

void require_level(double level) {
  require(level > 0.0 && level < 1.0, "--level must lie in (0, 1)");
}

void require_rho(double rho) { require(rho > 0.0 && rho < 1.0, "--rho must lie in (0, 1)"); }

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) parts.push_back(item);
  }
  return parts;
}

Eigen::VectorXd parse_contrast(const std::string& text, std::size_t p) {
  Eigen::VectorXd c = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
  if (text.empty()) {
    c(0) = 1.0;
    return c;
  }
  const std::vector<std::string> parts = split_list(text);
  require(parts.size() == p, "--contrast needs " + std::to_string(p) + " comma-separated values");
  for (std::size_t j = 0; j < p; ++j) {
    double v = 0.0;
    const char* first = parts[j].data();
    const char* last = first + parts[j].size();
    const auto res = std::from_chars(first, last, v);
    require(res.ec == std::errc() && res.ptr == last, "bad --contrast value '" + parts[j] + "'");
    c(static_cast<Eigen::Index>(j)) = v;
  }
  require(c.norm() > 0.0, "--contrast must not be zero");
  return c;
}

void emit(const Json& j, const std::string& path, std::ostream& out) {
  if (path == "-") {
    out << j.dump(2) << '\n';
  } else {
    write_json(j, path);
  }
}

void apply_globals(const GlobalOptions& g) {
  if (g.kernel.empty()) return;
  if (g.kernel == "scalar") {
    kernels::set_backend(kernels::Backend::kScalar);
  } else if (g.kernel == "avx2") {
    kernels::set_backend(kernels::Backend::kAvx2);
  } else if (g.kernel == "neon") {
    kernels::set_backend(kernels::Backend::kNeon);
  } else {
    throw Error(ErrorKind::kConfig, "unknown --kernel '" + g.kernel + "'");
  }
}

int cmd_simulate(const SimulateOptions& o, std::ostream& err) {
  SimulationConfig config;
  config.n = o.n;
  config.m = o.m;
  config.p = o.p;
  config.covariate_case = parse_case(o.covariate_case);
  config.true_structure = parse_structure(o.true_structure);
  config.true_alpha = o.alpha;
  require(o.n >= 2 && o.m >= 1 && o.p >= 1, "--n >= 2, --m >= 1 and --p >= 1 are required");
  require(o.p % 2 == 0, "--p must be even for the (1, 1.5, ...) beta0 pattern");
  require(config.true_structure != CorrStructure::kUnstructured,
          "--true-structure must be ind, ex, ar1 or ma1");
  if (config.true_structure != CorrStructure::kIndependence) {
    const FeasibleInterval iv = feasible_interval(config.true_structure, o.m);
    require(o.alpha > iv.lower && o.alpha < iv.upper,
            "--alpha " + format_number(o.alpha) + " is outside (" + format_number(iv.lower) +
                ", " + format_number(iv.upper) + ")");
  }

  const PanelDataset data = make_dataset(config, o.seed);
  write_csv(data, std::filesystem::path(o.out));

  Json cfg;
  cfg["case"] = o.covariate_case;
  cfg["n"] = o.n;
  cfg["m"] = o.m;
  cfg["p"] = o.p;
  cfg["true_structure"] = to_string(config.true_structure);
  cfg["alpha"] = o.alpha;
  cfg["seed"] = o.seed;
  cfg["out"] = o.out;
  Json sidecar;
  sidecar["provenance"] = provenance("simulate", cfg);
  sidecar["beta0"] = vector_json(make_beta0(o.p));
  sidecar["true_structure"] = to_string(config.true_structure);
  sidecar["alpha"] = o.alpha;
  sidecar["seed"] = o.seed;
  sidecar["rows"] = o.n * o.m;
  const std::string sidecar_path = o.sidecar.empty() ? o.out + ".json" : o.sidecar;
  write_json(sidecar, sidecar_path);
  err << "wrote " << o.n * o.m << " rows to " << o.out << " and truth to " << sidecar_path
      << '\n';
  return 0;
}

void report_conditions(const PanelDataset& data, std::ostream& err) {
  const ConditionReport c = validate_conditions(data);
  if (c.near_singular) {
    err << "warning: design is near-singular (min eigenvalue of X'X/n = "
        << format_number(c.min_eigenvalue) << ")\n";
  }
}

int cmd_fit(const FitOptionsCli& o, std::ostream& out, std::ostream& err) {
  require_level(o.level);
  require(o.max_iterations > 0, "--max-iter must be positive");
  require(o.tolerance > 0.0, "--tol must be positive");
  const Family family = parse_family(o.family);
  const CorrStructure structure = parse_structure(o.structure);

  const PanelDataset data = load_csv(o.data, family);
  const Eigen::VectorXd contrast = parse_contrast(o.contrast, data.p());
  report_conditions(data, err);

  FitOptions options;
  options.max_iterations = o.max_iterations;
  options.tolerance = o.tolerance;
  const GeeFit result = fit(data, structure, options);

  Json cfg;
  cfg["data"] = o.data;
  cfg["family"] = to_string(family);
  cfg["structure"] = to_string(structure);
  cfg["sandwich"] = o.sandwich;
  cfg["level"] = o.level;
  cfg["contrast"] = vector_json(contrast);
  cfg["max_iterations"] = o.max_iterations;
  cfg["tolerance"] = o.tolerance;

  Json report;
  report["provenance"] = provenance("fit", cfg);
  report["data"] = {{"n", data.n()}, {"m", data.m()}, {"p", data.p()},
                    {"covariates", data.covariate_names()}};
  report["fit"] = to_json(result);
  if (o.sandwich) {
    const SandwichCovariance cov = sandwich_full_data(data, result);
    report["sandwich"] = to_json(cov);
    report["interval"] = to_json(confidence_interval(result.beta, cov, contrast, o.level));
  }
  emit(report, o.out, out);
  return 0;
}

void dump_h_scores(const std::string& path, const PanelDataset& data, const SubsampleFit& sf) {
  std::ofstream f(path);
  if (!f) throw Error(ErrorKind::kIo, "cannot write '" + path + "'");
  f << "id,h,probability\n";
  for (std::size_t i = 0; i < data.n(); ++i) {
    f << data.subject_id(i) << ',' << format_number(sf.h_scores[i]) << ','
      << format_number(sf.plan.probabilities[i]) << '\n';
  }
}

int cmd_subsample(const SubsampleOptions& o, std::ostream& out, std::ostream& err) {
  require_rho(o.rho);
  require_level(o.level);
  require(o.r1 > 0.0 && o.r2 > 0.0, "--r1 and --r2 must be positive");
  const SamplingMethod method = parse_method(o.method);
  const Family family = parse_family(o.family);
  const CorrStructure structure = parse_structure(o.structure);
  const PluginWeighting weighting = parse_weighting(o.weighting);
  require(o.allocation == "shrinkage" || o.allocation == "capped",
          "--allocation must be shrinkage or capped");
  require(method != SamplingMethod::kUniform || o.h_scores.empty(),
          "--h-scores needs --method pmv or pmvc");

  const PanelDataset data = load_csv(o.data, family);
  const Eigen::VectorXd contrast = parse_contrast(o.contrast, data.p());
  require(o.r1 + o.r2 < static_cast<double>(data.n()), "--r1 + --r2 must be below n");
  report_conditions(data, err);

  SubsampleFit sf;
  if (method == SamplingMethod::kUniform) {
    sf = uniform_fit(data, structure, o.r1 + o.r2, o.seed);
  } else {
    TwoStepOptions options;
    options.r1 = o.r1;
    options.r2 = o.r2;
    options.rho = o.rho;
    options.seed = o.seed;
    options.criterion = method == SamplingMethod::kMV ? Criterion::kMV : Criterion::kMVc;
    options.allocation = o.allocation == "capped" ? Allocation::kCapped : Allocation::kShrinkage;
    sf = two_step_fit(data, structure, options);
  }
  const SandwichCovariance cov = sandwich_subsample(sf.draw, data, sf.fit, weighting);

  Json cfg;
  cfg["data"] = o.data;
  cfg["family"] = to_string(family);
  cfg["structure"] = to_string(structure);
  cfg["method"] = to_string(method);
  cfg["r1"] = o.r1;
  cfg["r2"] = o.r2;
  cfg["rho"] = o.rho;
  cfg["seed"] = o.seed;
  cfg["level"] = o.level;
  cfg["contrast"] = vector_json(contrast);
  cfg["allocation"] = o.allocation;
  cfg["sandwich_weighting"] = to_string(weighting);

  Json plan;
  plan["method"] = to_string(method);
  plan["r1"] = o.r1;
  plan["r2"] = o.r2;
  plan["seed"] = o.seed;
  if (method == SamplingMethod::kUniform) {
    plan["rho"] = nullptr;
    plan["uniform_probability"] = sf.plan.probabilities.front();
    plan["expected_size"] = sf.plan.expected_size;
    plan["realized_size"] = sf.draw.realized_size();
  } else {
    plan["rho"] = o.rho;
    plan["allocation"] = o.allocation;
    plan["pilot"] = {{"expected_size", o.r1},
                     {"realized_size", sf.pilot_draw->realized_size()},
                     {"beta", vector_json(sf.pilot_fit->beta)},
                     {"correlation", to_json(*sf.pilot_correlation)}};
    plan["second"] = to_json(sf.plan);
    plan["second"]["realized_size"] = sf.draw.realized_size();
    plan["psi"] = sf.psi;
    plan["overlap"] = sf.overlap;
    plan["realized_total"] = sf.draw.realized_size() + sf.pilot_draw->realized_size();
  }

  Json report;
  report["provenance"] = provenance("subsample", cfg);
  report["data"] = {{"n", data.n()}, {"m", data.m()}, {"p", data.p()}};
  report["plan"] = plan;
  report["fit"] = to_json(sf.fit);
  report["sandwich"] = to_json(cov);
  report["interval"] = to_json(confidence_interval(sf.fit.beta, cov, contrast, o.level));
  report["timings"] = {{"seconds", sf.seconds}};
  emit(report, o.out, out);

  if (!o.h_scores.empty()) dump_h_scores(o.h_scores, data, sf);
  return 0;
}

std::vector<SimulationConfig> benchmark_scenarios(const BenchmarkOptions& o,
                                                  std::size_t threads) {
  SimulationConfig base;
  base.n = o.n;
  base.m = o.m;
  base.p = o.p;
  base.covariate_case = parse_case(o.covariate_case);
  base.true_structure = parse_structure(o.true_structure);
  base.true_alpha = o.alpha;
  base.working_structure = parse_structure(o.working_structure);
  base.r1 = o.r1;
  base.r2_grid = o.r2_grid;
  base.methods.clear();
  for (const std::string& name : split_list(o.methods)) base.methods.push_back(parse_method(name));
  base.rho = o.rho;
  base.seed = o.seed;
  base.threads = threads;
  base.run_full = !o.no_full;
  require(o.uniform_budget == "parity" || o.uniform_budget == "r2",
          "--uniform-budget must be parity or r2");
  base.uniform_parity = o.uniform_budget == "parity";

  std::vector<SimulationConfig> scenarios;
  if (o.profile == "desk") {
    base.reps = o.reps.value_or(100);
    scenarios.push_back(base);
  } else if (o.profile == "paper") {
    base.reps = o.reps.value_or(1000);
    for (CovariateCase c : {CovariateCase::kT3, CovariateCase::kLognormal}) {
      for (CorrStructure truth : {CorrStructure::kAr1, CorrStructure::kExchangeable}) {
        for (CorrStructure working :
             {CorrStructure::kAr1, CorrStructure::kExchangeable, CorrStructure::kMa1}) {
          for (std::size_t p : {30, 50, 70}) {
            SimulationConfig s = base;
            s.covariate_case = c;
            s.true_structure = truth;
            s.working_structure = working;
            s.p = p;
            scenarios.push_back(s);
          }
        }
      }
    }
  } else {
    throw Error(ErrorKind::kConfig, "--profile must be desk or paper");
  }
  for (const SimulationConfig& s : scenarios) s.validate();
  return scenarios;
}

double estimate_runtime(const std::vector<SimulationConfig>& scenarios) {
  SimulationConfig probe = scenarios.front();
  probe.reps = 1;
  probe.threads = 1;
  const auto start = std::chrono::steady_clock::now();
  run_benchmark(probe);
  const double one = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  double total = 0.0;
  const double p0 = static_cast<double>(probe.p);
  for (const SimulationConfig& s : scenarios) {
    const double scale = static_cast<double>(s.p) / p0;
    total += one * scale * scale * static_cast<double>(s.reps);
  }
  return total / static_cast<double>(std::max<std::size_t>(1, scenarios.front().threads));
}

int cmd_benchmark(const BenchmarkOptions& o, std::size_t threads, std::ostream& err) {
  require_rho(o.rho);
  require(!o.reps || *o.reps > 0, "--reps must be positive");
  const std::vector<SimulationConfig> scenarios = benchmark_scenarios(o, threads);

  if (o.profile == "paper" || o.dry_run) {
    const double seconds = estimate_runtime(scenarios);
    err << (o.profile == "paper" ? "warning: " : "") << "benchmark profile '" << o.profile
        << "' runs " << scenarios.size() << " scenario(s) x " << scenarios.front().reps
        << " replications; estimated runtime " << format_number(std::round(seconds / 60.0))
        << " min (" << format_number(std::round(seconds)) << " s) on " << threads
        << " thread(s)\n";
  }
  if (o.dry_run) return 0;

  std::vector<BenchmarkResult> results;
  Json scenario_json = Json::array();
  for (const SimulationConfig& s : scenarios) {
    err << "scenario " << results.size() + 1 << "/" << scenarios.size() << ": "
        << to_string(s.covariate_case) << " " << to_string(s.true_structure) << "-"
        << to_string(s.working_structure) << " p=" << s.p << '\n';
    results.push_back(run_benchmark(s));
    scenario_json.push_back(to_json(results.back()));
  }

  {
    std::ofstream csv(o.out_csv);
    if (!csv) throw Error(ErrorKind::kIo, "cannot write '" + o.out_csv + "'");
    write_benchmark_csv(results, csv);
  }
  Json cfg;
  cfg["profile"] = o.profile;
  cfg["threads"] = threads;
  cfg["out_csv"] = o.out_csv;
  Json report;
  report["provenance"] = provenance("benchmark", cfg);
  report["scenarios"] = scenario_json;
  write_json(report, o.out_json);
  err << "wrote " << o.out_csv << " and " << o.out_json << '\n';
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"GEE estimation and optimal Poisson subsampling for longitudinal panels",
               "geesub"};
  app.set_version_flag("--version", kVersion);
  app.set_config("--config", "", "TOML/INI file whose keys stand in for flags");
  app.require_subcommand(1, 1);

  GlobalOptions global;
  app.add_option("--threads", global.threads, "Worker threads for benchmark replications")
      ->check(CLI::PositiveNumber);
  app.add_option("--kernel", global.kernel, "Force a SIMD backend: scalar, avx2 or neon");

  SimulateOptions sim;
  CLI::App* simulate = app.add_subcommand("simulate", "Generate a synthetic panel");
  simulate->add_option("--case", sim.covariate_case, "Covariates: t3 or lognormal");
  simulate->add_option("--n", sim.n, "Subjects");
  simulate->add_option("--m", sim.m, "Observations per subject");
  simulate->add_option("--p", sim.p, "Covariates (even)");
  simulate->add_option("--true-structure", sim.true_structure, "ind, ex, ar1 or ma1");
  simulate->add_option("--alpha", sim.alpha, "Correlation parameter of the errors");
  simulate->add_option("--seed", sim.seed, "Random seed");
  simulate->add_option("--out", sim.out, "Output CSV");
  simulate->add_option("--sidecar", sim.sidecar, "Truth JSON (default: <out>.json)");

  FitOptionsCli fo;
  CLI::App* fit_cmd = app.add_subcommand("fit", "Full-data GEE fit");
  fit_cmd->add_option("--data", fo.data, "Panel CSV")->required();
  fit_cmd->add_option("--family", fo.family, "gaussian or bernoulli");
  fit_cmd->add_option("--structure", fo.structure, "ind, ex, ar1, ma1 or unstructured");
  fit_cmd->add_option("--out", fo.out, "Report JSON ('-' for stdout)");
  fit_cmd->add_flag("--sandwich", fo.sandwich, "Add the robust sandwich covariance");
  fit_cmd->add_option("--level", fo.level, "Interval level");
  fit_cmd->add_option("--contrast", fo.contrast, "Comma-separated contrast (default e1)");
  fit_cmd->add_option("--max-iter", fo.max_iterations, "Fisher scoring iteration limit");
  fit_cmd->add_option("--tol", fo.tolerance, "Convergence tolerance on the step norm");

  SubsampleOptions so;
  CLI::App* sub = app.add_subcommand("subsample", "Two-step Poisson subsample fit");
  sub->add_option("--data", so.data, "Panel CSV")->required();
  sub->add_option("--family", so.family, "gaussian or bernoulli");
  sub->add_option("--structure", so.structure, "ind, ex, ar1, ma1 or unstructured");
  sub->add_option("--method", so.method, "punif, pmv or pmvc");
  sub->add_option("--r1", so.r1, "Expected pilot size");
  sub->add_option("--r2", so.r2, "Expected second-step size");
  sub->add_option("--rho", so.rho, "Shrinkage toward uniform, in (0, 1)");
  sub->add_option("--seed", so.seed, "Random seed");
  sub->add_option("--level", so.level, "Interval level");
  sub->add_option("--contrast", so.contrast, "Comma-separated contrast (default e1)");
  sub->add_option("--allocation", so.allocation, "shrinkage or capped");
  sub->add_option("--sandwich-weighting", so.weighting, "ht or literal");
  sub->add_option("--out", so.out, "Report JSON ('-' for stdout)");
  sub->add_option("--h-scores", so.h_scores, "Write per-subject h-scores to this CSV");

  BenchmarkOptions bo;
  std::size_t reps = 0;
  CLI::App* bench = app.add_subcommand("benchmark", "Replicated method comparison");
  bench->add_option("--profile", bo.profile, "desk or paper");
  bench->add_option("--case", bo.covariate_case, "t3 or lognormal");
  bench->add_option("--true-structure", bo.true_structure, "ind, ex, ar1 or ma1");
  bench->add_option("--alpha", bo.alpha, "True correlation parameter");
  bench->add_option("--working-structure", bo.working_structure, "Working structure");
  bench->add_option("--n", bo.n, "Subjects");
  bench->add_option("--m", bo.m, "Observations per subject");
  bench->add_option("--p", bo.p, "Covariates (even)");
  CLI::Option* reps_opt = bench->add_option("--reps", reps, "Replications per scenario");
  bench->add_option("--r1", bo.r1, "Expected pilot size");
  bench->add_option("--r2", bo.r2_grid, "Grid of second-step sizes")->delimiter(',');
  bench->add_option("--methods", bo.methods, "Comma-separated subset of punif,pmv,pmvc");
  bench->add_option("--rho", bo.rho, "Shrinkage toward uniform, in (0, 1)");
  bench->add_option("--seed", bo.seed, "Base seed; replication s uses seed + s");
  bench->add_option("--uniform-budget", bo.uniform_budget,
                    "pUnif expected size: parity (r1 + r2) or r2");
  bench->add_flag("--no-full", bo.no_full, "Skip the full-data fit");
  bench->add_flag("--dry-run", bo.dry_run, "Print the plan and runtime estimate, then stop");
  bench->add_option("--out-csv", bo.out_csv, "Result table");
  bench->add_option("--out-json", bo.out_json, "Result JSON");

  std::vector<std::string> argv_storage;
  argv_storage.reserve(args.size() + 1);
  argv_storage.push_back("geesub");
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const std::string& a : argv_storage) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : exit_code(ErrorKind::kConfig);
  }
  if (reps_opt->count() > 0) bo.reps = reps;

  try {
    apply_globals(global);
    if (*simulate) return cmd_simulate(sim, err);
    if (*fit_cmd) return cmd_fit(fo, out, err);
    if (*sub) return cmd_subsample(so, out, err);
    if (*bench) return cmd_benchmark(bo, global.threads, err);
  } catch (const Error& e) {
    err << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

int main(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace geesub::cli
