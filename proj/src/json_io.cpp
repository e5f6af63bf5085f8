#include "geesub/json_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "geesub/error.hpp"
#include "geesub/kernels.hpp"

namespace geesub {

namespace {

Json number(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

Json cell_json(const MethodCell& c, bool with_method) {
  Json j;
  if (with_method) {
    j["method"] = to_string(c.method);
    j["r2"] = c.r2;
  }
  j["mse"] = number(c.mse);
  j["log_mse"] = number(c.log_mse);
  j["mean_time_s"] = number(c.mean_time_s);
  if (with_method) j["mean_realized_size"] = number(c.mean_realized_size);
  j["reps"] = c.reps;
  j["failures"] = c.failures;
  return j;
}

}  // namespace

Json vector_json(const Eigen::VectorXd& v) {
  Json j = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(number(v(i)));
  return j;
}

Json matrix_json(const Eigen::MatrixXd& m) {
  Json j = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(number(m(r, c)));
    j.push_back(std::move(row));
  }
  return j;
}

Eigen::VectorXd vector_from_json(const Json& j) {
  if (!j.is_array()) throw Error(ErrorKind::kParse, "expected a JSON array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw Error(ErrorKind::kParse, "expected a JSON array of numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

Json to_json(const WorkingCorrelation& corr) {
  Json j;
  j["structure"] = to_string(corr.structure());
  j["alpha"] = corr.alpha() ? Json(*corr.alpha()) : Json(nullptr);
  j["m"] = corr.m();
  j["matrix"] = matrix_json(corr.matrix());
  return j;
}

Json to_json(const GeeFit& fit) {
  Json j;
  j["beta"] = vector_json(fit.beta);
  j["correlation"] = to_json(fit.correlation);
  j["dispersion"] = number(fit.dispersion);
  j["iterations"] = fit.iterations;
  j["converged"] = fit.converged;
  j["final_score_norm"] = number(fit.final_score_norm);
  return j;
}

Json to_json(const SandwichCovariance& cov) {
  Json j;
  j["source"] = to_string(cov.source);
  j["bread"] = matrix_json(cov.bread);
  j["meat"] = matrix_json(cov.meat);
  j["covariance"] = matrix_json(cov.covariance);
  j["std_errors"] = vector_json(cov.covariance.diagonal().cwiseMax(0.0).cwiseSqrt());
  return j;
}

Json to_json(const ConfidenceInterval& ci) {
  Json j;
  j["estimate"] = ci.estimate;
  j["std_error"] = ci.std_error;
  j["lower"] = ci.lower;
  j["upper"] = ci.upper;
  j["level"] = ci.level;
  return j;
}

Json to_json(const SubsamplePlan& plan, bool full) {
  Json j;
  j["method"] = to_string(plan.method);
  j["rho"] = plan.rho ? Json(*plan.rho) : Json(nullptr);
  j["expected_size"] = plan.expected_size;
  if (!plan.probabilities.empty()) {
    const auto [lo, hi] = std::minmax_element(plan.probabilities.begin(), plan.probabilities.end());
    j["min_probability"] = *lo;
    j["max_probability"] = *hi;
  }
  if (full) j["probabilities"] = plan.probabilities;
  return j;
}

Json to_json(const SubsampleDraw& draw) {
  Json j;
  j["realized_size"] = draw.realized_size();
  double sum_w = 0.0;
  for (double w : draw.weights) sum_w += w;
  j["sum_weights"] = sum_w;
  return j;
}

Json to_json(const SimulationConfig& c) {
  Json j;
  j["n"] = c.n;
  j["m"] = c.m;
  j["p"] = c.p;
  j["case"] = to_string(c.covariate_case);
  j["true_structure"] = to_string(c.true_structure);
  j["true_alpha"] = c.true_alpha;
  j["working_structure"] = to_string(c.working_structure);
  j["r1"] = c.r1;
  j["r2_grid"] = c.r2_grid;
  Json methods = Json::array();
  for (SamplingMethod m : c.methods) methods.push_back(to_string(m));
  j["methods"] = methods;
  j["rho"] = c.rho;
  j["reps"] = c.reps;
  j["seed"] = c.seed;
  j["run_full"] = c.run_full;
  j["max_failure_rate"] = c.max_failure_rate;
  j["uniform_budget"] = c.uniform_parity ? "r1+r2" : "r2";
  return j;
}

Json to_json(const BenchmarkResult& result) {
  Json j;
  j["config"] = to_json(result.config);
  j["beta0"] = vector_json(make_beta0(result.config.p));
  Json cells = Json::array();
  for (const MethodCell& c : result.cells) cells.push_back(cell_json(c, true));
  j["cells"] = cells;
  j["full"] = result.has_full ? cell_json(result.full, false) : Json(nullptr);
  return j;
}

Json provenance(const std::string& command, const Json& config) {
  Json j;
  j["tool"] = "geesub";
  j["version"] = kVersion;
  j["command"] = command;
  j["kernel"] = kernels::to_string(kernels::active_backend());
  j["config"] = config;
  return j;
}

void write_json(const Json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorKind::kIo, "write to '" + path.string() + "' failed");
}

}  // namespace geesub
