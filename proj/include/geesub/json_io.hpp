#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <json.hpp>
#include <string>

#include "geesub/correlation.hpp"
#include "geesub/gee_solver.hpp"
#include "geesub/inference.hpp"
#include "geesub/sim_bench.hpp"
#include "geesub/subsampling.hpp"

namespace geesub {

using Json = nlohmann::ordered_json;

inline constexpr const char* kVersion = "0.3.0";

Json vector_json(const Eigen::VectorXd& v);
Json matrix_json(const Eigen::MatrixXd& m);
Eigen::VectorXd vector_from_json(const Json& j);

Json to_json(const WorkingCorrelation& corr);
Json to_json(const GeeFit& fit);
Json to_json(const SandwichCovariance& cov);
Json to_json(const ConfidenceInterval& ci);
/// Plan summary: method, rho, expected size and min/max probability. The
/// probabilities themselves are only included when `full` is set.
Json to_json(const SubsamplePlan& plan, bool full = false);
Json to_json(const SubsampleDraw& draw);
Json to_json(const SimulationConfig& config);
Json to_json(const BenchmarkResult& result);

/// {tool, version, kernel backend, command, config}.
Json provenance(const std::string& command, const Json& config);

/// Pretty-printed with a trailing newline.
void write_json(const Json& j, const std::filesystem::path& path);

}  // namespace geesub
