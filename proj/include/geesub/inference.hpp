#pragma once

#include <Eigen/Dense>
#include <span>
#include <string_view>

#include "geesub/gee_solver.hpp"
#include "geesub/panel_data.hpp"
#include "geesub/subsampling.hpp"

namespace geesub {

enum class SandwichSource { kFullDataOracle, kSubsamplePlugin };

std::string_view to_string(SandwichSource source);

/// Bread H, meat M and the assembled covariance H^{-1} M H^{-1}.
struct SandwichCovariance {
  Eigen::MatrixXd bread;
  Eigen::MatrixXd meat;
  Eigen::MatrixXd covariance;
  SandwichSource source = SandwichSource::kSubsamplePlugin;
};

/// Inverse-probability powers used by the subsample plug-in.
///   kHorvitzThompson: bread weights 1/pi, meat weights 1/pi^2 (consistent
///     for the full-data bread and for the sampling meat).
///   kLiteral: bread unweighted, meat weights 1/pi.
enum class PluginWeighting { kHorvitzThompson, kLiteral };

std::string_view to_string(PluginWeighting weighting);
PluginWeighting parse_weighting(std::string_view name);

/// (1/n^2) sum_i (1/pi_i) g_i g_i' over all n subjects, g_i the score term.
/// Throws Error(kDomain) if some pi_i = 0 while g_i != 0.
Eigen::MatrixXd meat_full(const PanelDataset& data, const Eigen::VectorXd& beta,
                          const WorkingCorrelation& correlation,
                          std::span<const double> probabilities);

/// Full-data oracle H_n^{-1} M_r H_n^{-1} at (beta, R, pi).
SandwichCovariance sandwich_full(const PanelDataset& data, const Eigen::VectorXd& beta,
                                 const WorkingCorrelation& correlation,
                                 std::span<const double> probabilities);

/// Plug-in covariance of a subsample estimate from the retained subjects only.
SandwichCovariance sandwich_subsample(const SubsampleDraw& draw, const PanelDataset& data,
                                      const GeeFit& fit,
                                      PluginWeighting weighting = PluginWeighting::kHorvitzThompson);

/// Robust covariance of a full-data fit (every subject retained with pi = 1).
SandwichCovariance sandwich_full_data(const PanelDataset& data, const GeeFit& fit);

/// H^{-1} M H^{-1}, symmetrized. Throws Error(kRank) for a singular bread.
Eigen::MatrixXd assemble_sandwich(const Eigen::MatrixXd& bread, const Eigen::MatrixXd& meat);

struct ConfidenceInterval {
  double estimate = 0.0;
  double std_error = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.95;
};

/// Wald interval c'beta +/- z_{(1+level)/2} sqrt(c' Sigma c) with c scaled
/// to unit norm.
ConfidenceInterval confidence_interval(const Eigen::VectorXd& beta,
                                       const SandwichCovariance& covariance,
                                       const Eigen::VectorXd& contrast, double level);

/// Standard normal quantile.
double normal_quantile(double prob);

}  // namespace geesub
