#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "geesub/correlation.hpp"
#include "geesub/gee_solver.hpp"
#include "geesub/panel_data.hpp"

namespace geesub {

enum class SamplingMethod { kUniform, kMV, kMVc };

/// "punif", "pmv", "pmvc" (case-insensitive).
SamplingMethod parse_method(std::string_view name);
std::string_view to_string(SamplingMethod method);

/// MV: A-optimality, h_i = |H^{-1} g_i|. MVc: L-optimality, h_i = |g_i|,
/// where g_i = X_i' A_i^{1/2} R^{-1} e_i.
enum class Criterion { kMV, kMVc };

std::string_view to_string(Criterion criterion);

/// Per-subject Poisson inclusion probabilities.
struct SubsamplePlan {
  std::vector<double> probabilities;
  double expected_size = 0.0;  // sum of probabilities
  SamplingMethod method = SamplingMethod::kUniform;
  std::optional<double> rho;
};

SubsamplePlan uniform_plan(std::size_t n, double expected_size);

/// Retained subjects of one Poisson draw, in increasing index order.
struct SubsampleDraw {
  std::vector<std::size_t> indices;
  std::vector<double> probabilities;  // pi_i of each retained subject
  std::vector<double> weights;        // 1 / pi_i

  std::size_t realized_size() const { return indices.size(); }
  SubjectWeights subject_weights() const { return {indices, weights}; }
};

/// One independent Bernoulli(pi_i) trial per subject. Subject i's uniform
/// comes from a counter-based stream keyed by (seed, i), so the draw is a
/// pure function of the plan and the seed.
SubsampleDraw poisson_draw(const SubsamplePlan& plan, std::uint64_t seed);

struct HScores {
  std::vector<double> values;
  Criterion criterion = Criterion::kMVc;
  Eigen::VectorXd beta;
  Eigen::MatrixXd correlation;
  Eigen::MatrixXd information_inverse;  // empty for MVc
};

/// h-scores of every subject at the plug-in (beta, R, H). `information` is
/// only used (and must be invertible) for the MV criterion.
HScores compute_h_scores(const PanelDataset& data, const Eigen::VectorXd& beta,
                         const WorkingCorrelation& correlation, Criterion criterion,
                         const Eigen::MatrixXd& information);

/// Result of the thresholded allocation pi_i = r (h_i ^ T) / sum_j (h_j ^ T).
struct CappedAllocation {
  std::vector<double> probabilities;
  double threshold = 0.0;    // T; +inf when no cap binds
  std::size_t capped = 0;    // w, number of subjects with pi_i = 1
};

/// Minimizes sum_i h_i^2 / pi_i subject to sum_i pi_i = r and 0 <= pi_i <= 1.
/// w is the smallest integer s in [0, floor(r)] with
/// h_(n-s) < sum_{i <= n-s} h_(i) / (r - s) over ascending order statistics.
/// Throws Error(kInfeasible) with fewer than ceil(r) positive scores.
CappedAllocation capped_allocation(std::span<const double> h, double r);

SubsamplePlan capped_probabilities(const HScores& h, double r);

/// pi_i = min((1 - rho) r2 h_i / (n psi) + rho r2 / n, 1); no threshold.
SubsamplePlan shrinkage_probabilities(const HScores& h, double r2, double rho, double psi);
std::vector<double> shrinkage_allocation(std::span<const double> h, double r2, double rho,
                                         double psi);

/// Mean pilot h-score. Throws Error(kDegenerate) for an empty pilot.
double estimate_psi(std::span<const double> pilot_scores);
double estimate_psi(const HScores& h, const SubsampleDraw& pilot_draw);

enum class Allocation { kShrinkage, kCapped };

struct TwoStepOptions {
  double r1 = 200.0;
  double r2 = 600.0;
  Criterion criterion = Criterion::kMVc;
  double rho = 0.2;
  std::uint64_t seed = 0;
  Allocation allocation = Allocation::kShrinkage;
};

/// Everything a subsample estimate was built from.
struct SubsampleFit {
  GeeFit fit;
  SubsamplePlan plan;
  SubsampleDraw draw;
  std::optional<SubsampleDraw> pilot_draw;
  std::optional<GeeFit> pilot_fit;
  std::optional<WorkingCorrelation> pilot_correlation;
  Eigen::MatrixXd pilot_information;  // H_{r1}, averaged over pilot subjects
  std::vector<double> h_scores;       // full-data scores used by the plan
  double psi = 0.0;
  std::size_t overlap = 0;            // subjects retained in both draws
  double seconds = 0.0;
};

/// Pilot uniform draw at r1/n, working-independence pilot fit, pilot
/// correlation under `structure`, full-data h-scores with pilot plug-ins,
/// shrinkage plan at r2, second draw, and weighted fit warm-started at the
/// pilot estimate.
SubsampleFit two_step_fit(const PanelDataset& data, CorrStructure structure,
                          const TwoStepOptions& options);

/// Single uniform Poisson draw at expected size r followed by a weighted fit.
SubsampleFit uniform_fit(const PanelDataset& data, CorrStructure structure, double r,
                         std::uint64_t seed);

}  // namespace geesub
