#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "geesub/family.hpp"

namespace geesub {

enum class CorrStructure { kIndependence, kExchangeable, kAr1, kMa1, kUnstructured };

std::string_view to_string(CorrStructure structure);

/// Accepts ind/independence, ex/exchangeable, ar1, ma1, un/unstructured.
CorrStructure parse_structure(std::string_view name);

/// Open interval of correlation parameters giving a positive definite m x m
/// matrix for the one-parameter structures.
struct FeasibleInterval {
  double lower;
  double upper;
};

FeasibleInterval feasible_interval(CorrStructure structure, std::size_t m);

/// Distance kept from each end of the feasible interval by the estimators.
inline constexpr double kFeasibilityMargin = 1e-4;

/// A validated m x m working correlation with its cached inverse.
class WorkingCorrelation {
 public:
  static WorkingCorrelation independence(std::size_t m);

  /// Throws Error(kDomain) when alpha lies outside the feasible interval or
  /// the realized matrix is not numerically positive definite.
  static WorkingCorrelation build(CorrStructure structure, double alpha, std::size_t m);

  /// Unstructured correlation from an explicit symmetric unit-diagonal matrix.
  static WorkingCorrelation from_matrix(const Eigen::MatrixXd& matrix);

  CorrStructure structure() const { return structure_; }
  std::optional<double> alpha() const { return alpha_; }
  std::size_t m() const { return static_cast<std::size_t>(matrix_.rows()); }
  const Eigen::MatrixXd& matrix() const { return matrix_; }
  const Eigen::MatrixXd& inverse() const { return inverse_; }
  double log_determinant() const { return log_det_; }

 private:
  WorkingCorrelation(CorrStructure structure, std::optional<double> alpha,
                     Eigen::MatrixXd matrix);

  CorrStructure structure_;
  std::optional<double> alpha_;
  Eigen::MatrixXd matrix_;
  Eigen::MatrixXd inverse_;
  double log_det_ = 0.0;
};

/// Raw matrix for a one-parameter structure; no feasibility check.
Eigen::MatrixXd correlation_matrix(CorrStructure structure, double alpha, std::size_t m);

/// Variance-standardized residual vectors e_i = A_i^{-1/2}(Y_i - mu_i) for a
/// set of subjects, each with a Horvitz-Thompson weight (1 for full data).
struct StandardizedResiduals {
  std::size_t m = 0;
  std::vector<double> values;   // count() * m, subject-major
  std::vector<double> weights;  // count()
  double dispersion = 1.0;

  std::size_t count() const { return weights.size(); }
  const double* subject(std::size_t k) const { return values.data() + k * m; }
};

/// Maximizes the weighted Gaussian pseudo-log-likelihood
///   -1/2 sum_i w_i [log det R(alpha) + e_i' R(alpha)^{-1} e_i / phi]
/// by golden-section search over the feasible interval shrunk by
/// kFeasibilityMargin, to |d alpha| < 1e-6.
double estimate_alpha_gpl(const StandardizedResiduals& residuals, CorrStructure structure);

/// Weighted moment estimator (all pairs for EX, lag-1 pairs for AR1/MA1),
/// clamped into the shrunk feasible interval.
double estimate_alpha_moment(const StandardizedResiduals& residuals, CorrStructure structure);

struct UnstructuredEstimate {
  Eigen::MatrixXd matrix;
  bool ridge_applied = false;
};

/// Weighted average of e_i e_i' rescaled to unit diagonal. If the result is
/// not positive definite a 1e-6 ridge is added before rescaling.
UnstructuredEstimate estimate_unstructured(const StandardizedResiduals& residuals);

/// Weighted Pearson dispersion sum_i w_i |e_i|^2 / (m sum_i w_i - p); fixed
/// at 1 for families without a dispersion parameter.
double estimate_dispersion(const StandardizedResiduals& residuals, std::size_t p,
                           const ResponseFamily& family);

}  // namespace geesub
