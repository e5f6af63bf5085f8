#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "geesub/correlation.hpp"
#include "geesub/error.hpp"
#include "geesub/family.hpp"
#include "geesub/panel_data.hpp"

namespace geesub {

/// Subjects entering an estimating equation and their multipliers
/// w_i = delta_i / pi_i. Subjects not listed carry weight zero.
struct SubjectWeights {
  std::vector<std::size_t> indices;
  std::vector<double> weights;

  /// Every subject with weight exactly 1 (the full-data equation).
  static SubjectWeights all(std::size_t n);

  std::size_t size() const { return indices.size(); }
};

/// Per-subject building blocks of the estimating function at a fixed
/// (beta, R): standardized residual e_i, score term X_i' A_i^{1/2} R^{-1} e_i
/// and information term X_i' A_i^{1/2} R^{-1} A_i^{1/2} X_i.
class SubjectEvaluator {
 public:
  SubjectEvaluator(const PanelDataset& data, const WorkingCorrelation& correlation,
                   std::span<const double> beta);

  /// Loads subject i. Throws Error(kDomain) if the variance function
  /// vanishes at the fitted mean.
  void evaluate(std::size_t i);

  std::span<const double> standardized_residual() const { return eps_; }

  /// out += weight * X_i' A_i^{1/2} R^{-1} e_i (length p).
  void add_score(double weight, std::span<double> out) const;

  /// upper += weight * X_i' A_i^{1/2} R^{-1} A_i^{1/2} X_i, upper triangle of
  /// a p x p row-major buffer.
  void add_information(double weight, std::span<double> upper);

 private:
  const PanelDataset& data_;
  const WorkingCorrelation& corr_;
  ResponseFamily family_;
  std::span<const double> beta_;
  std::size_t m_;
  std::size_t p_;
  std::size_t current_ = 0;
  std::vector<double> sqrt_var_;
  std::vector<double> eps_;
  std::vector<double> scaled_;   // A^{1/2} R^{-1} e
  std::vector<double> z_;        // A^{1/2} X, used when A != I
  std::vector<double> b_;        // R^{-1} A^{1/2} X
};

/// S(beta) = (1/n) sum_i w_i X_i' A_i^{1/2} R^{-1} e_i with n = data.n().
Eigen::VectorXd score(const PanelDataset& data, const Eigen::VectorXd& beta,
                      const WorkingCorrelation& correlation, const SubjectWeights& weights);
Eigen::VectorXd score(const PanelDataset& data, const Eigen::VectorXd& beta,
                      const WorkingCorrelation& correlation);

/// H(beta) = (1/n) sum_i w_i X_i' A_i^{1/2} R^{-1} A_i^{1/2} X_i. Throws
/// Error(kRank) when the smallest eigenvalue is below kSingularEigenvalue.
Eigen::MatrixXd fisher_information(const PanelDataset& data, const Eigen::VectorXd& beta,
                                   const WorkingCorrelation& correlation,
                                   const SubjectWeights& weights);
Eigen::MatrixXd fisher_information(const PanelDataset& data, const Eigen::VectorXd& beta,
                                   const WorkingCorrelation& correlation);

/// Same sum without the singularity check.
Eigen::MatrixXd information_sum(const PanelDataset& data, const Eigen::VectorXd& beta,
                                const WorkingCorrelation& correlation,
                                const SubjectWeights& weights);

inline constexpr double kSingularEigenvalue = 1e-12;

/// Throws Error(kRank) if `information` is numerically singular.
void require_nonsingular(const Eigen::MatrixXd& information, const char* context);

/// Standardized residuals of the weighted subjects at (beta, R = I); the
/// dispersion field is left at 1.
StandardizedResiduals standardized_residuals(const PanelDataset& data,
                                             const Eigen::VectorXd& beta,
                                             const SubjectWeights& weights);

struct GeeFit {
  Eigen::VectorXd beta;
  WorkingCorrelation correlation = WorkingCorrelation::independence(1);
  double dispersion = 1.0;
  int iterations = 0;
  bool converged = false;
  double final_score_norm = 0.0;
};

struct FitOptions {
  std::optional<Eigen::VectorXd> beta_init;
  /// Hold R fixed instead of re-estimating it every iteration.
  std::optional<WorkingCorrelation> fixed_correlation;
  int max_iterations = 100;
  double tolerance = 1e-4;
};

/// Thrown when the iteration limit is reached; carries the last iterate.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, Eigen::VectorXd last_beta)
      : Error(ErrorKind::kConvergence, what), last_beta_(std::move(last_beta)) {}
  const Eigen::VectorXd& last_beta() const { return last_beta_; }

 private:
  Eigen::VectorXd last_beta_;
};

/// Fisher scoring beta <- beta + H^{-1} S with the dispersion and working
/// correlation refreshed once per iteration (pseudo-likelihood for
/// EX/AR1/MA1, moment matrix for unstructured). Without beta_init the start
/// is the converged working-independence solution. Stops when
/// |beta^(k+1) - beta^(k)| < tolerance.
GeeFit fit(const PanelDataset& data, CorrStructure structure, const SubjectWeights& weights,
           const FitOptions& options = {});
GeeFit fit(const PanelDataset& data, CorrStructure structure, const FitOptions& options = {});

}  // namespace geesub
