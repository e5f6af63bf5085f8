#include "geesub/correlation.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>

#include "geesub/error.hpp"

namespace geesub {

namespace {

constexpr double kMinEigenvalue = 1e-10;
constexpr double kInverseTolerance = 1e-10;
constexpr double kGoldenTolerance = 1e-6;
constexpr double kUnstructuredRidge = 1e-6;

bool is_parametric(CorrStructure s) {
  return s == CorrStructure::kExchangeable || s == CorrStructure::kAr1 ||
         s == CorrStructure::kMa1;
}

void require_parametric(CorrStructure s) {
  if (!is_parametric(s)) {
    throw Error(ErrorKind::kDomain, "structure '" + std::string(to_string(s)) +
                                        "' has no scalar correlation parameter");
  }
}

void require_nonzero(const StandardizedResiduals& res) {
  if (res.count() == 0) throw Error(ErrorKind::kDegenerate, "no residuals");
  const bool all_zero =
      std::all_of(res.values.begin(), res.values.end(), [](double v) { return v == 0.0; });
  if (all_zero) {
    throw Error(ErrorKind::kDegenerate, "all residuals are zero; correlation is undefined");
  }
}

// Weighted residual cross-product sum_i w_i e_i e_i'.
Eigen::MatrixXd weighted_cross_product(const StandardizedResiduals& res) {
  const auto m = static_cast<Eigen::Index>(res.m);
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(m, m);
  for (std::size_t k = 0; k < res.count(); ++k) {
    Eigen::Map<const Eigen::VectorXd> e(res.subject(k), m);
    s.selfadjointView<Eigen::Lower>().rankUpdate(e, res.weights[k]);
  }
  return s.selfadjointView<Eigen::Lower>();
}

double clamp_into(double alpha, FeasibleInterval iv) {
  return std::clamp(alpha, iv.lower + kFeasibilityMargin, iv.upper - kFeasibilityMargin);
}

}  // namespace

std::string_view to_string(CorrStructure structure) {
  switch (structure) {
    case CorrStructure::kIndependence: return "ind";
    case CorrStructure::kExchangeable: return "ex";
    case CorrStructure::kAr1: return "ar1";
    case CorrStructure::kMa1: return "ma1";
    case CorrStructure::kUnstructured: return "unstructured";
  }
  return "unknown";
}

CorrStructure parse_structure(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "ind" || lower == "independence") return CorrStructure::kIndependence;
  if (lower == "ex" || lower == "exchangeable" || lower == "exch") {
    return CorrStructure::kExchangeable;
  }
  if (lower == "ar1" || lower == "ar(1)") return CorrStructure::kAr1;
  if (lower == "ma1" || lower == "ma(1)") return CorrStructure::kMa1;
  if (lower == "un" || lower == "unstructured") return CorrStructure::kUnstructured;
  throw Error(ErrorKind::kConfig, "unknown correlation structure '" + std::string(name) + "'");
}

FeasibleInterval feasible_interval(CorrStructure structure, std::size_t m) {
  require_parametric(structure);
  if (m <= 1) return {-1.0, 1.0};
  switch (structure) {
    case CorrStructure::kExchangeable:
      return {-1.0 / static_cast<double>(m - 1), 1.0};
    case CorrStructure::kAr1:
      return {-1.0, 1.0};
    case CorrStructure::kMa1: {
      const double bound =
          1.0 / (2.0 * std::cos(std::numbers::pi / static_cast<double>(m + 1)));
      return {-bound, bound};
    }
    default:
      break;
  }
  return {-1.0, 1.0};
}

Eigen::MatrixXd correlation_matrix(CorrStructure structure, double alpha, std::size_t m) {
  const auto size = static_cast<Eigen::Index>(m);
  Eigen::MatrixXd r = Eigen::MatrixXd::Identity(size, size);
  for (Eigen::Index j = 0; j < size; ++j) {
    for (Eigen::Index k = 0; k < size; ++k) {
      if (j == k) continue;
      const auto lag = std::abs(j - k);
      switch (structure) {
        case CorrStructure::kExchangeable: r(j, k) = alpha; break;
        case CorrStructure::kAr1: r(j, k) = std::pow(alpha, static_cast<double>(lag)); break;
        case CorrStructure::kMa1: r(j, k) = lag == 1 ? alpha : 0.0; break;
        default: break;
      }
    }
  }
  return r;
}

WorkingCorrelation::WorkingCorrelation(CorrStructure structure, std::optional<double> alpha,
                                       Eigen::MatrixXd matrix)
    : structure_(structure), alpha_(alpha), matrix_(std::move(matrix)) {
  const Eigen::Index m = matrix_.rows();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(matrix_, Eigen::EigenvaluesOnly);
  const double min_eig = eig.eigenvalues().minCoeff();
  if (!(min_eig > kMinEigenvalue)) {
    std::ostringstream msg;
    msg << "working correlation '" << to_string(structure_) << "'";
    if (alpha_) msg << " with alpha=" << *alpha_;
    msg << " is not positive definite (smallest eigenvalue " << min_eig << ")";
    throw Error(ErrorKind::kDomain, msg.str());
  }
  Eigen::LLT<Eigen::MatrixXd> llt(matrix_);
  inverse_ = llt.solve(Eigen::MatrixXd::Identity(m, m));
  inverse_ = 0.5 * (inverse_ + inverse_.transpose()).eval();
  log_det_ = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double residual =
      (matrix_ * inverse_ - Eigen::MatrixXd::Identity(m, m)).cwiseAbs().maxCoeff();
  if (!(residual < kInverseTolerance)) {
    throw Error(ErrorKind::kDomain, "working correlation is too ill-conditioned to invert");
  }
}

WorkingCorrelation WorkingCorrelation::independence(std::size_t m) {
  const auto size = static_cast<Eigen::Index>(m);
  return WorkingCorrelation(CorrStructure::kIndependence, std::nullopt,
                            Eigen::MatrixXd::Identity(size, size));
}

WorkingCorrelation WorkingCorrelation::build(CorrStructure structure, double alpha,
                                             std::size_t m) {
  if (m < 1) throw Error(ErrorKind::kDomain, "correlation dimension must be at least 1");
  if (structure == CorrStructure::kIndependence) return independence(m);
  if (structure == CorrStructure::kUnstructured) {
    throw Error(ErrorKind::kDomain, "unstructured correlation is built from a matrix");
  }
  const FeasibleInterval iv = feasible_interval(structure, m);
  if (!std::isfinite(alpha) || !(alpha > iv.lower && alpha < iv.upper)) {
    std::ostringstream msg;
    msg << "alpha=" << alpha << " is infeasible for " << to_string(structure) << " with m=" << m
        << "; feasible interval is (" << iv.lower << ", " << iv.upper << ")";
    throw Error(ErrorKind::kDomain, msg.str());
  }
  return WorkingCorrelation(structure, alpha, correlation_matrix(structure, alpha, m));
}

WorkingCorrelation WorkingCorrelation::from_matrix(const Eigen::MatrixXd& matrix) {
  if (matrix.rows() != matrix.cols() || matrix.rows() < 1) {
    throw Error(ErrorKind::kDomain, "correlation matrix must be square and non-empty");
  }
  if (!matrix.allFinite()) throw Error(ErrorKind::kDomain, "correlation matrix is not finite");
  if ((matrix - matrix.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw Error(ErrorKind::kDomain, "correlation matrix is not symmetric");
  }
  if ((matrix.diagonal().array() - 1.0).abs().maxCoeff() > 1e-12) {
    throw Error(ErrorKind::kDomain, "correlation matrix must have unit diagonal");
  }
  return WorkingCorrelation(CorrStructure::kUnstructured, std::nullopt, matrix);
}

double estimate_alpha_gpl(const StandardizedResiduals& residuals, CorrStructure structure) {
  require_parametric(structure);
  if (residuals.count() < 2) {
    throw Error(ErrorKind::kDegenerate, "pseudo-likelihood needs residuals from >= 2 subjects");
  }
  require_nonzero(residuals);
  const std::size_t m = residuals.m;
  const FeasibleInterval iv = feasible_interval(structure, m);
  if (m == 1) return 0.0;

  const Eigen::MatrixXd cross = weighted_cross_product(residuals);
  double total_weight = 0.0;
  for (double w : residuals.weights) total_weight += w;
  const double phi = residuals.dispersion;

  // Negative pseudo-log-likelihood, up to the factor 1/2.
  auto objective = [&](double alpha) {
    const Eigen::MatrixXd r = correlation_matrix(structure, alpha, m);
    Eigen::LLT<Eigen::MatrixXd> llt(r);
    if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
    const Eigen::MatrixXd l = llt.matrixL();
    const double log_det = 2.0 * l.diagonal().array().log().sum();
    const double trace = llt.solve(cross).trace();
    return total_weight * log_det + trace / phi;
  };

  double a = iv.lower + kFeasibilityMargin;
  double b = iv.upper - kFeasibilityMargin;
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = objective(c);
  double fd = objective(d);
  while (b - a > kGoldenTolerance) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = objective(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = objective(d);
    }
  }
  // Compare against the interval ends so boundary optima are reported exactly.
  double best = 0.5 * (a + b);
  double best_value = objective(best);
  for (double edge : {iv.lower + kFeasibilityMargin, iv.upper - kFeasibilityMargin}) {
    const double value = objective(edge);
    if (value < best_value) {
      best = edge;
      best_value = value;
    }
  }
  return best;
}

double estimate_alpha_moment(const StandardizedResiduals& residuals, CorrStructure structure) {
  require_parametric(structure);
  require_nonzero(residuals);
  const std::size_t m = residuals.m;
  const FeasibleInterval iv = feasible_interval(structure, m);
  if (m == 1) return 0.0;

  double numerator = 0.0;
  double total_weight = 0.0;
  for (std::size_t k = 0; k < residuals.count(); ++k) {
    const double* e = residuals.subject(k);
    double pairs = 0.0;
    if (structure == CorrStructure::kExchangeable) {
      for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t l = j + 1; l < m; ++l) pairs += e[j] * e[l];
      }
    } else {
      for (std::size_t j = 0; j + 1 < m; ++j) pairs += e[j] * e[j + 1];
    }
    numerator += residuals.weights[k] * pairs;
    total_weight += residuals.weights[k];
  }
  const double pair_count = structure == CorrStructure::kExchangeable
                                ? static_cast<double>(m * (m - 1)) / 2.0
                                : static_cast<double>(m - 1);
  const double alpha = numerator / (residuals.dispersion * total_weight * pair_count);
  return clamp_into(alpha, iv);
}

UnstructuredEstimate estimate_unstructured(const StandardizedResiduals& residuals) {
  const std::size_t m = residuals.m;
  if (residuals.count() < m) {
    throw Error(ErrorKind::kDegenerate, "unstructured correlation needs at least m subjects");
  }
  require_nonzero(residuals);
  const auto size = static_cast<Eigen::Index>(m);
  double total_weight = 0.0;
  for (double w : residuals.weights) total_weight += w;
  Eigen::MatrixXd raw = weighted_cross_product(residuals) / total_weight;

  auto normalize = [&](const Eigen::MatrixXd& s) {
    const Eigen::VectorXd scale = s.diagonal().cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd r = scale.asDiagonal() * s * scale.asDiagonal();
    r.diagonal().setOnes();
    return Eigen::MatrixXd(0.5 * (r + r.transpose()));
  };
  auto is_pd = [](const Eigen::MatrixXd& r) {
    if (!r.allFinite()) return false;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(r, Eigen::EigenvaluesOnly);
    return eig.eigenvalues().minCoeff() > kMinEigenvalue;
  };

  UnstructuredEstimate out;
  bool zero_diagonal = (raw.diagonal().array() <= 0.0).any();
  if (!zero_diagonal) {
    out.matrix = normalize(raw);
    if (is_pd(out.matrix)) return out;
  }
  std::cerr << "warning: unstructured correlation estimate is not positive definite; "
               "adding ridge "
            << kUnstructuredRidge << '\n';
  raw += kUnstructuredRidge * Eigen::MatrixXd::Identity(size, size);
  out.matrix = normalize(raw);
  out.ridge_applied = true;
  return out;
}

double estimate_dispersion(const StandardizedResiduals& residuals, std::size_t p,
                           const ResponseFamily& family) {
  if (!family.estimates_dispersion()) return 1.0;
  double total_weight = 0.0;
  double weighted_ss = 0.0;
  for (std::size_t k = 0; k < residuals.count(); ++k) {
    const double* e = residuals.subject(k);
    double ss = 0.0;
    for (std::size_t j = 0; j < residuals.m; ++j) ss += e[j] * e[j];
    weighted_ss += residuals.weights[k] * ss;
    total_weight += residuals.weights[k];
  }
  const double dof = static_cast<double>(residuals.m) * total_weight - static_cast<double>(p);
  if (!(dof > 0.0)) {
    throw Error(ErrorKind::kDomain, "dispersion has no residual degrees of freedom (m*sum(w) <= p)");
  }
  return weighted_ss / dof;
}

}  // namespace geesub
