#include "geesub/inference.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "geesub/error.hpp"

namespace geesub {

namespace {

// Accumulates sum_k coeff_k * g_k g_k' and optionally sum_k info_coeff_k * H_k
// over the listed subjects.
struct Pieces {
  Eigen::MatrixXd bread;
  Eigen::MatrixXd meat;
};

Pieces accumulate_pieces(const PanelDataset& data, const Eigen::VectorXd& beta,
                         const WorkingCorrelation& corr, std::span<const std::size_t> subjects,
                         std::span<const double> bread_coeff,
                         std::span<const double> meat_coeff, bool with_bread) {
  const std::size_t p = data.p();
  const auto size = static_cast<Eigen::Index>(p);
  SubjectEvaluator eval(data, corr, {beta.data(), p});
  std::vector<double> g(p);
  std::vector<double> upper(with_bread ? p * p : 0, 0.0);
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(size, size);
  for (std::size_t k = 0; k < subjects.size(); ++k) {
    eval.evaluate(subjects[k]);
    std::fill(g.begin(), g.end(), 0.0);
    eval.add_score(1.0, g);
    Eigen::Map<const Eigen::VectorXd> gv(g.data(), size);
    meat.selfadjointView<Eigen::Lower>().rankUpdate(gv, meat_coeff[k]);
    if (with_bread) eval.add_information(bread_coeff[k], upper);
  }
  Pieces out;
  out.meat = meat.selfadjointView<Eigen::Lower>();
  if (with_bread) {
    out.bread.resize(size, size);
    for (std::size_t j = 0; j < p; ++j) {
      for (std::size_t l = j; l < p; ++l) {
        out.bread(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(l)) = upper[j * p + l];
        out.bread(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(j)) = upper[j * p + l];
      }
    }
  }
  return out;
}

}  // namespace

std::string_view to_string(SandwichSource source) {
  return source == SandwichSource::kFullDataOracle ? "full_data_oracle" : "subsample_plugin";
}

std::string_view to_string(PluginWeighting weighting) {
  return weighting == PluginWeighting::kHorvitzThompson ? "horvitz_thompson" : "literal";
}

PluginWeighting parse_weighting(std::string_view name) {
  if (name == "horvitz_thompson" || name == "ht") return PluginWeighting::kHorvitzThompson;
  if (name == "literal") return PluginWeighting::kLiteral;
  throw Error(ErrorKind::kConfig, "unknown sandwich weighting '" + std::string(name) + "'");
}

Eigen::MatrixXd assemble_sandwich(const Eigen::MatrixXd& bread, const Eigen::MatrixXd& meat) {
  require_nonsingular(bread, "sandwich bread");
  Eigen::LLT<Eigen::MatrixXd> llt(bread);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::kRank, "sandwich bread is not positive definite");
  }
  const Eigen::MatrixXd left = llt.solve(meat);                  // H^{-1} M
  Eigen::MatrixXd cov = llt.solve(left.transpose()).transpose();  // H^{-1} M H^{-1}
  return 0.5 * (cov + cov.transpose());
}

Eigen::MatrixXd meat_full(const PanelDataset& data, const Eigen::VectorXd& beta,
                          const WorkingCorrelation& correlation,
                          std::span<const double> probabilities) {
  const std::size_t n = data.n();
  if (probabilities.size() != n) {
    throw Error(ErrorKind::kDomain, "probability vector length does not match n");
  }
  const std::size_t p = data.p();
  const auto size = static_cast<Eigen::Index>(p);
  SubjectEvaluator eval(data, correlation, {beta.data(), p});
  std::vector<double> g(p);
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(size, size);
  for (std::size_t i = 0; i < n; ++i) {
    eval.evaluate(i);
    std::fill(g.begin(), g.end(), 0.0);
    eval.add_score(1.0, g);
    Eigen::Map<const Eigen::VectorXd> gv(g.data(), size);
    if (probabilities[i] <= 0.0) {
      if (gv.squaredNorm() > 0.0) {
        throw Error(ErrorKind::kDomain, "subject '" + data.subject_id(i) +
                                            "' has zero probability but a nonzero score");
      }
      continue;
    }
    meat.selfadjointView<Eigen::Lower>().rankUpdate(gv, 1.0 / probabilities[i]);
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  return Eigen::MatrixXd(meat.selfadjointView<Eigen::Lower>()) * (inv_n * inv_n);
}

SandwichCovariance sandwich_full(const PanelDataset& data, const Eigen::VectorXd& beta,
                                 const WorkingCorrelation& correlation,
                                 std::span<const double> probabilities) {
  SandwichCovariance out;
  out.source = SandwichSource::kFullDataOracle;
  out.bread = fisher_information(data, beta, correlation);
  out.meat = meat_full(data, beta, correlation, probabilities);
  out.covariance = assemble_sandwich(out.bread, out.meat);
  return out;
}

SandwichCovariance sandwich_subsample(const SubsampleDraw& draw, const PanelDataset& data,
                                      const GeeFit& fit, PluginWeighting weighting) {
  if (draw.realized_size() == 0) throw Error(ErrorKind::kDegenerate, "empty subsample draw");
  const std::size_t k = draw.realized_size();
  std::vector<double> bread_coeff(k);
  std::vector<double> meat_coeff(k);
  for (std::size_t j = 0; j < k; ++j) {
    const double w = 1.0 / draw.probabilities[j];
    bread_coeff[j] = weighting == PluginWeighting::kHorvitzThompson ? w : 1.0;
    meat_coeff[j] = weighting == PluginWeighting::kHorvitzThompson ? w * w : w;
  }
  Pieces pieces = accumulate_pieces(data, fit.beta, fit.correlation, draw.indices, bread_coeff,
                                    meat_coeff, true);
  const double inv_n = 1.0 / static_cast<double>(data.n());
  SandwichCovariance out;
  out.source = SandwichSource::kSubsamplePlugin;
  out.bread = pieces.bread * inv_n;
  out.meat = pieces.meat * (inv_n * inv_n);
  out.covariance = assemble_sandwich(out.bread, out.meat);
  return out;
}

SandwichCovariance sandwich_full_data(const PanelDataset& data, const GeeFit& fit) {
  SubsampleDraw all;
  all.indices.resize(data.n());
  for (std::size_t i = 0; i < data.n(); ++i) all.indices[i] = i;
  all.probabilities.assign(data.n(), 1.0);
  all.weights.assign(data.n(), 1.0);
  return sandwich_subsample(all, data, fit);
}

double normal_quantile(double prob) {
  if (!(prob > 0.0 && prob < 1.0)) {
    if (prob == 0.0) return -std::numeric_limits<double>::infinity();
    if (prob == 1.0) return std::numeric_limits<double>::infinity();
    throw Error(ErrorKind::kDomain, "quantile probability outside [0, 1]");
  }
  // Acklam's rational approximation (relative error ~1e-9) followed by one
  // Halley step against erfc, which brings it to machine precision.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double low = 0.02425;
  double x;
  if (prob < low) {
    const double q = std::sqrt(-2.0 * std::log(prob));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (prob <= 1.0 - low) {
    const double q = prob - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-prob));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - prob;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(x * x / 2.0);
  return x - u / (1.0 + x * u / 2.0);
}

ConfidenceInterval confidence_interval(const Eigen::VectorXd& beta,
                                       const SandwichCovariance& covariance,
                                       const Eigen::VectorXd& contrast, double level) {
  if (!(level > 0.0 && level < 1.0)) {
    throw Error(ErrorKind::kDomain, "confidence level must lie in (0, 1)");
  }
  if (contrast.size() != beta.size() || covariance.covariance.rows() != beta.size()) {
    throw Error(ErrorKind::kDomain, "contrast/covariance dimension does not match beta");
  }
  const double norm = contrast.norm();
  if (!(norm > 0.0)) throw Error(ErrorKind::kDomain, "contrast vector is zero");
  const Eigen::VectorXd c = contrast / norm;
  const Eigen::MatrixXd& sigma = covariance.covariance;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma, Eigen::EigenvaluesOnly);
  const double scale = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
  if (eig.eigenvalues().minCoeff() < -1e-12 * scale) {
    throw Error(ErrorKind::kDomain, "covariance matrix is not positive semi-definite");
  }
  const double var = std::max(0.0, c.dot(sigma * c));
  ConfidenceInterval out;
  out.level = level;
  out.estimate = c.dot(beta);
  out.std_error = std::sqrt(var);
  const double z = normal_quantile(0.5 * (1.0 + level));
  out.lower = out.estimate - z * out.std_error;
  out.upper = out.estimate + z * out.std_error;
  return out;
}

}  // namespace geesub
