#include "geesub/gee_solver.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

#include "geesub/kernels.hpp"

namespace geesub {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::MatrixXd symmetrize_upper(const std::vector<double>& upper, std::size_t p) {
  const auto size = static_cast<Eigen::Index>(p);
  Eigen::MatrixXd out(size, size);
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t k = j; k < p; ++k) {
      out(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = upper[j * p + k];
      out(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = upper[j * p + k];
    }
  }
  return out;
}

struct Accumulated {
  Eigen::VectorXd score;
  Eigen::MatrixXd information;
};

Accumulated accumulate(const PanelDataset& data, const Eigen::VectorXd& beta,
                       const WorkingCorrelation& corr, const SubjectWeights& weights,
                       bool with_information) {
  const std::size_t p = data.p();
  std::vector<double> s(p, 0.0);
  std::vector<double> h(with_information ? p * p : 0, 0.0);
  SubjectEvaluator eval(data, corr, {beta.data(), p});
  for (std::size_t k = 0; k < weights.size(); ++k) {
    eval.evaluate(weights.indices[k]);
    eval.add_score(weights.weights[k], s);
    if (with_information) eval.add_information(weights.weights[k], h);
  }
  const double inv_n = 1.0 / static_cast<double>(data.n());
  Accumulated out;
  out.score = Eigen::Map<Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(p)) * inv_n;
  if (with_information) out.information = symmetrize_upper(h, p) * inv_n;
  return out;
}

Eigen::VectorXd scoring_step(const Accumulated& acc) {
  require_nonsingular(acc.information, "Fisher information");
  Eigen::LLT<Eigen::MatrixXd> llt(acc.information);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::kRank,
                "Fisher information is not positive definite; use a larger (sub)sample");
  }
  return llt.solve(acc.score);
}

WorkingCorrelation refresh_correlation(CorrStructure structure,
                                       const StandardizedResiduals& residuals) {
  switch (structure) {
    case CorrStructure::kIndependence:
      return WorkingCorrelation::independence(residuals.m);
    case CorrStructure::kUnstructured:
      return WorkingCorrelation::from_matrix(estimate_unstructured(residuals).matrix);
    default:
      return WorkingCorrelation::build(structure, estimate_alpha_gpl(residuals, structure),
                                       residuals.m);
  }
}

}  // namespace

SubjectWeights SubjectWeights::all(std::size_t n) {
  SubjectWeights out;
  out.indices.resize(n);
  std::iota(out.indices.begin(), out.indices.end(), std::size_t{0});
  out.weights.assign(n, 1.0);
  return out;
}

SubjectEvaluator::SubjectEvaluator(const PanelDataset& data,
                                   const WorkingCorrelation& correlation,
                                   std::span<const double> beta)
    : data_(data),
      corr_(correlation),
      family_{data.family()},
      beta_(beta),
      m_(data.m()),
      p_(data.p()),
      sqrt_var_(m_, 1.0),
      eps_(m_, 0.0),
      scaled_(m_, 0.0),
      z_(family_.tag == Family::kGaussianIdentity ? 0 : m_ * p_, 0.0),
      b_(m_ * p_, 0.0) {
  if (correlation.m() != m_) {
    throw Error(ErrorKind::kDomain, "working correlation dimension does not match m");
  }
  if (beta.size() != p_) throw Error(ErrorKind::kDomain, "beta length does not match p");
}

void SubjectEvaluator::evaluate(std::size_t i) {
  current_ = i;
  const auto x = data_.subject_x(i);
  const auto y = data_.subject_y(i);
  const auto& k = kernels::active();
  for (std::size_t j = 0; j < m_; ++j) {
    const double eta = k.dot(x.data() + j * p_, beta_.data(), p_);
    const double mu = family_.mean(eta);
    const double var = family_.variance(mu);
    if (!(var > 0.0) || !std::isfinite(var)) {
      throw Error(ErrorKind::kDomain, "variance function vanished at fitted mean for subject '" +
                                          data_.subject_id(i) + "'");
    }
    sqrt_var_[j] = std::sqrt(var);
    eps_[j] = (y[j] - mu) / sqrt_var_[j];
  }
  const Eigen::MatrixXd& rinv = corr_.inverse();
  for (std::size_t j = 0; j < m_; ++j) {
    double acc = 0.0;
    for (std::size_t l = 0; l < m_; ++l) {
      acc += rinv(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(l)) * eps_[l];
    }
    scaled_[j] = sqrt_var_[j] * acc;
  }
}

void SubjectEvaluator::add_score(double weight, std::span<double> out) const {
  const auto x = data_.subject_x(current_);
  const auto& k = kernels::active();
  for (std::size_t j = 0; j < m_; ++j) {
    const double coeff = weight * scaled_[j];
    if (coeff != 0.0) k.axpy(coeff, x.data() + j * p_, out.data(), p_);
  }
}

void SubjectEvaluator::add_information(double weight, std::span<double> upper) {
  const auto x = data_.subject_x(current_);
  std::span<const double> z = x;
  if (!z_.empty()) {
    for (std::size_t j = 0; j < m_; ++j) {
      for (std::size_t c = 0; c < p_; ++c) z_[j * p_ + c] = sqrt_var_[j] * x[j * p_ + c];
    }
    z = z_;
  }
  const auto& k = kernels::active();
  const Eigen::MatrixXd& rinv = corr_.inverse();
  std::fill(b_.begin(), b_.end(), 0.0);
  for (std::size_t j = 0; j < m_; ++j) {
    for (std::size_t l = 0; l < m_; ++l) {
      const double r = rinv(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(l));
      if (r != 0.0) k.axpy(r, z.data() + l * p_, b_.data() + j * p_, p_);
    }
  }
  kernels::gram_accumulate_upper(z, b_, m_, p_, weight, upper);
}

Eigen::VectorXd score(const PanelDataset& data, const Eigen::VectorXd& beta,
                      const WorkingCorrelation& correlation, const SubjectWeights& weights) {
  return accumulate(data, beta, correlation, weights, false).score;
}

Eigen::VectorXd score(const PanelDataset& data, const Eigen::VectorXd& beta,
                      const WorkingCorrelation& correlation) {
  return score(data, beta, correlation, SubjectWeights::all(data.n()));
}

Eigen::MatrixXd information_sum(const PanelDataset& data, const Eigen::VectorXd& beta,
                                const WorkingCorrelation& correlation,
                                const SubjectWeights& weights) {
  return accumulate(data, beta, correlation, weights, true).information;
}

Eigen::MatrixXd fisher_information(const PanelDataset& data, const Eigen::VectorXd& beta,
                                   const WorkingCorrelation& correlation,
                                   const SubjectWeights& weights) {
  Eigen::MatrixXd information = information_sum(data, beta, correlation, weights);
  require_nonsingular(information, "Fisher information");
  return information;
}

Eigen::MatrixXd fisher_information(const PanelDataset& data, const Eigen::VectorXd& beta,
                                   const WorkingCorrelation& correlation) {
  return fisher_information(data, beta, correlation, SubjectWeights::all(data.n()));
}

void require_nonsingular(const Eigen::MatrixXd& information, const char* context) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(information, Eigen::EigenvaluesOnly);
  const double min_eig = eig.eigenvalues().minCoeff();
  if (!(min_eig >= kSingularEigenvalue)) {
    std::ostringstream msg;
    msg << context << " is singular (smallest eigenvalue " << min_eig
        << "); use a larger subsample or drop collinear covariates";
    throw Error(ErrorKind::kRank, msg.str());
  }
}

StandardizedResiduals standardized_residuals(const PanelDataset& data,
                                             const Eigen::VectorXd& beta,
                                             const SubjectWeights& weights) {
  const std::size_t m = data.m();
  const WorkingCorrelation identity = WorkingCorrelation::independence(m);
  SubjectEvaluator eval(data, identity, {beta.data(), data.p()});
  StandardizedResiduals out;
  out.m = m;
  out.values.resize(weights.size() * m);
  out.weights = weights.weights;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    eval.evaluate(weights.indices[k]);
    const auto e = eval.standardized_residual();
    std::copy(e.begin(), e.end(), out.values.begin() + static_cast<std::ptrdiff_t>(k * m));
  }
  return out;
}

GeeFit fit(const PanelDataset& data, CorrStructure structure, const SubjectWeights& weights,
           const FitOptions& options) {
  const std::size_t p = data.p();
  const std::size_t m = data.m();
  const ResponseFamily family{data.family()};
  if (weights.size() == 0) throw Error(ErrorKind::kDegenerate, "no subjects to fit");

  Eigen::VectorXd beta;
  if (options.beta_init) {
    if (static_cast<std::size_t>(options.beta_init->size()) != p) {
      throw Error(ErrorKind::kDomain, "beta_init length does not match p");
    }
    beta = *options.beta_init;
  } else {
    beta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
    const WorkingCorrelation identity = WorkingCorrelation::independence(m);
    bool done = false;
    for (int it = 0; it < options.max_iterations && !done; ++it) {
      const Eigen::VectorXd step = scoring_step(accumulate(data, beta, identity, weights, true));
      beta += step;
      done = step.norm() < options.tolerance;
    }
    if (!done) {
      throw ConvergenceError("working-independence start did not converge in " +
                                 std::to_string(options.max_iterations) + " iterations",
                             beta);
    }
  }

  GeeFit result;
  for (int it = 1; it <= options.max_iterations; ++it) {
    StandardizedResiduals residuals = standardized_residuals(data, beta, weights);
    residuals.dispersion = estimate_dispersion(residuals, p, family);
    result.dispersion = residuals.dispersion;
    result.correlation = options.fixed_correlation ? *options.fixed_correlation
                                                   : refresh_correlation(structure, residuals);

    const Eigen::VectorXd step =
        scoring_step(accumulate(data, beta, result.correlation, weights, true));
    beta += step;
    if (!beta.allFinite()) {
      throw Error(ErrorKind::kDomain, "scoring iteration produced non-finite coefficients");
    }
    result.iterations = it;
    if (step.norm() < options.tolerance) {
      result.converged = true;
      break;
    }
  }
  if (!result.converged) {
    throw ConvergenceError("GEE did not converge in " + std::to_string(options.max_iterations) +
                               " iterations",
                           beta);
  }
  result.beta = beta;
  result.final_score_norm = score(data, beta, result.correlation, weights).norm();
  return result;
}

GeeFit fit(const PanelDataset& data, CorrStructure structure, const FitOptions& options) {
  return fit(data, structure, SubjectWeights::all(data.n()), options);
}

}  // namespace geesub
