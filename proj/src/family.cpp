#include "geesub/family.hpp"

#include <cmath>
#include <string>

#include "geesub/error.hpp"

namespace geesub {

std::string_view to_string(Family family) {
  switch (family) {
    case Family::kGaussianIdentity: return "gaussian_identity";
    case Family::kBernoulliLogit: return "bernoulli_logit";
  }
  return "unknown";
}

Family parse_family(std::string_view name) {
  if (name == "gaussian_identity" || name == "gaussian") return Family::kGaussianIdentity;
  if (name == "bernoulli_logit" || name == "bernoulli" || name == "binomial") {
    return Family::kBernoulliLogit;
  }
  throw Error(ErrorKind::kConfig, "unknown response family '" + std::string(name) + "'");
}

double ResponseFamily::mean(double eta) const {
  if (tag == Family::kGaussianIdentity) return eta;
  // Numerically stable logistic.
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

double ResponseFamily::variance(double mu) const {
  if (tag == Family::kGaussianIdentity) return 1.0;
  return mu * (1.0 - mu);
}

double ResponseFamily::mean_derivative(double eta) const {
  if (tag == Family::kGaussianIdentity) return 1.0;
  const double mu = mean(eta);
  return mu * (1.0 - mu);
}

double ResponseFamily::mean_second_derivative(double eta) const {
  if (tag == Family::kGaussianIdentity) return 0.0;
  const double mu = mean(eta);
  return mu * (1.0 - mu) * (1.0 - 2.0 * mu);
}

bool ResponseFamily::in_support(double y) const {
  if (!std::isfinite(y)) return false;
  if (tag == Family::kBernoulliLogit) return y == 0.0 || y == 1.0;
  return true;
}

}  // namespace geesub
