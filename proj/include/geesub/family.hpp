#pragma once

#include <string_view>

namespace geesub {

enum class Family { kGaussianIdentity, kBernoulliLogit };

std::string_view to_string(Family family);

/// Parses "gaussian_identity"/"gaussian" or "bernoulli_logit"/"bernoulli".
Family parse_family(std::string_view name);

/// Mean/variance functions for a canonical-link family. For both shipped
/// families v(mu) equals the derivative of the inverse link.
struct ResponseFamily {
  Family tag = Family::kGaussianIdentity;

  double mean(double eta) const;
  double variance(double mu) const;
  double mean_derivative(double eta) const;
  double mean_second_derivative(double eta) const;

  /// Dispersion is estimated for gaussian and fixed at 1 for bernoulli.
  bool estimates_dispersion() const { return tag == Family::kGaussianIdentity; }

  /// True when y lies in the family's support.
  bool in_support(double y) const;
};

}  // namespace geesub
