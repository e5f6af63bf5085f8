#include "geesub/subsampling.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

#include "geesub/kernels.hpp"
#include "geesub/rng.hpp"

namespace geesub {

namespace {

void require_scores(std::span<const double> h) {
  for (double v : h) {
    if (!std::isfinite(v) || v < 0.0) {
      throw Error(ErrorKind::kDomain, "h-scores must be finite and non-negative");
    }
  }
}

double sum_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0);
}

SubsamplePlan make_plan(std::vector<double> probabilities, SamplingMethod method,
                        std::optional<double> rho) {
  SubsamplePlan plan;
  plan.expected_size = sum_of(probabilities);
  plan.probabilities = std::move(probabilities);
  plan.method = method;
  plan.rho = rho;
  return plan;
}

SamplingMethod method_for(Criterion c) {
  return c == Criterion::kMV ? SamplingMethod::kMV : SamplingMethod::kMVc;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

SamplingMethod parse_method(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "punif" || lower == "uniform") return SamplingMethod::kUniform;
  if (lower == "pmv" || lower == "mv") return SamplingMethod::kMV;
  if (lower == "pmvc" || lower == "mvc") return SamplingMethod::kMVc;
  throw Error(ErrorKind::kConfig, "unknown sampling method '" + std::string(name) + "'");
}

std::string_view to_string(SamplingMethod method) {
  switch (method) {
    case SamplingMethod::kUniform: return "pUnif";
    case SamplingMethod::kMV: return "pMV";
    case SamplingMethod::kMVc: return "pMVc";
  }
  return "unknown";
}

std::string_view to_string(Criterion criterion) {
  return criterion == Criterion::kMV ? "MV" : "MVc";
}

SubsamplePlan uniform_plan(std::size_t n, double expected_size) {
  if (!(expected_size > 0.0) || expected_size > static_cast<double>(n)) {
    throw Error(ErrorKind::kDomain, "uniform plan needs 0 < r <= n");
  }
  return make_plan(std::vector<double>(n, expected_size / static_cast<double>(n)),
                   SamplingMethod::kUniform, std::nullopt);
}

SubsampleDraw poisson_draw(const SubsamplePlan& plan, std::uint64_t seed) {
  SubsampleDraw draw;
  const auto& pi = plan.probabilities;
  for (std::size_t i = 0; i < pi.size(); ++i) {
    if (!(pi[i] >= 0.0 && pi[i] <= 1.0)) {
      throw Error(ErrorKind::kDomain, "plan probability outside [0, 1]");
    }
    if (pi[i] > 0.0 && rng::uniform_at(seed, i) < pi[i]) {
      draw.indices.push_back(i);
      draw.probabilities.push_back(pi[i]);
      draw.weights.push_back(1.0 / pi[i]);
    }
  }
  return draw;
}

HScores compute_h_scores(const PanelDataset& data, const Eigen::VectorXd& beta,
                         const WorkingCorrelation& correlation, Criterion criterion,
                         const Eigen::MatrixXd& information) {
  const std::size_t n = data.n();
  const std::size_t p = data.p();
  HScores out;
  out.criterion = criterion;
  out.beta = beta;
  out.correlation = correlation.matrix();
  out.values.resize(n);

  std::vector<double> hinv;
  if (criterion == Criterion::kMV) {
    try {
      require_nonsingular(information, "pilot information");
    } catch (const Error& e) {
      throw Error(ErrorKind::kRank,
                  std::string(e.what()) + "; the MVc criterion does not need the inverse");
    }
    Eigen::LLT<Eigen::MatrixXd> llt(information);
    out.information_inverse =
        llt.solve(Eigen::MatrixXd::Identity(information.rows(), information.cols()));
    // Row-major copy so each row is contiguous for the dot kernel.
    hinv.resize(p * p);
    for (std::size_t j = 0; j < p; ++j) {
      for (std::size_t k = 0; k < p; ++k) {
        hinv[j * p + k] =
            out.information_inverse(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k));
      }
    }
  }

  const auto& kern = kernels::active();
  SubjectEvaluator eval(data, correlation, {beta.data(), p});
  std::vector<double> g(p);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(g.begin(), g.end(), 0.0);
    eval.evaluate(i);
    eval.add_score(1.0, g);
    if (criterion == Criterion::kMVc) {
      out.values[i] = std::sqrt(kern.dot(g.data(), g.data(), p));
    } else {
      double ss = 0.0;
      for (std::size_t j = 0; j < p; ++j) {
        const double v = kern.dot(hinv.data() + j * p, g.data(), p);
        ss += v * v;
      }
      out.values[i] = std::sqrt(ss);
    }
  }
  return out;
}

CappedAllocation capped_allocation(std::span<const double> h, double r) {
  const std::size_t n = h.size();
  require_scores(h);
  if (!(r > 0.0) || r > static_cast<double>(n)) {
    throw Error(ErrorKind::kDomain, "expected size r must satisfy 0 < r <= n");
  }
  const auto positive =
      static_cast<std::size_t>(std::count_if(h.begin(), h.end(), [](double v) { return v > 0.0; }));
  if (static_cast<double>(positive) < std::ceil(r)) {
    throw Error(ErrorKind::kInfeasible,
                "only " + std::to_string(positive) + " positive scores; expected size " +
                    std::to_string(r) + " cannot be allocated with probabilities <= 1");
  }

  std::vector<double> sorted(h.begin(), h.end());
  std::stable_sort(sorted.begin(), sorted.end());
  std::vector<double> prefix(n + 1, 0.0);  // prefix[k] = sum of the k smallest
  for (std::size_t k = 0; k < n; ++k) prefix[k + 1] = prefix[k] + sorted[k];

  CappedAllocation out;
  const auto max_s = static_cast<std::size_t>(std::floor(r));
  bool found = false;
  for (std::size_t s = 0; s <= max_s && s <= n; ++s) {
    const double remaining = r - static_cast<double>(s);
    if (remaining <= 0.0) {
      // Integer r with exactly r positive scores: the top r are taken surely.
      out.threshold = sorted[n - s];
      out.capped = s;
      found = true;
      break;
    }
    const double threshold = prefix[n - s] / remaining;
    if (sorted[n - s - 1] < threshold) {
      out.threshold = threshold;
      out.capped = s;
      found = true;
      break;
    }
  }
  if (!found) {
    throw Error(ErrorKind::kInfeasible, "no admissible threshold for the capped allocation");
  }

  double total = 0.0;
  for (double v : h) total += std::min(v, out.threshold);
  out.probabilities.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.probabilities[i] = std::min(1.0, r * std::min(h[i], out.threshold) / total);
  }
  return out;
}

SubsamplePlan capped_probabilities(const HScores& h, double r) {
  CappedAllocation alloc = capped_allocation(h.values, r);
  return make_plan(std::move(alloc.probabilities), method_for(h.criterion), std::nullopt);
}

std::vector<double> shrinkage_allocation(std::span<const double> h, double r2, double rho,
                                         double psi) {
  require_scores(h);
  const auto n = static_cast<double>(h.size());
  if (!(rho > 0.0 && rho < 1.0)) throw Error(ErrorKind::kDomain, "rho must lie in (0, 1)");
  if (!(psi > 0.0) || !std::isfinite(psi)) {
    throw Error(ErrorKind::kDomain, "psi must be positive (all pilot scores are zero?)");
  }
  if (!(r2 > 0.0) || r2 > n) throw Error(ErrorKind::kDomain, "r2 must satisfy 0 < r2 <= n");
  std::vector<double> pi(h.size());
  const double floor_prob = rho * r2 / n;
  const double scale = (1.0 - rho) * r2 / (n * psi);
  for (std::size_t i = 0; i < h.size(); ++i) pi[i] = std::min(scale * h[i] + floor_prob, 1.0);
  return pi;
}

SubsamplePlan shrinkage_probabilities(const HScores& h, double r2, double rho, double psi) {
  return make_plan(shrinkage_allocation(h.values, r2, rho, psi), method_for(h.criterion), rho);
}

double estimate_psi(std::span<const double> pilot_scores) {
  if (pilot_scores.empty()) throw Error(ErrorKind::kDegenerate, "empty pilot sample");
  double sum = 0.0;
  for (double v : pilot_scores) sum += v;
  return sum / static_cast<double>(pilot_scores.size());
}

double estimate_psi(const HScores& h, const SubsampleDraw& pilot_draw) {
  std::vector<double> pilot;
  pilot.reserve(pilot_draw.realized_size());
  for (std::size_t i : pilot_draw.indices) pilot.push_back(h.values[i]);
  return estimate_psi(pilot);
}

SubsampleFit two_step_fit(const PanelDataset& data, CorrStructure structure,
                          const TwoStepOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t n = data.n();
  if (!(options.rho > 0.0 && options.rho < 1.0)) {
    throw Error(ErrorKind::kConfig, "rho must lie in (0, 1)");
  }
  if (!(options.r1 > 0.0) || !(options.r2 > 0.0) ||
      options.r1 > static_cast<double>(n) || options.r2 > static_cast<double>(n)) {
    throw Error(ErrorKind::kConfig, "r1 and r2 must lie in (0, n]");
  }

  SubsampleFit out;
  // Step 1: uniform pilot.
  const SubsamplePlan pilot_plan = uniform_plan(n, options.r1);
  SubsampleDraw pilot = poisson_draw(pilot_plan, rng::derive_seed(options.seed, rng::kStreamPilotDraw));
  if (pilot.realized_size() == 0) {
    throw Error(ErrorKind::kDegenerate, "pilot draw is empty; increase r1");
  }
  GeeFit pilot_fit;
  try {
    pilot_fit = fit(data, CorrStructure::kIndependence, pilot.subject_weights());
  } catch (const Error& e) {
    throw Error(e.kind(), std::string("pilot fit failed (") + e.what() + "); increase r1");
  }

  const SubjectWeights pilot_weights = pilot.subject_weights();
  StandardizedResiduals residuals = standardized_residuals(data, pilot_fit.beta, pilot_weights);
  residuals.dispersion = estimate_dispersion(residuals, data.p(), ResponseFamily{data.family()});
  WorkingCorrelation pilot_corr = WorkingCorrelation::independence(data.m());
  if (structure == CorrStructure::kUnstructured) {
    pilot_corr = WorkingCorrelation::from_matrix(estimate_unstructured(residuals).matrix);
  } else if (structure != CorrStructure::kIndependence) {
    pilot_corr = WorkingCorrelation::build(structure, estimate_alpha_gpl(residuals, structure),
                                           data.m());
  }

  SubjectWeights unit = pilot_weights;
  std::fill(unit.weights.begin(), unit.weights.end(), 1.0);
  out.pilot_information = information_sum(data, pilot_fit.beta, pilot_corr, unit) *
                          (static_cast<double>(n) / static_cast<double>(pilot.realized_size()));

  HScores h = compute_h_scores(data, pilot_fit.beta, pilot_corr, options.criterion,
                               out.pilot_information);
  out.psi = estimate_psi(h, pilot);
  if (options.allocation == Allocation::kCapped) {
    out.plan = capped_probabilities(h, options.r2);
  } else {
    out.plan = shrinkage_probabilities(h, options.r2, options.rho, out.psi);
  }

  // Step 2: informative draw over all n subjects, weighted fit.
  out.draw = poisson_draw(out.plan, rng::derive_seed(options.seed, rng::kStreamSecondDraw));
  if (out.draw.realized_size() == 0) throw Error(ErrorKind::kDegenerate, "second-step draw is empty");
  FitOptions fit_options;
  fit_options.beta_init = pilot_fit.beta;
  out.fit = fit(data, structure, out.draw.subject_weights(), fit_options);

  std::size_t a = 0;
  std::size_t b = 0;
  while (a < pilot.indices.size() && b < out.draw.indices.size()) {
    if (pilot.indices[a] == out.draw.indices[b]) {
      ++out.overlap;
      ++a;
      ++b;
    } else if (pilot.indices[a] < out.draw.indices[b]) {
      ++a;
    } else {
      ++b;
    }
  }
  out.h_scores = std::move(h.values);
  out.pilot_draw = std::move(pilot);
  out.pilot_fit = std::move(pilot_fit);
  out.pilot_correlation = std::move(pilot_corr);
  out.seconds = seconds_since(start);
  return out;
}

SubsampleFit uniform_fit(const PanelDataset& data, CorrStructure structure, double r,
                         std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  SubsampleFit out;
  out.plan = uniform_plan(data.n(), r);
  out.draw = poisson_draw(out.plan, rng::derive_seed(seed, rng::kStreamUniformDraw));
  if (out.draw.realized_size() == 0) throw Error(ErrorKind::kDegenerate, "uniform draw is empty");
  out.fit = fit(data, structure, out.draw.subject_weights());
  out.seconds = seconds_since(start);
  return out;
}

}  // namespace geesub
