#include "geesub/sim_bench.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <thread>

#include "geesub/error.hpp"
#include "geesub/gee_solver.hpp"
#include "geesub/rng.hpp"

namespace geesub {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Eigen::MatrixXd cholesky_factor(const Eigen::MatrixXd& m, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::kDomain, std::string(what) + " is not positive definite");
  }
  return llt.matrixL();
}

bool is_numeric_failure(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConvergence:
    case ErrorKind::kRank:
    case ErrorKind::kDegenerate:
    case ErrorKind::kInfeasible:
    case ErrorKind::kDomain:
      return true;
    default:
      return false;
  }
}

struct RepOutcome {
  double full_sq = kNaN;
  double full_time = kNaN;
  std::vector<double> sq;     // cell-major
  std::vector<double> time;
  std::vector<double> size;
};

double squared_error(const Eigen::VectorXd& b, const Eigen::VectorXd& beta0) {
  return (b - beta0).squaredNorm();
}

RepOutcome run_replication(const SimulationConfig& config, const Eigen::VectorXd& beta0,
                           std::size_t rep) {
  const std::uint64_t seed = config.seed + rep;
  const PanelDataset data = make_dataset(config, seed);
  const std::size_t cells = config.methods.size() * config.r2_grid.size();
  RepOutcome out;
  out.sq.assign(cells, kNaN);
  out.time.assign(cells, kNaN);
  out.size.assign(cells, kNaN);

  if (config.run_full) {
    try {
      const auto start = std::chrono::steady_clock::now();
      const GeeFit full = fit(data, config.working_structure);
      out.full_time =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      out.full_sq = squared_error(full.beta, beta0);
    } catch (const Error& e) {
      if (!is_numeric_failure(e.kind())) throw;
    }
  }

  std::size_t k = 0;
  for (SamplingMethod method : config.methods) {
    for (double r2 : config.r2_grid) {
      try {
        SubsampleFit result;
        double realized = 0.0;
        if (method == SamplingMethod::kUniform) {
          const double r = config.uniform_parity ? config.r1 + r2 : r2;
          result = uniform_fit(data, config.working_structure, r, seed);
          realized = static_cast<double>(result.draw.realized_size());
        } else {
          TwoStepOptions options;
          options.r1 = config.r1;
          options.r2 = r2;
          options.rho = config.rho;
          options.seed = seed;
          options.criterion = method == SamplingMethod::kMV ? Criterion::kMV : Criterion::kMVc;
          result = two_step_fit(data, config.working_structure, options);
          realized = static_cast<double>(result.draw.realized_size() +
                                         result.pilot_draw->realized_size());
        }
        out.sq[k] = squared_error(result.fit.beta, beta0);
        out.time[k] = result.seconds;
        out.size[k] = realized;
      } catch (const Error& e) {
        if (!is_numeric_failure(e.kind())) throw;
      }
      ++k;
    }
  }
  return out;
}

void finalize_cell(MethodCell& cell, const std::vector<double>& sizes) {
  double sq = 0.0;
  double time = 0.0;
  double size = 0.0;
  std::size_t ok = 0;
  for (std::size_t s = 0; s < cell.squared_errors.size(); ++s) {
    if (std::isnan(cell.squared_errors[s])) continue;
    sq += cell.squared_errors[s];
    time += cell.seconds[s];
    if (!sizes.empty()) size += sizes[s];
    ++ok;
  }
  cell.reps = cell.squared_errors.size();
  cell.failures = cell.reps - ok;
  if (ok == 0) {
    cell.mse = cell.log_mse = cell.mean_time_s = cell.mean_realized_size = kNaN;
    return;
  }
  const double d = static_cast<double>(ok);
  cell.mse = sq / d;
  cell.log_mse = std::log(cell.mse);
  cell.mean_time_s = time / d;
  cell.mean_realized_size = sizes.empty() ? kNaN : size / d;
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

CovariateCase parse_case(std::string_view name) {
  if (name == "t3" || name == "case1" || name == "1") return CovariateCase::kT3;
  if (name == "lognormal" || name == "case2" || name == "2") return CovariateCase::kLognormal;
  throw Error(ErrorKind::kConfig, "unknown covariate case '" + std::string(name) + "'");
}

std::string_view to_string(CovariateCase c) {
  return c == CovariateCase::kT3 ? "t3" : "lognormal";
}

Eigen::VectorXd make_beta0(std::size_t p) {
  if (p < 2 || p % 2 != 0) {
    throw Error(ErrorKind::kDomain,
                "beta0 pattern (1, 1.5, ...) needs an even p >= 2, got p = " + std::to_string(p));
  }
  Eigen::VectorXd beta(static_cast<Eigen::Index>(p));
  for (Eigen::Index j = 0; j < beta.size(); ++j) beta(j) = j % 2 == 0 ? 1.0 : 1.5;
  return beta;
}

Eigen::MatrixXd design_covariance(std::size_t p) {
  const auto size = static_cast<Eigen::Index>(p);
  Eigen::MatrixXd sigma(size, size);
  for (Eigen::Index j = 0; j < size; ++j) {
    for (Eigen::Index k = 0; k < size; ++k) {
      sigma(j, k) = std::pow(0.5, static_cast<double>(std::abs(j - k)));
    }
  }
  return sigma;
}

std::vector<double> generate_covariates(CovariateCase c, std::size_t n, std::size_t m,
                                        std::size_t p, std::uint64_t seed) {
  if (n == 0 || m == 0 || p == 0) throw Error(ErrorKind::kDomain, "sizes must be positive");
  const Eigen::MatrixXd l = cholesky_factor(design_covariance(p), "design covariance");
  rng::Engine engine = rng::make_engine(rng::derive_seed(seed, rng::kStreamCovariates));
  std::normal_distribution<double> normal;
  std::chi_squared_distribution<double> chi2(3.0);
  const double lognormal_scale = std::sqrt(1.8);
  const auto size = static_cast<Eigen::Index>(p);
  std::vector<double> x(n * m * p);
  Eigen::VectorXd z(size);
  for (std::size_t row = 0; row < n * m; ++row) {
    for (Eigen::Index j = 0; j < size; ++j) z(j) = normal(engine);
    Eigen::Map<Eigen::VectorXd> out(x.data() + row * p, size);
    out.noalias() = l.triangularView<Eigen::Lower>() * z;
    if (c == CovariateCase::kT3) {
      out /= std::sqrt(chi2(engine) / 3.0);
    } else {
      out = (lognormal_scale * out.array()).exp();
    }
  }
  return x;
}

std::vector<double> generate_responses(std::span<const double> x, std::size_t n,
                                       std::size_t m, const Eigen::VectorXd& beta0,
                                       CorrStructure true_structure, double alpha,
                                       std::uint64_t seed) {
  const auto p = static_cast<std::size_t>(beta0.size());
  if (x.size() != n * m * p) throw Error(ErrorKind::kDomain, "covariate size mismatch");
  if (true_structure == CorrStructure::kUnstructured) {
    throw Error(ErrorKind::kDomain, "unstructured is not a generating structure");
  }
  const WorkingCorrelation r = true_structure == CorrStructure::kIndependence
                                   ? WorkingCorrelation::independence(m)
                                   : WorkingCorrelation::build(true_structure, alpha, m);
  const Eigen::MatrixXd l = cholesky_factor(r.matrix(), "true correlation");
  rng::Engine engine = rng::make_engine(rng::derive_seed(seed, rng::kStreamResponses));
  std::normal_distribution<double> normal;
  const auto mm = static_cast<Eigen::Index>(m);
  std::vector<double> y(n * m);
  Eigen::VectorXd z(mm);
  for (std::size_t i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < mm; ++j) z(j) = normal(engine);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> xi(
        x.data() + i * m * p, mm, static_cast<Eigen::Index>(p));
    Eigen::Map<Eigen::VectorXd> yi(y.data() + i * m, mm);
    yi.noalias() = xi * beta0;
    yi.noalias() += l.triangularView<Eigen::Lower>() * z;
  }
  return y;
}

void SimulationConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::kConfig, msg); };
  if (n < 2 || m < 1 || p < 1) fail("n >= 2, m >= 1 and p >= 1 are required");
  if (p % 2 != 0) fail("p must be even for the (1, 1.5, ...) beta0 pattern");
  if (reps == 0) fail("reps must be positive");
  if (r2_grid.empty()) fail("r2 grid is empty");
  if (methods.empty()) fail("no sampling methods selected");
  if (!(rho > 0.0 && rho < 1.0)) fail("rho must lie in (0, 1)");
  if (!(r1 > 0.0)) fail("r1 must be positive");
  for (double r2 : r2_grid) {
    if (!(r2 > 0.0)) fail("r2 values must be positive");
  }
  const double max_r2 = *std::max_element(r2_grid.begin(), r2_grid.end());
  if (!(r1 + max_r2 < static_cast<double>(n))) fail("r1 + max(r2) must be below n");
  if (true_structure == CorrStructure::kUnstructured) {
    fail("the generating structure must be ind, ex, ar1 or ma1");
  }
  if (true_structure != CorrStructure::kIndependence) {
    const FeasibleInterval iv = feasible_interval(true_structure, m);
    if (!(true_alpha > iv.lower && true_alpha < iv.upper)) {
      fail("true alpha " + std::to_string(true_alpha) + " is outside the feasible interval");
    }
  }
  if (!(max_failure_rate >= 0.0 && max_failure_rate <= 1.0)) {
    fail("max failure rate must lie in [0, 1]");
  }
}

PanelDataset make_dataset(const SimulationConfig& config, std::uint64_t seed) {
  const Eigen::VectorXd beta0 = make_beta0(config.p);
  std::vector<double> x =
      generate_covariates(config.covariate_case, config.n, config.m, config.p, seed);
  std::vector<double> y = generate_responses(x, config.n, config.m, beta0,
                                             config.true_structure, config.true_alpha, seed);
  std::vector<std::string> ids(config.n);
  for (std::size_t i = 0; i < config.n; ++i) ids[i] = "s" + std::to_string(i + 1);
  return PanelDataset(std::move(ids), config.m, config.p, Family::kGaussianIdentity,
                      std::move(x), std::move(y));
}

const MethodCell& BenchmarkResult::cell(SamplingMethod method, double r2) const {
  for (const MethodCell& c : cells) {
    if (c.method == method && c.r2 == r2) return c;
  }
  throw Error(ErrorKind::kDomain, "no benchmark cell for " + std::string(to_string(method)) +
                                      " at r2 = " + std::to_string(r2));
}

BenchmarkResult run_benchmark(const SimulationConfig& config) {
  config.validate();
  const Eigen::VectorXd beta0 = make_beta0(config.p);
  std::vector<RepOutcome> outcomes(config.reps);

  const std::size_t workers = std::max<std::size_t>(1, std::min(config.threads, config.reps));
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  auto work = [&](std::size_t w) {
    try {
      for (std::size_t s = next++; s < config.reps; s = next++) {
        outcomes[s] = run_replication(config, beta0, s);
      }
    } catch (...) {
      errors[w] = std::current_exception();
      next = config.reps;
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (std::thread& t : pool) t.join();
  }
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  BenchmarkResult result;
  result.config = config;
  std::size_t k = 0;
  for (SamplingMethod method : config.methods) {
    for (double r2 : config.r2_grid) {
      MethodCell cell;
      cell.method = method;
      cell.r2 = r2;
      std::vector<double> sizes(config.reps);
      for (std::size_t s = 0; s < config.reps; ++s) {
        cell.squared_errors.push_back(outcomes[s].sq[k]);
        cell.seconds.push_back(outcomes[s].time[k]);
        sizes[s] = outcomes[s].size[k];
      }
      finalize_cell(cell, sizes);
      result.cells.push_back(std::move(cell));
      ++k;
    }
  }
  if (config.run_full) {
    result.has_full = true;
    for (std::size_t s = 0; s < config.reps; ++s) {
      result.full.squared_errors.push_back(outcomes[s].full_sq);
      result.full.seconds.push_back(outcomes[s].full_time);
    }
    finalize_cell(result.full, {});
  }

  const auto limit = static_cast<double>(config.reps) * config.max_failure_rate;
  auto check = [&](const MethodCell& c, const std::string& label) {
    if (static_cast<double>(c.failures) > limit) {
      throw Error(ErrorKind::kBenchmark,
                  label + ": " + std::to_string(c.failures) + " of " + std::to_string(c.reps) +
                      " replications failed");
    }
  };
  for (const MethodCell& c : result.cells) {
    check(c, std::string(to_string(c.method)) + " at r2 = " + std::to_string(c.r2));
  }
  if (result.has_full) check(result.full, "full-data fit");
  return result;
}

double compute_mse(const std::vector<Eigen::VectorXd>& estimates, const Eigen::VectorXd& beta0) {
  if (estimates.empty()) throw Error(ErrorKind::kDomain, "no estimates");
  double sum = 0.0;
  for (const Eigen::VectorXd& b : estimates) {
    if (b.size() != beta0.size()) throw Error(ErrorKind::kDomain, "estimate dimension mismatch");
    sum += squared_error(b, beta0);
  }
  return sum / static_cast<double>(estimates.size());
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw Error(ErrorKind::kDomain, "spearman needs two equal-length series of length >= 2");
  }
  const std::vector<double> rx = average_ranks(x);
  const std::vector<double> ry = average_ranks(y);
  const Eigen::Map<const Eigen::VectorXd> a(rx.data(), static_cast<Eigen::Index>(rx.size()));
  const Eigen::Map<const Eigen::VectorXd> b(ry.data(), static_cast<Eigen::Index>(ry.size()));
  const Eigen::VectorXd ca = a.array() - a.mean();
  const Eigen::VectorXd cb = b.array() - b.mean();
  const double denom = std::sqrt(ca.squaredNorm() * cb.squaredNorm());
  if (denom == 0.0) return 0.0;
  return ca.dot(cb) / denom;
}

void write_benchmark_csv(const std::vector<BenchmarkResult>& results, std::ostream& out) {
  out << "case,true_structure,working_structure,p,method,r2,mse,log_mse,mean_time_s,reps,"
         "failures\n";
  auto num = [](double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
  };
  for (const BenchmarkResult& r : results) {
    const SimulationConfig& c = r.config;
    for (const MethodCell& cell : r.cells) {
      out << to_string(c.covariate_case) << ',' << to_string(c.true_structure) << ','
          << to_string(c.working_structure) << ',' << c.p << ',' << to_string(cell.method) << ','
          << num(cell.r2) << ',' << num(cell.mse) << ',' << num(cell.log_mse) << ','
          << num(cell.mean_time_s) << ',' << cell.reps << ',' << cell.failures << '\n';
    }
    if (r.has_full) {
      out << to_string(c.covariate_case) << ',' << to_string(c.true_structure) << ','
          << to_string(c.working_structure) << ',' << c.p << ",full,0," << num(r.full.mse)
          << ',' << num(r.full.log_mse) << ',' << num(r.full.mean_time_s) << ','
          << r.full.reps << ',' << r.full.failures << '\n';
    }
  }
}

}  // namespace geesub
