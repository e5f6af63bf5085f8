#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "geesub/error.hpp"
#include "geesub/gee_solver.hpp"
#include "geesub/sim_bench.hpp"

namespace geesub {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

PanelDataset random_panel(std::size_t n, std::size_t m, std::size_t p, std::uint64_t seed,
                          Family family = Family::kGaussianIdentity) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  std::vector<double> x(n * m * p);
  for (double& v : x) v = normal(gen);
  std::vector<double> y(n * m);
  for (std::size_t r = 0; r < n * m; ++r) {
    double eta = 0.0;
    for (std::size_t j = 0; j < p; ++j) eta += x[r * p + j] * (j % 2 == 0 ? 0.5 : -0.3);
    if (family == Family::kGaussianIdentity) {
      y[r] = eta + normal(gen);
    } else {
      std::bernoulli_distribution coin(1.0 / (1.0 + std::exp(-eta)));
      y[r] = coin(gen) ? 1.0 : 0.0;
    }
  }
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = std::to_string(i);
  return PanelDataset(ids, m, p, family, x, y);
}

Eigen::VectorXd ols(const PanelDataset& d) {
  const Eigen::Map<const RowMat> x(d.x().data(), d.n() * d.m(), d.p());
  const Eigen::Map<const Eigen::VectorXd> y(d.y().data(), d.n() * d.m());
  return x.colPivHouseholderQr().solve(y);
}

TEST(GeeSolver, ScoreReducesToWeightedLeastSquares) {
  const PanelDataset d = random_panel(6, 1, 2, 1);
  Eigen::VectorXd beta(2);
  beta << 0.2, -0.1;
  SubjectWeights w{{0, 2, 5}, {1.5, 2.0, 4.0}};
  const Eigen::VectorXd got = score(d, beta, WorkingCorrelation::independence(1), w);
  Eigen::VectorXd expected = Eigen::VectorXd::Zero(2);
  for (std::size_t k = 0; k < w.size(); ++k) {
    const auto xi = d.subject_x(w.indices[k]);
    const double resid = d.subject_y(w.indices[k])[0] - (xi[0] * beta(0) + xi[1] * beta(1));
    expected(0) += w.weights[k] * xi[0] * resid;
    expected(1) += w.weights[k] * xi[1] * resid;
  }
  expected /= 6.0;
  EXPECT_LT((got - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(GeeSolver, UnitWeightsEqualUnweighted) {
  const PanelDataset d = random_panel(30, 4, 3, 2);
  const WorkingCorrelation r = WorkingCorrelation::build(CorrStructure::kAr1, 0.4, 4);
  const Eigen::VectorXd beta = Eigen::VectorXd::Constant(3, 0.1);
  const SubjectWeights all = SubjectWeights::all(d.n());
  EXPECT_EQ(score(d, beta, r, all), score(d, beta, r));
  EXPECT_EQ(fisher_information(d, beta, r, all), fisher_information(d, beta, r));
  const GeeFit a = fit(d, CorrStructure::kExchangeable);
  const GeeFit b = fit(d, CorrStructure::kExchangeable, all);
  EXPECT_EQ(a.beta, b.beta);
  EXPECT_EQ(a.iterations, b.iterations);
}

TEST(GeeSolver, InformationIdentityCorrelationIsGram) {
  const PanelDataset d = random_panel(10, 3, 4, 3);
  const SubjectWeights w{{1, 4, 7}, {2.0, 1.0, 3.0}};
  const Eigen::MatrixXd h =
      fisher_information(d, Eigen::VectorXd::Zero(4), WorkingCorrelation::independence(3), w);
  Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(4, 4);
  for (std::size_t k = 0; k < w.size(); ++k) {
    const Eigen::Map<const RowMat> xi(d.subject_x(w.indices[k]).data(), 3, 4);
    expected += w.weights[k] * xi.transpose() * xi;
  }
  expected /= 10.0;
  EXPECT_LT((h - expected).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(GeeSolver, InformationScalarArithmetic) {
  const PanelDataset d({"a", "b"}, 1, 1, Family::kGaussianIdentity, {1, 2}, {0, 0});
  const Eigen::MatrixXd h =
      fisher_information(d, Eigen::VectorXd::Zero(1), WorkingCorrelation::independence(1));
  EXPECT_DOUBLE_EQ(h(0, 0), 2.5);
}

TEST(GeeSolver, InformationMatchesFiniteDifferenceJacobian) {
  for (std::uint64_t seed : {4u, 5u, 6u}) {
    const PanelDataset d = random_panel(40, 4, 5, seed);
    const WorkingCorrelation r = WorkingCorrelation::build(CorrStructure::kAr1, 0.6, 4);
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> normal;
    Eigen::VectorXd beta(5);
    for (int j = 0; j < 5; ++j) beta(j) = normal(gen);
    const Eigen::MatrixXd h = fisher_information(d, beta, r);
    const double step = 1e-5;
    Eigen::MatrixXd jac(5, 5);
    for (int j = 0; j < 5; ++j) {
      Eigen::VectorXd up = beta;
      Eigen::VectorXd down = beta;
      up(j) += step;
      down(j) -= step;
      jac.col(j) = -(score(d, up, r) - score(d, down, r)) / (2.0 * step);
    }
    EXPECT_LT((jac - h).norm() / h.norm(), 1e-5);
  }
}

TEST(GeeSolver, IndependenceFitIsOls) {
  const PanelDataset d({"a", "b"}, 1, 1, Family::kGaussianIdentity, {1, 2}, {1, 2});
  const GeeFit f = fit(d, CorrStructure::kIndependence);
  EXPECT_NEAR(f.beta(0), 1.0, 1e-12);
  EXPECT_EQ(f.iterations, 1);
  EXPECT_TRUE(f.converged);

  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    const PanelDataset r = random_panel(12, 3, 4, seed);
    const GeeFit g = fit(r, CorrStructure::kIndependence);
    EXPECT_LT((g.beta - ols(r)).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT(g.final_score_norm, 1e-6);
  }
}

TEST(GeeSolver, FixedCorrelationIsGeneralizedLeastSquares) {
  const PanelDataset d = random_panel(50, 4, 3, 7);
  const WorkingCorrelation r = WorkingCorrelation::build(CorrStructure::kExchangeable, 0.3, 4);
  Eigen::MatrixXd lhs = Eigen::MatrixXd::Zero(3, 3);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(3);
  for (std::size_t i = 0; i < d.n(); ++i) {
    const Eigen::Map<const RowMat> xi(d.subject_x(i).data(), 4, 3);
    const Eigen::Map<const Eigen::VectorXd> yi(d.subject_y(i).data(), 4);
    lhs += xi.transpose() * r.inverse() * xi;
    rhs += xi.transpose() * r.inverse() * yi;
  }
  const Eigen::VectorXd gls = lhs.ldlt().solve(rhs);

  FitOptions options;
  options.fixed_correlation = r;
  options.beta_init = Eigen::VectorXd::Zero(3);
  const GeeFit f = fit(d, CorrStructure::kExchangeable, options);
  EXPECT_LT((f.beta - gls).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(f.iterations, 2);

  // A further scoring step from the solution is numerically zero.
  const Eigen::VectorXd step =
      fisher_information(d, f.beta, r).ldlt().solve(score(d, f.beta, r));
  EXPECT_LT(step.norm(), 1e-12);
}

TEST(GeeSolver, ScoreVanishesAtSolution) {
  const PanelDataset d = random_panel(80, 5, 4, 8);
  for (CorrStructure s : {CorrStructure::kExchangeable, CorrStructure::kAr1, CorrStructure::kMa1,
                          CorrStructure::kUnstructured}) {
    const GeeFit f = fit(d, s);
    EXPECT_TRUE(f.converged);
    EXPECT_LT(score(d, f.beta, f.correlation).norm(), 1e-6) << to_string(s);
  }
}

TEST(GeeSolver, SimulatedAr1Consistency) {
  SimulationConfig config;
  config.n = 2000;
  config.p = 30;
  const PanelDataset d = make_dataset(config, 21);
  const GeeFit f = fit(d, CorrStructure::kAr1);
  const Eigen::VectorXd beta0 = make_beta0(30);
  EXPECT_LT((f.beta - beta0).squaredNorm() / 30.0, 0.01);
  EXPECT_GT(*f.correlation.alpha(), 0.4);
  EXPECT_LT(*f.correlation.alpha(), 0.6);
}

TEST(GeeSolver, BernoulliIndependenceMatchesLogisticNewton) {
  const PanelDataset d = random_panel(300, 3, 3, 9, Family::kBernoulliLogit);
  const Eigen::Map<const RowMat> x(d.x().data(), d.n() * d.m(), d.p());
  const Eigen::Map<const Eigen::VectorXd> y(d.y().data(), d.n() * d.m());
  Eigen::VectorXd b = Eigen::VectorXd::Zero(3);
  for (int it = 0; it < 50; ++it) {
    const Eigen::ArrayXd mu = 1.0 / (1.0 + (-(x * b).array()).exp());
    const Eigen::VectorXd grad = x.transpose() * (y.array() - mu).matrix();
    const Eigen::MatrixXd hess = x.transpose() * (mu * (1.0 - mu)).matrix().asDiagonal() * x;
    b += hess.ldlt().solve(grad);
  }
  FitOptions tight;
  tight.tolerance = 1e-10;
  const GeeFit f = fit(d, CorrStructure::kIndependence, tight);
  EXPECT_LT((f.beta - b).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_EQ(f.dispersion, 1.0);

  const GeeFit ex = fit(d, CorrStructure::kExchangeable);
  EXPECT_TRUE(ex.converged);
  EXPECT_LT(ex.final_score_norm, 1e-4);
}

TEST(GeeSolver, VanishingVarianceIsDomainError) {
  const PanelDataset d = random_panel(10, 2, 2, 10, Family::kBernoulliLogit);
  try {
    score(d, Eigen::VectorXd::Constant(2, 1e4), WorkingCorrelation::independence(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDomain);
  }
}

TEST(GeeSolver, CollinearDesignIsRankError) {
  std::vector<double> x;
  for (int i = 0; i < 8; ++i) {
    x.push_back(i);
    x.push_back(2.0 * i);
  }
  const PanelDataset d({"a", "b", "c", "d", "e", "f", "g", "h"}, 1, 2,
                       Family::kGaussianIdentity, x, {1, 2, 3, 4, 5, 6, 7, 8});
  try {
    fit(d, CorrStructure::kIndependence);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kRank);
  }
}

TEST(GeeSolver, IterationLimitCarriesLastIterate) {
  const PanelDataset d = random_panel(20, 2, 2, 11);
  FitOptions options;
  options.max_iterations = 1;
  try {
    fit(d, CorrStructure::kAr1, options);
    FAIL();
  } catch (const ConvergenceError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConvergence);
    EXPECT_EQ(e.last_beta().size(), 2);
    EXPECT_TRUE(e.last_beta().allFinite());
  }
}

TEST(GeeSolver, EstimatingFunctionIsUnbiased) {
  SimulationConfig config;
  config.n = 100;
  config.p = 4;
  const Eigen::VectorXd beta0 = make_beta0(4);
  const WorkingCorrelation correct = WorkingCorrelation::build(CorrStructure::kAr1, 0.5, 5);
  const WorkingCorrelation wrong = WorkingCorrelation::build(CorrStructure::kExchangeable, 0.3, 5);
  for (const WorkingCorrelation* r : {&correct, &wrong}) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(4);
    Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(4);
    const int reps = 1000;
    for (int s = 0; s < reps; ++s) {
      const PanelDataset d = make_dataset(config, 5000 + s);
      const Eigen::VectorXd g = score(d, beta0, *r);
      sum += g;
      sum_sq += g.cwiseProduct(g);
    }
    const Eigen::VectorXd mean = sum / reps;
    const Eigen::VectorXd var = sum_sq / reps - mean.cwiseProduct(mean);
    for (int j = 0; j < 4; ++j) {
      EXPECT_LT(std::fabs(mean(j)), 3.0 * std::sqrt(var(j) / reps)) << "coordinate " << j;
    }
  }
}

TEST(GeeSolver, IterationCostIsLinearInSubjects) {
  auto best_time = [](const PanelDataset& d, const WorkingCorrelation& r) {
    double best = 1e9;
    const Eigen::VectorXd beta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d.p()));
    for (int k = 0; k < 5; ++k) {
      const auto start = std::chrono::steady_clock::now();
      fisher_information(d, beta, r);
      best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                                .count());
    }
    return best;
  };
  const WorkingCorrelation r = WorkingCorrelation::build(CorrStructure::kAr1, 0.5, 5);
  const double small = best_time(random_panel(2000, 5, 20, 12), r);
  const double large = best_time(random_panel(8000, 5, 20, 13), r);
  const double ratio = large / small;
  EXPECT_GT(ratio, 2.0);
  EXPECT_LT(ratio, 8.0);
}

}  // namespace
}  // namespace geesub
