#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <vector>

#include "geesub/error.hpp"
#include "geesub/gee_solver.hpp"
#include "geesub/kernels.hpp"
#include "geesub/sim_bench.hpp"

namespace geesub {
namespace {

using kernels::Backend;

std::vector<Backend> available_backends() {
  std::vector<Backend> out;
  for (Backend b : {Backend::kScalar, Backend::kAvx2, Backend::kNeon}) {
    if (kernels::backend_available(b)) out.push_back(b);
  }
  return out;
}

std::vector<double> random_vector(std::size_t n, std::mt19937_64& gen) {
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (double& x : v) x = d(gen);
  return v;
}

// Restores the process-wide backend when a test pins a different one.
class BackendGuard {
 public:
  BackendGuard() : saved_(kernels::active_backend()) {}
  ~BackendGuard() { kernels::set_backend(saved_); }

 private:
  Backend saved_;
};

TEST(Kernels, ScalarAlwaysAvailable) {
  EXPECT_TRUE(kernels::backend_available(Backend::kScalar));
  EXPECT_TRUE(kernels::backend_available(kernels::detect_backend()));
}

TEST(Kernels, DotMatchesReferenceForEveryLength) {
  std::mt19937_64 gen(11);
  for (Backend b : available_backends()) {
    const kernels::KernelTable& k = kernels::table(b);
    for (std::size_t n = 0; n <= 67; ++n) {
      const std::vector<double> x = random_vector(n, gen);
      const std::vector<double> y = random_vector(n, gen);
      long double ref = 0.0L;
      long double scale = 0.0L;
      for (std::size_t i = 0; i < n; ++i) {
        ref += static_cast<long double>(x[i]) * y[i];
        scale += std::fabs(static_cast<long double>(x[i]) * y[i]);
      }
      const double got = k.dot(x.data(), y.data(), n);
      EXPECT_NEAR(got, static_cast<double>(ref), 1e-14 * static_cast<double>(scale) + 1e-300)
          << kernels::to_string(b) << " n=" << n;
    }
  }
}

TEST(Kernels, AxpyMatchesScalarBitwiseUpToFma) {
  std::mt19937_64 gen(12);
  for (Backend b : available_backends()) {
    const kernels::KernelTable& k = kernels::table(b);
    for (std::size_t n = 0; n <= 41; ++n) {
      const std::vector<double> x = random_vector(n, gen);
      std::vector<double> y = random_vector(n, gen);
      std::vector<double> ref = y;
      kernels::scalar::axpy(-0.37, x.data(), ref.data(), n);
      k.axpy(-0.37, x.data(), y.data(), n);
      for (std::size_t i = 0; i < n; ++i) {
        EXPECT_NEAR(y[i], ref[i], 1e-15 * (std::fabs(ref[i]) + std::fabs(x[i])))
            << kernels::to_string(b) << " n=" << n << " i=" << i;
      }
    }
  }
}

TEST(Kernels, GramUpperMatchesEigen) {
  std::mt19937_64 gen(13);
  BackendGuard guard;
  for (Backend b : available_backends()) {
    kernels::set_backend(b);
    for (std::size_t cols : {1u, 3u, 8u, 13u}) {
      const std::size_t rows = 5;
      const std::vector<double> x = random_vector(rows * cols, gen);
      const std::vector<double> bm = random_vector(rows * cols, gen);
      std::vector<double> out(cols * cols, 0.0);
      kernels::gram_accumulate_upper(x, bm, rows, cols, 2.5, out);
      using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
      const Eigen::Map<const RowMat> xm(x.data(), rows, cols);
      const Eigen::Map<const RowMat> bmm(bm.data(), rows, cols);
      const Eigen::MatrixXd ref = 2.5 * xm.transpose() * bmm;
      for (std::size_t j = 0; j < cols; ++j) {
        for (std::size_t l = j; l < cols; ++l) {
          EXPECT_NEAR(out[j * cols + l], ref(j, l), 1e-12);
        }
      }
    }
  }
}

TEST(Kernels, TransposeMultiplyMatchesEigen) {
  std::mt19937_64 gen(14);
  BackendGuard guard;
  for (Backend b : available_backends()) {
    kernels::set_backend(b);
    const std::size_t rows = 7;
    const std::size_t cols = 9;
    const std::vector<double> x = random_vector(rows * cols, gen);
    const std::vector<double> v = random_vector(rows, gen);
    std::vector<double> out(cols, 1.0);
    kernels::transpose_multiply_accumulate(x, v, rows, cols, out);
    using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const Eigen::Map<const RowMat> xm(x.data(), rows, cols);
    const Eigen::Map<const Eigen::VectorXd> vm(v.data(), rows);
    const Eigen::VectorXd ref = (xm.transpose() * vm).array() + 1.0;
    for (std::size_t j = 0; j < cols; ++j) EXPECT_NEAR(out[j], ref(j), 1e-12);
  }
}

TEST(Kernels, UnavailableBackendIsAConfigError) {
  for (Backend b : {Backend::kAvx2, Backend::kNeon}) {
    if (kernels::backend_available(b)) continue;
    try {
      kernels::set_backend(b);
      FAIL() << "expected an error";
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kConfig);
    }
  }
}

TEST(Kernels, FitAgreesAcrossBackends) {
  SimulationConfig config;
  config.n = 400;
  config.p = 6;
  const PanelDataset data = make_dataset(config, 5);
  BackendGuard guard;
  kernels::set_backend(Backend::kScalar);
  const GeeFit ref = fit(data, CorrStructure::kAr1);
  for (Backend b : available_backends()) {
    kernels::set_backend(b);
    const GeeFit got = fit(data, CorrStructure::kAr1);
    EXPECT_LT((got.beta - ref.beta).cwiseAbs().maxCoeff(), 1e-10) << kernels::to_string(b);
    EXPECT_NEAR(*got.correlation.alpha(), *ref.correlation.alpha(), 1e-9);
  }
}

}  // namespace
}  // namespace geesub
