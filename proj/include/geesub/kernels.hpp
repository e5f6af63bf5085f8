#pragma once

// Vector kernels used by the per-subject accumulation loops. Each kernel
// has a portable scalar reference and, where the target supports it, an
// AVX2+FMA (x86-64) or NEON (aarch64) variant. The variant is chosen once
// at first use from the CPU's capabilities and can be pinned for testing.

#include <cstddef>
#include <span>
#include <string_view>

namespace geesub::kernels {

enum class Backend { kScalar, kAvx2, kNeon };

std::string_view to_string(Backend backend);

struct KernelTable {
  double (*dot)(const double* a, const double* b, std::size_t n);
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
};

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace scalar

namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace avx2

namespace neon {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace neon

/// True when the variant was compiled in and the running CPU supports it.
bool backend_available(Backend backend);

/// Best available backend, unless GEESUB_KERNEL=scalar|avx2|neon overrides.
Backend detect_backend();

Backend active_backend();

/// Pins the process-wide backend. Throws Error(kConfig) if unavailable.
void set_backend(Backend backend);

const KernelTable& table(Backend backend);
const KernelTable& active();

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

// out += weight * Xᵀ B, upper triangle only, where X and B are rows x cols
// row-major blocks and out is cols x cols row-major.
void gram_accumulate_upper(std::span<const double> x, std::span<const double> b,
                           std::size_t rows, std::size_t cols, double weight,
                           std::span<double> out);

// out += Xᵀ v for a rows x cols row-major X.
void transpose_multiply_accumulate(std::span<const double> x,
                                   std::span<const double> v, std::size_t rows,
                                   std::size_t cols, std::span<double> out);

}  // namespace geesub::kernels
