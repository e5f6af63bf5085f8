#include <atomic>
#include <cstdlib>
#include <string>

#include "geesub/error.hpp"
#include "geesub/kernels.hpp"

namespace geesub::kernels {

namespace {

constexpr KernelTable kScalarTable{&scalar::dot, &scalar::axpy};
#if defined(GEESUB_HAVE_AVX2)
constexpr KernelTable kAvx2Table{&avx2::dot, &avx2::axpy};
#endif
#if defined(GEESUB_HAVE_NEON)
constexpr KernelTable kNeonTable{&neon::dot, &neon::axpy};
#endif

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{&table(detect_backend())};
  return slot;
}

std::atomic<Backend>& backend_slot() {
  static std::atomic<Backend> slot{detect_backend()};
  return slot;
}

}  // namespace

std::string_view to_string(Backend backend) {
  switch (backend) {
    case Backend::kScalar: return "scalar";
    case Backend::kAvx2: return "avx2";
    case Backend::kNeon: return "neon";
  }
  return "unknown";
}

bool backend_available(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return true;
    case Backend::kAvx2:
#if defined(GEESUB_HAVE_AVX2)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Backend::kNeon:
#if defined(GEESUB_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Backend detect_backend() {
  if (const char* env = std::getenv("GEESUB_KERNEL")) {
    const std::string name(env);
    if (name == "scalar") return Backend::kScalar;
    if (name == "avx2" && backend_available(Backend::kAvx2)) return Backend::kAvx2;
    if (name == "neon" && backend_available(Backend::kNeon)) return Backend::kNeon;
  }
  if (backend_available(Backend::kAvx2)) return Backend::kAvx2;
  if (backend_available(Backend::kNeon)) return Backend::kNeon;
  return Backend::kScalar;
}

const KernelTable& table(Backend backend) {
  switch (backend) {
#if defined(GEESUB_HAVE_AVX2)
    case Backend::kAvx2: return kAvx2Table;
#endif
#if defined(GEESUB_HAVE_NEON)
    case Backend::kNeon: return kNeonTable;
#endif
    default: return kScalarTable;
  }
}

Backend active_backend() { return backend_slot().load(std::memory_order_relaxed); }

void set_backend(Backend backend) {
  if (!backend_available(backend)) {
    throw Error(ErrorKind::kConfig,
                "kernel backend '" + std::string(to_string(backend)) +
                    "' is not available on this CPU/build");
  }
  backend_slot().store(backend, std::memory_order_relaxed);
  active_slot().store(&table(backend), std::memory_order_release);
}

const KernelTable& active() { return *active_slot().load(std::memory_order_acquire); }

void gram_accumulate_upper(std::span<const double> x, std::span<const double> b,
                           std::size_t rows, std::size_t cols, double weight,
                           std::span<double> out) {
  const KernelTable& k = active();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * cols;
    const double* br = b.data() + r * cols;
    for (std::size_t j = 0; j < cols; ++j) {
      const double coeff = weight * xr[j];
      if (coeff == 0.0) continue;
      k.axpy(coeff, br + j, out.data() + j * cols + j, cols - j);
    }
  }
}

void transpose_multiply_accumulate(std::span<const double> x,
                                   std::span<const double> v, std::size_t rows,
                                   std::size_t cols, std::span<double> out) {
  const KernelTable& k = active();
  for (std::size_t r = 0; r < rows; ++r) {
    if (v[r] == 0.0) continue;
    k.axpy(v[r], x.data() + r * cols, out.data(), cols);
  }
}

}  // namespace geesub::kernels
