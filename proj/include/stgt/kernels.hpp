#pragma once

// Inner-loop kernels with a scalar reference and SIMD variants chosen at
// runtime. Every variant reduces in a fixed order, so repeated runs on one
// machine are bit-identical. axpy variants are bit-identical to the scalar
// reference (no fused multiply-add, lane-wise arithmetic only); dot variants
// agree with it to rounding.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>

#include "stgt/error.hpp"

namespace stgt::kernels {

enum class Backend { Scalar, Avx2 };

struct KernelTable {
  Backend backend;
  const char* name;
  double (*dot_f64)(const double* a, const double* b, std::size_t n);
  float (*dot_f32)(const float* a, const float* b, std::size_t n);
  /// y[i] += alpha * x[i]
  void (*axpy_f64)(double alpha, const double* x, double* y, std::size_t n);
  void (*axpy_f32)(float alpha, const float* x, float* y, std::size_t n);
};

const KernelTable& scalar_table() noexcept;
/// Returns nullptr when the variant was not compiled in.
const KernelTable* avx2_table() noexcept;

bool cpu_supports(Backend b) noexcept;

/// Best backend for this CPU, honoring the STGT_KERNELS environment
/// variable ("scalar", "avx2", "auto").
Backend detect_backend() noexcept;

const KernelTable& active() noexcept;
/// Throws ConfigError if the backend is unavailable on this CPU.
void set_backend(Backend b);
Backend parse_backend(std::string_view name);
const char* backend_name(Backend b) noexcept;

/// RAII override of the active backend, restoring the previous one on exit.
class ScopedBackend {
 public:
  explicit ScopedBackend(Backend b);
  ~ScopedBackend();
  ScopedBackend(const ScopedBackend&) = delete;
  ScopedBackend& operator=(const ScopedBackend&) = delete;

 private:
  Backend previous_;
};

namespace detail {
inline void require_same_length(std::size_t a, std::size_t b) {
  if (a != b) throw DimensionError("kernel operands differ in length: " + std::to_string(a) + " vs " + std::to_string(b));
}
}  // namespace detail

inline double dot(std::span<const double> a, std::span<const double> b) {
  detail::require_same_length(a.size(), b.size());
  return active().dot_f64(a.data(), b.data(), a.size());
}
inline float dot(std::span<const float> a, std::span<const float> b) {
  detail::require_same_length(a.size(), b.size());
  return active().dot_f32(a.data(), b.data(), a.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  detail::require_same_length(x.size(), y.size());
  active().axpy_f64(alpha, x.data(), y.data(), x.size());
}
inline void axpy(float alpha, std::span<const float> x, std::span<float> y) {
  detail::require_same_length(x.size(), y.size());
  active().axpy_f32(alpha, x.data(), y.data(), x.size());
}

}  // namespace stgt::kernels
