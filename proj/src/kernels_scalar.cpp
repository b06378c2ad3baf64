#include "stgt/kernels.hpp"

namespace stgt::kernels {
namespace {

template <typename T>
T dot_scalar(const T* a, const T* b, std::size_t n) {
  T s{0};
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

template <typename T>
void axpy_scalar(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

constexpr KernelTable kScalar{
    Backend::Scalar, "scalar", &dot_scalar<double>, &dot_scalar<float>, &axpy_scalar<double>, &axpy_scalar<float>,
};

}  // namespace

const KernelTable& scalar_table() noexcept { return kScalar; }

}  // namespace stgt::kernels
