#pragma once

// Deterministic dense kernels shared by every module, plus the hand-written
// backward passes used by the training path.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "stgt/kernels.hpp"
#include "stgt/tensor.hpp"

namespace stgt {

namespace detail {
template <typename T>
void require_rank2(const Tensor<T>& t, const char* what) {
  if (t.rank() != 2) throw DimensionError(std::string(what) + " expects a rank-2 tensor, got " + shape_string(t.shape()));
}
}  // namespace detail

/// Row-major product a[r x k] * b[k x c]. Each output entry accumulates over
/// k strictly left to right, independent of the kernel backend.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_rank2(a, "matmul");
  detail::require_rank2(b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul inner dimensions disagree: " + shape_string(a.shape()) + " * " + shape_string(b.shape()));
  }
  const std::size_t r = a.rows(), k = a.cols(), c = b.cols();
  Tensor<T> out({r, c});
  for (std::size_t i = 0; i < r; ++i) {
    auto dst = out.row(i);
    for (std::size_t kk = 0; kk < k; ++kk) kernels::axpy(a(i, kk), b.row(kk), dst);
  }
  return out;
}

/// a[r x k] * b[c x k]^T.
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_rank2(a, "matmul_nt");
  detail::require_rank2(b, "matmul_nt");
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt inner dimensions disagree: " + shape_string(a.shape()) + " * " +
                         shape_string(b.shape()) + "^T");
  }
  Tensor<T> out({a.rows(), b.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = kernels::dot(a.row(i), b.row(j));
  }
  return out;
}

/// a[k x r]^T * b[k x c].
template <typename T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_rank2(a, "matmul_tn");
  detail::require_rank2(b, "matmul_tn");
  if (a.rows() != b.rows()) {
    throw DimensionError("matmul_tn inner dimensions disagree: " + shape_string(a.shape()) + "^T * " +
                         shape_string(b.shape()));
  }
  Tensor<T> out({a.cols(), b.cols()});
  for (std::size_t kk = 0; kk < a.rows(); ++kk) {
    for (std::size_t i = 0; i < a.cols(); ++i) kernels::axpy(a(kk, i), b.row(kk), out.row(i));
  }
  return out;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  detail::require_rank2(a, "transpose");
  Tensor<T> out({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

/// dst += src, shapes must match exactly.
template <typename T>
void add_inplace(Tensor<T>& dst, const Tensor<T>& src) {
  if (dst.shape() != src.shape()) {
    throw DimensionError("add shapes disagree: " + shape_string(dst.shape()) + " vs " + shape_string(src.shape()));
  }
  for (std::size_t i = 0; i < dst.size(); ++i) dst.flat()[i] += src.flat()[i];
}

template <typename T>
Tensor<T> add(Tensor<T> a, const Tensor<T>& b) {
  add_inplace(a, b);
  return a;
}

/// Adds a length-c vector to every row of x[r x c].
template <typename T>
void add_row_broadcast(Tensor<T>& x, std::span<const T> v) {
  if (x.cols() != v.size()) throw DimensionError("row broadcast length mismatch");
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < v.size(); ++j) x(i, j) += v[j];
}

/// Column sums of x[r x c], accumulated top to bottom.
template <typename T>
std::vector<T> column_sums(const Tensor<T>& x) {
  std::vector<T> s(x.cols(), T{0});
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) s[j] += x(i, j);
  return s;
}

/// Row-wise softmax restricted to entries with keep=1. Dropped entries are
/// exactly zero; a row with nothing kept is all zeros.
template <typename T>
Tensor<T> masked_softmax(const Tensor<T>& logits, const BitMatrix& keep) {
  detail::require_rank2(logits, "masked_softmax");
  if (logits.rows() != keep.rows() || logits.cols() != keep.cols()) {
    throw DimensionError("masked_softmax logits " + shape_string(logits.shape()) + " vs mask [" +
                         std::to_string(keep.rows()) + "x" + std::to_string(keep.cols()) + "]");
  }
  Tensor<T> out(logits.shape());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    T mx = -std::numeric_limits<T>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < logits.cols(); ++j) {
      if (keep.get(i, j)) {
        mx = std::max(mx, logits(i, j));
        any = true;
      }
    }
    if (!any) continue;
    T sum{0};
    for (std::size_t j = 0; j < logits.cols(); ++j) {
      if (keep.get(i, j)) {
        out(i, j) = std::exp(logits(i, j) - mx);
        sum += out(i, j);
      }
    }
    for (std::size_t j = 0; j < logits.cols(); ++j) out(i, j) /= sum;
  }
  return out;
}

/// Unmasked row-wise softmax.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& logits) {
  return masked_softmax(logits, BitMatrix(logits.rows(), logits.cols(), true));
}

/// Backward of a row softmax: given probabilities p and upstream dp, returns
/// dlogits = p * (dp - <p, dp>) per row.
template <typename T>
Tensor<T> softmax_rows_backward(const Tensor<T>& p, const Tensor<T>& dp) {
  Tensor<T> out(p.shape());
  for (std::size_t i = 0; i < p.rows(); ++i) {
    T inner{0};
    for (std::size_t j = 0; j < p.cols(); ++j) inner += p(i, j) * dp(i, j);
    for (std::size_t j = 0; j < p.cols(); ++j) out(i, j) = p(i, j) * (dp(i, j) - inner);
  }
  return out;
}

template <typename T>
struct LayerNormCache {
  Tensor<T> normalized;       // (x - mean) * rstd
  std::vector<T> rstd;        // per row
};

/// Per-row layer normalization with two-pass mean/variance.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, std::span<const T> gain, std::span<const T> bias, T eps,
                     LayerNormCache<T>* cache = nullptr) {
  detail::require_rank2(x, "layer_norm");
  const std::size_t n = x.rows(), d = x.cols();
  if (d == 0) throw DimensionError("layer_norm needs d >= 1");
  if (gain.size() != d || bias.size() != d) throw DimensionError("layer_norm gain/bias length mismatch");
  if (!(eps > T{0})) throw ConfigError("layer_norm eps must be positive");
  Tensor<T> out(x.shape());
  if (cache) {
    cache->normalized = Tensor<T>(x.shape());
    cache->rstd.assign(n, T{0});
  }
  for (std::size_t i = 0; i < n; ++i) {
    T mean{0};
    for (std::size_t j = 0; j < d; ++j) mean += x(i, j);
    mean /= static_cast<T>(d);
    T var{0};
    for (std::size_t j = 0; j < d; ++j) {
      const T c = x(i, j) - mean;
      var += c * c;
    }
    var /= static_cast<T>(d);
    const T rstd = T{1} / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      const T xhat = (x(i, j) - mean) * rstd;
      out(i, j) = xhat * gain[j] + bias[j];
      if (cache) cache->normalized(i, j) = xhat;
    }
    if (cache) cache->rstd[i] = rstd;
  }
  return out;
}

/// Returns dx and accumulates into dgain/dbias.
template <typename T>
Tensor<T> layer_norm_backward(const Tensor<T>& dy, const LayerNormCache<T>& cache, std::span<const T> gain,
                              std::span<T> dgain, std::span<T> dbias) {
  const std::size_t n = dy.rows(), d = dy.cols();
  Tensor<T> dx(dy.shape());
  std::vector<T> dxhat(d);
  for (std::size_t i = 0; i < n; ++i) {
    T mean_dxhat{0}, mean_dxhat_xhat{0};
    for (std::size_t j = 0; j < d; ++j) {
      const T xhat = cache.normalized(i, j);
      dgain[j] += dy(i, j) * xhat;
      dbias[j] += dy(i, j);
      dxhat[j] = dy(i, j) * gain[j];
      mean_dxhat += dxhat[j];
      mean_dxhat_xhat += dxhat[j] * xhat;
    }
    mean_dxhat /= static_cast<T>(d);
    mean_dxhat_xhat /= static_cast<T>(d);
    for (std::size_t j = 0; j < d; ++j) {
      dx(i, j) = cache.rstd[i] * (dxhat[j] - mean_dxhat - cache.normalized(i, j) * mean_dxhat_xhat);
    }
  }
  return dx;
}

template <typename T>
T row_norm(std::span<const T> r) {
  T s{0};
  for (T v : r) s += v * v;
  return std::sqrt(s);
}

/// Scales every nonzero row to unit Euclidean norm; zero rows pass through.
template <typename T>
Tensor<T> l2_normalize_rows(const Tensor<T>& x) {
  detail::require_rank2(x, "l2_normalize_rows");
  Tensor<T> out = x;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const T norm = row_norm<T>(x.row(i));
    if (norm == T{0}) continue;
    for (auto& v : out.row(i)) v /= norm;
  }
  return out;
}

/// Backward of l2_normalize_rows. Zero rows have zero Jacobian.
template <typename T>
Tensor<T> l2_normalize_rows_backward(const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& dy) {
  Tensor<T> dx(x.shape());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const T norm = row_norm<T>(x.row(i));
    if (norm == T{0}) continue;
    T inner{0};
    for (std::size_t j = 0; j < x.cols(); ++j) inner += y(i, j) * dy(i, j);
    for (std::size_t j = 0; j < x.cols(); ++j) dx(i, j) = (dy(i, j) - y(i, j) * inner) / norm;
  }
  return dx;
}

// Tanh-approximated GELU and its derivative.
template <typename T>
T gelu(T x) {
  constexpr T k = T(0.7978845608028654);  // sqrt(2/pi)
  return T(0.5) * x * (T(1) + std::tanh(k * (x + T(0.044715) * x * x * x)));
}

template <typename T>
T gelu_grad(T x) {
  constexpr T k = T(0.7978845608028654);
  const T u = k * (x + T(0.044715) * x * x * x);
  const T th = std::tanh(u);
  const T du = k * (T(1) + T(3 * 0.044715) * x * x);
  return T(0.5) * (T(1) + th) + T(0.5) * x * (T(1) - th * th) * du;
}

/// Flat parameter storage split into named contiguous segments.
class ParamVector {
 public:
  struct Segment {
    std::string name;
    std::size_t offset = 0;
    std::size_t length = 0;
    std::vector<std::size_t> shape;
    bool operator==(const Segment&) const = default;
  };

  /// Appends a zero-filled segment and returns its index.
  std::size_t add_segment(std::string name, std::vector<std::size_t> shape);

  const std::vector<Segment>& segments() const noexcept { return segments_; }
  const Segment& segment(const std::string& name) const;
  bool has_segment(const std::string& name) const;

  std::span<double> values(const std::string& name);
  std::span<const double> values(const std::string& name) const;

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::size_t size() const noexcept { return data_.size(); }

  /// Segment copied out as a tensor of its registered shape.
  TokenTensor tensor(const std::string& name) const;
  void assign(const std::string& name, const TokenTensor& t);

  /// Same layout, all values zero.
  ParamVector zeros_like() const;

  bool operator==(const ParamVector& other) const = default;

 private:
  std::vector<Segment> segments_;
  std::vector<double> data_;
};

/// Central differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) over all
/// coordinates of a flat vector. Throws OracleError on a non-finite value.
template <typename T>
std::vector<T> central_differences(const std::function<T(std::span<const T>)>& f, std::span<const T> x, T eps) {
  if (!(eps > T{0})) throw ConfigError("finite-difference step must be positive");
  std::vector<T> work(x.begin(), x.end());
  std::vector<T> grad(x.size());
  for (std::size_t i = 0; i < work.size(); ++i) {
    const T orig = work[i];
    work[i] = orig + eps;
    const T fp = f(work);
    work[i] = orig - eps;
    const T fm = f(work);
    work[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw OracleError("non-finite function value at coordinate " + std::to_string(i), i);
    }
    grad[i] = (fp - fm) / (T{2} * eps);
  }
  return grad;
}

std::vector<double> finite_diff_grad(const std::function<double(const ParamVector&)>& f, const ParamVector& theta,
                                     double eps);

/// Central differences at the listed flat coordinates only.
std::vector<double> finite_diff_grad_at(const std::function<double(const ParamVector&)>& f, const ParamVector& theta,
                                        const std::vector<std::size_t>& coords, double eps);

/// Relative error used by gradient checks: |a - b| / max(|a|, |b|, floor)
/// per coordinate, maximized over the range.
double max_relative_error(std::span<const double> analytic, std::span<const double> numeric, double floor);

}  // namespace stgt
