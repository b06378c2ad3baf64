#include "stgt/losses.hpp"

#include <cmath>
#include <limits>

#include "stgt/numerics.hpp"

namespace stgt {
namespace {

template <typename T>
void check_pair(const BasicEmbeddingPair<T>& pair) {
  if (pair.video.rank() != 2 || pair.text.rank() != 2 || pair.video.shape() != pair.text.shape()) {
    throw DimensionError("embedding towers disagree: " + shape_string(pair.video.shape()) + " vs " +
                         shape_string(pair.text.shape()));
  }
  if (pair.video.rows() < 1) throw DimensionError("embedding batch must be non-empty");
}

// Row-wise log-softmax of logits.
template <typename T>
Tensor<T> log_softmax_rows(const Tensor<T>& logits) {
  Tensor<T> out(logits.shape());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < logits.cols(); ++j) mx = std::max(mx, logits(i, j));
    T sum{0};
    for (std::size_t j = 0; j < logits.cols(); ++j) sum += std::exp(logits(i, j) - mx);
    const T lse = mx + std::log(sum);
    for (std::size_t j = 0; j < logits.cols(); ++j) out(i, j) = logits(i, j) - lse;
  }
  return out;
}

}  // namespace

template <typename T>
T BasicEmbeddingPair<T>::tau() const {
  if (!std::isfinite(log_tau)) throw NumericError("temperature parameter log_tau is not finite");
  return std::exp(log_tau);
}

template <typename T>
BasicLossValue<T> soft_target_contrastive(const BasicEmbeddingPair<T>& pair, const Tensor<T>& weights) {
  check_pair(pair);
  const std::size_t b = pair.batch();
  if (weights.rows() != b || weights.cols() != b) throw DimensionError("target weights must be B x B");
  const T tau = pair.tau();
  const Tensor<T> s = matmul_nt(pair.video, pair.text);
  Tensor<T> lv = s, lt = transpose(s);
  for (auto& x : lv.flat()) x /= tau;
  for (auto& x : lt.flat()) x /= tau;
  const Tensor<T> log_pv = log_softmax_rows(lv), log_pt = log_softmax_rows(lt);

  BasicLossValue<T> out;
  out.p_v2t = Tensor<T>(s.shape());
  out.p_t2v = Tensor<T>(s.shape());
  for (std::size_t k = 0; k < s.size(); ++k) {
    out.p_v2t.flat()[k] = std::exp(log_pv.flat()[k]);
    out.p_t2v.flat()[k] = std::exp(log_pt.flat()[k]);
  }

  const T inv2b = T(1) / (T(2) * static_cast<T>(b));
  T acc{0};
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      const T w = weights(i, j);
      if (w != T(0)) acc += w * (log_pv(i, j) + log_pt(i, j));
    }
  }
  out.loss = -acc * inv2b;

  // d loss / d logits for each direction: (rowsum(w) * P - w) / 2B.
  Tensor<T> dlv(s.shape()), dlt(s.shape());
  for (std::size_t i = 0; i < b; ++i) {
    T wsum{0};
    for (std::size_t j = 0; j < b; ++j) wsum += weights(i, j);
    for (std::size_t j = 0; j < b; ++j) {
      dlv(i, j) = (wsum * out.p_v2t(i, j) - weights(i, j)) * inv2b;
      dlt(i, j) = (wsum * out.p_t2v(i, j) - weights(i, j)) * inv2b;
    }
  }
  Tensor<T> ds(s.shape());
  T dlog_tau{0};
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      ds(i, j) = (dlv(i, j) + dlt(j, i)) / tau;
      dlog_tau -= dlv(i, j) * lv(i, j) + dlt(i, j) * lt(i, j);
    }
  }
  out.grads.video = matmul(ds, pair.text);
  out.grads.text = matmul_tn(ds, pair.video);
  out.grads.log_tau = dlog_tau;
  out.weights = weights;
  return out;
}

template <typename T>
BasicLossValue<T> vtc_loss(const BasicEmbeddingPair<T>& pair) {
  check_pair(pair);
  return soft_target_contrastive(pair, Tensor<T>::identity(pair.batch()));
}

template <typename T>
Tensor<T> cross_similarity_logits(const Tensor<T>& s_vv, const Tensor<T>& s_tt) {
  if (s_vv.shape() != s_tt.shape() || s_vv.rank() != 2 || s_vv.rows() != s_vv.cols()) {
    throw DimensionError("cross similarity inputs must be equal square matrices");
  }
  Tensor<T> out(s_vv.shape());
  for (std::size_t i = 0; i < s_vv.rows(); ++i) {
    for (std::size_t j = 0; j < s_vv.cols(); ++j) {
      if (i == j) {
        out(i, j) = T(1);
      } else if (std::min(s_vv(i, j), s_tt(i, j)) <= T(0)) {
        out(i, j) = -std::numeric_limits<T>::infinity();
      } else {
        out(i, j) = s_vv(i, j) * s_tt(i, j);
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> csal_weights(const BasicEmbeddingPair<T>& pair, T gamma) {
  check_pair(pair);
  if (!(gamma > T(0))) throw ConfigError("gamma must be greater than zero");
  const Tensor<T> s_vv = matmul_nt(pair.video, pair.video);
  const Tensor<T> s_tt = matmul_nt(pair.text, pair.text);
  Tensor<T> logits = cross_similarity_logits(s_vv, s_tt);
  BitMatrix keep(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    for (std::size_t j = 0; j < logits.cols(); ++j) {
      const bool finite = std::isfinite(logits(i, j));
      keep.set(i, j, finite);
      logits(i, j) = finite ? gamma * logits(i, j) : T(0);
    }
  }
  return masked_softmax(logits, keep);
}

template <typename T>
BasicLossValue<T> csal_loss(const BasicEmbeddingPair<T>& pair, T gamma, const Tensor<T>* frozen_weights) {
  if (!(gamma > T(0))) throw ConfigError("gamma must be greater than zero");
  if (frozen_weights) return soft_target_contrastive(pair, *frozen_weights);
  return soft_target_contrastive(pair, csal_weights(pair, gamma));
}

#define STGT_INSTANTIATE_LOSSES(T)                                                                      \
  template struct BasicEmbeddingPair<T>;                                                                \
  template BasicLossValue<T> soft_target_contrastive(const BasicEmbeddingPair<T>&, const Tensor<T>&);   \
  template BasicLossValue<T> vtc_loss(const BasicEmbeddingPair<T>&);                                    \
  template Tensor<T> cross_similarity_logits(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> csal_weights(const BasicEmbeddingPair<T>&, T);                                     \
  template BasicLossValue<T> csal_loss(const BasicEmbeddingPair<T>&, T, const Tensor<T>*);

STGT_INSTANTIATE_LOSSES(double)
STGT_INSTANTIATE_LOSSES(float)

#undef STGT_INSTANTIATE_LOSSES

LossReport total_loss(const EmbeddingPair& pair, double alpha, double gamma, bool fractional_alpha,
                      const TokenTensor* frozen_weights) {
  if (!fractional_alpha && alpha != 0.0 && alpha != 1.0) {
    throw ConfigError("alpha must be 0 or 1 unless fractional alpha is enabled, got " + std::to_string(alpha));
  }
  if (alpha < 0.0 || alpha > 1.0) throw ConfigError("alpha must lie in [0, 1]");
  LossValue vtc = vtc_loss(pair);
  LossValue csal = csal_loss(pair, gamma, frozen_weights);
  LossReport r;
  r.vtc = vtc.loss;
  r.csal = csal.loss;
  r.alpha = alpha;
  r.gamma = gamma;
  r.tau = pair.tau();
  r.p_v2t = vtc.p_v2t;
  r.p_t2v = vtc.p_t2v;
  r.csal_weights = csal.weights;
  if (alpha == 1.0) {
    r.total = vtc.loss;
    r.grads = std::move(vtc.grads);
  } else if (alpha == 0.0) {
    r.total = csal.loss;
    r.grads = std::move(csal.grads);
  } else {
    r.total = alpha * vtc.loss + (1.0 - alpha) * csal.loss;
    r.grads = vtc.grads;
    for (std::size_t k = 0; k < r.grads.video.size(); ++k) {
      r.grads.video.flat()[k] = alpha * vtc.grads.video.flat()[k] + (1.0 - alpha) * csal.grads.video.flat()[k];
      r.grads.text.flat()[k] = alpha * vtc.grads.text.flat()[k] + (1.0 - alpha) * csal.grads.text.flat()[k];
    }
    r.grads.log_tau = alpha * vtc.grads.log_tau + (1.0 - alpha) * csal.grads.log_tau;
  }
  return r;
}

}  // namespace stgt
