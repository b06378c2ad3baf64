#pragma once

// Video-text contrastive loss and the cross-similarity alignment loss, with
// analytic gradients w.r.t. both embedding towers and the log temperature.
//
// Similarities are plain dot products of the given rows; callers pass
// L2-normalized embeddings so these are cosines.

#include <cstddef>
#include <string>
#include <vector>

#include "stgt/tensor.hpp"

namespace stgt {

inline constexpr double kTauMin = 0.001;
inline constexpr double kTauMax = 0.5;
inline constexpr double kTauInit = 0.07;
inline constexpr double kDefaultGamma = 5.0;

template <typename T>
struct BasicEmbeddingPair {
  Tensor<T> video;  // [B x e]
  Tensor<T> text;   // [B x e]
  T log_tau{0};

  std::size_t batch() const { return video.rows(); }
  /// exp(log_tau); throws NumericError for a non-finite parameterization.
  T tau() const;
};

template <typename T>
struct BasicLossGrads {
  Tensor<T> video;
  Tensor<T> text;
  T log_tau{0};
};

template <typename T>
struct BasicLossValue {
  T loss{0};
  BasicLossGrads<T> grads;
  Tensor<T> p_v2t;  // row i: softmax_k S(v_i, t_k) / tau
  Tensor<T> p_t2v;  // row i: softmax_k S(t_i, v_k) / tau
  Tensor<T> weights;  // soft targets, rows sum to 1
};

using EmbeddingPair = BasicEmbeddingPair<double>;
using LossGrads = BasicLossGrads<double>;
using LossValue = BasicLossValue<double>;

template <typename T>
BasicLossValue<T> vtc_loss(const BasicEmbeddingPair<T>& pair);

/// Entry (i,j) is s_vv*s_tt, or -inf when either similarity is <= 0. The
/// diagonal is always exactly 1.
template <typename T>
Tensor<T> cross_similarity_logits(const Tensor<T>& s_vv, const Tensor<T>& s_tt);

/// Row-wise softmax of gamma * cross_similarity_logits over finite entries.
template <typename T>
Tensor<T> csal_weights(const BasicEmbeddingPair<T>& pair, T gamma);

/// Soft-target contrastive loss. The weights act as constants for the
/// gradient; pass `frozen_weights` to evaluate with previously computed ones.
template <typename T>
BasicLossValue<T> csal_loss(const BasicEmbeddingPair<T>& pair, T gamma, const Tensor<T>* frozen_weights = nullptr);

/// Cross-entropy of both directional softmaxes against target rows `weights`.
template <typename T>
BasicLossValue<T> soft_target_contrastive(const BasicEmbeddingPair<T>& pair, const Tensor<T>& weights);

struct LossReport {
  double vtc = 0.0;
  double csal = 0.0;
  double total = 0.0;
  double alpha = 1.0;
  double gamma = kDefaultGamma;
  double tau = kTauInit;
  TokenTensor p_v2t, p_t2v, csal_weights;
  LossGrads grads;  // of `total`
  std::vector<std::pair<std::string, double>> grad_norms;
  /// Terms of the full objective that are not modeled here.
  std::vector<std::string> omitted_terms{"vtm", "vtg"};
};

/// total = alpha * vtc + (1 - alpha) * csal. alpha must be 0 or 1 unless
/// `fractional_alpha` is set.
LossReport total_loss(const EmbeddingPair& pair, double alpha, double gamma, bool fractional_alpha = false,
                      const TokenTensor* frozen_weights = nullptr);

}  // namespace stgt
