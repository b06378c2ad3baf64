#pragma once

// Multi-head self-attention and the pre-norm residual transformer block used
// for cross-frame attention over [CLS] tokens and for global/local fusion.

#include <cstddef>
#include <vector>

#include "stgt/numerics.hpp"

namespace stgt {

struct AttentionParams {
  TokenTensor wq, wk, wv, wo;  // [d x d]
};

/// LN -> MSA -> residual, LN -> MLP -> residual.
struct BlockParams {
  TokenTensor ln1_gain, ln1_bias;  // [d]
  AttentionParams attn;
  TokenTensor ln2_gain, ln2_bias;  // [d]
  TokenTensor w1, b1;              // [d x hidden], [hidden]
  TokenTensor w2, b2;              // [hidden x d], [d]

  /// Unit LN gains, everything else zero.
  static BlockParams zeros(std::size_t d, std::size_t hidden);

  template <typename F>
  void visit(F&& f) {
    f("ln1_gain", ln1_gain);
    f("ln1_bias", ln1_bias);
    f("wq", attn.wq);
    f("wk", attn.wk);
    f("wv", attn.wv);
    f("wo", attn.wo);
    f("ln2_gain", ln2_gain);
    f("ln2_bias", ln2_bias);
    f("w1", w1);
    f("b1", b1);
    f("w2", w2);
    f("b2", b2);
  }
};

struct MsaCache {
  TokenTensor input, q, k, v, concat;
  std::vector<TokenTensor> probs;  // per head [n x n]
};

/// Full (unmasked) multi-head self-attention with output projection.
TokenTensor multi_head_attention(const TokenTensor& x, const AttentionParams& p, std::size_t heads,
                                 MsaCache* cache = nullptr);

/// Accumulates parameter gradients into `grads` and returns dx.
TokenTensor multi_head_attention_backward(const TokenTensor& dout, const AttentionParams& p, std::size_t heads,
                                          const MsaCache& cache, AttentionParams& grads);

struct BlockCache {
  LayerNormCache<double> ln1, ln2;
  MsaCache msa;
  TokenTensor ln2_out, hidden_pre, hidden_act;
};

inline constexpr double kLayerNormEps = 1e-5;

TokenTensor transformer_block(const TokenTensor& x, const BlockParams& p, std::size_t heads,
                              BlockCache* cache = nullptr);

TokenTensor transformer_block_backward(const TokenTensor& dout, const BlockParams& p, std::size_t heads,
                                       const BlockCache& cache, BlockParams& grads);

}  // namespace stgt
