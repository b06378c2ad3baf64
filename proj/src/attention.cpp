#include "stgt/attention.hpp"

#include <cmath>
#include <string>

namespace stgt {
namespace {

std::size_t head_dim(std::size_t d, std::size_t heads) {
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("model dim " + std::to_string(d) + " is not divisible by head count " + std::to_string(heads));
  }
  return d / heads;
}

std::span<const double> head_slice(const TokenTensor& t, std::size_t row, std::size_t h, std::size_t dk) {
  return t.row(row).subspan(h * dk, dk);
}

std::span<double> head_slice(TokenTensor& t, std::size_t row, std::size_t h, std::size_t dk) {
  return t.row(row).subspan(h * dk, dk);
}

void accumulate(TokenTensor& dst, const TokenTensor& src) { add_inplace(dst, src); }

void accumulate(TokenTensor& dst, const std::vector<double>& src) {
  for (std::size_t i = 0; i < src.size(); ++i) dst.flat()[i] += src[i];
}

}  // namespace

BlockParams BlockParams::zeros(std::size_t d, std::size_t hidden) {
  BlockParams p;
  p.ln1_gain = TokenTensor({d}, 1.0);
  p.ln1_bias = TokenTensor({d});
  p.attn = {TokenTensor({d, d}), TokenTensor({d, d}), TokenTensor({d, d}), TokenTensor({d, d})};
  p.ln2_gain = TokenTensor({d}, 1.0);
  p.ln2_bias = TokenTensor({d});
  p.w1 = TokenTensor({d, hidden});
  p.b1 = TokenTensor({hidden});
  p.w2 = TokenTensor({hidden, d});
  p.b2 = TokenTensor({d});
  return p;
}

TokenTensor multi_head_attention(const TokenTensor& x, const AttentionParams& p, std::size_t heads, MsaCache* cache) {
  const std::size_t n = x.rows(), d = x.cols();
  const std::size_t dk = head_dim(d, heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  TokenTensor q = matmul(x, p.wq), k = matmul(x, p.wk), v = matmul(x, p.wv);
  TokenTensor concat({n, d});
  std::vector<TokenTensor> probs;
  probs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    TokenTensor logits({n, n});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) logits(i, j) = kernels::dot(head_slice(q, i, h, dk), head_slice(k, j, h, dk)) * scale;
    TokenTensor pr = softmax_rows(logits);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) kernels::axpy(pr(i, j), head_slice(v, j, h, dk), head_slice(concat, i, h, dk));
    probs.push_back(std::move(pr));
  }
  TokenTensor out = matmul(concat, p.wo);
  if (cache) {
    cache->input = x;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->concat = std::move(concat);
    cache->probs = std::move(probs);
  }
  return out;
}

TokenTensor multi_head_attention_backward(const TokenTensor& dout, const AttentionParams& p, std::size_t heads,
                                          const MsaCache& c, AttentionParams& grads) {
  const std::size_t n = dout.rows(), d = dout.cols();
  const std::size_t dk = head_dim(d, heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  accumulate(grads.wo, matmul_tn(c.concat, dout));
  const TokenTensor dconcat = matmul_nt(dout, p.wo);
  TokenTensor dq({n, d}), dk_({n, d}), dv({n, d});
  for (std::size_t h = 0; h < heads; ++h) {
    const TokenTensor& pr = c.probs[h];
    TokenTensor dp({n, n});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        dp(i, j) = kernels::dot(head_slice(dconcat, i, h, dk), head_slice(c.v, j, h, dk));
        kernels::axpy(pr(i, j), head_slice(dconcat, i, h, dk), head_slice(dv, j, h, dk));
      }
    }
    const TokenTensor dlogits = softmax_rows_backward(pr, dp);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double g = dlogits(i, j) * scale;
        kernels::axpy(g, head_slice(c.k, j, h, dk), head_slice(dq, i, h, dk));
        kernels::axpy(g, head_slice(c.q, i, h, dk), head_slice(dk_, j, h, dk));
      }
    }
  }
  accumulate(grads.wq, matmul_tn(c.input, dq));
  accumulate(grads.wk, matmul_tn(c.input, dk_));
  accumulate(grads.wv, matmul_tn(c.input, dv));
  TokenTensor dx = matmul_nt(dq, p.wq);
  add_inplace(dx, matmul_nt(dk_, p.wk));
  add_inplace(dx, matmul_nt(dv, p.wv));
  return dx;
}

TokenTensor transformer_block(const TokenTensor& x, const BlockParams& p, std::size_t heads, BlockCache* cache) {
  LayerNormCache<double> ln1, ln2;
  const TokenTensor a = layer_norm<double>(x, p.ln1_gain.flat(), p.ln1_bias.flat(), kLayerNormEps, &ln1);
  TokenTensor x1 = add(x, multi_head_attention(a, p.attn, heads, cache ? &cache->msa : nullptr));
  TokenTensor c = layer_norm<double>(x1, p.ln2_gain.flat(), p.ln2_bias.flat(), kLayerNormEps, &ln2);
  TokenTensor pre = matmul(c, p.w1);
  add_row_broadcast<double>(pre, p.b1.flat());
  TokenTensor act = pre;
  for (auto& v : act.flat()) v = gelu(v);
  TokenTensor mlp = matmul(act, p.w2);
  add_row_broadcast<double>(mlp, p.b2.flat());
  TokenTensor out = add(std::move(x1), mlp);
  if (cache) {
    cache->ln1 = std::move(ln1);
    cache->ln2 = std::move(ln2);
    cache->ln2_out = std::move(c);
    cache->hidden_pre = std::move(pre);
    cache->hidden_act = std::move(act);
  }
  return out;
}

TokenTensor transformer_block_backward(const TokenTensor& dout, const BlockParams& p, std::size_t heads,
                                       const BlockCache& c, BlockParams& grads) {
  accumulate(grads.w2, matmul_tn(c.hidden_act, dout));
  accumulate(grads.b2, column_sums(dout));
  TokenTensor dhidden = matmul_nt(dout, p.w2);
  for (std::size_t i = 0; i < dhidden.size(); ++i) dhidden.flat()[i] *= gelu_grad(c.hidden_pre.flat()[i]);
  accumulate(grads.w1, matmul_tn(c.ln2_out, dhidden));
  accumulate(grads.b1, column_sums(dhidden));
  const TokenTensor dln2 = matmul_nt(dhidden, p.w1);
  TokenTensor dx1 = add(dout, layer_norm_backward<double>(dln2, c.ln2, p.ln2_gain.flat(), grads.ln2_gain.flat(),
                                                          grads.ln2_bias.flat()));
  const TokenTensor da = multi_head_attention_backward(dx1, p.attn, heads, c.msa, grads.attn);
  add_inplace(dx1, layer_norm_backward<double>(da, c.ln1, p.ln1_gain.flat(), grads.ln1_gain.flat(),
                                               grads.ln1_bias.flat()));
  return dx1;
}

}  // namespace stgt
