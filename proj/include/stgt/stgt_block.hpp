#pragma once

// The spatio-temporal graph transformer block: cross-frame attention over the
// per-frame [CLS] tokens, graph-masked attention over local tokens, residual
// global/local fusion and max-pool sampling of the fused grid.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "stgt/attention.hpp"
#include "stgt/graph.hpp"

namespace stgt {

template <typename T>
struct BasicGraphAttentionParams {
  Tensor<T> wq, wk, wv, wl;  // [d x d]
};

using GraphAttentionParams = BasicGraphAttentionParams<double>;

/// Kept neighbors and their attention probabilities for one (head, row).
struct AttentionRecord {
  std::size_t head = 0;
  std::size_t row = 0;
  std::vector<std::uint32_t> kept;
  std::vector<double> probs;
};

struct GraphAttentionCache {
  TokenTensor input, q, k, v, concat;
  // [head][row][neighbor slot], aligned with graph.neighbors
  std::vector<std::vector<std::vector<double>>> probs;
};

struct GraphAttentionGrads {
  TokenTensor dx;
  /// dLoss/dW_s, nonzero only on edges. Empty when the graph is unweighted.
  TokenTensor dweights;
};

/// Sparse path: per head, row i attends over its neighbor list with logits
/// (q_i . k_j / sqrt(d_k)) * W_s(i,j); rows with no neighbors output zero
/// before the W^l projection.
template <typename T>
Tensor<T> graph_attention(const Tensor<T>& x_l, const BasicGraph<T>& g, const BasicGraphAttentionParams<T>& p,
                          std::size_t heads, GraphAttentionCache* cache = nullptr,
                          std::vector<AttentionRecord>* records = nullptr);

/// Dense oracle path: full N x N logits, additive -inf where A = 0, masked
/// softmax, then probs * V. Same result as graph_attention to rounding.
template <typename T>
Tensor<T> graph_attention_dense(const Tensor<T>& x_l, const BasicGraph<T>& g, const BasicGraphAttentionParams<T>& p,
                                std::size_t heads);

GraphAttentionGrads graph_attention_backward(const TokenTensor& dout, const SpatioTemporalGraph& g,
                                             const GraphAttentionParams& p, std::size_t heads,
                                             const GraphAttentionCache& cache, GraphAttentionParams& grads);

/// Arithmetic operation counts of the two attention paths. Projections
/// (Q, K, V, W^l) are shared; the attention term of the sparse path is the
/// dense term scaled by edges / N^2.
struct AttentionFlops {
  std::uint64_t projection = 0;
  std::uint64_t sparse_attention = 0;
  std::uint64_t dense_attention = 0;
  std::uint64_t sparse_total() const { return projection + sparse_attention; }
  std::uint64_t dense_total() const { return projection + dense_attention; }
};

/// Per (head, scored pair): 2*d_k for q.k, 2 for scale and edge weight, 3 for
/// exp, sum and divide, 2*d_k for the value accumulation.
std::uint64_t attention_pair_cost(std::size_t head_dim);

AttentionFlops count_attention_flops(std::size_t nodes, std::size_t dim, std::size_t heads, std::size_t edges);

/// Pre-norm attention + MLP block over the m [CLS] tokens.
TokenTensor cross_frame_attention(const TokenTensor& x_g, const BlockParams& p, std::size_t heads,
                                  BlockCache* cache = nullptr);

/// Concatenates global rows then local rows and runs one residual block over
/// all m + N rows.
TokenTensor fuse_global_local(const TokenTensor& x_g2, const TokenTensor& x_l2, const BlockParams& p,
                              std::size_t heads, BlockCache* cache = nullptr);

struct MaxPoolCache {
  std::size_t frames = 0, grid = 0, dim = 0;
  // For each pooled local output (frame, slot in 0..2n), channel -> source local row.
  std::vector<std::uint32_t> argmax;
};

/// x_l2 is [m x n x n x d] (or [m*n*n x d], cell (x, y) at row y*n + x),
/// x_g2 is [m x d]. Output is [m*(1+2n) x d]: per frame the global row, then
/// one max over y per grid column x, then one max over x per grid row y.
TokenTensor maxpool_sample(const TokenTensor& x_l2, const TokenTensor& x_g2, std::size_t grid,
                           MaxPoolCache* cache = nullptr);

/// Scatters pooled gradients back to (dx_g2, dx_l2); ties route to the first maximum.
void maxpool_sample_backward(const TokenTensor& dout, const MaxPoolCache& cache, TokenTensor& dx_g2,
                             TokenTensor& dx_l2);

}  // namespace stgt
