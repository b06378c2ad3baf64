#include "stgt/stgt_block.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace stgt {
namespace {

std::size_t checked_head_dim(std::size_t d, std::size_t heads) {
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("model dim " + std::to_string(d) + " is not divisible by head count " + std::to_string(heads));
  }
  return d / heads;
}

template <typename T>
void check_graph(const Tensor<T>& x_l, const BasicGraph<T>& g) {
  if (x_l.rank() != 2 || x_l.rows() != g.node_count || g.neighbors.size() != g.node_count) {
    throw DimensionError("graph attention features " + shape_string(x_l.shape()) + " vs graph with " +
                         std::to_string(g.node_count) + " nodes");
  }
}

template <typename T>
std::span<const T> slice(const Tensor<T>& t, std::size_t row, std::size_t h, std::size_t dk) {
  return t.row(row).subspan(h * dk, dk);
}

template <typename T>
std::span<T> slice(Tensor<T>& t, std::size_t row, std::size_t h, std::size_t dk) {
  return t.row(row).subspan(h * dk, dk);
}

}  // namespace

template <typename T>
Tensor<T> graph_attention(const Tensor<T>& x_l, const BasicGraph<T>& g, const BasicGraphAttentionParams<T>& p,
                          std::size_t heads, GraphAttentionCache* cache, std::vector<AttentionRecord>* records) {
  check_graph(x_l, g);
  const std::size_t n = x_l.rows(), d = x_l.cols();
  const std::size_t dk = checked_head_dim(d, heads);
  const T scale = T(1) / std::sqrt(static_cast<T>(dk));
  Tensor<T> q = matmul(x_l, p.wq), k = matmul(x_l, p.wk), v = matmul(x_l, p.wv);
  Tensor<T> concat({n, d});
  std::vector<T> logits;
  if constexpr (std::is_same_v<T, double>) {
    if (cache) cache->probs.assign(heads, std::vector<std::vector<double>>(n));
  }
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto& nbrs = g.neighbors[i];
      if (nbrs.empty()) continue;
      logits.resize(nbrs.size());
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t s = 0; s < nbrs.size(); ++s) {
        const std::size_t j = nbrs[s];
        T l = kernels::dot(slice(q, i, h, dk), slice(k, j, h, dk)) * scale;
        if (g.weighted) l *= g.weights(i, j);
        logits[s] = l;
        mx = std::max(mx, l);
      }
      T sum{0};
      for (auto& l : logits) {
        l = std::exp(l - mx);
        sum += l;
      }
      auto out = slice(concat, i, h, dk);
      for (std::size_t s = 0; s < nbrs.size(); ++s) {
        logits[s] /= sum;
        kernels::axpy(logits[s], slice(v, nbrs[s], h, dk), out);
      }
      if constexpr (std::is_same_v<T, double>) {
        if (cache) cache->probs[h][i] = logits;
      }
      if (records) {
        records->push_back({h, i, nbrs, std::vector<double>(logits.begin(), logits.end())});
      }
    }
  }
  Tensor<T> out = matmul(concat, p.wl);
  if constexpr (std::is_same_v<T, double>) {
    if (cache) {
      cache->input = x_l;
      cache->q = std::move(q);
      cache->k = std::move(k);
      cache->v = std::move(v);
      cache->concat = std::move(concat);
    }
  }
  return out;
}

template <typename T>
Tensor<T> graph_attention_dense(const Tensor<T>& x_l, const BasicGraph<T>& g, const BasicGraphAttentionParams<T>& p,
                                std::size_t heads) {
  check_graph(x_l, g);
  const std::size_t n = x_l.rows(), d = x_l.cols();
  const std::size_t dk = checked_head_dim(d, heads);
  const T scale = T(1) / std::sqrt(static_cast<T>(dk));
  const T neg_inf = -std::numeric_limits<T>::infinity();
  const Tensor<T> q = matmul(x_l, p.wq), k = matmul(x_l, p.wk), v = matmul(x_l, p.wv);
  Tensor<T> concat({n, d});
  Tensor<T> logits({n, n});
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const T raw = kernels::dot(slice(q, i, h, dk), slice(k, j, h, dk)) * scale;
        const T weighted = g.weighted ? raw * g.weights(i, j) : raw;
        logits(i, j) = g.adjacency.get(i, j) ? weighted : neg_inf;
      }
    }
    // Exclusion via the -inf entries themselves: exp(-inf - max) == 0.
    for (std::size_t i = 0; i < n; ++i) {
      T mx = neg_inf;
      for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, logits(i, j));
      auto out = slice(concat, i, h, dk);
      if (mx == neg_inf) continue;
      T sum{0};
      for (std::size_t j = 0; j < n; ++j) {
        logits(i, j) = std::exp(logits(i, j) - mx);
        sum += logits(i, j);
      }
      for (std::size_t j = 0; j < n; ++j) kernels::axpy(logits(i, j) / sum, slice(v, j, h, dk), out);
    }
  }
  return matmul(concat, p.wl);
}

template Tensor<double> graph_attention(const Tensor<double>&, const BasicGraph<double>&,
                                        const BasicGraphAttentionParams<double>&, std::size_t, GraphAttentionCache*,
                                        std::vector<AttentionRecord>*);
template Tensor<float> graph_attention(const Tensor<float>&, const BasicGraph<float>&,
                                       const BasicGraphAttentionParams<float>&, std::size_t, GraphAttentionCache*,
                                       std::vector<AttentionRecord>*);
template Tensor<double> graph_attention_dense(const Tensor<double>&, const BasicGraph<double>&,
                                              const BasicGraphAttentionParams<double>&, std::size_t);
template Tensor<float> graph_attention_dense(const Tensor<float>&, const BasicGraph<float>&,
                                             const BasicGraphAttentionParams<float>&, std::size_t);

GraphAttentionGrads graph_attention_backward(const TokenTensor& dout, const SpatioTemporalGraph& g,
                                             const GraphAttentionParams& p, std::size_t heads,
                                             const GraphAttentionCache& c, GraphAttentionParams& grads) {
  const std::size_t n = dout.rows(), d = dout.cols();
  const std::size_t dk = checked_head_dim(d, heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  add_inplace(grads.wl, matmul_tn(c.concat, dout));
  const TokenTensor dconcat = matmul_nt(dout, p.wl);
  TokenTensor dq({n, d}), dkey({n, d}), dv({n, d});
  GraphAttentionGrads out;
  if (g.weighted) out.dweights = TokenTensor({n, n});
  std::vector<double> dlogit;
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto& nbrs = g.neighbors[i];
      if (nbrs.empty()) continue;
      const auto& pr = c.probs[h][i];
      const auto dci = slice(dconcat, i, h, dk);
      dlogit.assign(nbrs.size(), 0.0);
      double inner = 0.0;
      for (std::size_t s = 0; s < nbrs.size(); ++s) {
        const std::size_t j = nbrs[s];
        dlogit[s] = kernels::dot(dci, slice(c.v, j, h, dk));
        inner += pr[s] * dlogit[s];
        kernels::axpy(pr[s], dci, slice(dv, j, h, dk));
      }
      for (std::size_t s = 0; s < nbrs.size(); ++s) {
        const std::size_t j = nbrs[s];
        const double gl = pr[s] * (dlogit[s] - inner);
        const double w = g.weighted ? g.weights(i, j) : 1.0;
        const double coef = gl * scale * w;
        kernels::axpy(coef, slice(c.k, j, h, dk), slice(dq, i, h, dk));
        kernels::axpy(coef, slice(c.q, i, h, dk), slice(dkey, j, h, dk));
        if (g.weighted) {
          out.dweights(i, j) += gl * scale * kernels::dot(slice(c.q, i, h, dk), slice(c.k, j, h, dk));
        }
      }
    }
  }
  add_inplace(grads.wq, matmul_tn(c.input, dq));
  add_inplace(grads.wk, matmul_tn(c.input, dkey));
  add_inplace(grads.wv, matmul_tn(c.input, dv));
  out.dx = matmul_nt(dq, p.wq);
  add_inplace(out.dx, matmul_nt(dkey, p.wk));
  add_inplace(out.dx, matmul_nt(dv, p.wv));
  return out;
}

std::uint64_t attention_pair_cost(std::size_t head_dim) { return 4 * static_cast<std::uint64_t>(head_dim) + 5; }

AttentionFlops count_attention_flops(std::size_t nodes, std::size_t dim, std::size_t heads, std::size_t edges) {
  const std::size_t dk = checked_head_dim(dim, heads);
  const std::uint64_t n = nodes, d = dim, h = heads;
  AttentionFlops f;
  f.projection = 4 * (2 * n * d * d);
  f.sparse_attention = h * static_cast<std::uint64_t>(edges) * attention_pair_cost(dk);
  f.dense_attention = h * n * n * attention_pair_cost(dk);
  return f;
}

TokenTensor cross_frame_attention(const TokenTensor& x_g, const BlockParams& p, std::size_t heads, BlockCache* cache) {
  if (x_g.rank() != 2 || x_g.rows() < 1) throw DimensionError("cross_frame_attention needs m >= 1 global rows");
  return transformer_block(x_g, p, heads, cache);
}

TokenTensor fuse_global_local(const TokenTensor& x_g2, const TokenTensor& x_l2, const BlockParams& p,
                              std::size_t heads, BlockCache* cache) {
  if (x_g2.cols() != x_l2.cols()) {
    throw DimensionError("fusion width mismatch " + shape_string(x_g2.shape()) + " vs " + shape_string(x_l2.shape()));
  }
  TokenTensor x({x_g2.rows() + x_l2.rows(), x_g2.cols()});
  std::copy(x_g2.flat().begin(), x_g2.flat().end(), x.flat().begin());
  std::copy(x_l2.flat().begin(), x_l2.flat().end(), x.flat().begin() + static_cast<std::ptrdiff_t>(x_g2.size()));
  return transformer_block(x, p, heads, cache);
}

TokenTensor maxpool_sample(const TokenTensor& x_l2, const TokenTensor& x_g2, std::size_t grid, MaxPoolCache* cache) {
  const std::size_t m = x_g2.rows(), d = x_g2.cols(), n = grid, t = grid * grid;
  if (x_g2.rank() != 2 || x_l2.size() != m * t * d) {
    throw DimensionError("maxpool_sample local " + shape_string(x_l2.shape()) + " vs global " +
                         shape_string(x_g2.shape()) + " with grid " + std::to_string(n));
  }
  const std::size_t per_frame = 1 + 2 * n;
  TokenTensor out({m * per_frame, d});
  std::vector<std::uint32_t> argmax(m * 2 * n * d, 0);
  const double* local = x_l2.data();
  auto cell = [&](std::size_t f, std::size_t x, std::size_t y) { return f * t + y * n + x; };
  for (std::size_t f = 0; f < m; ++f) {
    auto g = out.row(f * per_frame);
    std::copy(x_g2.row(f).begin(), x_g2.row(f).end(), g.begin());
    for (std::size_t line = 0; line < n; ++line) {
      for (std::size_t ch = 0; ch < d; ++ch) {
        // Slot 1 + line: grid column x = line, maximize over y.
        std::size_t best_col = cell(f, line, 0);
        // Slot 1 + n + line: grid row y = line, maximize over x.
        std::size_t best_row = cell(f, 0, line);
        for (std::size_t s = 1; s < n; ++s) {
          const std::size_t c1 = cell(f, line, s), c2 = cell(f, s, line);
          if (local[c1 * d + ch] > local[best_col * d + ch]) best_col = c1;
          if (local[c2 * d + ch] > local[best_row * d + ch]) best_row = c2;
        }
        out(f * per_frame + 1 + line, ch) = local[best_col * d + ch];
        out(f * per_frame + 1 + n + line, ch) = local[best_row * d + ch];
        argmax[((f * 2 * n) + line) * d + ch] = static_cast<std::uint32_t>(best_col);
        argmax[((f * 2 * n) + n + line) * d + ch] = static_cast<std::uint32_t>(best_row);
      }
    }
  }
  if (cache) {
    cache->frames = m;
    cache->grid = n;
    cache->dim = d;
    cache->argmax = std::move(argmax);
  }
  return out;
}

void maxpool_sample_backward(const TokenTensor& dout, const MaxPoolCache& c, TokenTensor& dx_g2, TokenTensor& dx_l2) {
  const std::size_t n = c.grid, d = c.dim, per_frame = 1 + 2 * n;
  for (std::size_t f = 0; f < c.frames; ++f) {
    for (std::size_t ch = 0; ch < d; ++ch) dx_g2(f, ch) += dout(f * per_frame, ch);
    for (std::size_t slot = 0; slot < 2 * n; ++slot) {
      for (std::size_t ch = 0; ch < d; ++ch) {
        const std::size_t src = c.argmax[((f * 2 * n) + slot) * d + ch];
        dx_l2.flat()[src * d + ch] += dout(f * per_frame + 1 + slot, ch);
      }
    }
  }
}

}  // namespace stgt
