#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "stgt/tensor.hpp"

namespace stgt {

/// Graph over all m*t local tokens, nodes in frame-major order.
///
/// The adjacency is kept twice: as a dense bit matrix (oracle path) and as
/// per-row ascending neighbor lists (sparse path). Both always agree.
template <typename T>
struct BasicGraph {
  std::size_t node_count = 0;
  std::size_t frames = 0;
  std::size_t tokens_per_frame = 0;
  double threshold = 0.0;
  /// False when edge weights are disabled; attention then uses plain logits.
  bool weighted = true;
  BitMatrix adjacency;
  Tensor<T> weights;  // W_s, [N x N]
  std::vector<std::vector<std::uint32_t>> neighbors;

  std::size_t frame_of(std::size_t node) const { return node / tokens_per_frame; }
  std::size_t edge_count() const { return adjacency.count(); }
};

using SpatioTemporalGraph = BasicGraph<double>;

struct DegreeStats {
  double mean_degree = 0.0;
  double density = 0.0;
  std::size_t isolated_nodes = 0;
};

/// Cosine similarity of all row pairs (normalize=true) or the raw Gram matrix.
/// In cosine mode the diagonal of every nonzero row is exactly 1.
TokenTensor token_similarity(const TokenTensor& x, bool normalize = true);

/// mask(i,j) = 1 iff |i/t - j/t| <= 1.
BitMatrix temporal_mask(std::size_t m, std::size_t t);

/// A(i,j) = 1 iff mask(i,j) = 1 and weights(i,j) >= threshold.
BitMatrix build_adjacency(const TokenTensor& weights, const BitMatrix& mask, double threshold);

/// Per-row ascending lists of set columns.
std::vector<std::vector<std::uint32_t>> adjacency_lists(const BitMatrix& adjacency);

/// Similarity, mask and threshold combined for features x_l[m*t x d].
SpatioTemporalGraph build_graph(const TokenTensor& x_l, std::size_t m, std::size_t t, double threshold,
                                bool normalize = true);

/// Graph whose adjacency is everything and whose weights are disabled; turns
/// graph attention into ordinary dense attention.
SpatioTemporalGraph full_graph(std::size_t m, std::size_t t);

DegreeStats degree_stats(const BitMatrix& adjacency);

template <typename To, typename From>
BasicGraph<To> graph_cast(const BasicGraph<From>& g) {
  BasicGraph<To> out;
  out.node_count = g.node_count;
  out.frames = g.frames;
  out.tokens_per_frame = g.tokens_per_frame;
  out.threshold = g.threshold;
  out.weighted = g.weighted;
  out.adjacency = g.adjacency;
  out.weights = cast<To>(g.weights);
  out.neighbors = g.neighbors;
  return out;
}

/// Newline-delimited JSON: one header object, then one object per node with
/// its neighbor indices and the matching W_s values.
void write_graph_dump(std::ostream& os, const SpatioTemporalGraph& g);

}  // namespace stgt
