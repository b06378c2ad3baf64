#include "stgt/graph.hpp"

#include <ostream>

#include <nlohmann/json.hpp>

#include "stgt/numerics.hpp"

namespace stgt {

TokenTensor token_similarity(const TokenTensor& x, bool normalize) {
  detail::require_rank2(x, "token_similarity");
  const TokenTensor feats = normalize ? l2_normalize_rows(x) : x;
  const std::size_t n = x.rows();
  TokenTensor w({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double s = kernels::dot(feats.row(i), feats.row(j));
      w(i, j) = s;
      w(j, i) = s;
    }
    if (normalize && row_norm<double>(x.row(i)) > 0.0) w(i, i) = 1.0;
  }
  return w;
}

BitMatrix temporal_mask(std::size_t m, std::size_t t) {
  if (m < 1 || t < 1) throw ConfigError("temporal_mask needs m >= 1 and t >= 1");
  const std::size_t n = m * t;
  BitMatrix mask(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t fi = i / t, fj = j / t;
      mask.set(i, j, (fi > fj ? fi - fj : fj - fi) <= 1);
    }
  }
  return mask;
}

BitMatrix build_adjacency(const TokenTensor& weights, const BitMatrix& mask, double threshold) {
  if (weights.rank() != 2 || weights.rows() != mask.rows() || weights.cols() != mask.cols()) {
    throw DimensionError("build_adjacency weights " + shape_string(weights.shape()) + " vs mask [" +
                         std::to_string(mask.rows()) + "x" + std::to_string(mask.cols()) + "]");
  }
  BitMatrix a(mask.rows(), mask.cols());
  for (std::size_t i = 0; i < mask.rows(); ++i)
    for (std::size_t j = 0; j < mask.cols(); ++j) a.set(i, j, mask.get(i, j) && weights(i, j) >= threshold);
  return a;
}

std::vector<std::vector<std::uint32_t>> adjacency_lists(const BitMatrix& adjacency) {
  std::vector<std::vector<std::uint32_t>> lists(adjacency.rows());
  for (std::size_t i = 0; i < adjacency.rows(); ++i) {
    for (std::size_t j = 0; j < adjacency.cols(); ++j) {
      if (adjacency.get(i, j)) lists[i].push_back(static_cast<std::uint32_t>(j));
    }
  }
  return lists;
}

SpatioTemporalGraph build_graph(const TokenTensor& x_l, std::size_t m, std::size_t t, double threshold,
                                bool normalize) {
  if (x_l.rank() != 2 || x_l.rows() != m * t) {
    throw DimensionError("build_graph features " + shape_string(x_l.shape()) + " vs m*t = " + std::to_string(m * t));
  }
  SpatioTemporalGraph g;
  g.node_count = m * t;
  g.frames = m;
  g.tokens_per_frame = t;
  g.threshold = threshold;
  g.weights = token_similarity(x_l, normalize);
  g.adjacency = build_adjacency(g.weights, temporal_mask(m, t), threshold);
  g.neighbors = adjacency_lists(g.adjacency);
  return g;
}

SpatioTemporalGraph full_graph(std::size_t m, std::size_t t) {
  SpatioTemporalGraph g;
  g.node_count = m * t;
  g.frames = m;
  g.tokens_per_frame = t;
  g.threshold = -std::numeric_limits<double>::infinity();
  g.weighted = false;
  g.adjacency = BitMatrix(g.node_count, g.node_count, true);
  g.weights = TokenTensor({g.node_count, g.node_count}, 1.0);
  g.neighbors = adjacency_lists(g.adjacency);
  return g;
}

DegreeStats degree_stats(const BitMatrix& adjacency) {
  DegreeStats s;
  const std::size_t n = adjacency.rows();
  if (n == 0) return s;
  std::size_t total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t deg = adjacency.row_count(i);
    total += deg;
    if (deg == 0) ++s.isolated_nodes;
  }
  s.mean_degree = static_cast<double>(total) / static_cast<double>(n);
  s.density = static_cast<double>(total) / (static_cast<double>(n) * static_cast<double>(adjacency.cols()));
  return s;
}

void write_graph_dump(std::ostream& os, const SpatioTemporalGraph& g) {
  const auto stats = degree_stats(g.adjacency);
  nlohmann::json header = {{"kind", "stgt-graph"},
                           {"version", 1},
                           {"nodes", g.node_count},
                           {"frames", g.frames},
                           {"tokens_per_frame", g.tokens_per_frame},
                           {"threshold", g.threshold},
                           {"edges", g.edge_count()},
                           {"density", stats.density},
                           {"isolated_nodes", stats.isolated_nodes}};
  os << header.dump() << '\n';
  for (std::size_t i = 0; i < g.node_count; ++i) {
    std::vector<double> w;
    w.reserve(g.neighbors[i].size());
    for (auto j : g.neighbors[i]) w.push_back(g.weights(i, j));
    nlohmann::json row = {{"node", i}, {"frame", g.frame_of(i)}, {"neighbors", g.neighbors[i]}, {"weights", w}};
    os << row.dump() << '\n';
  }
}

}  // namespace stgt
