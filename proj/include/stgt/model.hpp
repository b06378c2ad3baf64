#pragma once

// Toy video-text aligner: frozen random stub encoders stand in for the
// pretrained towers; the learnable parts are the temporal embeddings, the
// STGT block, both projection heads and the temperature.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "stgt/corpus.hpp"
#include "stgt/embeddings.hpp"
#include "stgt/losses.hpp"
#include "stgt/stgt_block.hpp"

namespace stgt {

enum class AttentionMode { Graph, Dense };

struct ModelConfig {
  std::size_t frames = 4;      // m
  std::size_t grid = 4;        // n
  std::size_t patch_dim = 12;  // p
  std::size_t text_dim = 16;   // q
  std::size_t dim = 32;        // d
  std::size_t embed_dim = 16;  // e
  std::size_t heads = 2;       // h
  std::size_t mlp_hidden = 64;
  bool cosine_similarity = true;
  AttentionMode attention = AttentionMode::Graph;
  bool edge_weights = true;
  std::uint64_t seed = 7;

  std::size_t tokens_per_frame() const { return grid * grid; }
  std::size_t local_tokens() const { return frames * grid * grid; }
  void validate() const;
};

struct ModelParams {
  TokenTensor temporal;  // [m x d]
  BlockParams cross_frame;
  GraphAttentionParams graph;
  BlockParams fusion;
  TokenTensor proj_w, proj_b;  // [d x e], [e]
  TokenTensor text_w;          // [q x e]
  TokenTensor log_tau;         // [1]

  /// Seeded initialization: scaled Gaussian weights, unit LN gains, zero biases,
  /// log_tau = log(0.07).
  static ModelParams init(const ModelConfig& config);
  /// Same shapes, every entry zero (LN gains included).
  static ModelParams zeros(const ModelConfig& config);

  template <typename F>
  void visit(F&& f) {
    f("temporal", temporal);
    cross_frame.visit([&](const char* name, TokenTensor& t) { f(std::string("cross_frame.") + name, t); });
    f("graph.wq", graph.wq);
    f("graph.wk", graph.wk);
    f("graph.wv", graph.wv);
    f("graph.wl", graph.wl);
    fusion.visit([&](const char* name, TokenTensor& t) { f(std::string("fusion.") + name, t); });
    f("proj.w", proj_w);
    f("proj.b", proj_b);
    f("text.w", text_w);
    f("log_tau", log_tau);
  }

  template <typename F>
  void visit(F&& f) const {
    const_cast<ModelParams*>(this)->visit([&](const std::string& name, TokenTensor& t) {
      f(name, static_cast<const TokenTensor&>(t));
    });
  }

  ParamVector to_vector() const;
  /// Copies values by segment name; shapes must match this layout.
  void load(const ParamVector& v);
  ModelParams zeros_like() const;

  /// Top-level group of a segment name ("cross_frame.wq" -> "cross_frame").
  static std::string group_of(const std::string& segment);
  /// L2 norm per top-level group, in visit order.
  std::vector<std::pair<std::string, double>> group_norms() const;

  bool operator==(const ModelParams& other) const { return to_vector() == other.to_vector(); }
};

/// Stub per-frame token features before any embedding: row 0 stands in for
/// the [CLS] output, rows 1..n^2 for patch tokens in grid order.
using FrameTokens = std::vector<TokenTensor>;  // m entries of [(1+n^2) x d]

struct VideoCache {
  TokenTensor x_g, x_l;
  BlockCache cross;
  SpatioTemporalGraph graph;
  GraphAttentionCache graph_attn;
  BlockCache fusion;
  MaxPoolCache pool;
  TokenTensor pooled_mean;  // [1 x d]
};

struct ForwardOptions {
  double threshold = 0.1;
  std::vector<AttentionRecord>* records = nullptr;
};

struct BatchObjective {
  LossReport report;
  ModelParams grads;
  TokenTensor video_emb, text_emb;  // normalized, [B x e]
};

class StgtModel {
 public:
  explicit StgtModel(ModelConfig config);

  const ModelConfig& config() const noexcept { return config_; }
  const SpatialEmbeddingTable& spatial() const noexcept { return spatial_; }
  const TokenTensor& patch_map() const noexcept { return patch_map_; }

  /// Frozen stub encoder: local tokens = patches * patch_map; [CLS] = mean of
  /// the frame's local tokens.
  FrameTokens stub_tokens(const CorpusItem& item) const;

  /// Per-frame features with spatial and temporal embeddings added, split
  /// into x_g [m x d] and x_l [m*n^2 x d] (frame-major).
  void assemble(const FrameTokens& frames, const ModelParams& params, TokenTensor& x_g, TokenTensor& x_l) const;

  /// Unnormalized video embedding [1 x e].
  TokenTensor video_forward(const FrameTokens& frames, const ModelParams& params, const ForwardOptions& opts,
                            VideoCache* cache = nullptr) const;
  /// Accumulates into grads given d(loss)/d(unnormalized embedding).
  void video_backward(const TokenTensor& dz, const ModelParams& params, const VideoCache& cache,
                      ModelParams& grads) const;

  /// Unit-norm video embedding; throws DegenerateEmbedding for a zero vector.
  std::vector<double> encode_video(const CorpusItem& item, const ModelParams& params, double threshold) const;
  /// Unit-norm text embedding; throws DegenerateEmbedding for a zero vector.
  std::vector<double> encode_text(const CorpusItem& item, const ModelParams& params) const;

  /// Normalized embeddings of many items; zero rows stay zero.
  TokenTensor embed_videos(const std::vector<FrameTokens>& frames, const ModelParams& params, double threshold) const;
  TokenTensor embed_texts(const std::vector<const CorpusItem*>& items, const ModelParams& params) const;

  /// Encodes a batch, evaluates total_loss and backpropagates into all params.
  /// `frozen_csal_weights` pins the soft targets (used by gradient checks).
  BatchObjective objective(const std::vector<const FrameTokens*>& frames, const std::vector<const CorpusItem*>& items,
                           const ModelParams& params, double threshold, double alpha, double gamma,
                           bool fractional_alpha, bool with_grads = true,
                           const TokenTensor* frozen_csal_weights = nullptr) const;

 private:
  ModelConfig config_;
  SpatialEmbeddingTable spatial_;
  TokenTensor patch_map_;  // [p x d], frozen
};

}  // namespace stgt
