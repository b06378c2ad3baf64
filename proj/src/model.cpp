#include "stgt/model.hpp"

#include <cmath>
#include <map>

#include "stgt/numerics.hpp"
#include "stgt/rng.hpp"

namespace stgt {
namespace {

TokenTensor gaussian(Rng& rng, std::vector<std::size_t> shape, double stddev) {
  TokenTensor t(std::move(shape));
  for (auto& v : t.flat()) v = rng.normal() * stddev;
  return t;
}

BlockParams init_block(Rng& rng, std::size_t d, std::size_t hidden) {
  BlockParams p = BlockParams::zeros(d, hidden);
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  const double sh = 1.0 / std::sqrt(static_cast<double>(hidden));
  p.attn.wq = gaussian(rng, {d, d}, sd);
  p.attn.wk = gaussian(rng, {d, d}, sd);
  p.attn.wv = gaussian(rng, {d, d}, sd);
  p.attn.wo = gaussian(rng, {d, d}, sd);
  p.w1 = gaussian(rng, {d, hidden}, sd);
  p.w2 = gaussian(rng, {hidden, d}, sh);
  return p;
}

TokenTensor rows_slice(const TokenTensor& x, std::size_t begin, std::size_t count) {
  TokenTensor out({count, x.cols()});
  std::copy(x.row(begin).begin(), x.row(begin).begin() + static_cast<std::ptrdiff_t>(count * x.cols()),
            out.flat().begin());
  return out;
}

}  // namespace

void ModelConfig::validate() const {
  if (frames < 1 || grid < 1 || patch_dim < 1 || text_dim < 1 || embed_dim < 1 || mlp_hidden < 1) {
    throw ConfigError("model dimensions must all be >= 1");
  }
  if (dim == 0 || dim % 4 != 0) throw ConfigError("model dim must be a positive multiple of 4, got " + std::to_string(dim));
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("model dim " + std::to_string(dim) + " is not divisible by head count " + std::to_string(heads));
  }
}

ModelParams ModelParams::init(const ModelConfig& c) {
  c.validate();
  Rng rng = Rng::stream(c.seed, "model-init");
  ModelParams p;
  const double sd = 1.0 / std::sqrt(static_cast<double>(c.dim));
  p.temporal = gaussian(rng, {c.frames, c.dim}, 0.1);
  p.cross_frame = init_block(rng, c.dim, c.mlp_hidden);
  p.graph.wq = gaussian(rng, {c.dim, c.dim}, sd);
  p.graph.wk = gaussian(rng, {c.dim, c.dim}, sd);
  p.graph.wv = gaussian(rng, {c.dim, c.dim}, sd);
  p.graph.wl = gaussian(rng, {c.dim, c.dim}, sd);
  p.fusion = init_block(rng, c.dim, c.mlp_hidden);
  p.proj_w = gaussian(rng, {c.dim, c.embed_dim}, sd);
  p.proj_b = TokenTensor({c.embed_dim});
  p.text_w = gaussian(rng, {c.text_dim, c.embed_dim}, 1.0 / std::sqrt(static_cast<double>(c.text_dim)));
  p.log_tau = TokenTensor({1}, std::log(kTauInit));
  return p;
}

ModelParams ModelParams::zeros(const ModelConfig& c) {
  c.validate();
  return init(c).zeros_like();
}

ParamVector ModelParams::to_vector() const {
  ParamVector v;
  visit([&](const std::string& name, const TokenTensor& t) {
    v.add_segment(name, t.shape());
    std::copy(t.flat().begin(), t.flat().end(), v.values(name).begin());
  });
  return v;
}

void ModelParams::load(const ParamVector& v) {
  visit([&](const std::string& name, TokenTensor& t) {
    const auto vals = v.values(name);
    if (vals.size() != t.size()) {
      throw DimensionError("parameter '" + name + "' has " + std::to_string(vals.size()) + " values, expected " +
                           std::to_string(t.size()));
    }
    std::copy(vals.begin(), vals.end(), t.flat().begin());
  });
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z = *this;
  z.visit([](const std::string&, TokenTensor& t) { t.fill(0.0); });
  return z;
}

std::string ModelParams::group_of(const std::string& segment) {
  const auto dot = segment.find('.');
  return dot == std::string::npos ? segment : segment.substr(0, dot);
}

std::vector<std::pair<std::string, double>> ModelParams::group_norms() const {
  std::vector<std::pair<std::string, double>> out;
  visit([&](const std::string& name, const TokenTensor& t) {
    const std::string g = group_of(name);
    if (out.empty() || out.back().first != g) out.emplace_back(g, 0.0);
    for (double x : t.flat()) out.back().second += x * x;
  });
  for (auto& [name, sq] : out) sq = std::sqrt(sq);
  return out;
}

StgtModel::StgtModel(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  spatial_ = build_spatial_table(config_.grid, config_.dim);
  Rng rng = Rng::stream(config_.seed, "stub-vision");
  patch_map_ = gaussian(rng, {config_.patch_dim, config_.dim}, 1.0 / std::sqrt(static_cast<double>(config_.patch_dim)));
}

FrameTokens StgtModel::stub_tokens(const CorpusItem& item) const {
  const auto& c = config_;
  const auto& shape = item.video_patches.shape();
  if (shape != std::vector<std::size_t>{c.frames, c.grid, c.grid, c.patch_dim}) {
    throw ConfigError("video patches " + shape_string(shape) + " do not match model config [" +
                      std::to_string(c.frames) + "x" + std::to_string(c.grid) + "x" + std::to_string(c.grid) + "x" +
                      std::to_string(c.patch_dim) + "]");
  }
  const std::size_t t = c.tokens_per_frame();
  const TokenTensor patches = item.video_patches.reshaped({c.frames * t, c.patch_dim});
  const TokenTensor local = matmul(patches, patch_map_);
  FrameTokens frames;
  frames.reserve(c.frames);
  for (std::size_t f = 0; f < c.frames; ++f) {
    TokenTensor tokens({1 + t, c.dim});
    for (std::size_t k = 0; k < t; ++k) {
      const auto src = local.row(f * t + k);
      std::copy(src.begin(), src.end(), tokens.row(1 + k).begin());
      for (std::size_t j = 0; j < c.dim; ++j) tokens(0, j) += src[j];
    }
    for (std::size_t j = 0; j < c.dim; ++j) tokens(0, j) /= static_cast<double>(t);
    frames.push_back(std::move(tokens));
  }
  return frames;
}

void StgtModel::assemble(const FrameTokens& frames, const ModelParams& params, TokenTensor& x_g,
                         TokenTensor& x_l) const {
  const auto& c = config_;
  if (frames.size() != c.frames) throw DimensionError("expected " + std::to_string(c.frames) + " frames");
  const std::size_t t = c.tokens_per_frame();
  const TemporalEmbeddingTable temporal{c.frames, c.dim, params.temporal};
  x_g = TokenTensor({c.frames, c.dim});
  x_l = TokenTensor({c.frames * t, c.dim});
  for (std::size_t f = 0; f < c.frames; ++f) {
    const TokenTensor fv = assemble_frame(frames[f], spatial_, temporal, f + 1);
    std::copy(fv.row(0).begin(), fv.row(0).end(), x_g.row(f).begin());
    std::copy(fv.flat().begin() + static_cast<std::ptrdiff_t>(c.dim), fv.flat().end(), x_l.row(f * t).begin());
  }
}

TokenTensor StgtModel::video_forward(const FrameTokens& frames, const ModelParams& params, const ForwardOptions& opts,
                                     VideoCache* cache) const {
  const auto& c = config_;
  VideoCache local;
  VideoCache& vc = cache ? *cache : local;
  assemble(frames, params, vc.x_g, vc.x_l);
  const TokenTensor x_g2 = cross_frame_attention(vc.x_g, params.cross_frame, c.heads, cache ? &vc.cross : nullptr);
  if (c.attention == AttentionMode::Dense) {
    vc.graph = full_graph(c.frames, c.tokens_per_frame());
  } else {
    vc.graph = build_graph(vc.x_l, c.frames, c.tokens_per_frame(), opts.threshold, c.cosine_similarity);
    vc.graph.weighted = c.edge_weights;
  }
  const TokenTensor x_l2 =
      graph_attention(vc.x_l, vc.graph, params.graph, c.heads, cache ? &vc.graph_attn : nullptr, opts.records);
  const TokenTensor fused = fuse_global_local(x_g2, x_l2, params.fusion, c.heads, cache ? &vc.fusion : nullptr);
  const TokenTensor pooled = maxpool_sample(rows_slice(fused, c.frames, c.local_tokens()),
                                            rows_slice(fused, 0, c.frames), c.grid, cache ? &vc.pool : nullptr);
  TokenTensor mean({1, c.dim});
  for (std::size_t r = 0; r < pooled.rows(); ++r)
    for (std::size_t j = 0; j < c.dim; ++j) mean(0, j) += pooled(r, j);
  for (auto& v : mean.flat()) v /= static_cast<double>(pooled.rows());
  TokenTensor z = matmul(mean, params.proj_w);
  add_row_broadcast<double>(z, params.proj_b.flat());
  if (cache) vc.pooled_mean = std::move(mean);
  return z;
}

void StgtModel::video_backward(const TokenTensor& dz, const ModelParams& params, const VideoCache& vc,
                               ModelParams& grads) const {
  const auto& c = config_;
  const std::size_t t = c.tokens_per_frame(), n_local = c.local_tokens();
  add_inplace(grads.proj_w, matmul_tn(vc.pooled_mean, dz));
  for (std::size_t j = 0; j < c.embed_dim; ++j) grads.proj_b.flat()[j] += dz(0, j);
  const TokenTensor dmean = matmul_nt(dz, params.proj_w);

  const std::size_t pooled_rows = c.frames * (1 + 2 * c.grid);
  TokenTensor dpooled({pooled_rows, c.dim});
  for (std::size_t r = 0; r < pooled_rows; ++r)
    for (std::size_t j = 0; j < c.dim; ++j) dpooled(r, j) = dmean(0, j) / static_cast<double>(pooled_rows);
  TokenTensor dfused_g({c.frames, c.dim}), dfused_l({n_local, c.dim});
  maxpool_sample_backward(dpooled, vc.pool, dfused_g, dfused_l);

  TokenTensor dfused({c.frames + n_local, c.dim});
  std::copy(dfused_g.flat().begin(), dfused_g.flat().end(), dfused.flat().begin());
  std::copy(dfused_l.flat().begin(), dfused_l.flat().end(), dfused.flat().begin() + static_cast<std::ptrdiff_t>(dfused_g.size()));
  const TokenTensor dx = transformer_block_backward(dfused, params.fusion, c.heads, vc.fusion, grads.fusion);
  const TokenTensor dx_g2 = rows_slice(dx, 0, c.frames);
  const TokenTensor dx_l2 = rows_slice(dx, c.frames, n_local);

  GraphAttentionGrads ga = graph_attention_backward(dx_l2, vc.graph, params.graph, c.heads, vc.graph_attn, grads.graph);
  TokenTensor dx_l = std::move(ga.dx);
  if (vc.graph.weighted && !ga.dweights.empty()) {
    // W_s = F F^T with F the (optionally normalized) features; the cosine
    // diagonal is pinned to 1 and carries no gradient.
    TokenTensor sym({n_local, n_local});
    for (std::size_t i = 0; i < n_local; ++i)
      for (std::size_t j = 0; j < n_local; ++j) sym(i, j) = ga.dweights(i, j) + ga.dweights(j, i);
    if (c.cosine_similarity) {
      for (std::size_t i = 0; i < n_local; ++i) sym(i, i) = 0.0;
      const TokenTensor feats = l2_normalize_rows(vc.x_l);
      const TokenTensor dfeats = matmul(sym, feats);
      add_inplace(dx_l, l2_normalize_rows_backward(vc.x_l, feats, dfeats));
    } else {
      add_inplace(dx_l, matmul(sym, vc.x_l));
    }
  }
  const TokenTensor dx_g = transformer_block_backward(dx_g2, params.cross_frame, c.heads, vc.cross, grads.cross_frame);
  for (std::size_t f = 0; f < c.frames; ++f) {
    auto dt = grads.temporal.row(f);
    for (std::size_t j = 0; j < c.dim; ++j) dt[j] += dx_g(f, j);
    for (std::size_t k = 0; k < t; ++k)
      for (std::size_t j = 0; j < c.dim; ++j) dt[j] += dx_l(f * t + k, j);
  }
}

std::vector<double> StgtModel::encode_video(const CorpusItem& item, const ModelParams& params, double threshold) const {
  const TokenTensor z = video_forward(stub_tokens(item), params, {threshold, nullptr});
  if (row_norm<double>(z.row(0)) == 0.0) throw DegenerateEmbedding("video embedding is the zero vector");
  const TokenTensor v = l2_normalize_rows(z);
  return {v.flat().begin(), v.flat().end()};
}

std::vector<double> StgtModel::encode_text(const CorpusItem& item, const ModelParams& params) const {
  if (item.text_features.size() != config_.text_dim) {
    throw ConfigError("text features have length " + std::to_string(item.text_features.size()) + ", expected " +
                      std::to_string(config_.text_dim));
  }
  const TokenTensor f({1, config_.text_dim}, item.text_features);
  const TokenTensor z = matmul(f, params.text_w);
  if (row_norm<double>(z.row(0)) == 0.0) throw DegenerateEmbedding("text embedding is the zero vector");
  const TokenTensor t = l2_normalize_rows(z);
  return {t.flat().begin(), t.flat().end()};
}

TokenTensor StgtModel::embed_videos(const std::vector<FrameTokens>& frames, const ModelParams& params,
                                    double threshold) const {
  TokenTensor z({frames.size(), config_.embed_dim});
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const TokenTensor zi = video_forward(frames[i], params, {threshold, nullptr});
    std::copy(zi.flat().begin(), zi.flat().end(), z.row(i).begin());
  }
  return l2_normalize_rows(z);
}

TokenTensor StgtModel::embed_texts(const std::vector<const CorpusItem*>& items, const ModelParams& params) const {
  TokenTensor f({items.size(), config_.text_dim});
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i]->text_features.size() != config_.text_dim) throw ConfigError("text feature length mismatch");
    std::copy(items[i]->text_features.begin(), items[i]->text_features.end(), f.row(i).begin());
  }
  return l2_normalize_rows(matmul(f, params.text_w));
}

BatchObjective StgtModel::objective(const std::vector<const FrameTokens*>& frames,
                                    const std::vector<const CorpusItem*>& items, const ModelParams& params,
                                    double threshold, double alpha, double gamma, bool fractional_alpha,
                                    bool with_grads, const TokenTensor* frozen_csal_weights) const {
  const std::size_t b = frames.size();
  if (items.size() != b || b == 0) throw DimensionError("objective needs equally sized, non-empty batches");
  std::vector<VideoCache> caches(with_grads ? b : 0);
  TokenTensor zv({b, config_.embed_dim});
  for (std::size_t i = 0; i < b; ++i) {
    const TokenTensor zi = video_forward(*frames[i], params, {threshold, nullptr}, with_grads ? &caches[i] : nullptr);
    std::copy(zi.flat().begin(), zi.flat().end(), zv.row(i).begin());
  }
  TokenTensor f({b, config_.text_dim});
  for (std::size_t i = 0; i < b; ++i) {
    if (items[i]->text_features.size() != config_.text_dim) throw ConfigError("text feature length mismatch");
    std::copy(items[i]->text_features.begin(), items[i]->text_features.end(), f.row(i).begin());
  }
  const TokenTensor zt = matmul(f, params.text_w);

  BatchObjective out;
  out.video_emb = l2_normalize_rows(zv);
  out.text_emb = l2_normalize_rows(zt);
  const EmbeddingPair pair{out.video_emb, out.text_emb, params.log_tau.flat()[0]};
  out.report = total_loss(pair, alpha, gamma, fractional_alpha, frozen_csal_weights);
  if (!std::isfinite(out.report.total)) return out;
  if (!with_grads) return out;

  out.grads = params.zeros_like();
  const TokenTensor dzv = l2_normalize_rows_backward(zv, out.video_emb, out.report.grads.video);
  for (std::size_t i = 0; i < b; ++i) {
    TokenTensor dzi({1, config_.embed_dim});
    std::copy(dzv.row(i).begin(), dzv.row(i).end(), dzi.flat().begin());
    video_backward(dzi, params, caches[i], out.grads);
  }
  const TokenTensor dzt = l2_normalize_rows_backward(zt, out.text_emb, out.report.grads.text);
  add_inplace(out.grads.text_w, matmul_tn(f, dzt));
  out.grads.log_tau.flat()[0] += out.report.grads.log_tau;
  out.report.grad_norms = out.grads.group_norms();
  return out;
}

}  // namespace stgt
