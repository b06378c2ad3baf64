#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "stgt/checkpoint.hpp"
#include "stgt/corpus.hpp"
#include "stgt/error.hpp"
#include "stgt/model.hpp"
#include "stgt/numerics.hpp"
#include "stgt/retrieval.hpp"
#include "stgt/train.hpp"
#include "testing.hpp"

namespace stgt {
namespace {

using testing::random_tensor;

CorpusConfig small_corpus(std::size_t count = 16) {
  CorpusConfig c;
  c.count = count;
  return c;
}

TrainOptions short_run(std::size_t s1 = 6, std::size_t s2 = 4) {
  TrainOptions o;
  o.batch = 8;
  o.steps_stage1 = s1;
  o.steps_stage2 = s2;
  o.learning_rate = 0.1;
  return o;
}

TEST(Corpus, RegenerationIsBitIdentical) {
  const auto a = gen_corpus(small_corpus()), b = gen_corpus(small_corpus());
  ASSERT_EQ(a.size(), 16u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.items[i].latent, b.items[i].latent);
    EXPECT_EQ(a.items[i].video_patches, b.items[i].video_patches);
    EXPECT_EQ(a.items[i].text_features, b.items[i].text_features);
  }
  auto other = small_corpus();
  other.seed = 8;
  EXPECT_NE(gen_corpus(other).items[0].latent, a.items[0].latent);
}

TEST(Corpus, NoiselessItemsWithEqualLatentsAreEqual) {
  auto cfg = small_corpus();
  cfg.noise_sigma = 0.0;
  const auto maps = make_corpus_maps(cfg);
  Rng r1 = Rng::stream(1, "noise"), r2 = Rng::stream(2, "noise");
  const std::vector<double> z{0.3, -1.0, 0.5, 0.0, 2.0, 0.1, -0.4, 0.9};
  const auto a = render_item(cfg, maps, z, r1), b = render_item(cfg, maps, z, r2);
  EXPECT_EQ(a.video_patches, b.video_patches);
  EXPECT_EQ(a.text_features, b.text_features);
}

TEST(Corpus, RenderOracle) {
  auto cfg = small_corpus();
  cfg.noise_sigma = 0.0;
  const auto maps = make_corpus_maps(cfg);
  Rng rng = Rng::stream(3, "noise");
  std::vector<double> z(cfg.latent_dim);
  for (std::size_t k = 0; k < z.size(); ++k) z[k] = 0.1 * static_cast<double>(k) - 0.3;
  const auto item = render_item(cfg, maps, z, rng);
  const std::size_t m = cfg.frames, n = cfg.grid, p = cfg.patch_dim, a = cfg.latent_dim;
  ASSERT_EQ(item.video_patches.size(), m * n * n * p);
  for (std::size_t f = 0; f < m; ++f) {
    const double s = static_cast<double>(f) / static_cast<double>(m - 1) * cfg.drift;
    std::vector<double> zf(a);
    for (std::size_t i = 0; i < a; ++i) {
      double dz = 0;
      for (std::size_t j = 0; j < a; ++j) dz += maps.drift(i, j) * z[j];
      zf[i] = z[i] + s * dz;
    }
    for (std::size_t cell = 0; cell < n * n; ++cell) {
      for (std::size_t r = 0; r < p; ++r) {
        double v = 0;
        for (std::size_t j = 0; j < a; ++j) v += maps.cell_maps[cell](r, j) * zf[j];
        EXPECT_NEAR(item.video_patches.flat()[((f * n * n) + cell) * p + r], v, 1e-12);
      }
    }
  }
  for (std::size_t r = 0; r < cfg.text_dim; ++r) {
    double v = 0;
    for (std::size_t j = 0; j < a; ++j) v += maps.text_map(r, j) * z[j];
    EXPECT_NEAR(item.text_features[r], v, 1e-12);
  }
}

TEST(Corpus, InvalidConfigRejected) {
  auto cfg = small_corpus(0);
  EXPECT_THROW(gen_corpus(cfg), ConfigError);
}

class PipelineTest : public ::testing::Test {
 protected:
  ModelConfig mcfg;
  SyntheticCorpus corpus = gen_corpus(small_corpus());
  StgtModel model{mcfg};
  ModelParams params = ModelParams::init(mcfg);
};

TEST_F(PipelineTest, EncodersAreDeterministicAndUnitNorm) {
  const auto v1 = model.encode_video(corpus.items[0], params, 0.5), v2 = model.encode_video(corpus.items[0], params, 0.5);
  EXPECT_EQ(v1, v2);
  double n2 = 0;
  for (double x : v1) n2 += x * x;
  EXPECT_NEAR(n2, 1.0, 1e-12);
  EXPECT_EQ(v1.size(), mcfg.embed_dim);
}

TEST_F(PipelineTest, ZeroParamsGiveDegenerateEmbeddings) {
  const auto zero = ModelParams::zeros(mcfg);
  EXPECT_THROW(model.encode_video(corpus.items[0], zero, 0.5), DegenerateEmbedding);
  EXPECT_THROW(model.encode_text(corpus.items[0], zero), DegenerateEmbedding);
}

TEST_F(PipelineTest, TextEncoderOracle) {
  const auto t = model.encode_text(corpus.items[3], params);
  TokenTensor f({1, mcfg.text_dim}, corpus.items[3].text_features);
  const auto z = l2_normalize_rows(matmul(f, params.text_w));
  for (std::size_t c = 0; c < t.size(); ++c) EXPECT_NEAR(t[c], z(0, c), 1e-12);
}

TEST_F(PipelineTest, IdentityLikeTextMapPassesFeaturesThrough) {
  ModelParams p = params;
  p.text_w = TokenTensor({mcfg.text_dim, mcfg.embed_dim});
  for (std::size_t i = 0; i < std::min(mcfg.text_dim, mcfg.embed_dim); ++i) p.text_w(i, i) = 1.0;
  const auto t = model.encode_text(corpus.items[1], p);
  const auto& f = corpus.items[1].text_features;
  double norm = 0;
  for (std::size_t i = 0; i < mcfg.embed_dim; ++i) norm += f[i] * f[i];
  for (std::size_t i = 0; i < mcfg.embed_dim; ++i) EXPECT_NEAR(t[i], f[i] / std::sqrt(norm), 1e-12);
}

TEST_F(PipelineTest, VideoEncoderIsLipschitzInPatches) {
  CorpusItem item = corpus.items[2];
  const auto base = model.encode_video(item, params, 0.1);
  double prev = 0;
  for (double delta : {1e-7, 1e-6, 1e-5}) {
    CorpusItem moved = item;
    moved.video_patches.flat()[5] += delta;
    const auto out = model.encode_video(moved, params, 0.1);
    double diff = 0;
    for (std::size_t i = 0; i < out.size(); ++i) diff = std::max(diff, std::abs(out[i] - base[i]));
    EXPECT_LT(diff, 1e3 * delta);
    EXPECT_GE(diff, prev);
    prev = diff;
  }
}

TEST_F(PipelineTest, ObjectiveGradientMatchesFiniteDifferences) {
  std::vector<const FrameTokens*> frames;
  std::vector<const CorpusItem*> items;
  std::vector<FrameTokens> owned;
  for (std::size_t i = 0; i < 4; ++i) owned.push_back(model.stub_tokens(corpus.items[i]));
  for (std::size_t i = 0; i < 4; ++i) {
    frames.push_back(&owned[i]);
    items.push_back(&corpus.items[i]);
  }
  const auto obj = model.objective(frames, items, params, 0.1, 0.0, 5.0, false);
  const auto theta = params.to_vector();
  const auto grads = obj.grads.to_vector();
  auto f = [&](const ParamVector& pv) {
    ModelParams p = params;
    p.load(pv);
    return model.objective(frames, items, p, 0.1, 0.0, 5.0, false, false, &obj.report.csal_weights).report.total;
  };
  // A handful of coordinates from every segment.
  std::vector<std::size_t> coords;
  for (const auto& seg : theta.segments()) {
    for (std::size_t k = 0; k < std::min<std::size_t>(seg.length, 2); ++k) coords.push_back(seg.offset + k * (seg.length / 2));
  }
  const auto num = finite_diff_grad_at(f, theta, coords, 1e-5);
  for (std::size_t k = 0; k < coords.size(); ++k) {
    const double a = grads.data()[coords[k]];
    EXPECT_LE(std::abs(a - num[k]) / std::max(1e-6, std::max(std::abs(a), std::abs(num[k]))), 1e-4) << coords[k];
  }
}

TEST(Retrieval, PerfectAlignment) {
  const auto e = TokenTensor::identity(12);
  const auto r = evaluate_retrieval(e, e);
  for (const auto* d : {&r.t2v, &r.v2t}) {
    EXPECT_EQ(d->r_at.at(1), 1.0);
    EXPECT_EQ(d->med_r, 1.0);
    EXPECT_EQ(d->r_mean, 1.0);
  }
}

TEST(Retrieval, AdversarialAlignment) {
  const auto v = TokenTensor::identity(12);
  TokenTensor t = v;
  for (auto& x : t.flat()) x = -x;
  const auto r = evaluate_retrieval(v, t);
  EXPECT_EQ(r.t2v.r_at.at(1), 0.0);
  EXPECT_EQ(r.t2v.r_at.at(10), 0.0);
  EXPECT_EQ(r.t2v.med_r, 12.0);
  EXPECT_EQ(r.v2t.ranks, std::vector<std::size_t>(12, 12));
}

TEST(Retrieval, TiesRankLowerIndexFirst) {
  // Every score equal: query i is outranked by the i lower-indexed candidates.
  const auto r = evaluate_retrieval(TokenTensor({4, 2}), TokenTensor({4, 2}));
  EXPECT_EQ(r.v2t.ranks, (std::vector<std::size_t>{1, 2, 3, 4}));
  EXPECT_EQ(r.v2t.med_r, 2.5);
}

TEST(Retrieval, ZeroCutoffRejected) { EXPECT_THROW(summarize_ranks({1, 2}, {0}), ConfigError); }

RetrievalResult brute_force(const TokenTensor& q, const TokenTensor& c) {
  const std::size_t b = q.rows();
  std::vector<std::size_t> ranks(b);
  for (std::size_t i = 0; i < b; ++i) {
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t j = 0; j < b; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < q.cols(); ++k) s += q(i, k) * c(j, k);
      scored.emplace_back(-s, j);
    }
    std::sort(scored.begin(), scored.end());
    for (std::size_t r = 0; r < b; ++r) {
      if (scored[r].second == i) ranks[i] = r + 1;
    }
  }
  RetrievalResult out;
  out.ranks = ranks;
  for (std::size_t k : {1, 5, 10}) {
    out.r_at[k] = static_cast<double>(std::count_if(ranks.begin(), ranks.end(), [&](auto r) { return r <= k; })) / b;
  }
  std::sort(ranks.begin(), ranks.end());
  out.med_r = 0.5 * static_cast<double>(ranks[(b - 1) / 2] + ranks[b / 2]);
  return out;
}

TEST(RetrievalProperty, MatchesBruteForceOracle) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto v = l2_normalize_rows(random_tensor({10, 4}, seed, "v"));
    const auto t = l2_normalize_rows(random_tensor({10, 4}, seed, "t"));
    const auto r = evaluate_retrieval(v, t);
    const auto o1 = brute_force(t, v), o2 = brute_force(v, t);
    EXPECT_EQ(r.t2v.ranks, o1.ranks);
    EXPECT_EQ(r.v2t.ranks, o2.ranks);
    for (std::size_t k : {1, 5, 10}) {
      EXPECT_EQ(r.t2v.r_at.at(k), o1.r_at.at(k));
      EXPECT_EQ(r.v2t.r_at.at(k), o2.r_at.at(k));
    }
    EXPECT_EQ(r.t2v.med_r, o1.med_r);
    EXPECT_EQ(r.v2t.med_r, o2.med_r);
  }
}

TEST(RetrievalProperty, InvariantToPositiveScaling) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto v = random_tensor({9, 3}, seed, "v");
    auto t = random_tensor({9, 3}, seed, "t");
    const auto a = evaluate_retrieval(v, t);
    for (auto& x : t.flat()) x *= 4.0;  // exact in binary, so no new ties
    const auto b = evaluate_retrieval(v, t);
    EXPECT_EQ(a.t2v.ranks, b.t2v.ranks);
    EXPECT_EQ(a.v2t.ranks, b.v2t.ranks);
  }
}

TEST_F(PipelineTest, ZeroLearningRateLeavesParamsUnchanged) {
  auto opts = short_run(3, 2);
  opts.learning_rate = 0.0;
  const auto res = Trainer(model, corpus, opts).run(params);
  EXPECT_FALSE(res.aborted);
  EXPECT_EQ(res.params, params);
  EXPECT_EQ(res.curve.size(), 5u);
}

TEST_F(PipelineTest, AlphaFlipsAtStageBoundary) {
  const Trainer tr(model, corpus, short_run(6, 4));
  EXPECT_EQ(tr.alpha_at(5), 1.0);
  EXPECT_EQ(tr.alpha_at(6), 0.0);
  EXPECT_EQ(tr.stage_at(5), 1);
  EXPECT_EQ(tr.stage_at(6), 2);
  const auto res = tr.run(params);
  ASSERT_EQ(res.curve.size(), 10u);
  EXPECT_EQ(res.curve[5].alpha, 1.0);
  EXPECT_EQ(res.curve[6].alpha, 0.0);
  EXPECT_EQ(res.curve[6].total, res.curve[6].csal);
  EXPECT_EQ(res.checkpoints.size(), 2u);
  EXPECT_EQ(res.checkpoints[0].step, 6u);
  EXPECT_EQ(res.checkpoints[0].stage, 2u);
}

TEST_F(PipelineTest, BatchesCoverEachEpochOnce) {
  const Trainer tr(model, corpus, short_run());
  std::vector<std::size_t> seen;
  for (std::size_t s = 0; s < 2; ++s) {
    const auto b = tr.batch_indices(s);
    seen.insert(seen.end(), b.begin(), b.end());
  }
  std::sort(seen.begin(), seen.end());
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(seen[i], i);
  EXPECT_EQ(tr.batch_indices(3), Trainer(model, corpus, short_run()).batch_indices(3));
}

TEST_F(PipelineTest, CosineScheduleEndpoints) {
  const Trainer tr(model, corpus, short_run(6, 4));
  EXPECT_EQ(tr.learning_rate_at(0), 0.1);
  EXPECT_NEAR(tr.learning_rate_at(5), 0.05, 1e-15);
}

TEST(Training, StageOneContrastiveLossDecreases) {
  const auto corpus = gen_corpus(CorpusConfig{});
  const ModelConfig mcfg;
  const StgtModel model(mcfg);
  TrainOptions opts;
  opts.batch = 8;
  opts.steps_stage1 = 200;
  opts.steps_stage2 = 1;
  opts.seed = 7;
  const auto res = train(model, corpus, ModelParams::init(mcfg), opts);
  ASSERT_FALSE(res.aborted);
  auto window_mean = [&](std::size_t from) {
    double s = 0;
    for (std::size_t k = from; k < from + 20; ++k) s += res.curve[k].vtc;
    return s / 20.0;
  };
  EXPECT_LT(window_mean(180), 0.5 * window_mean(0));
}

TEST_F(PipelineTest, NonFiniteUpdateAborts) {
  auto opts = short_run(3, 2);
  opts.learning_rate = 1e300;
  const auto res = Trainer(model, corpus, opts).run(params);
  EXPECT_TRUE(res.aborted);
  EXPECT_FALSE(res.diagnostic.empty());
  ASSERT_FALSE(res.checkpoints.empty());
  for (double v : res.checkpoints.back().values.data()) EXPECT_TRUE(std::isfinite(v));
}

TEST_F(PipelineTest, CheckpointRoundTripReproducesNextStep) {
  for (Optimizer opt : {Optimizer::Sgd, Optimizer::AdamW}) {
    auto opts = short_run(4, 3);
    opts.optimizer = opt;
    if (opt == Optimizer::AdamW) opts.learning_rate = 0.01;
    const Trainer tr(model, corpus, opts);
    const auto full = tr.run(params);
    ASSERT_EQ(full.checkpoints.size(), 2u);
    const auto ckpt = deserialize_checkpoint(serialize_checkpoint(full.checkpoints[0]));
    EXPECT_EQ(ckpt.values, full.checkpoints[0].values);
    EXPECT_EQ(ckpt.step, 4u);

    ModelParams restored = params.zeros_like();
    ParamVector model_part = restored.to_vector();
    for (const auto& seg : model_part.segments()) {
      const auto src = ckpt.values.values(seg.name);
      std::copy(src.begin(), src.end(), model_part.values(seg.name).begin());
    }
    restored.load(model_part);
    const auto next = tr.evaluate_step(restored, ckpt.step);
    EXPECT_EQ(next.report.total, full.curve[4].total);
    EXPECT_EQ(next.report.grads.video, tr.evaluate_step(restored, 4).report.grads.video);
    EXPECT_EQ(next.report.grad_norms, full.curve[4].grad_norms);

    const auto resumed = tr.resume(ckpt, params);
    EXPECT_EQ(resumed.params, full.params);
    ASSERT_EQ(resumed.curve.size(), 3u);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(resumed.curve[k], full.curve[4 + k]);
  }
}

TEST(Checkpoint, RejectsCorruptInput) {
  Checkpoint c;
  c.values.add_segment("w", {2});
  auto bytes = serialize_checkpoint(c);
  EXPECT_EQ(deserialize_checkpoint(bytes).values, c.values);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(bad), Error);
  bytes.pop_back();
  EXPECT_THROW(deserialize_checkpoint(bytes), Error);
}

TEST(Checkpoint, AtomicFileRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "stgt_ckpt_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  Checkpoint c;
  c.step = 42;
  c.stage = 2;
  c.config_json = "{\"seed\":7}";
  c.values.add_segment("log_tau", {1});
  c.values.values("log_tau")[0] = -2.5;
  save_checkpoint(dir / "a.ckpt", c);
  save_checkpoint(dir / "a.ckpt", c);  // overwrite in place
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir)) ++files;
  EXPECT_EQ(files, 1u);  // no temp file left behind
  const auto back = load_checkpoint(dir / "a.ckpt");
  EXPECT_EQ(back.step, 42u);
  EXPECT_EQ(back.stage, 2u);
  EXPECT_EQ(back.config_json, c.config_json);
  EXPECT_EQ(back.values, c.values);
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), Error);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace stgt
