// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only if all pass.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "stgt/checkpoint.hpp"
#include "stgt/commands.hpp"
#include "stgt/config.hpp"
#include "stgt/graph.hpp"
#include "stgt/losses.hpp"
#include "stgt/numerics.hpp"
#include "stgt/retrieval.hpp"
#include "stgt/rng.hpp"
#include "stgt/stgt_block.hpp"
#include "stgt/train.hpp"

namespace {

using namespace stgt;
using Clock = std::chrono::steady_clock;

// Pinned tolerances and budgets.
constexpr double kSparseDenseTol = 1e-8;
constexpr double kSparseDenseBudgetS = 60.0;
constexpr double kGradBudgetS = 300.0;
constexpr double kGammaLimitTol = 1e-3;
constexpr double kGammaGapRatio = 10.0;
constexpr double kGammaMargin = 0.3;
constexpr double kRecallFloor = 0.9;
constexpr double kRetrievalBudgetS = 600.0;
constexpr double kDenseBenchDensity = 0.3;
constexpr std::size_t kBenchMinNodes = 256;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

TokenTensor gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed, const char* tag, double scale = 1.0) {
  Rng rng = Rng::stream(seed, tag);
  TokenTensor t({rows, cols});
  for (auto& v : t.flat()) v = scale * rng.normal();
  return t;
}

// The train-example configuration: 64 items, B=8, 200 + 100 steps, seed 7.
RunConfig train_example() {
  RunConfig c;
  c.batch = 8;
  c.steps_stage1 = 200;
  c.steps_stage2 = 100;
  c.seed = 7;
  return c;
}

struct Outcome {
  bool pass;
  std::string detail;
};

Outcome sparse_dense() {
  const auto t0 = Clock::now();
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng = Rng::stream(seed, "acceptance-config");
    const std::size_t m = 1 + rng.below(4), n = 1 + rng.below(4), h = 1 + rng.below(2);
    const std::size_t d = h * (1 + rng.below(16 / h));
    const double thr = std::vector<double>{-1.1, 0.1, 0.5}[rng.below(3)];
    const auto x = gaussian(m * n * n, d, seed, "x");
    const auto g = build_graph(x, m, n * n, thr);
    const GraphAttentionParams p{gaussian(d, d, seed, "wq", 0.5), gaussian(d, d, seed, "wk", 0.5),
                                 gaussian(d, d, seed, "wv", 0.5), gaussian(d, d, seed, "wl", 0.5)};
    worst = std::max(worst, max_abs_diff(graph_attention(x, g, p, h), graph_attention_dense(x, g, p, h)));
  }
  const double s = seconds_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof buf, "100 configs, max |sparse-dense| = %.3g (tol %.0e), %.2fs (budget %.0fs)", worst,
                kSparseDenseTol, s, kSparseDenseBudgetS);
  return {worst <= kSparseDenseTol && s < kSparseDenseBudgetS, buf};
}

Outcome gradients() {
  const auto t0 = Clock::now();
  RunConfig c;  // 20 seeds, B=8, eps 1e-5, float64
  c.gradcheck_seeds = 20;
  c.gradcheck_batch = 8;
  c.gradcheck_eps = 1e-5;
  const Report rep = run_gradcheck(c);
  const double s = seconds_since(t0);
  const Table& t = rep.table("segments");
  double worst = 0;
  std::string worst_name;
  for (const auto& row : t.rows) {
    const double e = row[t.column("max_rel_error")].get<double>();
    if (e >= worst) {
      worst = e;
      worst_name = row[0].get<std::string>();
    }
  }
  char buf[200];
  std::snprintf(buf, sizeof buf, "%zu segments, worst rel err %.3g in %s (tol %.0e), %.1fs (budget %.0fs)",
                t.rows.size(), worst, worst_name.c_str(), kGradcheckTolerance, s, kGradBudgetS);
  return {rep.exit_code == kExitOk && worst < kGradcheckTolerance && s < kGradBudgetS, buf};
}

// Batches are drawn from a narrow cone so off-diagonal cross logits sit just
// inside the margin; only batches with margin in [0.3, 0.45] are used.
Outcome gamma_limit() {
  std::size_t checked = 0;
  double worst_limit = 0, worst_ratio = std::numeric_limits<double>::infinity(), min_margin = 1;
  auto cone = [](std::uint64_t seed, const char* tag) {
    TokenTensor x = gaussian(8, 4, seed, tag, 0.35);
    for (std::size_t i = 0; i < 8; ++i) x(i, 0) += 1.0;
    return l2_normalize_rows(x);
  };
  for (std::uint64_t seed = 0; checked < 20 && seed < 100000; ++seed) {
    const EmbeddingPair p{cone(seed, "gv"), cone(seed, "gt"), std::log(0.07)};
    const auto c = cross_similarity_logits(matmul_nt(p.video, p.video), matmul_nt(p.text, p.text));
    double off = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < 8; ++i) {
      for (std::size_t j = 0; j < 8; ++j) {
        if (i != j) off = std::max(off, c(i, j));
      }
    }
    const double margin = 1.0 - off;
    if (margin < kGammaMargin || margin > kGammaMargin + 0.15) continue;
    ++checked;
    min_margin = std::min(min_margin, margin);
    const double vtc = vtc_loss(p).loss;
    const double gap50 = std::abs(csal_loss(p, 50.0).loss - vtc), gap3 = std::abs(csal_loss(p, 3.0).loss - vtc);
    worst_limit = std::max(worst_limit, gap50);
    worst_ratio = std::min(worst_ratio, gap3 / gap50);
  }
  char buf[320];
  std::snprintf(buf, sizeof buf,
                "%zu batches, margins in [%.3f, %.2f], max |csal(50)-vtc| = %.3g (tol %.0e), min gap(3)/gap(50) = %.3g (need %.0f)",
                checked, min_margin, kGammaMargin + 0.15, worst_limit, kGammaLimitTol, worst_ratio, kGammaGapRatio);
  return {checked == 20 && worst_limit < kGammaLimitTol && worst_ratio >= kGammaGapRatio, buf};
}

Outcome threshold_monotonicity() {
  const std::size_t m = 4, t = 16;
  const auto x = gaussian(m * t, 32, 7, "sweep");
  const auto mask = temporal_mask(m, t);
  const double mask_density = static_cast<double>(mask.count()) / static_cast<double>(m * t * m * t);
  bool mono = true;
  std::size_t prev = SIZE_MAX;
  for (int k = 0; k < 20; ++k) {
    const double thr = -1.2 + 2.4 * k / 19.0;
    const std::size_t e = build_graph(x, m, t, thr).adjacency.count();
    mono = mono && e <= prev;
    prev = e;
  }
  const double low = degree_stats(build_graph(x, m, t, -1.0).adjacency).density;
  const double high = degree_stats(build_graph(x, m, t, 1.0 + 1e-12).adjacency).density;
  char buf[200];
  std::snprintf(buf, sizeof buf, "20-point sweep monotone=%s, density(-1) = %.6g vs mask %.6g, density(>1) = %g",
                mono ? "yes" : "no", low, mask_density, high);
  return {mono && low == mask_density && high == 0.0, buf};
}

Outcome toy_retrieval() {
  const auto t0 = Clock::now();
  const RunOutcome o = train_and_evaluate(train_example());
  const double s = seconds_since(t0);
  const double t2v = o.retrieval.t2v.r_at.at(1), v2t = o.retrieval.v2t.r_at.at(1);
  char buf[160];
  std::snprintf(buf, sizeof buf, "R@1 t2v = %.4f, v2t = %.4f (floor %.1f), %.1fs (budget %.0fs)", t2v, v2t,
                kRecallFloor, s, kRetrievalBudgetS);
  return {t2v >= kRecallFloor && v2t >= kRecallFloor && s < kRetrievalBudgetS, buf};
}

Outcome ablation() {
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  double full = 0, graph_only = 0, dense = 0, full_v = 0, graph_v = 0, dense_v = 0;
  for (auto seed : seeds) {
    RunConfig f = train_example();
    f.seed = seed;
    RunConfig g = f;
    g.alpha_stage2 = 1.0;
    RunConfig d = g;
    d.attention = "dense";
    const auto rf = train_and_evaluate(f).retrieval, rg = train_and_evaluate(g).retrieval,
               rd = train_and_evaluate(d).retrieval;
    full += rf.t2v.r_mean;
    graph_only += rg.t2v.r_mean;
    dense += rd.t2v.r_mean;
    full_v += rf.v2t.r_mean;
    graph_v += rg.v2t.r_mean;
    dense_v += rd.v2t.r_mean;
  }
  const double n = static_cast<double>(seeds.size());
  char buf[240];
  std::snprintf(buf, sizeof buf,
                "mean t2v R-Mean over %zu seeds: full %.4f, graph-only %.4f, dense %.4f (v2t: %.4f, %.4f, %.4f)",
                seeds.size(), full / n, graph_only / n, dense / n, full_v / n, graph_v / n, dense_v / n);
  return {full >= graph_only && graph_only >= dense, buf};
}

Outcome flops_and_time() {
  RunConfig c;  // 4 frames of an 8x8 grid: N = 256 local tokens
  c.bench_thresholds = {-1.1, 0.1, 0.2, 0.3, 0.5, 0.7};
  const auto rows = bench_rows(c);
  bool flops_ok = true, time_ok = true;
  std::size_t timed = 0;
  double worst_speedup = 1e300;
  for (const auto& r : rows) {
    if (r.density < r.mask_density) flops_ok = flops_ok && r.sparse_flops < r.dense_flops;
    if (r.density <= kDenseBenchDensity && r.nodes >= kBenchMinNodes) {
      ++timed;
      time_ok = time_ok && r.sparse_ms < r.dense_ms;
      worst_speedup = std::min(worst_speedup, r.dense_ms / r.sparse_ms);
    }
  }
  char buf[640];
  std::snprintf(buf, sizeof buf, "N = %zu, FLOPs sparse < dense below mask density: %s; %zu timed rows at density <= %.1f, min speedup %.2fx",
                rows.front().nodes, flops_ok ? "yes" : "no", timed, kDenseBenchDensity, worst_speedup);
  return {flops_ok && time_ok && timed > 0 && rows.front().nodes >= kBenchMinNodes, buf};
}

Outcome determinism() {
  RunConfig c;
  c.count = 16;
  c.batch = 8;
  c.steps_stage1 = 4;
  c.steps_stage2 = 3;
  c.sweep_thresholds = {0.1, 0.5};
  const bool reports_equal = run_experiment(c).to_json().dump() == run_experiment(c).to_json().dump();

  const SyntheticCorpus corpus = gen_corpus(c.corpus_config());
  const StgtModel model(c.model_config());
  const Trainer tr(model, corpus, c.train_options());
  const ModelParams init = initial_params(c);
  const TrainResult full = tr.run(init);
  const Checkpoint ckpt = deserialize_checkpoint(serialize_checkpoint(full.checkpoints.at(0)));
  ModelParams restored = init.zeros_like();
  ParamVector v = restored.to_vector();
  for (const auto& seg : v.segments()) {
    const auto src = ckpt.values.values(seg.name);
    std::copy(src.begin(), src.end(), v.values(seg.name).begin());
  }
  restored.load(v);
  const auto next = tr.evaluate_step(restored, ckpt.step).report;
  const auto& want = full.curve.at(ckpt.step);
  const bool step_equal = next.vtc == want.vtc && next.csal == want.csal && next.total == want.total &&
                          next.tau == want.tau && next.grad_norms == want.grad_norms;
  const bool resume_equal = tr.resume(ckpt, init).params == full.params;
  char buf[160];
  std::snprintf(buf, sizeof buf, "repeat reports identical: %s; next-step LossReport after round-trip identical: %s; resume identical: %s",
                reports_equal ? "yes" : "no", step_equal ? "yes" : "no", resume_equal ? "yes" : "no");
  return {reports_equal && step_equal && resume_equal, buf};
}

Outcome retrieval_oracle() {
  std::size_t mismatches = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto v = l2_normalize_rows(gaussian(10, 4, seed, "rv")), t = l2_normalize_rows(gaussian(10, 4, seed, "rt"));
    const auto rep = evaluate_retrieval(v, t);
    for (int dir = 0; dir < 2; ++dir) {
      const TokenTensor& q = dir == 0 ? t : v;
      const TokenTensor& c = dir == 0 ? v : t;
      const RetrievalResult& got = dir == 0 ? rep.t2v : rep.v2t;
      std::vector<std::size_t> ranks(10);
      for (std::size_t i = 0; i < 10; ++i) {
        std::vector<std::pair<double, std::size_t>> scored;
        for (std::size_t j = 0; j < 10; ++j) {
          double s = 0;
          for (std::size_t k = 0; k < 4; ++k) s += q(i, k) * c(j, k);
          scored.emplace_back(-s, j);
        }
        std::sort(scored.begin(), scored.end());
        for (std::size_t r = 0; r < 10; ++r) {
          if (scored[r].second == i) ranks[i] = r + 1;
        }
      }
      if (ranks != got.ranks) ++mismatches;
      for (std::size_t k : {1, 5, 10}) {
        const double hits = static_cast<double>(std::count_if(ranks.begin(), ranks.end(), [&](auto r) { return r <= k; }));
        if (got.r_at.at(k) != hits / 10.0) ++mismatches;
      }
      std::sort(ranks.begin(), ranks.end());
      if (got.med_r != 0.5 * static_cast<double>(ranks[4] + ranks[5])) ++mismatches;
    }
  }
  char buf[120];
  std::snprintf(buf, sizeof buf, "50 batches of B=10, %zu mismatches against brute-force ranking", mismatches);
  return {mismatches == 0, buf};
}

}  // namespace

// Optional arguments select criteria by number; default runs all.
int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"sparse/dense equivalence", sparse_dense},
      {"gradient check", gradients},
      {"gamma limit", gamma_limit},
      {"threshold monotonicity", threshold_monotonicity},
      {"toy retrieval", toy_retrieval},
      {"ablation ordering", ablation},
      {"sparse cost", flops_and_time},
      {"determinism", determinism},
      {"retrieval oracle", retrieval_oracle},
  };
  std::vector<bool> selected(criteria.size(), argc <= 1);
  for (int a = 1; a < argc; ++a) {
    const long k = std::strtol(argv[a], nullptr, 10);
    if (k < 1 || k > static_cast<long>(criteria.size())) {
      std::fprintf(stderr, "unknown criterion '%s'\n", argv[a]);
      return 2;
    }
    selected[static_cast<std::size_t>(k - 1)] = true;
  }
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected[i]) continue;
    Outcome o{false, ""};
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%s] %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
