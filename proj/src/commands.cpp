#include "stgt/commands.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "stgt/checkpoint.hpp"
#include "stgt/error.hpp"
#include "stgt/graph.hpp"
#include "stgt/kernels.hpp"
#include "stgt/losses.hpp"
#include "stgt/rng.hpp"
#include "stgt/stgt_block.hpp"

namespace stgt {
namespace {

using nlohmann::json;

// Shortest text that parses back to the same double.
std::string exact(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string cell_text(const json& v, bool round_trip) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_float()) {
    if (round_trip) return exact(v.get<double>());
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v.get<double>());
    return buf;
  }
  return v.dump();
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<const CorpusItem*> item_ptrs(const SyntheticCorpus& corpus) {
  std::vector<const CorpusItem*> out;
  for (const auto& it : corpus.items) out.push_back(&it);
  return out;
}

std::vector<FrameTokens> all_frames(const StgtModel& model, const SyntheticCorpus& corpus) {
  std::vector<FrameTokens> out;
  out.reserve(corpus.size());
  for (const auto& it : corpus.items) out.push_back(model.stub_tokens(it));
  return out;
}

kernels::ScopedBackend backend_for(const RunConfig& config) {
  return kernels::ScopedBackend(kernels::parse_backend(config.kernels));
}

std::string config_json_text(const RunConfig& config) { return config.to_json().dump(); }

ModelParams load_params(const RunConfig& config, const std::string& path) {
  ModelParams params = initial_params(config);
  if (path.empty()) return params;
  const Checkpoint ck = load_checkpoint(path);
  try {
    params.load(ck.values);
  } catch (const DimensionError& e) {
    throw ConfigError(std::string("checkpoint does not match the configured model: ") + e.what());
  }
  return params;
}

std::vector<json> retrieval_row(const std::string& direction, const RetrievalResult& r,
                                const std::vector<std::size_t>& ks) {
  std::vector<json> row{direction};
  for (auto k : ks) row.push_back(r.r_at.at(k));
  row.push_back(r.med_r);
  row.push_back(r.r_mean);
  return row;
}

std::vector<std::string> retrieval_columns(const std::vector<std::size_t>& ks, const std::string& first) {
  std::vector<std::string> cols{first};
  for (auto k : ks) cols.push_back("R@" + std::to_string(k));
  cols.push_back("MedR");
  cols.push_back("R-Mean");
  return cols;
}

std::vector<std::size_t> report_ks(const RunConfig& config) {
  std::vector<std::size_t> ks = config.eval_ks;
  for (std::size_t k : {1, 5, 10}) ks.push_back(k);
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  return ks;
}

Table retrieval_table(const RunConfig& config, const RetrievalReport& r) {
  const auto ks = report_ks(config);
  Table t{"retrieval", retrieval_columns(ks, "direction"), {}};
  t.add_row(retrieval_row("t2v", r.t2v, ks));
  t.add_row(retrieval_row("v2t", r.v2t, ks));
  return t;
}

Table loss_curve_table(const TrainResult& result) {
  Table t{"loss_curve", {"step", "stage", "alpha", "lr", "vtc", "csal", "total", "tau"}, {}};
  if (!result.curve.empty()) {
    for (const auto& [name, v] : result.curve.front().grad_norms) t.columns.push_back("grad_norm." + name);
  }
  for (const auto& r : result.curve) {
    std::vector<json> row{r.step, r.stage, r.alpha, r.learning_rate, r.vtc, r.csal, r.total, r.tau};
    for (const auto& [name, v] : r.grad_norms) row.push_back(v);
    t.add_row(std::move(row));
  }
  return t;
}

std::uint64_t fingerprint(const SyntheticCorpus& corpus) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](std::span<const double> xs) {
    for (double x : xs) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &x, sizeof x);
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
      }
    }
  };
  for (const auto& it : corpus.items) {
    mix(it.latent);
    mix(it.video_patches.flat());
    mix(it.text_features);
  }
  return h;
}

Tensor<double> random_unit_rows(Rng& rng, std::size_t b, std::size_t e) {
  Tensor<double> t({b, e});
  for (auto& x : t.flat()) x = rng.normal();
  for (std::size_t i = 0; i < b; ++i) {
    double n = 0;
    for (double x : t.row(i)) n += x * x;
    n = std::sqrt(n);
    for (double& x : t.row(i)) x /= n;
  }
  return t;
}

// The oracle is always float64 central differences; with T = float only the
// analytic gradient runs in reduced precision.
template <typename T>
void loss_check(const RunConfig& config, std::uint64_t seed, bool csal, std::vector<std::pair<std::string, double>>& errs) {
  const std::size_t b = config.gradcheck_batch, e = config.embed_dim;
  Rng rng = Rng::stream(config.seed, csal ? "gradcheck-csal" : "gradcheck-vtc", seed);
  Tensor<double> video = random_unit_rows(rng, b, e);
  Tensor<double> text = random_unit_rows(rng, b, e);
  const double log_tau = std::log(0.05 + 0.1 * rng.uniform());
  const EmbeddingPair pair{video, text, log_tau};
  const Tensor<double> frozen = csal_weights(pair, config.gamma);
  auto eval = [&](const EmbeddingPair& p) { return csal ? csal_loss(p, config.gamma, &frozen) : vtc_loss(p); };

  const BasicEmbeddingPair<T> pair_t{cast<T>(video), cast<T>(text), static_cast<T>(log_tau)};
  const Tensor<T> frozen_t = cast<T>(frozen);
  const auto value = csal ? csal_loss(pair_t, static_cast<T>(config.gamma), &frozen_t) : vtc_loss(pair_t);

  const std::size_t n = b * e;
  std::vector<double> x(2 * n + 1);
  std::copy(video.flat().begin(), video.flat().end(), x.begin());
  std::copy(text.flat().begin(), text.flat().end(), x.begin() + n);
  x[2 * n] = log_tau;
  std::function<double(std::span<const double>)> f = [&](std::span<const double> v) {
    EmbeddingPair p{Tensor<double>({b, e}, std::vector<double>(v.begin(), v.begin() + n)),
                    Tensor<double>({b, e}, std::vector<double>(v.begin() + n, v.begin() + 2 * n)), v[2 * n]};
    return eval(p).loss;
  };
  const auto numeric = central_differences<double>(f, x, config.gradcheck_eps);
  auto rel = [&](std::span<const T> a, std::span<const double> num) {
    std::vector<double> ad(a.begin(), a.end());
    return max_relative_error(ad, num, kGradcheckFloor);
  };
  const std::string prefix = csal ? "csal." : "vtc.";
  const std::span<const double> nspan(numeric);
  errs.emplace_back(prefix + "video", rel(value.grads.video.flat(), nspan.subspan(0, n)));
  errs.emplace_back(prefix + "text", rel(value.grads.text.flat(), nspan.subspan(n, n)));
  const T lt = value.grads.log_tau;
  errs.emplace_back(prefix + "log_tau", rel(std::span<const T>(&lt, 1), nspan.subspan(2 * n, 1)));
}

}  // namespace

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const DimensionError*>(&e) ||
      dynamic_cast<const IndexError*>(&e)) {
    return kExitConfig;
  }
  if (dynamic_cast<const NumericError*>(&e) || dynamic_cast<const OracleError*>(&e) ||
      dynamic_cast<const DegenerateEmbedding*>(&e)) {
    return kExitNumeric;
  }
  return kExitOther;
}

void Table::add_row(std::vector<json> row) {
  if (row.size() != columns.size()) {
    throw DimensionError("table '" + name + "' row has " + std::to_string(row.size()) + " cells, expected " +
                         std::to_string(columns.size()));
  }
  rows.push_back(std::move(row));
}

std::size_t Table::column(const std::string& col) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == col) return i;
  }
  throw IndexError("table '" + name + "' has no column '" + col + "'");
}

std::string Table::to_text() const {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::size_t> width(columns.size());
  for (std::size_t c = 0; c < columns.size(); ++c) width[c] = columns[c].size();
  for (const auto& r : rows) {
    std::vector<std::string> line;
    for (std::size_t c = 0; c < r.size(); ++c) {
      line.push_back(cell_text(r[c], false));
      width[c] = std::max(width[c], line.back().size());
    }
    cells.push_back(std::move(line));
  }
  std::ostringstream os;
  os << "[" << name << "]\n";
  auto emit = [&](const std::vector<std::string>& line) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (c) os << "  ";
      os << line[c] << std::string(width[c] - line[c].size(), ' ');
    }
    os << "\n";
  };
  emit(columns);
  for (const auto& line : cells) emit(line);
  return os.str();
}

std::string Table::to_csv() const {
  std::ostringstream os;
  for (std::size_t c = 0; c < columns.size(); ++c) os << (c ? "," : "") << csv_escape(columns[c]);
  os << "\n";
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) os << (c ? "," : "") << csv_escape(cell_text(r[c], true));
    os << "\n";
  }
  return os.str();
}

const Table& Report::table(const std::string& name) const {
  for (const auto& t : tables) {
    if (t.name == name) return t;
  }
  throw IndexError("report '" + command + "' has no table '" + name + "'");
}

std::string Report::to_text() const {
  std::ostringstream os;
  os << "stgt " << command << "\n";
  os << "config: " << config.dump() << "\n";
  if (!summary.empty()) os << "summary: " << summary.dump() << "\n";
  for (const auto& t : tables) os << "\n" << t.to_text();
  os << "\nstatus: " << (exit_code == kExitOk ? "ok" : "FAILED") << " (exit " << exit_code << ")";
  if (!diagnostic.empty()) os << " " << diagnostic;
  os << "\n";
  return os.str();
}

json Report::to_json() const {
  json j{{"command", command}, {"config", config}, {"summary", summary}, {"exit_code", exit_code},
         {"diagnostic", diagnostic}};
  json tabs = json::object();
  for (const auto& t : tables) tabs[t.name] = {{"columns", t.columns}, {"rows", t.rows}};
  j["tables"] = tabs;
  return j;
}

void Report::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / (command + ".txt"), to_text());
  write_file_atomic(dir / (command + ".json"), to_json().dump(2) + "\n");
  for (const auto& t : tables) write_file_atomic(dir / (command + "." + t.name + ".csv"), t.to_csv());
}

ModelParams initial_params(const RunConfig& config) {
  ModelParams p = ModelParams::init(config.model_config());
  p.log_tau.flat()[0] = std::log(config.tau_init);
  return p;
}

RetrievalReport evaluate_params(const RunConfig& config, const StgtModel& model, const SyntheticCorpus& corpus,
                                const ModelParams& params, double threshold) {
  const auto frames = all_frames(model, corpus);
  const TokenTensor video = model.embed_videos(frames, params, threshold);
  const TokenTensor text = model.embed_texts(item_ptrs(corpus), params);
  return evaluate_retrieval(video, text, config.eval_ks);
}

RunOutcome train_and_evaluate(const RunConfig& config) {
  const SyntheticCorpus corpus = gen_corpus(config.corpus_config());
  const StgtModel model(config.model_config());
  Trainer trainer(model, corpus, config.train_options());
  trainer.config_json = config_json_text(config);
  RunOutcome out;
  out.train = trainer.run(initial_params(config));
  if (out.train.aborted) throw NumericError(out.train.diagnostic);
  out.retrieval = evaluate_params(config, model, corpus, out.train.params, config.threshold_eval);
  return out;
}

std::vector<SegmentCheck> check_composition(const StgtModel& model, const SyntheticCorpus& corpus,
                                            const ModelParams& params, const std::vector<std::size_t>& batch,
                                            double threshold, double alpha, double gamma, std::size_t coords,
                                            double eps, std::uint64_t seed) {
  std::vector<FrameTokens> frames;
  std::vector<const CorpusItem*> items;
  for (auto i : batch) {
    frames.push_back(model.stub_tokens(corpus.items.at(i)));
    items.push_back(&corpus.items.at(i));
  }
  std::vector<const FrameTokens*> fptrs;
  for (const auto& f : frames) fptrs.push_back(&f);

  const BatchObjective base = model.objective(fptrs, items, params, threshold, alpha, gamma, false, true);
  // The soft targets stay pinned at their base value, as in training.
  const TokenTensor frozen = base.report.csal_weights;
  const ParamVector theta = params.to_vector();
  const ParamVector grad = base.grads.to_vector();

  std::function<double(const ParamVector&)> f = [&](const ParamVector& v) {
    ModelParams p = params;
    p.load(v);
    return model.objective(fptrs, items, p, threshold, alpha, gamma, false, false, &frozen).report.total;
  };

  Rng rng = Rng::stream(seed, "gradcheck-coords");
  std::vector<SegmentCheck> out;
  for (const auto& seg : theta.segments()) {
    std::vector<std::size_t> pick;
    if (seg.length <= coords) {
      for (std::size_t i = 0; i < seg.length; ++i) pick.push_back(seg.offset + i);
    } else {
      std::vector<std::size_t> all(seg.length);
      for (std::size_t i = 0; i < seg.length; ++i) all[i] = i;
      for (std::size_t i = 0; i < coords; ++i) std::swap(all[i], all[i + rng.below(seg.length - i)]);
      for (std::size_t i = 0; i < coords; ++i) pick.push_back(seg.offset + all[i]);
      std::sort(pick.begin(), pick.end());
    }
    SegmentCheck c{seg.name, {}, finite_diff_grad_at(f, theta, pick, eps)};
    for (auto i : pick) c.analytic.push_back(grad.data()[i]);
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<BenchRow> bench_rows(const RunConfig& config) {
  const std::size_t m = config.bench_frames, t = config.bench_grid * config.bench_grid, d = config.bench_dim;
  const std::size_t n = m * t, h = config.bench_heads;
  Rng rng = Rng::stream(config.seed, "bench-tokens");
  TokenTensor x({n, d});
  for (auto& v : x.flat()) v = rng.normal();
  GraphAttentionParams p{TokenTensor({d, d}), TokenTensor({d, d}), TokenTensor({d, d}), TokenTensor({d, d})};
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (TokenTensor* w : {&p.wq, &p.wk, &p.wv, &p.wl}) {
    for (auto& v : w->flat()) v = scale * rng.normal();
  }
  const bool f32 = config.bench_precision == "float32";
  const Tensor<float> xf = cast<float>(x);
  const BasicGraphAttentionParams<float> pf{cast<float>(p.wq), cast<float>(p.wk), cast<float>(p.wv), cast<float>(p.wl)};

  using clock = std::chrono::steady_clock;
  auto best_ms = [&](auto&& fn) {
    double best = 1e300;
    for (std::size_t r = 0; r < config.bench_repeats; ++r) {
      const auto t0 = clock::now();
      fn();
      best = std::min(best, std::chrono::duration<double, std::milli>(clock::now() - t0).count());
    }
    return best;
  };

  std::vector<BenchRow> rows;
  for (double thr : config.bench_thresholds) {
    const SpatioTemporalGraph g = build_graph(x, m, t, thr, config.similarity == "cosine");
    BenchRow r;
    r.threshold = thr;
    r.nodes = n;
    r.edges = g.adjacency.count();
    r.mask_edges = temporal_mask(m, t).count();
    r.density = static_cast<double>(r.edges) / static_cast<double>(n * n);
    r.mask_density = static_cast<double>(r.mask_edges) / static_cast<double>(n * n);
    const AttentionFlops fl = count_attention_flops(n, d, h, r.edges);
    r.sparse_flops = fl.sparse_total();
    r.dense_flops = fl.dense_total();
    if (f32) {
      const auto gf = graph_cast<float>(g);
      Tensor<float> a, b;
      r.sparse_ms = best_ms([&] { a = graph_attention(xf, gf, pf, h); });
      r.dense_ms = best_ms([&] { b = graph_attention_dense(xf, gf, pf, h); });
      r.max_abs_diff = max_abs_diff(a, b);
    } else {
      TokenTensor a, b;
      r.sparse_ms = best_ms([&] { a = graph_attention(x, g, p, h); });
      r.dense_ms = best_ms([&] { b = graph_attention_dense(x, g, p, h); });
      r.max_abs_diff = max_abs_diff(a, b);
    }
    rows.push_back(r);
  }
  return rows;
}

Report run_gen_data(const RunConfig& config) {
  Report rep{"gen-data", config.to_json()};
  const SyntheticCorpus corpus = gen_corpus(config.corpus_config());
  Table t{"items", {"item", "latent_norm", "patch_mean", "patch_rms", "text_norm"}, {}};
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& it = corpus.items[i];
    double ln = 0, pm = 0, pr = 0, tn = 0;
    for (double v : it.latent) ln += v * v;
    for (double v : it.video_patches.flat()) {
      pm += v;
      pr += v * v;
    }
    for (double v : it.text_features) tn += v * v;
    const double cnt = static_cast<double>(it.video_patches.size());
    t.add_row({i, std::sqrt(ln), pm / cnt, std::sqrt(pr / cnt), std::sqrt(tn)});
  }
  rep.tables.push_back(std::move(t));
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fingerprint(corpus)));
  rep.summary = {{"items", corpus.size()}, {"fingerprint", hex}};
  return rep;
}

Report run_train(const RunConfig& config, const std::string& resume_path) {
  auto scope = backend_for(config);
  Report rep{"train", config.to_json()};
  const SyntheticCorpus corpus = gen_corpus(config.corpus_config());
  const StgtModel model(config.model_config());
  Trainer trainer(model, corpus, config.train_options());
  trainer.config_json = config_json_text(config);
  const ModelParams init = initial_params(config);
  TrainResult result = resume_path.empty() ? trainer.run(init) : trainer.resume(load_checkpoint(resume_path), init);

  const std::filesystem::path dir(config.out_dir);
  std::filesystem::create_directories(dir);
  std::vector<std::string> written;
  if (result.aborted) {
    save_checkpoint(dir / "last_good.ckpt", result.checkpoints.back());
    written.push_back("last_good.ckpt");
    rep.exit_code = kExitNumeric;
    rep.diagnostic = result.diagnostic;
  } else {
    for (const auto& ck : result.checkpoints) {
      const std::string name = ck.step >= trainer.options().total_steps() ? "final.ckpt" : "stage1.ckpt";
      save_checkpoint(dir / name, ck);
      written.push_back(name);
    }
  }
  rep.tables.push_back(loss_curve_table(result));
  rep.summary = {{"steps", result.curve.size()}, {"checkpoints", written}, {"aborted", result.aborted}};
  if (!result.curve.empty()) {
    rep.summary["final_total"] = result.curve.back().total;
    rep.summary["final_tau"] = result.curve.back().tau;
  }
  return rep;
}

Report run_eval(const RunConfig& config, const std::string& checkpoint_path) {
  auto scope = backend_for(config);
  Report rep{"eval", config.to_json()};
  const std::string path =
      checkpoint_path.empty() ? (std::filesystem::path(config.out_dir) / "final.ckpt").string() : checkpoint_path;
  const SyntheticCorpus corpus = gen_corpus(config.corpus_config());
  const StgtModel model(config.model_config());
  const ModelParams params = load_params(config, path);
  const RetrievalReport r = evaluate_params(config, model, corpus, params, config.threshold_eval);
  rep.tables.push_back(retrieval_table(config, r));
  rep.summary = {{"checkpoint", path}, {"threshold", config.threshold_eval}};
  return rep;
}

Report run_gradcheck(const RunConfig& config) {
  auto scope = backend_for(config);
  Report rep{"gradcheck", config.to_json()};
  const bool f32 = config.precision_mode() == Precision::Float32;
  const double loss_tol = f32 ? kGradcheckToleranceF32 : kGradcheckTolerance;

  std::map<std::string, double> worst;
  std::vector<std::string> order;
  auto note = [&](const std::string& name, double err) {
    if (!worst.count(name)) {
      order.push_back(name);
      worst[name] = 0.0;
    }
    worst[name] = std::max(worst[name], err);
  };

  for (std::size_t s = 0; s < config.gradcheck_seeds; ++s) {
    for (bool csal : {false, true}) {
      std::vector<std::pair<std::string, double>> errs;
      if (f32) {
        loss_check<float>(config, s, csal, errs);
      } else {
        loss_check<double>(config, s, csal, errs);
      }
      for (const auto& [name, e] : errs) note(name, e);
    }
  }

  // Composition through the model always runs in float64.
  const SyntheticCorpus corpus = gen_corpus(config.corpus_config());
  const StgtModel model(config.model_config());
  for (std::size_t s = 0; s < config.gradcheck_seeds; ++s) {
    ModelConfig mc = config.model_config();
    mc.seed = Rng::stream(config.seed, "gradcheck-params", s).next();
    ModelParams params = ModelParams::init(mc);
    params.log_tau.flat()[0] = std::log(config.tau_init);
    Rng pick = Rng::stream(config.seed, "gradcheck-batch", s);
    std::vector<std::size_t> idx(corpus.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = 0; i < config.gradcheck_batch; ++i) std::swap(idx[i], idx[i + pick.below(idx.size() - i)]);
    idx.resize(std::min(config.gradcheck_batch, corpus.size()));
    const double alpha = (s % 2 == 0) ? config.alpha_stage1 : config.alpha_stage2;
    const auto checks = check_composition(model, corpus, params, idx, config.threshold_train, alpha, config.gamma,
                                          config.gradcheck_coords, config.gradcheck_eps, mc.seed);
    for (const auto& c : checks) note("model." + c.segment, max_relative_error(c.analytic, c.numeric, kGradcheckFloor));
  }

  Table t{"segments", {"segment", "max_rel_error", "tolerance", "status"}, {}};
  std::string failed;
  for (const auto& name : order) {
    const bool model_seg = name.rfind("model.", 0) == 0;
    const double tol = model_seg ? kGradcheckTolerance : loss_tol;
    const bool ok = worst[name] < tol;
    if (!ok && failed.empty()) failed = name;
    t.add_row({name, worst[name], tol, ok ? "pass" : "FAIL"});
  }
  rep.tables.push_back(std::move(t));
  rep.summary = {{"precision", f32 ? "float32" : "float64"},
                 {"reduced_precision", f32},
                 {"seeds", config.gradcheck_seeds},
                 {"batch", config.gradcheck_batch},
                 {"eps", config.gradcheck_eps},
                 {"floor", kGradcheckFloor}};
  if (!failed.empty()) {
    rep.exit_code = kExitTolerance;
    rep.diagnostic = "tolerance breach in segment " + failed;
  }
  return rep;
}

Report run_bench(const RunConfig& config) {
  auto scope = backend_for(config);
  Report rep{"bench", config.to_json()};
  const auto rows = bench_rows(config);
  Table t{"sweep",
          {"threshold", "nodes", "edges", "density", "mask_density", "sparse_flops", "dense_flops", "sparse_ms",
           "dense_ms", "speedup", "max_abs_diff"},
          {}};
  std::string breach;
  for (const auto& r : rows) {
    t.add_row({r.threshold, r.nodes, r.edges, r.density, r.mask_density, r.sparse_flops, r.dense_flops, r.sparse_ms,
               r.dense_ms, r.dense_ms / r.sparse_ms, r.max_abs_diff});
    if (r.sparse_flops > r.dense_flops && breach.empty()) breach = "sparse FLOPs exceed dense FLOPs at threshold " + exact(r.threshold);
  }
  rep.tables.push_back(std::move(t));
  rep.summary = {{"precision", config.bench_precision},
                 {"kernels", kernels::active().name},
                 {"repeats", config.bench_repeats}};
  if (!breach.empty()) {
    rep.exit_code = kExitTolerance;
    rep.diagnostic = breach;
  }
  return rep;
}

Report run_experiment(const RunConfig& config) {
  auto scope = backend_for(config);
  Report rep{"experiment", config.to_json()};
  const SyntheticCorpus corpus = gen_corpus(config.corpus_config());
  const StgtModel model(config.model_config());
  Trainer trainer(model, corpus, config.train_options());
  trainer.config_json = config_json_text(config);
  const TrainResult base = trainer.run(initial_params(config));
  rep.tables.push_back(loss_curve_table(base));
  if (base.aborted) {
    rep.exit_code = kExitNumeric;
    rep.diagnostic = base.diagnostic;
    return rep;
  }
  const RetrievalReport r = evaluate_params(config, model, corpus, base.params, config.threshold_eval);
  rep.tables.push_back(retrieval_table(config, r));
  const auto ks = report_ks(config);

  auto sweep_columns = [&](const std::string& key) {
    std::vector<std::string> cols{key};
    for (const char* dir : {"t2v", "v2t"}) {
      for (auto c : retrieval_columns(ks, "")) {
        if (!c.empty()) cols.push_back(std::string(dir) + "." + c);
      }
    }
    cols.push_back("config");
    return cols;
  };
  auto sweep_row = [&](double key, const RetrievalReport& rr, const RunConfig& c) {
    std::vector<json> row{key};
    for (const RetrievalResult* res : {&rr.t2v, &rr.v2t}) {
      auto cells = retrieval_row("", *res, ks);
      row.insert(row.end(), cells.begin() + 1, cells.end());
    }
    row.push_back(config_json_text(c));
    return row;
  };

  if (!config.sweep_thresholds.empty()) {
    // The threshold only enters at evaluation; the trained parameters are shared.
    Table t{"threshold_sweep", sweep_columns("threshold_eval"), {}};
    for (double thr : config.sweep_thresholds) {
      RunConfig c = config;
      c.threshold_eval = thr;
      t.add_row(sweep_row(thr, evaluate_params(c, model, corpus, base.params, thr), c));
    }
    rep.tables.push_back(std::move(t));
  }
  if (!config.sweep_gammas.empty()) {
    Table t{"gamma_sweep", sweep_columns("gamma"), {}};
    for (double g : config.sweep_gammas) {
      RunConfig c = config;
      c.gamma = g;
      c.validate();
      const RunOutcome o = train_and_evaluate(c);
      t.add_row(sweep_row(g, o.retrieval, c));
    }
    rep.tables.push_back(std::move(t));
  }
  if (!config.ablation_seeds.empty()) {
    struct Variant {
      const char* name;
      RunConfig config;
    };
    Table runs{"ablation_runs", {"seed", "variant", "t2v.R@1", "t2v.R-Mean", "v2t.R@1", "v2t.R-Mean", "config"}, {}};
    std::map<std::string, std::pair<double, double>> sums;
    const std::vector<std::string> names{"full", "graph_only", "dense_baseline"};
    for (auto seed : config.ablation_seeds) {
      RunConfig full = config;
      full.seed = seed;
      RunConfig graph_only = full;
      graph_only.alpha_stage2 = 1.0;
      RunConfig dense = graph_only;
      dense.attention = "dense";
      for (const Variant& v : {Variant{"full", full}, Variant{"graph_only", graph_only}, Variant{"dense_baseline", dense}}) {
        const RunOutcome o = train_and_evaluate(v.config);
        runs.add_row({seed, v.name, o.retrieval.t2v.r_at.at(1), o.retrieval.t2v.r_mean, o.retrieval.v2t.r_at.at(1),
                      o.retrieval.v2t.r_mean, config_json_text(v.config)});
        sums[v.name].first += o.retrieval.t2v.r_mean;
        sums[v.name].second += o.retrieval.v2t.r_mean;
      }
    }
    const double n = static_cast<double>(config.ablation_seeds.size());
    Table means{"ablation_means", {"variant", "t2v.R-Mean", "v2t.R-Mean"}, {}};
    for (const auto& name : names) means.add_row({name, sums[name].first / n, sums[name].second / n});
    Table deltas{"ablation_deltas", {"comparison", "effect", "t2v.R-Mean_delta", "v2t.R-Mean_delta"}, {}};
    auto delta = [&](const std::string& a, const std::string& b, const char* effect) {
      deltas.add_row({a + " - " + b, effect, (sums[a].first - sums[b].first) / n, (sums[a].second - sums[b].second) / n});
    };
    delta("full", "graph_only", "csal stage");
    delta("graph_only", "dense_baseline", "graph topology");
    rep.tables.push_back(std::move(runs));
    rep.tables.push_back(std::move(means));
    rep.tables.push_back(std::move(deltas));
  }
  rep.summary = {{"steps", base.curve.size()}, {"threshold_eval", config.threshold_eval}};
  return rep;
}

Report run_dump_graph(const RunConfig& config, std::ostream& out, const std::string& checkpoint_path) {
  Report rep{"dump-graph", config.to_json()};
  const SyntheticCorpus corpus = gen_corpus(config.corpus_config());
  const StgtModel model(config.model_config());
  const ModelParams params = load_params(config, checkpoint_path);
  TokenTensor x_g, x_l;
  model.assemble(model.stub_tokens(corpus.items.at(config.dump_item)), params, x_g, x_l);
  const auto& mc = model.config();
  const SpatioTemporalGraph g = mc.attention == AttentionMode::Dense
                                    ? full_graph(mc.frames, mc.tokens_per_frame())
                                    : build_graph(x_l, mc.frames, mc.tokens_per_frame(), config.threshold_eval,
                                                  mc.cosine_similarity);
  write_graph_dump(out, g);
  const DegreeStats s = degree_stats(g.adjacency);
  rep.summary = {{"item", config.dump_item}, {"nodes", g.node_count}, {"edges", g.adjacency.count()},
                 {"density", s.density}, {"mean_degree", s.mean_degree}, {"isolated_nodes", s.isolated_nodes}};
  return rep;
}

Report run_dump_attention(const RunConfig& config, std::ostream& out, const std::string& checkpoint_path) {
  Report rep{"dump-attention", config.to_json()};
  const SyntheticCorpus corpus = gen_corpus(config.corpus_config());
  const StgtModel model(config.model_config());
  const ModelParams params = load_params(config, checkpoint_path);
  std::vector<AttentionRecord> records;
  ForwardOptions opts;
  opts.threshold = config.threshold_eval;
  opts.records = &records;
  model.video_forward(model.stub_tokens(corpus.items.at(config.dump_item)), params, opts);
  const auto& mc = model.config();
  out << json{{"kind", "stgt-attention"},
              {"version", 1},
              {"item", config.dump_item},
              {"heads", mc.heads},
              {"nodes", mc.local_tokens()},
              {"threshold", config.threshold_eval},
              {"records", records.size()}}
             .dump()
      << "\n";
  for (const auto& r : records) {
    out << json{{"head", r.head}, {"row", r.row}, {"kept", r.kept}, {"probs", r.probs}}.dump() << "\n";
  }
  rep.summary = {{"item", config.dump_item}, {"records", records.size()}};
  return rep;
}

}  // namespace stgt
