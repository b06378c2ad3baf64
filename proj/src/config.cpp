#include "stgt/config.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "stgt/error.hpp"

namespace stgt {
namespace {

using nlohmann::json;

template <typename Config, typename F>
void for_each_field(Config& c, F&& f) {
  f("seed", c.seed);
  f("count", c.count);
  f("latent_dim", c.latent_dim);
  f("frames", c.frames);
  f("grid", c.grid);
  f("patch_dim", c.patch_dim);
  f("text_dim", c.text_dim);
  f("noise_sigma", c.noise_sigma);
  f("drift", c.drift);
  f("dim", c.dim);
  f("embed_dim", c.embed_dim);
  f("heads", c.heads);
  f("mlp_hidden", c.mlp_hidden);
  f("similarity", c.similarity);
  f("attention", c.attention);
  f("edge_weights", c.edge_weights);
  f("threshold_train", c.threshold_train);
  f("threshold_eval", c.threshold_eval);
  f("tau_init", c.tau_init);
  f("gamma", c.gamma);
  f("alpha_stage1", c.alpha_stage1);
  f("alpha_stage2", c.alpha_stage2);
  f("fractional_alpha", c.fractional_alpha);
  f("batch", c.batch);
  f("steps_stage1", c.steps_stage1);
  f("steps_stage2", c.steps_stage2);
  f("learning_rate", c.learning_rate);
  f("lr_schedule", c.lr_schedule);
  f("optimizer", c.optimizer);
  f("weight_decay", c.weight_decay);
  f("precision", c.precision);
  f("kernels", c.kernels);
  f("out_dir", c.out_dir);
  f("eval_ks", c.eval_ks);
  f("sweep_thresholds", c.sweep_thresholds);
  f("sweep_gammas", c.sweep_gammas);
  f("ablation_seeds", c.ablation_seeds);
  f("gradcheck_seeds", c.gradcheck_seeds);
  f("gradcheck_batch", c.gradcheck_batch);
  f("gradcheck_eps", c.gradcheck_eps);
  f("gradcheck_coords", c.gradcheck_coords);
  f("bench_frames", c.bench_frames);
  f("bench_grid", c.bench_grid);
  f("bench_dim", c.bench_dim);
  f("bench_heads", c.bench_heads);
  f("bench_repeats", c.bench_repeats);
  f("bench_thresholds", c.bench_thresholds);
  f("bench_precision", c.bench_precision);
  f("dump_item", c.dump_item);
}

template <typename T>
void read_value(const std::string& key, const json& v, T& out) {
  auto bad = [&](const char* want) {
    throw ConfigError("config key '" + key + "' expects " + want + ", got " + v.dump());
  };
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) bad("a boolean");
    out = v.get<bool>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) bad("a string");
    out = v.get<std::string>();
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) bad("a number");
    out = v.get<T>();
  } else if constexpr (std::is_integral_v<T>) {
    const bool ok = v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
    if (!ok) bad("a non-negative integer");
    out = v.get<T>();
  } else {
    if (!v.is_array()) bad("a list");
    T values;
    for (const auto& e : v) {
      typename T::value_type x{};
      read_value(key, e, x);
      values.push_back(x);
    }
    out = std::move(values);
  }
}

void require_choice(const std::string& key, const std::string& value, std::initializer_list<const char*> allowed) {
  for (const char* a : allowed) {
    if (value == a) return;
  }
  std::string list;
  for (const char* a : allowed) list += std::string(list.empty() ? "" : "|") + a;
  throw ConfigError("config key '" + key + "' must be one of " + list + ", got '" + value + "'");
}

}  // namespace

json RunConfig::to_json() const {
  json j = json::object();
  for_each_field(*this, [&](const char* name, const auto& value) { j[name] = value; });
  return j;
}

void RunConfig::apply_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  const auto known = keys();
  const std::set<std::string> known_set(known.begin(), known.end());
  for (const auto& [key, value] : j.items()) {
    if (!known_set.count(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  for_each_field(*this, [&](const char* name, auto& field) {
    if (auto it = j.find(name); it != j.end()) read_value(name, *it, field);
  });
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  RunConfig c;
  for_each_field(c, [&](const char* name, const auto&) { out.emplace_back(name); });
  return out;
}

void RunConfig::validate() const {
  require_choice("similarity", similarity, {"cosine", "dot"});
  require_choice("attention", attention, {"graph", "dense"});
  require_choice("lr_schedule", lr_schedule, {"cosine", "constant"});
  require_choice("optimizer", optimizer, {"sgd", "adamw"});
  require_choice("precision", precision, {"float64", "float32"});
  require_choice("bench_precision", bench_precision, {"float64", "float32"});
  require_choice("kernels", kernels, {"auto", "scalar", "avx2"});
  if (!std::isfinite(threshold_train) || !std::isfinite(threshold_eval)) throw ConfigError("thresholds must be finite");
  if (!(tau_init >= kTauMin && tau_init <= kTauMax)) throw ConfigError("tau_init must lie in [0.001, 0.5]");
  if (eval_ks.empty()) throw ConfigError("eval_ks must not be empty");
  for (auto k : eval_ks) {
    if (k < 1) throw ConfigError("eval_ks entries must be >= 1");
  }
  for (double g : sweep_gammas) {
    if (!(g > 0.0)) throw ConfigError("gamma must be greater than zero");
  }
  if (gradcheck_seeds < 1 || gradcheck_batch < 2) throw ConfigError("gradcheck needs >= 1 seed and batch >= 2");
  if (!(gradcheck_eps > 0.0)) throw ConfigError("gradcheck_eps must be > 0");
  if (bench_frames < 1 || bench_grid < 1 || bench_dim < 1 || bench_heads < 1 || bench_repeats < 1) {
    throw ConfigError("bench sizes must be >= 1");
  }
  if (bench_dim % bench_heads != 0) throw ConfigError("bench_dim must be divisible by bench_heads");
  if (dump_item >= count) throw ConfigError("dump_item must be < count");
  corpus_config().validate();
  model_config().validate();
  train_options().validate();
}

CorpusConfig RunConfig::corpus_config() const {
  CorpusConfig c;
  c.count = count;
  c.latent_dim = latent_dim;
  c.frames = frames;
  c.grid = grid;
  c.patch_dim = patch_dim;
  c.text_dim = text_dim;
  c.noise_sigma = noise_sigma;
  c.drift = drift;
  c.seed = seed;
  return c;
}

ModelConfig RunConfig::model_config() const {
  ModelConfig c;
  c.frames = frames;
  c.grid = grid;
  c.patch_dim = patch_dim;
  c.text_dim = text_dim;
  c.dim = dim;
  c.embed_dim = embed_dim;
  c.heads = heads;
  c.mlp_hidden = mlp_hidden;
  c.cosine_similarity = similarity == "cosine";
  c.attention = attention == "dense" ? AttentionMode::Dense : AttentionMode::Graph;
  c.edge_weights = edge_weights;
  c.seed = seed;
  return c;
}

TrainOptions RunConfig::train_options() const {
  TrainOptions o;
  o.batch = batch;
  o.steps_stage1 = steps_stage1;
  o.steps_stage2 = steps_stage2;
  o.learning_rate = learning_rate;
  o.cosine_decay = lr_schedule == "cosine";
  o.optimizer = optimizer == "adamw" ? Optimizer::AdamW : Optimizer::Sgd;
  o.weight_decay = weight_decay;
  o.gamma = gamma;
  o.alpha_stage1 = alpha_stage1;
  o.alpha_stage2 = alpha_stage2;
  o.fractional_alpha = fractional_alpha;
  o.threshold = threshold_train;
  o.seed = seed;
  return o;
}

RunConfig resolve_config(const std::string& file, const std::map<std::string, std::string>& env,
                         const json& overrides) {
  RunConfig c;
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open config file '" + file + "'");
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("config file '" + file + "' is not valid JSON: " + e.what());
    }
    c.apply_json(j);
  }
  if (auto it = env.find("STGT_SEED"); it != env.end()) {
    const std::string& s = it->second;
    char* end = nullptr;
    errno = 0;
    const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
    if (s.empty() || *end != '\0' || errno != 0 || s[0] == '-') throw ConfigError("STGT_SEED must be a non-negative integer");
    c.seed = v;
  }
  if (auto it = env.find("STGT_OUT_DIR"); it != env.end()) c.out_dir = it->second;
  if (!overrides.is_null()) c.apply_json(overrides);
  c.validate();
  return c;
}

std::map<std::string, std::string> process_env() {
  std::map<std::string, std::string> env;
  for (const char* name : {"STGT_SEED", "STGT_OUT_DIR"}) {
    if (const char* v = std::getenv(name)) env[name] = v;
  }
  return env;
}

std::pair<std::string, json> parse_assignment(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("expected key=value, got '" + text + "'");
  const std::string key = text.substr(0, eq);
  const std::string raw = text.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  return {key, value};
}

}  // namespace stgt
