#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stgt/corpus.hpp"
#include "stgt/model.hpp"
#include "stgt/train.hpp"

namespace stgt {

enum class Precision { Float64, Float32 };

/// Every tunable of a run. JSON keys match the field names; see docs/formats.md.
struct RunConfig {
  std::uint64_t seed = 7;

  // corpus
  std::size_t count = 64;
  std::size_t latent_dim = 8;
  std::size_t frames = 4;
  std::size_t grid = 4;
  std::size_t patch_dim = 12;
  std::size_t text_dim = 16;
  double noise_sigma = 0.1;
  double drift = 0.5;

  // model
  std::size_t dim = 32;
  std::size_t embed_dim = 16;
  std::size_t heads = 2;
  std::size_t mlp_hidden = 64;
  std::string similarity = "cosine";  // cosine | dot
  std::string attention = "graph";    // graph | dense
  bool edge_weights = true;
  double threshold_train = 0.1;
  double threshold_eval = 0.5;
  double tau_init = kTauInit;

  // losses and schedule
  double gamma = kDefaultGamma;
  double alpha_stage1 = 1.0;
  double alpha_stage2 = 0.0;
  bool fractional_alpha = false;
  std::size_t batch = 16;
  std::size_t steps_stage1 = 200;
  std::size_t steps_stage2 = 100;
  double learning_rate = 0.2;
  std::string lr_schedule = "cosine";  // cosine | constant
  std::string optimizer = "sgd";       // sgd | adamw
  double weight_decay = 0.0;

  std::string precision = "float64";  // float64 | float32
  std::string kernels = "auto";       // auto | scalar | avx2
  std::string out_dir = "out";

  // evaluation and experiment sweeps
  std::vector<std::size_t> eval_ks{1, 5, 10};
  std::vector<double> sweep_thresholds;
  std::vector<double> sweep_gammas;
  std::vector<std::uint64_t> ablation_seeds;

  // gradcheck
  std::size_t gradcheck_seeds = 20;
  std::size_t gradcheck_batch = 8;
  double gradcheck_eps = 1e-5;
  std::size_t gradcheck_coords = 6;  // sampled coordinates per segment in the composition check

  // bench
  std::size_t bench_frames = 4;
  std::size_t bench_grid = 8;
  std::size_t bench_dim = 32;
  std::size_t bench_heads = 2;
  std::size_t bench_repeats = 5;
  std::vector<double> bench_thresholds{-1.1, 0.1, 0.3, 0.5, 0.7};
  std::string bench_precision = "float32";

  // dump-graph / dump-attention
  std::size_t dump_item = 0;

  nlohmann::json to_json() const;
  /// Overlays `j` onto this config; unknown keys and wrong types raise ConfigError.
  void apply_json(const nlohmann::json& j);
  void validate() const;

  CorpusConfig corpus_config() const;
  ModelConfig model_config() const;
  TrainOptions train_options() const;
  Precision precision_mode() const { return precision == "float32" ? Precision::Float32 : Precision::Float64; }

  static std::vector<std::string> keys();
};

/// Resolves defaults < file < environment (STGT_SEED, STGT_OUT_DIR) < overrides.
/// `env` maps variable names to values so tests need not touch the process environment.
RunConfig resolve_config(const std::string& file, const std::map<std::string, std::string>& env,
                         const nlohmann::json& overrides);

/// Reads STGT_SEED and STGT_OUT_DIR from the process environment.
std::map<std::string, std::string> process_env();

/// Parses "key=value" with the value read as JSON, falling back to a plain string.
std::pair<std::string, nlohmann::json> parse_assignment(const std::string& text);

}  // namespace stgt
