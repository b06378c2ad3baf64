#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stgt/checkpoint.hpp"
#include "stgt/model.hpp"

namespace stgt {

enum class Optimizer { Sgd, AdamW };

struct TrainOptions {
  std::size_t batch = 16;
  std::size_t steps_stage1 = 200;
  std::size_t steps_stage2 = 100;
  double learning_rate = 0.2;
  bool cosine_decay = true;
  Optimizer optimizer = Optimizer::Sgd;
  double weight_decay = 0.0;  // AdamW only
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  double gamma = kDefaultGamma;
  double alpha_stage1 = 1.0;
  double alpha_stage2 = 0.0;
  bool fractional_alpha = false;
  double threshold = 0.1;
  std::uint64_t seed = 7;

  std::size_t total_steps() const { return steps_stage1 + steps_stage2; }
  void validate() const;
};

/// One training step's loss record, taken before the parameter update.
struct StepRecord {
  std::size_t step = 0;
  int stage = 1;
  double alpha = 1.0;
  double learning_rate = 0.0;
  double vtc = 0.0, csal = 0.0, total = 0.0, tau = 0.0;
  std::vector<std::pair<std::string, double>> grad_norms;

  bool operator==(const StepRecord&) const = default;
};

struct TrainResult {
  ModelParams params;
  std::vector<StepRecord> curve;
  std::vector<Checkpoint> checkpoints;  // one per completed stage
  bool aborted = false;
  std::string diagnostic;
};

/// Two-stage trainer: stage 1 optimizes total_loss with alpha_stage1, stage 2
/// with alpha_stage2. Batches and learning rates depend only on the step
/// index, so a run resumed from a checkpoint continues identically.
class Trainer {
 public:
  Trainer(const StgtModel& model, const SyntheticCorpus& corpus, TrainOptions options);

  const TrainOptions& options() const noexcept { return options_; }
  const std::vector<FrameTokens>& frames() const noexcept { return frames_; }

  std::vector<std::size_t> batch_indices(std::size_t step) const;
  int stage_at(std::size_t step) const { return step < options_.steps_stage1 ? 1 : 2; }
  double alpha_at(std::size_t step) const;
  double learning_rate_at(std::size_t step) const;

  /// Evaluates the objective at `params` for step `step` without updating.
  BatchObjective evaluate_step(const ModelParams& params, std::size_t step, bool with_grads = true) const;

  /// Runs steps [ckpt.step, total) starting from a checkpoint, or from `init` at step 0.
  TrainResult run(const ModelParams& init) const;
  TrainResult resume(const Checkpoint& ckpt, const ModelParams& layout) const;

  Checkpoint make_checkpoint(const ModelParams& params, std::size_t next_step, const ModelParams* adam_m,
                             const ModelParams* adam_v) const;

  std::string config_json;  // embedded into checkpoints

 private:
  TrainResult run_from(ModelParams params, std::size_t start, std::optional<ModelParams> adam_m,
                       std::optional<ModelParams> adam_v) const;

  const StgtModel& model_;
  const SyntheticCorpus& corpus_;
  TrainOptions options_;
  std::vector<FrameTokens> frames_;
};

TrainResult train(const StgtModel& model, const SyntheticCorpus& corpus, const ModelParams& init,
                  const TrainOptions& options);

}  // namespace stgt
