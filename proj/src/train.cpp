#include "stgt/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>

#include "stgt/rng.hpp"

namespace stgt {
namespace {

constexpr const char* kAdamM = "adam.m/";
constexpr const char* kAdamV = "adam.v/";

bool all_finite(const std::vector<std::pair<std::string, double>>& norms) {
  for (const auto& [name, v] : norms) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void clamp_log_tau(ModelParams& p) {
  double& lt = p.log_tau.flat()[0];
  lt = std::clamp(lt, std::log(kTauMin), std::log(kTauMax));
}

}  // namespace

void TrainOptions::validate() const {
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (steps_stage1 < 1 || steps_stage2 < 1) throw ConfigError("stage lengths must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be finite and >= 0");
  if (!(gamma > 0.0)) throw ConfigError("gamma must be greater than zero");
  for (double a : {alpha_stage1, alpha_stage2}) {
    if (a < 0.0 || a > 1.0) throw ConfigError("alpha must lie in [0, 1]");
    if (!fractional_alpha && a != 0.0 && a != 1.0) throw ConfigError("alpha must be 0 or 1 unless fractional_alpha is set");
  }
}

Trainer::Trainer(const StgtModel& model, const SyntheticCorpus& corpus, TrainOptions options)
    : model_(model), corpus_(corpus), options_(std::move(options)) {
  options_.validate();
  frames_.reserve(corpus.size());
  for (const auto& item : corpus.items) frames_.push_back(model.stub_tokens(item));
}

std::vector<std::size_t> Trainer::batch_indices(std::size_t step) const {
  const std::size_t count = corpus_.size();
  std::vector<std::size_t> out;
  if (options_.batch >= count) {
    for (std::size_t i = 0; i < count; ++i) out.push_back(i);
    return out;
  }
  // Walk a fresh seeded permutation per epoch; batch k covers positions
  // [k*B, (k+1)*B) of the concatenated epochs.
  std::size_t cached_epoch = SIZE_MAX;
  std::vector<std::size_t> perm(count);
  for (std::size_t k = 0; k < options_.batch; ++k) {
    const std::size_t pos = step * options_.batch + k;
    const std::size_t epoch = pos / count;
    if (epoch != cached_epoch) {
      for (std::size_t i = 0; i < count; ++i) perm[i] = i;
      Rng rng = Rng::stream(options_.seed, "batch-order", epoch);
      for (std::size_t i = count - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
      cached_epoch = epoch;
    }
    out.push_back(perm[pos % count]);
  }
  return out;
}

double Trainer::alpha_at(std::size_t step) const {
  return stage_at(step) == 1 ? options_.alpha_stage1 : options_.alpha_stage2;
}

double Trainer::learning_rate_at(std::size_t step) const {
  if (!options_.cosine_decay) return options_.learning_rate;
  const double progress = static_cast<double>(step) / static_cast<double>(options_.total_steps());
  return options_.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

BatchObjective Trainer::evaluate_step(const ModelParams& params, std::size_t step, bool with_grads) const {
  const auto idx = batch_indices(step);
  std::vector<const FrameTokens*> frames;
  std::vector<const CorpusItem*> items;
  for (auto i : idx) {
    frames.push_back(&frames_[i]);
    items.push_back(&corpus_.items[i]);
  }
  return model_.objective(frames, items, params, options_.threshold, alpha_at(step), options_.gamma,
                          options_.fractional_alpha, with_grads);
}

Checkpoint Trainer::make_checkpoint(const ModelParams& params, std::size_t next_step, const ModelParams* adam_m,
                                    const ModelParams* adam_v) const {
  Checkpoint ck;
  ck.step = next_step;
  ck.stage = static_cast<std::uint32_t>(next_step < options_.total_steps() ? stage_at(next_step) : 2);
  ck.config_json = config_json;
  ck.values = params.to_vector();
  if (adam_m && adam_v) {
    for (const auto& [prefix, state] : {std::pair{kAdamM, adam_m}, std::pair{kAdamV, adam_v}}) {
      state->visit([&](const std::string& name, const TokenTensor& t) {
        ck.values.add_segment(prefix + name, t.shape());
        std::copy(t.flat().begin(), t.flat().end(), ck.values.values(prefix + name).begin());
      });
    }
  }
  return ck;
}

TrainResult Trainer::run(const ModelParams& init) const { return run_from(init, 0, std::nullopt, std::nullopt); }

TrainResult Trainer::resume(const Checkpoint& ckpt, const ModelParams& layout) const {
  ModelParams params = layout;
  params.load(ckpt.values);
  std::optional<ModelParams> m, v;
  if (options_.optimizer == Optimizer::AdamW) {
    m = layout.zeros_like();
    v = layout.zeros_like();
    m->visit([&](const std::string& name, TokenTensor& t) {
      if (ckpt.values.has_segment(kAdamM + name)) {
        const auto src = ckpt.values.values(kAdamM + name);
        std::copy(src.begin(), src.end(), t.flat().begin());
      }
    });
    v->visit([&](const std::string& name, TokenTensor& t) {
      if (ckpt.values.has_segment(kAdamV + name)) {
        const auto src = ckpt.values.values(kAdamV + name);
        std::copy(src.begin(), src.end(), t.flat().begin());
      }
    });
  }
  return run_from(std::move(params), static_cast<std::size_t>(ckpt.step), std::move(m), std::move(v));
}

TrainResult Trainer::run_from(ModelParams params, std::size_t start, std::optional<ModelParams> adam_m,
                              std::optional<ModelParams> adam_v) const {
  TrainResult result;
  const bool adam = options_.optimizer == Optimizer::AdamW;
  if (adam && !adam_m) {
    adam_m = params.zeros_like();
    adam_v = params.zeros_like();
  }
  const std::size_t total = options_.total_steps();
  for (std::size_t step = start; step < total; ++step) {
    BatchObjective obj = evaluate_step(params, step, true);
    StepRecord rec;
    rec.step = step;
    rec.stage = stage_at(step);
    rec.alpha = alpha_at(step);
    rec.learning_rate = learning_rate_at(step);
    rec.vtc = obj.report.vtc;
    rec.csal = obj.report.csal;
    rec.total = obj.report.total;
    rec.tau = obj.report.tau;
    rec.grad_norms = obj.report.grad_norms;
    if (!std::isfinite(rec.total) || !all_finite(rec.grad_norms)) {
      result.aborted = true;
      result.diagnostic = "non-finite loss or gradient at step " + std::to_string(step) + " (total=" +
                          std::to_string(rec.total) + ")";
      result.checkpoints.push_back(make_checkpoint(params, step, adam ? &*adam_m : nullptr, adam ? &*adam_v : nullptr));
      result.params = std::move(params);
      return result;
    }
    const double lr = rec.learning_rate;
    if (adam) {
      const double t = static_cast<double>(step + 1);
      const double c1 = 1.0 - std::pow(options_.beta1, t);
      const double c2 = 1.0 - std::pow(options_.beta2, t);
      std::vector<std::span<double>> ms, vs, gs;
      adam_m->visit([&](const std::string&, TokenTensor& x) { ms.push_back(x.flat()); });
      adam_v->visit([&](const std::string&, TokenTensor& x) { vs.push_back(x.flat()); });
      obj.grads.visit([&](const std::string&, TokenTensor& x) { gs.push_back(x.flat()); });
      std::size_t k = 0;
      params.visit([&](const std::string& name, TokenTensor& x) {
        auto p = x.flat();
        const bool decay = name != "log_tau";
        for (std::size_t i = 0; i < p.size(); ++i) {
          const double g = gs[k][i];
          ms[k][i] = options_.beta1 * ms[k][i] + (1.0 - options_.beta1) * g;
          vs[k][i] = options_.beta2 * vs[k][i] + (1.0 - options_.beta2) * g * g;
          const double mhat = ms[k][i] / c1, vhat = vs[k][i] / c2;
          if (decay) p[i] -= lr * options_.weight_decay * p[i];
          p[i] -= lr * mhat / (std::sqrt(vhat) + options_.adam_eps);
        }
        ++k;
      });
    } else {
      std::vector<std::span<double>> gs;
      obj.grads.visit([&](const std::string&, TokenTensor& x) { gs.push_back(x.flat()); });
      std::size_t k = 0;
      params.visit([&](const std::string&, TokenTensor& x) {
        kernels::axpy(-lr, std::span<const double>(gs[k]), x.flat());
        ++k;
      });
    }
    clamp_log_tau(params);
    result.curve.push_back(std::move(rec));
    if (step + 1 == options_.steps_stage1 || step + 1 == total) {
      result.checkpoints.push_back(
          make_checkpoint(params, step + 1, adam ? &*adam_m : nullptr, adam ? &*adam_v : nullptr));
    }
  }
  result.params = std::move(params);
  return result;
}

TrainResult train(const StgtModel& model, const SyntheticCorpus& corpus, const ModelParams& init,
                  const TrainOptions& options) {
  return Trainer(model, corpus, options).run(init);
}

}  // namespace stgt
