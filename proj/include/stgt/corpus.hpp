#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "stgt/rng.hpp"
#include "stgt/tensor.hpp"

namespace stgt {

struct CorpusConfig {
  std::size_t count = 64;
  std::size_t latent_dim = 8;   // a
  std::size_t frames = 4;       // m
  std::size_t grid = 4;         // n
  std::size_t patch_dim = 12;   // p
  std::size_t text_dim = 16;    // q
  double noise_sigma = 0.1;
  double drift = 0.5;
  std::uint64_t seed = 7;

  void validate() const;
};

/// Seed-derived constant maps shared by every item of a corpus.
struct CorpusMaps {
  std::vector<TokenTensor> cell_maps;  // per grid cell, [p x a]
  TokenTensor drift;                   // [a x a]
  TokenTensor text_map;                // [q x a]
};

struct CorpusItem {
  std::vector<double> latent;   // [a]
  TokenTensor video_patches;    // [m x n x n x p]
  std::vector<double> text_features;  // [q]
};

struct SyntheticCorpus {
  CorpusConfig config;
  std::vector<CorpusItem> items;

  std::size_t size() const { return items.size(); }
};

CorpusMaps make_corpus_maps(const CorpusConfig& config);

/// Patch (f, y, x) = cell_map(y, x) * (latent + (f / max(m-1, 1)) * drift_scale * D * latent) + noise;
/// text = text_map * latent + noise. Noise draws come from `noise`.
CorpusItem render_item(const CorpusConfig& config, const CorpusMaps& maps, std::vector<double> latent, Rng& noise);

/// Deterministic in (config): regenerating yields bit-identical data.
SyntheticCorpus gen_corpus(const CorpusConfig& config);

}  // namespace stgt
