#include "stgt/corpus.hpp"

#include <cmath>
#include <string>

#include "stgt/error.hpp"

namespace stgt {
namespace {

TokenTensor gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols, double stddev) {
  TokenTensor t({rows, cols});
  for (auto& v : t.flat()) v = rng.normal() * stddev;
  return t;
}

std::vector<double> apply_map(const TokenTensor& map, const std::vector<double>& x) {
  std::vector<double> out(map.rows(), 0.0);
  for (std::size_t i = 0; i < map.rows(); ++i)
    for (std::size_t j = 0; j < map.cols(); ++j) out[i] += map(i, j) * x[j];
  return out;
}

}  // namespace

void CorpusConfig::validate() const {
  if (count < 2) throw ConfigError("corpus count must be >= 2, got " + std::to_string(count));
  if (latent_dim < 1 || frames < 1 || grid < 1 || patch_dim < 1 || text_dim < 1) {
    throw ConfigError("corpus dimensions must all be >= 1");
  }
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw ConfigError("noise_sigma must be finite and >= 0");
}

CorpusMaps make_corpus_maps(const CorpusConfig& c) {
  Rng rng = Rng::stream(c.seed, "corpus-maps");
  CorpusMaps maps;
  const double s = 1.0 / std::sqrt(static_cast<double>(c.latent_dim));
  for (std::size_t k = 0; k < c.grid * c.grid; ++k) maps.cell_maps.push_back(gaussian_matrix(rng, c.patch_dim, c.latent_dim, s));
  maps.drift = gaussian_matrix(rng, c.latent_dim, c.latent_dim, s);
  maps.text_map = gaussian_matrix(rng, c.text_dim, c.latent_dim, s);
  return maps;
}

CorpusItem render_item(const CorpusConfig& c, const CorpusMaps& maps, std::vector<double> latent, Rng& noise) {
  if (latent.size() != c.latent_dim) throw DimensionError("latent length mismatch");
  CorpusItem item;
  item.video_patches = TokenTensor({c.frames, c.grid, c.grid, c.patch_dim});
  const std::vector<double> drifted = apply_map(maps.drift, latent);
  const double denom = static_cast<double>(std::max<std::size_t>(c.frames - 1, 1));
  std::vector<double> frame_latent(c.latent_dim);
  double* out = item.video_patches.data();
  for (std::size_t f = 0; f < c.frames; ++f) {
    const double step = c.drift * static_cast<double>(f) / denom;
    for (std::size_t a = 0; a < c.latent_dim; ++a) frame_latent[a] = latent[a] + step * drifted[a];
    for (std::size_t cell = 0; cell < c.grid * c.grid; ++cell) {
      const auto patch = apply_map(maps.cell_maps[cell], frame_latent);
      for (double v : patch) *out++ = v + c.noise_sigma * noise.normal();
    }
  }
  item.text_features = apply_map(maps.text_map, latent);
  for (auto& v : item.text_features) v += c.noise_sigma * noise.normal();
  item.latent = std::move(latent);
  return item;
}

SyntheticCorpus gen_corpus(const CorpusConfig& c) {
  c.validate();
  const CorpusMaps maps = make_corpus_maps(c);
  Rng latent_rng = Rng::stream(c.seed, "corpus-latent");
  Rng noise_rng = Rng::stream(c.seed, "corpus-noise");
  SyntheticCorpus corpus{c, {}};
  corpus.items.reserve(c.count);
  for (std::size_t i = 0; i < c.count; ++i) {
    std::vector<double> latent(c.latent_dim);
    for (auto& v : latent) v = latent_rng.normal();
    corpus.items.push_back(render_item(c, maps, std::move(latent), noise_rng));
  }
  return corpus;
}

}  // namespace stgt
