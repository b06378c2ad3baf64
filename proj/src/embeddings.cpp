#include "stgt/embeddings.hpp"

#include <cmath>
#include <string>

#include "stgt/error.hpp"

namespace stgt {

double sinusoid_exponent(std::size_t slot, std::size_t d) {
  const double i = static_cast<double>(slot / 2 + 1);
  const double dd = static_cast<double>(d);
  return (slot % 2 == 0) ? (2.0 * i) / dd : (2.0 * i - 1.0) / dd;
}

double sinusoid_frequency(std::size_t slot, std::size_t d) {
  return 1.0 / std::pow(10000.0, sinusoid_exponent(slot, d));
}

std::vector<double> sinusoid_embed(double z, std::size_t d) {
  if (d < 2 || d % 2 != 0) throw ConfigError("sinusoid_embed needs an even dimension >= 2, got " + std::to_string(d));
  std::vector<double> out(d);
  for (std::size_t k = 0; k < d; ++k) {
    const double angle = z / std::pow(10000.0, sinusoid_exponent(k, d));
    out[k] = (k % 2 == 0) ? std::sin(angle) : std::cos(angle);
  }
  return out;
}

SpatialEmbeddingTable build_spatial_table(std::size_t n, std::size_t d) {
  if (n < 1) throw ConfigError("grid side must be >= 1");
  if (d % 4 != 0 || d == 0) throw ConfigError("spatial embedding dim must be divisible by 4, got " + std::to_string(d));
  SpatialEmbeddingTable t{n, d, TokenTensor({n * n, d})};
  const std::size_t half = d / 2;
  for (std::size_t y = 1; y <= n; ++y) {
    const auto ey = sinusoid_embed(static_cast<double>(y), half);
    for (std::size_t x = 1; x <= n; ++x) {
      const auto ex = sinusoid_embed(static_cast<double>(x), half);
      auto row = t.table.row((y - 1) * n + (x - 1));
      std::copy(ex.begin(), ex.end(), row.begin());
      std::copy(ey.begin(), ey.end(), row.begin() + static_cast<std::ptrdiff_t>(half));
    }
  }
  return t;
}

TokenTensor assemble_frame(const TokenTensor& tokens, const SpatialEmbeddingTable& spatial,
                           const TemporalEmbeddingTable& temporal, std::size_t frame_index) {
  if (frame_index < 1 || frame_index > temporal.frames) {
    throw IndexError("frame index " + std::to_string(frame_index) + " outside 1.." + std::to_string(temporal.frames));
  }
  const std::size_t t = spatial.grid_side * spatial.grid_side;
  if (tokens.rank() != 2 || tokens.rows() != 1 + t || tokens.cols() != spatial.dim || temporal.dim != spatial.dim) {
    throw DimensionError("assemble_frame tokens " + shape_string(tokens.shape()) + " vs grid " +
                         std::to_string(spatial.grid_side) + " and dim " + std::to_string(spatial.dim));
  }
  TokenTensor out = tokens;
  const auto tj = temporal.table.row(frame_index - 1);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += tj[c];
    if (r == 0) continue;
    const auto sp = spatial.table.row(r - 1);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += sp[c];
  }
  return out;
}

}  // namespace stgt
