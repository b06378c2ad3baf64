#pragma once

#include <cstddef>
#include <vector>

#include "stgt/tensor.hpp"

namespace stgt {

/// Fixed 2D sinusoidal position table for an n x n patch grid.
struct SpatialEmbeddingTable {
  std::size_t grid_side = 0;
  std::size_t dim = 0;
  TokenTensor table;  // [n*n x dim], row (y-1)*n + (x-1)
};

/// Learnable per-frame embedding T_1..T_m.
struct TemporalEmbeddingTable {
  std::size_t frames = 0;
  std::size_t dim = 0;
  TokenTensor table;  // [m x dim]
};

/// Exponent e_k such that slot k of sinusoid_embed has frequency 10000^-e_k.
///
/// Pairs are indexed from one: for i = 1..d/2, slot 2(i-1) holds
/// sin(z / 10000^(2i/d)) and slot 2(i-1)+1 holds cos(z / 10000^((2i-1)/d)).
double sinusoid_exponent(std::size_t slot, std::size_t d);

/// Angular frequency of slot k, i.e. 10000^-e_k.
double sinusoid_frequency(std::size_t slot, std::size_t d);

/// Sinusoidal embedding of a scalar position. d must be even and >= 2.
std::vector<double> sinusoid_embed(double z, std::size_t d);

/// x-half and y-half are each sinusoid_embed(coordinate, d/2); d % 4 == 0.
SpatialEmbeddingTable build_spatial_table(std::size_t n, std::size_t d);

/// Adds T_j to every row and the spatial row k-1 to token row k >= 1.
/// Row 0 is the [CLS] token and has no grid position. j is 1-based.
TokenTensor assemble_frame(const TokenTensor& tokens, const SpatialEmbeddingTable& spatial,
                           const TemporalEmbeddingTable& temporal, std::size_t frame_index);

}  // namespace stgt
