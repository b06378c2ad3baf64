#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "stgt/embeddings.hpp"
#include "stgt/error.hpp"
#include "stgt/numerics.hpp"
#include "testing.hpp"

namespace stgt {
namespace {

using testing::random_tensor;

TemporalEmbeddingTable temporal(std::size_t m, std::size_t d, std::uint64_t seed) {
  return {m, d, random_tensor({m, d}, seed, "temporal")};
}

TEST(Sinusoid, ZeroPosition) {
  for (std::size_t d : {2u, 6u, 16u}) {
    const auto e = sinusoid_embed(0.0, d);
    for (std::size_t k = 0; k < d; ++k) EXPECT_EQ(e[k], k % 2 == 0 ? 0.0 : 1.0);
  }
}

TEST(Sinusoid, ScalarTrigOracleD2) {
  // i = 1: sin exponent 2/2, cos exponent 1/2.
  const auto e = sinusoid_embed(1.0, 2);
  EXPECT_NEAR(e[0], std::sin(1e-4), 1e-9);
  EXPECT_NEAR(e[1], std::cos(0.01), 1e-9);
}

TEST(Sinusoid, FirstSinSlotPeriod) {
  for (std::size_t d : {4u, 8u, 32u}) {
    const double z = std::numbers::pi * std::pow(10000.0, 2.0 / static_cast<double>(d));
    EXPECT_NEAR(sinusoid_embed(z, d)[0], 0.0, 1e-9);
  }
}

TEST(Sinusoid, ExponentsFollowOneBasedPairs) {
  EXPECT_DOUBLE_EQ(sinusoid_exponent(0, 8), 2.0 / 8);
  EXPECT_DOUBLE_EQ(sinusoid_exponent(1, 8), 1.0 / 8);
  EXPECT_DOUBLE_EQ(sinusoid_exponent(6, 8), 8.0 / 8);
  EXPECT_DOUBLE_EQ(sinusoid_exponent(7, 8), 7.0 / 8);
}

TEST(Sinusoid, OddDimensionRejected) {
  EXPECT_THROW(sinusoid_embed(1.0, 3), ConfigError);
  EXPECT_THROW(sinusoid_embed(1.0, 0), ConfigError);
}

TEST(SinusoidProperty, BoundedAndFrequencyLipschitz) {
  Rng rng = Rng::stream(3, "z");
  for (int trial = 0; trial < 200; ++trial) {
    const double z1 = 50 * rng.uniform(), z2 = 50 * rng.uniform();
    const std::size_t d = 2 * (1 + rng.below(16));
    const auto a = sinusoid_embed(z1, d), b = sinusoid_embed(z2, d);
    for (std::size_t k = 0; k < d; ++k) {
      EXPECT_LE(std::abs(a[k]), 1.0);
      EXPECT_LE(std::abs(a[k] - b[k]), sinusoid_frequency(k, d) * std::abs(z1 - z2) + 1e-15);
    }
  }
}

TEST(SpatialTable, SingleCellHalvesEqual) {
  const auto t = build_spatial_table(1, 8);
  const auto pe = sinusoid_embed(1.0, 4);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(t.table(0, k), pe[k]);
    EXPECT_EQ(t.table(0, 4 + k), pe[k]);
  }
}

TEST(SpatialTable, CoordinateSwapSwapsHalves) {
  const auto t = build_spatial_table(2, 8);
  const auto a = t.table.row(1 * 2 + 0);  // (x=1, y=2)
  const auto b = t.table.row(0 * 2 + 1);  // (x=2, y=1)
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(a[k], b[4 + k]);
    EXPECT_EQ(a[4 + k], b[k]);
  }
}

TEST(SpatialTable, RowsPairwiseDistinct) {
  const auto t = build_spatial_table(4, 16);
  double min_dist = 1e9;
  for (std::size_t i = 0; i < 16; ++i) {
    for (std::size_t j = i + 1; j < 16; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 16; ++k) s += (t.table(i, k) - t.table(j, k)) * (t.table(i, k) - t.table(j, k));
      min_dist = std::min(min_dist, std::sqrt(s));
    }
  }
  EXPECT_GT(min_dist, 0.0);
  for (double v : t.table.flat()) EXPECT_LE(std::abs(v), 1.0);
}

TEST(SpatialTable, RequiresDimDivisibleByFour) {
  EXPECT_THROW(build_spatial_table(3, 6), ConfigError);
  EXPECT_THROW(build_spatial_table(0, 8), ConfigError);
}

TEST(AssembleFrame, ZeroTokensZeroTemporalGivesSpatial) {
  const auto sp = build_spatial_table(3, 8);
  const TemporalEmbeddingTable tt{2, 8, TokenTensor({2, 8})};
  const auto out = assemble_frame(TokenTensor({10, 8}), sp, tt, 2);
  for (std::size_t k = 0; k < 8; ++k) EXPECT_EQ(out(0, k), 0.0);
  for (std::size_t r = 1; r < 10; ++r) {
    for (std::size_t k = 0; k < 8; ++k) EXPECT_EQ(out(r, k), sp.table(r - 1, k));
  }
}

TEST(AssembleFrame, ZeroTablesAreIdentity) {
  const SpatialEmbeddingTable sp{2, 4, TokenTensor({4, 4})};
  const TemporalEmbeddingTable tt{3, 4, TokenTensor({3, 4})};
  const auto x = random_tensor({5, 4}, 1);
  EXPECT_EQ(assemble_frame(x, sp, tt, 3), x);
}

TEST(AssembleFrame, AlgebraicReconstruction) {
  const auto sp = build_spatial_table(3, 8);
  const auto tt = temporal(4, 8, 2);
  const auto x = random_tensor({10, 8}, 3);
  const auto out = assemble_frame(x, sp, tt, 3);
  for (std::size_t k = 0; k < 8; ++k) EXPECT_NEAR(out(0, k) - x(0, k) - tt.table(2, k), 0.0, 1e-15);
  for (std::size_t r = 1; r < 10; ++r) {
    for (std::size_t k = 0; k < 8; ++k) EXPECT_NEAR(out(r, k) - x(r, k) - tt.table(2, k), sp.table(r - 1, k), 1e-14);
  }
}

TEST(AssembleFrame, FrameIndexOutOfRange) {
  const auto sp = build_spatial_table(2, 4);
  const auto tt = temporal(3, 4, 1);
  EXPECT_THROW(assemble_frame(TokenTensor({5, 4}), sp, tt, 0), IndexError);
  EXPECT_THROW(assemble_frame(TokenTensor({5, 4}), sp, tt, 4), IndexError);
  EXPECT_THROW(assemble_frame(TokenTensor({4, 4}), sp, tt, 1), DimensionError);
}

TEST(AssembleFrameProperty, FramesDifferByTemporalDelta) {
  const auto sp = build_spatial_table(2, 8);
  const auto tt = temporal(4, 8, 5);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto x = random_tensor({5, 8}, seed, "tokens");
    const auto a = assemble_frame(x, sp, tt, 1), b = assemble_frame(x, sp, tt, 4);
    for (std::size_t r = 0; r < 5; ++r) {
      for (std::size_t k = 0; k < 8; ++k) EXPECT_NEAR(a(r, k) - b(r, k), tt.table(0, k) - tt.table(3, k), 1e-14);
    }
  }
}

TEST(AssembleFrameProperty, LinearInTokens) {
  const auto sp = build_spatial_table(2, 8);
  const auto tt = temporal(2, 8, 6);
  const auto a = random_tensor({5, 8}, 7), b = random_tensor({5, 8}, 8);
  const auto zero = assemble_frame(TokenTensor({5, 8}), sp, tt, 1);
  const auto sum = assemble_frame(add(a, b), sp, tt, 1);
  const auto fa = assemble_frame(a, sp, tt, 1), fb = assemble_frame(b, sp, tt, 1);
  for (std::size_t i = 0; i < sum.size(); ++i) {
    EXPECT_NEAR(sum.flat()[i] - zero.flat()[i], (fa.flat()[i] - zero.flat()[i]) + (fb.flat()[i] - zero.flat()[i]), 1e-13);
  }
}

}  // namespace
}  // namespace stgt
