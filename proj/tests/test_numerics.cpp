#include <gtest/gtest.h>

#include <cmath>

#include "stgt/error.hpp"
#include "stgt/numerics.hpp"
#include "testing.hpp"

namespace stgt {
namespace {

using testing::random_tensor;
using testing::uniform_tensor;

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const auto m = TokenTensor::from_rows({{1.5, -2.0}, {0.25, 7.0}});
  EXPECT_EQ(matmul(TokenTensor::identity(2), m), m);
}

TEST(Matmul, ZeroAnnihilates) {
  const auto out = matmul(TokenTensor({2, 3}), random_tensor({3, 4}, 1));
  EXPECT_EQ(out, TokenTensor({2, 4}));
}

TEST(Matmul, HandArithmetic) {
  const auto a = TokenTensor::from_rows({{1, 2}, {3, 4}});
  const auto b = TokenTensor::from_rows({{5, 6}, {7, 8}});
  EXPECT_EQ(matmul(a, b), TokenTensor::from_rows({{19, 22}, {43, 50}}));
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(TokenTensor({2, 3}), TokenTensor({2, 3}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3] * [2x3]"), std::string::npos) << msg;
  }
}

TEST(Matmul, LeftToRightSummationOrder) {
  // 1e16 + 1 - 1e16 is 0 left to right but 1 in any order that adds the
  // small terms first.
  const auto a = TokenTensor::from_rows({{1e16, 1.0, -1e16}});
  const auto b = TokenTensor::from_rows({{1.0}, {1.0}, {1.0}});
  EXPECT_EQ(matmul(a, b)(0, 0), 0.0);
}

TEST(Matmul, TransposedVariantsAgreeWithExplicitTranspose) {
  const auto a = random_tensor({5, 7}, 2), b = random_tensor({4, 7}, 3), c = random_tensor({5, 3}, 4);
  EXPECT_LT(max_abs_diff(matmul_nt(a, b), matmul(a, transpose(b))), 1e-12);
  EXPECT_LT(max_abs_diff(matmul_tn(a, c), matmul(transpose(a), c)), 1e-12);
}

TEST(MatmulProperty, AssociativeWithinTolerance) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng = Rng::stream(seed, "sizes");
    const std::size_t r = 1 + rng.below(32), k = 1 + rng.below(32), l = 1 + rng.below(32), c = 1 + rng.below(32);
    const auto a = uniform_tensor({r, k}, seed * 3, -10, 10);
    const auto b = uniform_tensor({k, l}, seed * 3 + 1, -10, 10);
    const auto d = uniform_tensor({l, c}, seed * 3 + 2, -10, 10);
    const auto left = matmul(matmul(a, b), d), right = matmul(a, matmul(b, d));
    double scale = 1.0;
    for (double v : left.flat()) scale = std::max(scale, std::abs(v));
    EXPECT_LT(max_abs_diff(left, right) / scale, 1e-10) << "seed " << seed;
    EXPECT_EQ(matmul(TokenTensor::identity(r), a), a);
  }
}

TEST(MaskedSoftmax, UniformLogits) {
  const auto p = masked_softmax(TokenTensor::from_rows({{2.5, 2.5, 2.5}}), BitMatrix(1, 3, true));
  for (double v : p.flat()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(MaskedSoftmax, SingleSurvivor) {
  const auto p = masked_softmax(TokenTensor::from_rows({{5, -2}}), BitMatrix::from_rows({{1, 0}}));
  EXPECT_EQ(p, TokenTensor::from_rows({{1, 0}}));
}

TEST(MaskedSoftmax, ScalarExpSumOracle) {
  const auto p = masked_softmax(TokenTensor::from_rows({{1, 2, 3}}), BitMatrix(1, 3, true));
  EXPECT_NEAR(p(0, 0), 0.09003, 1e-5);
  EXPECT_NEAR(p(0, 1), 0.24473, 1e-5);
  EXPECT_NEAR(p(0, 2), 0.66524, 1e-5);
}

TEST(MaskedSoftmax, EmptyRowIsZero) {
  const auto p = masked_softmax(TokenTensor::from_rows({{1, 2}, {3, 4}}), BitMatrix::from_rows({{0, 0}, {1, 1}}));
  EXPECT_EQ(p(0, 0), 0.0);
  EXPECT_EQ(p(0, 1), 0.0);
  EXPECT_TRUE(p.all_finite());
}

TEST(MaskedSoftmaxProperty, RowSums) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto logits = random_tensor({6, 9}, seed, "logits", 20.0);
    Rng rng = Rng::stream(seed, "keep");
    BitMatrix keep(6, 9);
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t j = 0; j < 9; ++j) keep.set(i, j, rng.uniform() < 0.4);
    }
    const auto p = masked_softmax(logits, keep);
    for (std::size_t i = 0; i < 6; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 9; ++j) {
        if (!keep.get(i, j)) EXPECT_EQ(p(i, j), 0.0);
        s += p(i, j);
      }
      EXPECT_NEAR(s, keep.row_count(i) ? 1.0 : 0.0, 1e-12);
    }
  }
}

TEST(LayerNorm, ConstantRowCollapsesToBias) {
  const std::vector<double> gain{1, 1, 1}, bias{0, 0, 0};
  const auto y = layer_norm<double>(TokenTensor::from_rows({{4, 4, 4}}), gain, bias, 1e-5);
  EXPECT_EQ(y, TokenTensor({1, 3}));
}

TEST(LayerNorm, AlreadyNormalized) {
  const std::vector<double> gain{1, 1}, bias{0, 0};
  const auto y = layer_norm<double>(TokenTensor::from_rows({{1, -1}}), gain, bias, 1e-300);
  EXPECT_NEAR(y(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(y(0, 1), -1.0, 1e-15);
}

TEST(LayerNorm, HandComputation) {
  const std::vector<double> gain{1, 1, 1}, bias{0, 0, 0};
  const auto y = layer_norm<double>(TokenTensor::from_rows({{1, 2, 3}}), gain, bias, 1e-5);
  EXPECT_NEAR(y(0, 0), -1.22474, 1e-4);
  EXPECT_NEAR(y(0, 1), 0.0, 1e-12);
  EXPECT_NEAR(y(0, 2), 1.22474, 1e-4);
}

TEST(LayerNormProperty, MatchesTwoPassFormula) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto x = random_tensor({5, 12}, seed, "ln", 3.0);
    const std::vector<double> gain(12, 1.0), bias(12, 0.0);
    const auto y = layer_norm<double>(x, gain, bias, 1e-5);
    for (std::size_t i = 0; i < 5; ++i) {
      double mean = 0, var = 0;
      for (double v : x.row(i)) mean += v;
      mean /= 12;
      for (double v : x.row(i)) var += (v - mean) * (v - mean);
      var /= 12;
      double ym = 0, yv = 0;
      for (std::size_t j = 0; j < 12; ++j) {
        EXPECT_NEAR(y(i, j), (x(i, j) - mean) / std::sqrt(var + 1e-5), 1e-10);
        ym += y(i, j);
      }
      for (double v : y.row(i)) yv += v * v;
      EXPECT_NEAR(ym / 12, 0.0, 1e-10);
      EXPECT_NEAR(yv / 12, var / (var + 1e-5), 1e-10);
    }
  }
}

TEST(LayerNorm, BackwardMatchesFiniteDifferences) {
  const auto x = random_tensor({3, 5}, 11);
  const auto gain = random_tensor({5}, 12), bias = random_tensor({5}, 13);
  const auto w = random_tensor({3, 5}, 14);
  auto f = [&](std::span<const double> v) {
    const TokenTensor xx({3, 5}, std::vector<double>(v.begin(), v.end()));
    const auto y = layer_norm<double>(xx, gain.flat(), bias.flat(), 1e-5);
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y.flat()[i] * w.flat()[i];
    return s;
  };
  LayerNormCache<double> cache;
  layer_norm<double>(x, gain.flat(), bias.flat(), 1e-5, &cache);
  std::vector<double> dgain(5), dbias(5);
  const auto dx = layer_norm_backward<double>(w, cache, gain.flat(), dgain, dbias);
  const auto num = central_differences<double>(f, x.flat(), 1e-5);
  EXPECT_LT(max_relative_error(dx.flat(), num, 1e-6), 1e-6);
}

TEST(L2Normalize, ThreeFourFive) {
  const auto y = l2_normalize_rows(TokenTensor::from_rows({{3, 4}}));
  EXPECT_NEAR(y(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(y(0, 1), 0.8, 1e-15);
}

TEST(L2Normalize, ZeroRowPreserved) {
  EXPECT_EQ(l2_normalize_rows(TokenTensor({1, 2})), TokenTensor({1, 2}));
}

TEST(L2Normalize, RandomRowsHaveUnitNorm) {
  const auto y = l2_normalize_rows(random_tensor({4, 8}, 5));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(row_norm<double>(y.row(i)), 1.0, 1e-12);
}

TEST(L2NormalizeProperty, Idempotent) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto y = l2_normalize_rows(random_tensor({6, 10}, seed, "l2", 5.0));
    EXPECT_LE(max_abs_diff(l2_normalize_rows(y), y), 1e-15);
  }
}

TEST(L2Normalize, BackwardMatchesFiniteDifferences) {
  const auto x = random_tensor({3, 4}, 21);
  const auto w = random_tensor({3, 4}, 22);
  auto f = [&](std::span<const double> v) {
    const auto y = l2_normalize_rows(TokenTensor({3, 4}, std::vector<double>(v.begin(), v.end())));
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y.flat()[i] * w.flat()[i];
    return s;
  };
  const auto dx = l2_normalize_rows_backward(x, l2_normalize_rows(x), w);
  EXPECT_LT(max_relative_error(dx.flat(), central_differences<double>(f, x.flat(), 1e-5), 1e-6), 1e-6);
}

TEST(Gelu, DerivativeMatchesFiniteDifferences) {
  for (double x : {-3.0, -0.7, 0.0, 0.4, 2.5}) {
    const double num = (gelu(x + 1e-6) - gelu(x - 1e-6)) / 2e-6;
    EXPECT_NEAR(gelu_grad(x), num, 1e-8) << x;
  }
}

TEST(ParamVector, SegmentsAreContiguousAndCover) {
  ParamVector p;
  p.add_segment("a", {2, 3});
  p.add_segment("b", {4});
  p.add_segment("c", {1});
  std::size_t offset = 0;
  for (const auto& s : p.segments()) {
    EXPECT_EQ(s.offset, offset);
    offset += s.length;
  }
  EXPECT_EQ(offset, p.size());
  EXPECT_EQ(p.values("b").size(), 4u);
  EXPECT_THROW(p.add_segment("a", {1}), ConfigError);
  EXPECT_THROW(p.segment("missing"), IndexError);
}

TEST(FiniteDiff, ConstantFunctionGivesZero) {
  ParamVector p;
  p.add_segment("x", {3});
  const auto g = finite_diff_grad([](const ParamVector&) { return 4.2; }, p, 1e-5);
  for (double v : g) EXPECT_EQ(v, 0.0);
}

TEST(FiniteDiff, QuadraticIsExact) {
  ParamVector p;
  p.add_segment("x", {2});
  p.data()[0] = 1;
  p.data()[1] = 2;
  const auto g = finite_diff_grad(
      [](const ParamVector& v) { return v.data()[0] * v.data()[0] + v.data()[1] * v.data()[1]; }, p, 1e-5);
  EXPECT_NEAR(g[0], 2.0, 1e-8);
  EXPECT_NEAR(g[1], 4.0, 1e-8);
}

TEST(FiniteDiffProperty, DegreeTwoPolynomialsToMachineAccuracy) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto a = random_tensor({4, 4}, seed, "quad");
    const auto b = random_tensor({4}, seed, "lin");
    ParamVector p;
    p.add_segment("x", {4});
    const auto x0 = random_tensor({4}, seed, "x0");
    std::copy(x0.flat().begin(), x0.flat().end(), p.data().begin());
    auto f = [&](const ParamVector& v) {
      double s = 0;
      for (std::size_t i = 0; i < 4; ++i) {
        s += b.flat()[i] * v.data()[i];
        for (std::size_t j = 0; j < 4; ++j) s += a(i, j) * v.data()[i] * v.data()[j];
      }
      return s;
    };
    const auto g = finite_diff_grad(f, p, 1e-3);
    for (std::size_t i = 0; i < 4; ++i) {
      double exact = b.flat()[i];
      for (std::size_t j = 0; j < 4; ++j) exact += (a(i, j) + a(j, i)) * p.data()[j];
      EXPECT_NEAR(g[i], exact, 1e-10);
    }
  }
}

TEST(FiniteDiff, NonFiniteEvaluationCarriesCoordinate) {
  ParamVector p;
  p.add_segment("x", {3});
  try {
    finite_diff_grad([](const ParamVector& v) { return v.data()[2] > 0 ? std::log(-1.0) : 0.0; }, p, 1e-5);
    FAIL();
  } catch (const OracleError& e) {
    EXPECT_EQ(e.coordinate(), 2u);
  }
}

TEST(FiniteDiff, RejectsNonPositiveStep) {
  ParamVector p;
  p.add_segment("x", {1});
  EXPECT_THROW(finite_diff_grad([](const ParamVector&) { return 0.0; }, p, 0.0), ConfigError);
}

}  // namespace
}  // namespace stgt
