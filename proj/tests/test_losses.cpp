#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "stgt/error.hpp"
#include "stgt/losses.hpp"
#include "stgt/numerics.hpp"
#include "testing.hpp"

namespace stgt {
namespace {

using testing::random_tensor;

EmbeddingPair unit_pair(std::size_t b, std::size_t e, std::uint64_t seed, double tau = 0.1) {
  return {l2_normalize_rows(random_tensor({b, e}, seed, "video")), l2_normalize_rows(random_tensor({b, e}, seed, "text")),
          std::log(tau)};
}

// Scalar reference: mean over both directions of -sum_j w_ij log softmax_j.
double contrastive_oracle(const EmbeddingPair& p, const TokenTensor& w) {
  const std::size_t b = p.batch();
  const double tau = std::exp(p.log_tau);
  double total = 0;
  for (std::size_t i = 0; i < b; ++i) {
    for (int dir = 0; dir < 2; ++dir) {
      std::vector<double> l(b);
      for (std::size_t j = 0; j < b; ++j) {
        double s = 0;
        for (std::size_t c = 0; c < p.video.cols(); ++c) {
          s += dir == 0 ? p.video(i, c) * p.text(j, c) : p.text(i, c) * p.video(j, c);
        }
        l[j] = s / tau;
      }
      double mx = l[0];
      for (double v : l) mx = std::max(mx, v);
      double z = 0;
      for (double v : l) z += std::exp(v - mx);
      for (std::size_t j = 0; j < b; ++j) total -= w(i, j) * (l[j] - mx - std::log(z));
    }
  }
  return total / (2.0 * static_cast<double>(b));
}

TEST(Vtc, SingletonBatchIsZero) {
  const auto p = unit_pair(1, 8, 1);
  EXPECT_NEAR(vtc_loss(p).loss, 0.0, 1e-15);
}

TEST(Vtc, IdenticalRowsGiveLogB) {
  for (std::size_t b : {2u, 5u, 16u}) {
    auto p = unit_pair(b, 8, 2);
    for (std::size_t i = 1; i < b; ++i) {
      for (std::size_t c = 0; c < 8; ++c) {
        p.video(i, c) = p.video(0, c);
        p.text(i, c) = p.video(0, c);
      }
    }
    for (std::size_t c = 0; c < 8; ++c) p.text(0, c) = p.video(0, c);
    EXPECT_NEAR(vtc_loss(p).loss, std::log(static_cast<double>(b)), 1e-12);
  }
}

TEST(Vtc, ScalarOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto p = unit_pair(6, 8, seed, 0.05 + 0.01 * static_cast<double>(seed));
    EXPECT_NEAR(vtc_loss(p).loss, contrastive_oracle(p, TokenTensor::identity(6)), 1e-10);
  }
}

TEST(Vtc, ProbabilitiesAreRowStochastic) {
  const auto v = vtc_loss(unit_pair(7, 8, 3));
  for (std::size_t i = 0; i < 7; ++i) {
    double a = 0, b = 0;
    for (std::size_t j = 0; j < 7; ++j) {
      a += v.p_v2t(i, j);
      b += v.p_t2v(i, j);
    }
    EXPECT_NEAR(a, 1.0, 1e-12);
    EXPECT_NEAR(b, 1.0, 1e-12);
  }
}

void expect_grads_match(const EmbeddingPair& p, const LossGrads& g, const std::function<double(const EmbeddingPair&)>& f,
                        double tol) {
  const std::size_t b = p.batch(), e = p.video.cols();
  const auto dv = central_differences<double>(
      [&](std::span<const double> x) {
        EmbeddingPair q = p;
        std::copy(x.begin(), x.end(), q.video.flat().begin());
        return f(q);
      },
      p.video.flat(), 1e-5);
  const auto dt = central_differences<double>(
      [&](std::span<const double> x) {
        EmbeddingPair q = p;
        std::copy(x.begin(), x.end(), q.text.flat().begin());
        return f(q);
      },
      p.text.flat(), 1e-5);
  const std::vector<double> lt{p.log_tau};
  const auto dtau = central_differences<double>(
      [&](std::span<const double> x) {
        EmbeddingPair q = p;
        q.log_tau = x[0];
        return f(q);
      },
      lt, 1e-5);
  ASSERT_EQ(dv.size(), b * e);
  EXPECT_LT(max_relative_error(g.video.flat(), dv, 1e-6), tol);
  EXPECT_LT(max_relative_error(g.text.flat(), dt, 1e-6), tol);
  EXPECT_NEAR(g.log_tau, dtau[0], tol * std::max(1.0, std::abs(dtau[0])));
}

TEST(Vtc, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto p = unit_pair(8, 16, seed);
    expect_grads_match(p, vtc_loss(p).grads, [](const EmbeddingPair& q) { return vtc_loss(q).loss; }, 1e-6);
  }
}

TEST(CrossSimilarity, ProductAndExclusion) {
  const auto svv = TokenTensor::from_rows({{1.0, 0.8, -0.2}, {0.8, 1.0, 0.5}, {-0.2, 0.5, 1.0}});
  const auto stt = TokenTensor::from_rows({{1.0, 0.3, 0.9}, {0.3, 1.0, 0.0}, {0.9, 0.0, 1.0}});
  const auto c = cross_similarity_logits(svv, stt);
  EXPECT_DOUBLE_EQ(c(0, 1), 0.24);
  EXPECT_EQ(c(0, 2), -std::numeric_limits<double>::infinity());  // negative video similarity
  EXPECT_EQ(c(1, 2), -std::numeric_limits<double>::infinity());  // exactly zero text similarity
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(c(i, i), 1.0);
}

TEST(CrossSimilarity, DiagonalIsOneEvenForDegenerateSelfSimilarity) {
  const auto c = cross_similarity_logits(TokenTensor({2, 2}), TokenTensor({2, 2}));
  EXPECT_EQ(c(0, 0), 1.0);
  EXPECT_EQ(c(1, 1), 1.0);
}

TEST(Csal, ReducesToVtcWhenOffDiagonalExcluded) {
  // Orthonormal rows: every off-diagonal similarity is 0 and gets excluded.
  EmbeddingPair p{TokenTensor::identity(4), TokenTensor::identity(4), std::log(0.1)};
  EXPECT_EQ(csal_weights(p, 5.0), TokenTensor::identity(4));
  EXPECT_NEAR(csal_loss(p, 5.0).loss, vtc_loss(p).loss, 1e-15);
}

TEST(Csal, ThreeItemDoubleLoopOracle) {
  const auto p = unit_pair(3, 2, 4);
  EmbeddingPair q = p;
  // Positive-cone rows so that all pairs stay in the softmax.
  q.video = l2_normalize_rows(TokenTensor::from_rows({{1.0, 0.2}, {0.9, 0.6}, {0.4, 1.0}}));
  q.text = l2_normalize_rows(TokenTensor::from_rows({{1.0, 0.1}, {0.7, 0.7}, {0.3, 1.0}}));
  const double gamma = 4.0;
  TokenTensor w({3, 3});
  for (std::size_t i = 0; i < 3; ++i) {
    double z = 0;
    std::vector<double> l(3);
    for (std::size_t j = 0; j < 3; ++j) {
      double vv = 0, tt = 0;
      for (std::size_t c = 0; c < 2; ++c) {
        vv += q.video(i, c) * q.video(j, c);
        tt += q.text(i, c) * q.text(j, c);
      }
      l[j] = std::exp(gamma * (i == j ? 1.0 : vv * tt));
      z += l[j];
    }
    for (std::size_t j = 0; j < 3; ++j) w(i, j) = l[j] / z;
  }
  EXPECT_LT(max_abs_diff(csal_weights(q, gamma), w), 1e-14);
  EXPECT_NEAR(csal_loss(q, gamma).loss, contrastive_oracle(q, w), 1e-12);
}

TEST(Csal, GradientTreatsWeightsAsConstant) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto p = unit_pair(8, 4, seed + 20);  // low dimension keeps many positive pairs
    const auto w = csal_weights(p, 5.0);
    expect_grads_match(p, csal_loss(p, 5.0).grads,
                       [&](const EmbeddingPair& q) { return soft_target_contrastive(q, w).loss; }, 1e-6);
  }
}

TEST(Csal, FrozenWeightsAreUsedVerbatim) {
  const auto p = unit_pair(5, 4, 5), other = unit_pair(5, 4, 6);
  const auto w = csal_weights(other, 5.0);
  EXPECT_EQ(csal_loss(p, 5.0, &w).loss, soft_target_contrastive(p, w).loss);
}

TEST(Csal, NonPositiveGammaRejected) {
  const auto p = unit_pair(3, 4, 7);
  EXPECT_THROW(csal_loss(p, 0.0), ConfigError);
  EXPECT_THROW(csal_weights(p, -1.0), ConfigError);
}

TEST(CsalProperty, WeightRowsAreDistributions) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto p = unit_pair(6, 3, seed);
    const auto w = csal_weights(p, 5.0);
    for (std::size_t i = 0; i < 6; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 6; ++j) {
        EXPECT_GE(w(i, j), 0.0);
        s += w(i, j);
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(CsalProperty, SymmetricInTowers) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto p = unit_pair(6, 3, seed);
    const EmbeddingPair swapped{p.text, p.video, p.log_tau};
    EXPECT_NEAR(csal_loss(p, 5.0).loss, csal_loss(swapped, 5.0).loss, 1e-12);
    EXPECT_NEAR(vtc_loss(p).loss, vtc_loss(swapped).loss, 1e-12);
  }
}

TEST(CsalProperty, PermutationEquivariant) {
  const std::vector<std::size_t> perm{4, 2, 0, 5, 1, 3};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto p = unit_pair(6, 3, seed);
    EmbeddingPair q = p;
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t c = 0; c < 3; ++c) {
        q.video(i, c) = p.video(perm[i], c);
        q.text(i, c) = p.text(perm[i], c);
      }
    }
    const auto a = csal_loss(p, 5.0), b = csal_loss(q, 5.0);
    EXPECT_NEAR(a.loss, b.loss, 1e-12);
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(b.grads.video(i, c), a.grads.video(perm[i], c), 1e-12);
    }
  }
}

// With every off-diagonal cross logit at least `margin` below the diagonal,
// off-diagonal weights decay like exp(-gamma * margin).
TEST(CsalProperty, LargeGammaApproachesVtc) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto p = unit_pair(8, 16, seed);
    const auto c = cross_similarity_logits(matmul_nt(p.video, p.video), matmul_nt(p.text, p.text));
    double worst = -1e300;
    for (std::size_t i = 0; i < 8; ++i) {
      for (std::size_t j = 0; j < 8; ++j) {
        if (i != j) worst = std::max(worst, c(i, j));
      }
    }
    ASSERT_LE(worst, 0.7);
    const double vtc = vtc_loss(p).loss;
    double prev = std::numeric_limits<double>::infinity();
    for (double gamma : {3.0, 10.0, 25.0, 50.0}) {
      const double gap = std::abs(csal_loss(p, gamma).loss - vtc);
      EXPECT_LE(gap, prev);
      prev = gap;
    }
    EXPECT_LT(std::abs(csal_loss(p, 50.0).loss - vtc), 1e-3);
    EXPECT_GE(std::abs(csal_loss(p, 3.0).loss - vtc), 10.0 * std::abs(csal_loss(p, 50.0).loss - vtc));
  }
}

TEST(TotalLoss, BinaryAlphaSelectsTermBitwise) {
  const auto p = unit_pair(6, 4, 8);
  const auto r1 = total_loss(p, 1.0, 5.0), r0 = total_loss(p, 0.0, 5.0);
  const auto v = vtc_loss(p), c = csal_loss(p, 5.0);
  EXPECT_EQ(r1.total, v.loss);
  EXPECT_EQ(r1.grads.video, v.grads.video);
  EXPECT_EQ(r0.total, c.loss);
  EXPECT_EQ(r0.grads.text, c.grads.text);
  EXPECT_EQ(r0.grads.log_tau, c.grads.log_tau);
  EXPECT_EQ(r1.vtc, r0.vtc);
  EXPECT_EQ(r1.csal, r0.csal);
}

TEST(TotalLoss, FractionalAlphaMixes) {
  const auto p = unit_pair(6, 4, 9);
  EXPECT_THROW(total_loss(p, 0.5, 5.0), ConfigError);
  EXPECT_THROW(total_loss(p, 1.5, 5.0, true), ConfigError);
  const auto r = total_loss(p, 0.5, 5.0, true);
  EXPECT_NEAR(r.total, 0.5 * r.vtc + 0.5 * r.csal, 1e-15);
  const auto v = vtc_loss(p), c = csal_loss(p, 5.0);
  for (std::size_t k = 0; k < r.grads.video.size(); ++k) {
    EXPECT_NEAR(r.grads.video.flat()[k], 0.5 * (v.grads.video.flat()[k] + c.grads.video.flat()[k]), 1e-15);
  }
}

TEST(TotalLoss, ReportsOmittedTermsAndTemperature) {
  const auto r = total_loss(unit_pair(3, 4, 10, 0.07), 1.0, 5.0);
  EXPECT_EQ(r.omitted_terms, (std::vector<std::string>{"vtm", "vtg"}));
  EXPECT_NEAR(r.tau, 0.07, 1e-15);
}

TEST(Losses, ShapeAndTemperatureErrors) {
  EmbeddingPair p = unit_pair(3, 4, 11);
  p.text = random_tensor({2, 4}, 1);
  EXPECT_THROW(vtc_loss(p), DimensionError);
  EmbeddingPair q = unit_pair(3, 4, 12);
  q.log_tau = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(vtc_loss(q), NumericError);
}

TEST(Losses, FloatAgreesWithDouble) {
  const auto p = unit_pair(8, 16, 13);
  const BasicEmbeddingPair<float> pf{cast<float>(p.video), cast<float>(p.text), static_cast<float>(p.log_tau)};
  EXPECT_NEAR(csal_loss(pf, 5.0f).loss, csal_loss(p, 5.0).loss, 1e-4);
}

}  // namespace
}  // namespace stgt
