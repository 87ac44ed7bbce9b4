#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "rankclust/error.hpp"
#include "rankclust/tensor.hpp"
#include "test_util.hpp"

using namespace rankclust;

TEST(DenseMatrix, RejectsBadShapeAndNonFinite) {
  EXPECT_THROW(DenseMatrix(2, 2, {1, 2, 3}), InvalidInput);
  EXPECT_THROW(DenseMatrix(0, 2, {}), InvalidInput);
  EXPECT_THROW(DenseMatrix(1, 2, {1.0f, NAN}), InvalidInput);
  EXPECT_THROW(DenseMatrix(1, 2, {1.0f, INFINITY}), InvalidInput);
  const DenseMatrix w(2, 3, {1, 2, 3, 4, 5, 6}, Role::gate);
  EXPECT_EQ(w(1, 2), 6.0f);
  EXPECT_EQ(w.role(), Role::gate);
}

TEST(Role, TextRoundTrip) {
  for (Role r : {Role::q, Role::k, Role::v, Role::o, Role::gate, Role::up, Role::down, Role::other}) {
    EXPECT_EQ(parse_role(to_string(r)), r);
  }
  EXPECT_THROW(parse_role("bogus"), InvalidInput);
}

TEST(Matvec, Identity) {
  const DenseMatrix w(2, 2, {1, 0, 0, 1});
  const std::vector<float> x{3, 4};
  EXPECT_EQ(matvec(w, x), (std::vector<float>{3, 4}));
}

TEST(Matvec, AllOnesGivesSums) {
  const DenseMatrix w(2, 2, {1, 1, 1, 1});
  const std::vector<float> x{1, 2};
  EXPECT_EQ(matvec(w, x), (std::vector<float>{3, 3}));
}

TEST(Matvec, MatchesTripleLoop) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto w = test::random_matrix(4, 3, rng);
    const auto x = test::random_values(4, rng);
    const auto y = matvec(w, x);
    for (std::size_t o = 0; o < 3; ++o) {
      double ref = 0.0;
      for (std::size_t d = 0; d < 4; ++d) ref += static_cast<double>(x[d]) * w(d, o);
      EXPECT_NEAR(y[o], ref, 1e-6 * std::max(1.0, std::abs(ref)));
    }
  }
}

TEST(Matvec, DimensionMismatch) {
  const DenseMatrix w(2, 2, {1, 0, 0, 1});
  const std::vector<float> x{1, 2, 3};
  EXPECT_THROW(matvec(w, x), InvalidInput);
}

TEST(Matvec, Linear) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto w = test::random_matrix(16, 9, rng);
    const auto x = test::random_values(16, rng);
    const auto z = test::random_values(16, rng);
    const float a = 0.7f, b = -1.3f;
    std::vector<float> mix(16);
    for (std::size_t i = 0; i < 16; ++i) mix[i] = a * x[i] + b * z[i];
    const auto lhs = matvec(w, mix);
    const auto yx = matvec(w, x);
    const auto yz = matvec(w, z);
    for (std::size_t o = 0; o < 9; ++o) {
      const float rhs = a * yx[o] + b * yz[o];
      EXPECT_NEAR(lhs[o], rhs, 1e-5f * std::max(1.0f, std::abs(rhs)));
    }
  }
}

TEST(Stats, HandExamples) {
  auto s = stats(std::vector<float>{1, 3});
  EXPECT_DOUBLE_EQ(s.mean, 2.0);
  EXPECT_DOUBLE_EQ(s.variance, 1.0);
  s = stats(std::vector<float>{2.5f, 2.5f, 2.5f});
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_DOUBLE_EQ(s.variance, 0.0);
  s = stats(std::vector<float>{1, 3, 3, 3});
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_DOUBLE_EQ(s.variance, 0.75);
  EXPECT_EQ(s.min, 1.0);
  EXPECT_EQ(s.max, 3.0);
  EXPECT_EQ(s.count, 4u);
  EXPECT_THROW(stats(std::vector<float>{}), InvalidInput);
}

TEST(Stats, OnePassAndTwoPassAgree) {
  std::mt19937_64 rng(3);
  for (std::size_t n : {10u, 1000u, 1000000u}) {
    auto v = test::random_values(n, rng, 0.02f);
    for (auto& x : v) x += 0.5f;
    const auto s = stats(v);
    long double sum = 0, sq = 0;
    for (float x : v) {
      sum += x;
      sq += static_cast<long double>(x) * x;
    }
    const long double m1 = sum / n;
    const double one_pass = static_cast<double>(sq / n - m1 * m1);
    double two_pass = 0.0;
    for (float x : v) two_pass += (x - static_cast<double>(m1)) * (x - static_cast<double>(m1));
    two_pass /= static_cast<double>(n);
    EXPECT_NEAR(s.mean, static_cast<double>(m1), 1e-9 * std::abs(static_cast<double>(m1)));
    EXPECT_NEAR(s.variance, two_pass, 1e-9 * two_pass);
    EXPECT_NEAR(s.variance, one_pass, 1e-6 * two_pass);  // long double one-pass loses a little
  }
}

TEST(LayerNorm, ConstantCollapsesToBias) {
  const std::vector<float> x{1, 1, 1}, g{1, 1, 1}, b{0, 0, 0};
  for (float v : layer_norm(x, g, b)) EXPECT_EQ(v, 0.0f);
  const std::vector<float> b2{0.5f, -1, 2};
  EXPECT_EQ(layer_norm(x, g, b2), b2);
}

TEST(LayerNorm, HandExample) {
  const std::vector<float> x{-1, 1}, g{1, 1}, b{0, 0};
  const auto y = layer_norm(x, g, b, 0.0f);
  EXPECT_FLOAT_EQ(y[0], -1.0f);
  EXPECT_FLOAT_EQ(y[1], 1.0f);
}

TEST(LayerNorm, AbsorbsAffine) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = test::random_values(64, rng);
    const std::vector<float> g(64, 1.0f), b(64, 0.0f);
    std::vector<float> ax(64);
    for (std::size_t i = 0; i < 64; ++i) ax[i] = 3.5f * x[i] - 0.8f;
    const auto y1 = layer_norm(x, g, b, 1e-12f);
    const auto y2 = layer_norm(ax, g, b, 1e-12f);
    for (std::size_t i = 0; i < 64; ++i) EXPECT_NEAR(y1[i], y2[i], 1e-5);
  }
}

TEST(LayerNorm, OutputMoments) {
  std::mt19937_64 rng(5);
  const auto x = test::random_values(256, rng, 4.0f);
  const std::vector<float> g(256, 1.0f), b(256, 0.0f);
  const auto y = layer_norm(x, g, b);
  const auto s = stats(y);
  EXPECT_LE(std::abs(s.mean), 1e-6);
  EXPECT_NEAR(s.variance, 1.0, 1e-3);
}

TEST(LayerNorm, LengthMismatch) {
  const std::vector<float> x{1, 2}, g{1}, b{0, 0};
  EXPECT_THROW(layer_norm(x, g, b), InvalidInput);
  EXPECT_THROW(rms_norm(x, g), InvalidInput);
}

TEST(RmsNorm, Examples) {
  const std::vector<float> zero{0, 0}, g{1, 1};
  for (float v : rms_norm(zero, g)) EXPECT_EQ(v, 0.0f);
  const std::vector<float> x{3, 4}, x2{6, 8};
  const auto y = rms_norm(x, g, 0.0f);
  EXPECT_FLOAT_EQ(y[0], 3.0f / std::sqrt(12.5f));
  EXPECT_FLOAT_EQ(y[1], 4.0f / std::sqrt(12.5f));
  const auto y2 = rms_norm(x2, g, 0.0f);
  EXPECT_FLOAT_EQ(y[0], y2[0]);
  EXPECT_FLOAT_EQ(y[1], y2[1]);
}

TEST(Cosine, Examples) {
  const std::vector<float> a{1, 2, 3};
  EXPECT_NEAR(cosine_similarity(a, a), 1.0, 1e-12);
  EXPECT_NEAR(cosine_similarity(std::vector<float>{1, 0}, std::vector<float>{0, 1}), 0.0, 1e-12);
  EXPECT_NEAR(cosine_similarity(std::vector<float>{1, 1}, std::vector<float>{1, 0}), 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_THROW(cosine_similarity(std::vector<float>{0, 0}, std::vector<float>{1, 0}), InvalidInput);
  EXPECT_THROW(cosine_similarity(std::vector<float>{1}, std::vector<float>{1, 0}), InvalidInput);
}
