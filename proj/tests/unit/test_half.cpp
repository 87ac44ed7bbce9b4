#include <cmath>
#include <cstring>
#include <limits>
#include <random>

#include <Eigen/Core>
#include <gtest/gtest.h>

#include "rankclust/half.hpp"

using namespace rankclust;

namespace {

std::uint16_t eigen_bits(float v) {
  const Eigen::half h(v);
  std::uint16_t bits;
  std::memcpy(&bits, &h, 2);
  return bits;
}

}  // namespace

TEST(Half, MatchesEigenOnRandomValues) {
  std::mt19937 rng(7);
  std::uniform_int_distribution<std::uint32_t> bits;
  int checked = 0;
  for (int i = 0; i < 200000; ++i) {
    const std::uint32_t b = bits(rng);
    float f;
    std::memcpy(&f, &b, 4);
    if (std::isnan(f)) continue;
    ASSERT_EQ(float_to_half(f), eigen_bits(f)) << f;
    ++checked;
  }
  EXPECT_GT(checked, 100000);
}

TEST(Half, EveryHalfRoundTrips) {
  for (std::uint32_t b = 0; b < 65536; ++b) {
    const auto h = static_cast<std::uint16_t>(b);
    const float f = half_to_float(h);
    if (std::isnan(f)) {
      EXPECT_TRUE(std::isnan(half_to_float(float_to_half(f))));
      continue;
    }
    EXPECT_EQ(float_to_half(f), h) << b;
    const Eigen::half e = Eigen::numext::bit_cast<Eigen::half>(h);
    EXPECT_EQ(f, static_cast<float>(e));
  }
}

TEST(Half, TiesGoToEven) {
  // 1 + 2^-11 is halfway between 1 and the next half (1 + 2^-10).
  EXPECT_EQ(float_to_half(1.0f + std::ldexp(1.0f, -11)), float_to_half(1.0f));
  EXPECT_EQ(float_to_half(1.0f + 3 * std::ldexp(1.0f, -11)), float_to_half(1.0f + std::ldexp(1.0f, -9)));
  EXPECT_EQ(float_to_half(70000.0f), 0x7c00);
  EXPECT_EQ(round_to_half(0.5f), 0.5f);
}
