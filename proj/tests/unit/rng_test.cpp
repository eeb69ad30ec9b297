#include <cmath>

#include <gtest/gtest.h>

#include "diffopt/rng.hpp"

namespace diffopt {
namespace {

TEST(Rng, SameSeedSameStream) {
  Rng a(3), b(3);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.normal(), b.normal());
  EXPECT_EQ(a, b);
}

TEST(Rng, DerivedStreamsDiffer) {
  Rng a = Rng::derive(1, 2, 0), b = Rng::derive(1, 2, 1), c = Rng::derive(1, 3, 0), d = Rng::derive(2, 2, 0);
  const double x = a.uniform();
  EXPECT_NE(x, b.uniform());
  EXPECT_NE(x, c.uniform());
  EXPECT_NE(x, d.uniform());
  Rng again = Rng::derive(1, 2, 0);
  EXPECT_EQ(x, again.uniform());
}

TEST(Rng, StateRoundTrip) {
  Rng a(9);
  a.normal_matrix(3, 3);
  const std::string s = a.state();
  const Matrix next = a.normal_matrix(4, 4);
  Rng b(0);
  b.restore(s);
  EXPECT_EQ(b.normal_matrix(4, 4), next);
  EXPECT_THROW(b.restore("garbage"), std::invalid_argument);
}

TEST(Rng, UniformIntIsInclusive) {
  Rng a(4);
  bool lo = false, hi = false;
  for (int i = 0; i < 2000; ++i) {
    const int v = a.uniform_int(1, 5);
    ASSERT_GE(v, 1);
    ASSERT_LE(v, 5);
    lo |= v == 1;
    hi |= v == 5;
  }
  EXPECT_TRUE(lo && hi);
  EXPECT_EQ(a.uniform_int(7, 7), 7);
}

TEST(Rng, NormalMoments) {
  Rng a(5);
  const Matrix m = a.normal_matrix(200, 100);
  const double mean = m.mean();
  const double var = (m.array() - mean).square().sum() / (m.size() - 1);
  EXPECT_NEAR(mean, 0.0, 4.0 / std::sqrt(20000.0));
  EXPECT_NEAR(var, 1.0, 0.05);
}

TEST(Rng, MatrixFilledRowByRow) {
  Rng a(6), b(6);
  const Matrix m = a.normal_matrix(2, 3);
  const Matrix flat = b.normal_matrix(1, 6);
  for (Index r = 0; r < 2; ++r) {
    for (Index c = 0; c < 3; ++c) EXPECT_EQ(m(r, c), flat(0, r * 3 + c));
  }
}

}  // namespace
}  // namespace diffopt
