#include <gtest/gtest.h>

#include <bitset>
#include <cmath>

#include "cpsofdm/dsp.hpp"
#include "oracles.hpp"

using namespace cpsofdm;

TEST(Fft, MatchesDirectDft) {
  Rng rng(11);
  for (std::size_t n : {1u, 2u, 7u, 12u, 24u, 128u}) {
    const ComplexVec x = oracle::random_vec(rng, n);
    EXPECT_LT((fft(x) - oracle::dft(n) * x).norm(), 1e-10 * x.norm()) << n;
    EXPECT_LT((ifft(x) - oracle::dft(n).adjoint() * x).norm(), 1e-10 * x.norm()) << n;
    EXPECT_LT((dft_matrix(n) - oracle::dft(n)).norm(), 1e-12 * n);
  }
}

TEST(Fft, RoundTripAndEmptyInput) {
  Rng rng(3);
  const ComplexVec x = oracle::random_vec(rng, 96);
  EXPECT_LT((ifft(fft(x)) - x).norm(), 1e-12 * x.norm());
  EXPECT_EQ(fft(ComplexVec()).size(), 0);
}

TEST(Permutation, DownshiftMovesEntriesDown) {
  ComplexVec v(5);
  v << 1, 2, 3, 4, 5;
  const ComplexVec s = circular_downshift(v, 2);
  ComplexVec expect(5);
  expect << 4, 5, 1, 2, 3;
  EXPECT_EQ(s, expect);
  EXPECT_EQ(downshift_permutation(5, 2) * v, expect);
  EXPECT_THROW(circular_downshift(v, 5), Error);
}

TEST(Reshape, ColumnMajorRoundTrip) {
  ComplexVec x(6);
  x << 0, 1, 2, 3, 4, 5;
  const ComplexMat a = reshape_vec(x, 3, 2);
  EXPECT_EQ(a(2, 1), cdouble(5.0));
  EXPECT_EQ(a(1, 0), cdouble(1.0));
  EXPECT_EQ(vec(a), x);
  EXPECT_THROW(reshape_vec(x, 4, 2), Error);
}

TEST(Qam, UnitEnergyAndKnownFourthMoment) {
  const QamConstellation q16(16);
  EXPECT_NEAR(q16.symbol_energy(), 1.0, 1e-14);
  EXPECT_NEAR(q16.fourth_moment(), 1.32, 1e-14);
  EXPECT_NEAR(QamConstellation(4).fourth_moment(), 1.0, 1e-14);
  EXPECT_NEAR(QamConstellation(64).fourth_moment(), 1.380952380952381, 1e-12);
  EXPECT_THROW(QamConstellation(8), Error);
}

TEST(Qam, MapDemapRoundTrip) {
  Rng rng(5);
  for (int order : {4, 16, 64}) {
    const QamConstellation q(order);
    const auto bits = rng.bits(600 * static_cast<std::size_t>(q.bits_per_symbol()));
    const ComplexVec s = q.map(bits);
    EXPECT_EQ(q.demap(s), bits);
  }
}

TEST(Qam, NearestNeighboursDifferInOneBit) {
  const QamConstellation q(16);
  const double dmin = 2.0 / std::sqrt(10.0);
  for (int a = 0; a < 16; ++a)
    for (int b = a + 1; b < 16; ++b)
      if (std::abs(std::abs(q.point(a) - q.point(b)) - dmin) < 1e-9)
        EXPECT_EQ(std::bitset<4>(static_cast<unsigned>(a ^ b)).count(), 1u) << a << " " << b;
}

TEST(Qam, AllZeroLabelIsLowerLeftCorner) {
  const QamConstellation q(16);
  EXPECT_NEAR(std::abs(q.point(0) - cdouble(-3.0, -3.0) / std::sqrt(10.0)), 0.0, 1e-14);
}

TEST(Rng, DeterministicAndDerivedStreamsDiffer) {
  Rng a(42), b(42);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  Rng c = Rng::derive(42, 1), d = Rng::derive(42, 2), e = Rng::derive(42, 1);
  const auto vc = c.next_u64();
  EXPECT_NE(vc, d.next_u64());
  EXPECT_EQ(vc, e.next_u64());
}

TEST(Rng, ComplexNormalVariance) {
  Rng rng(9);
  const ComplexVec z = rng.complex_normal_vec(200000, 2.5);
  EXPECT_NEAR(z.squaredNorm() / 200000.0, 2.5, 0.03);
  EXPECT_NEAR(z.mean().real(), 0.0, 0.01);
}
