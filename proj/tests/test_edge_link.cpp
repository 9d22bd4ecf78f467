#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gkt/edge_link.hpp"

using namespace gkt;

TEST(BitsPerToken, Examples) {
  EXPECT_EQ(bits_per_token(32000), 15);
  EXPECT_EQ(bits_per_token(2), 1);
  EXPECT_EQ(bits_per_token(50257), 16);
  EXPECT_EQ(bits_per_token(32768), 15);
  EXPECT_EQ(bits_per_token(32769), 16);
}

TEST(BitsPerToken, RejectsTinyVocabulary) {
  EXPECT_THROW(bits_per_token(1), DomainError);
  EXPECT_THROW(bits_per_token(0), DomainError);
  EXPECT_THROW(bits_per_token(-4), DomainError);
}

// Brute-force oracle: the defining inequality 2^(b-1) < N <= 2^b.
TEST(BitsPerTokenProperty, MatchesDefinition) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 2000; ++i) {
    long long n = 2 + static_cast<long long>(rng() % (1ULL << 40));
    int b = bits_per_token(n);
    ASSERT_LT(1LL << (b - 1), n);
    ASSERT_LE(n, 1LL << b);
  }
}

TEST(BitsPerTokenProperty, StepsByOneAtPowersOfTwo) {
  int prev = bits_per_token(2);
  for (long long n = 3; n <= 70000; ++n) {
    int b = bits_per_token(n);
    const bool crossed = ((n - 1) & (n - 2)) == 0;  // n-1 is a power of two
    ASSERT_EQ(b, prev + (crossed ? 1 : 0)) << n;
    prev = b;
  }
}

TEST(TransmissionTime, Examples) {
  LinkModel link(5000, 32000);
  EXPECT_NEAR(transmission_time(40, link), 0.12, 1e-9);
  EXPECT_NEAR(transmission_time(600, link), 1.8, 1e-9);
  EXPECT_EQ(transmission_time(0, link), 0.0);
  EXPECT_NEAR(transmission_time(1, link), 0.003, 1e-12);
}

TEST(TransmissionTime, OverheadAndBytes) {
  LinkModel link(1000, 32000, 20);
  EXPECT_NEAR(link.transmission_time(2), (30 + 20) / 1000.0, 1e-12);
  EXPECT_NEAR(link.transmission_time_bytes(10), (80 + 20) / 1000.0, 1e-12);
  EXPECT_EQ(link.transmission_time_bytes(0), 0.0);
}

TEST(LinkModel, RejectsBadParameters) {
  EXPECT_THROW(LinkModel(0, 32000), DomainError);
  EXPECT_THROW(LinkModel(-1, 32000), DomainError);
  EXPECT_THROW(LinkModel(5000, 1), DomainError);
  EXPECT_THROW(LinkModel(5000, 32000, -1), DomainError);
}

TEST(LinkModel, FromConfigFallsBackToTeacherVocabulary) {
  LinkConfig c;
  c.bandwidth_bits_per_s = 5000;
  EXPECT_EQ(LinkModel::from_config(c, 32000).bits_per_token(), 15);
  c.vocabulary_size = 250880;
  EXPECT_EQ(LinkModel::from_config(c, 32000).bits_per_token(), 18);
}

TEST(CompareSchemes, Examples) {
  LinkModel link(5000, 32000);
  auto [gkt, sd] = compare_schemes(40, 300, link);
  EXPECT_EQ(gkt.scheme, TransferScheme::Gkt);
  EXPECT_EQ(sd.scheme, TransferScheme::SpeculativeDecoding);
  EXPECT_EQ(gkt.tokens_transmitted, 40);
  EXPECT_EQ(sd.tokens_transmitted, 600);
  EXPECT_NEAR(gkt.time_s, 0.12, 1e-9);
  EXPECT_NEAR(sd.time_s, 1.8, 1e-9);

  EXPECT_EQ(compare_schemes(0, 300, link).first.time_s, 0.0);

  LinkModel other(1234.5, 777);
  auto [g2, s2] = compare_schemes(100, 50, other);
  EXPECT_DOUBLE_EQ(g2.time_s, s2.time_s);
  EXPECT_THROW(compare_schemes(-1, 3, link), DomainError);
}

TEST(GuidanceTransfer, PricingModes) {
  LinkModel link(8000, 32000);
  EXPECT_NEAR(guidance_transfer_time(link, PricingMode::TeacherTokens, 4, "abcdefghij"), 60.0 / 8000, 1e-12);
  EXPECT_NEAR(guidance_transfer_time(link, PricingMode::Utf8Bytes, 4, "abcdefghij"), 80.0 / 8000, 1e-12);
}

TEST(LinkProperty, Linearity) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 500; ++i) {
    LinkModel link(1 + static_cast<double>(rng() % 100000), 2 + static_cast<long long>(rng() % 200000));
    long long a = static_cast<long long>(rng() % 5000), b = static_cast<long long>(rng() % 5000);
    const double lhs = link.transmission_time(a + b);
    const double rhs = link.transmission_time(a) + link.transmission_time(b);
    ASSERT_NEAR(lhs, rhs, 1e-9 * std::max(1.0, lhs));
  }
}

TEST(LinkProperty, GktDominatesBelowEqualityPoint) {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 500; ++i) {
    LinkModel link(1 + static_cast<double>(rng() % 100000), 2 + static_cast<long long>(rng() % 200000));
    long long L = 1 + static_cast<long long>(rng() % 2000);
    long long m = static_cast<long long>(rng() % static_cast<unsigned long long>(2 * L));
    auto [g, s] = compare_schemes(m, L, link);
    ASSERT_LT(g.time_s, s.time_s);
  }
}

TEST(LinkProperty, DoublingBandwidthHalvesTime) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 500; ++i) {
    double bw = 1 + static_cast<double>(rng() % 100000);
    long long n = 2 + static_cast<long long>(rng() % 200000);
    long long tokens = static_cast<long long>(rng() % 10000);
    ASSERT_DOUBLE_EQ(LinkModel(2 * bw, n).transmission_time(tokens), LinkModel(bw, n).transmission_time(tokens) / 2);
  }
}

TEST(SweepBandwidths, RowsPerBandwidth) {
  auto rows = sweep_bandwidths(32000, {2500, 5000, 10000}, 40, 300);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_NEAR(rows[1].gkt.time_s, 0.12, 1e-9);
  EXPECT_NEAR(rows[0].speculative.time_s, 3.6, 1e-9);
  EXPECT_NEAR(rows[2].gkt.time_s, 0.06, 1e-9);
}
