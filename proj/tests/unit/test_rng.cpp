#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "groundkit/rng.hpp"

using namespace groundkit;

// Reference values from a direct Python transcription of SplitMix64.
TEST(Rng, Mix64KnownAnswers) {
    EXPECT_EQ(mix64(0), 0xE220A8397B1DCDAFULL);
    EXPECT_EQ(mix64(1), 0x910A2DEC89025CC1ULL);
    EXPECT_EQ(mix64(0xDEADBEEF), 0x4ADFB90F68C9EB9BULL);
}

TEST(Rng, CounterStreamKnownAnswers) {
    CounterRng rng(42);
    EXPECT_EQ(rng.next_u64(), 0x4D9B3F1EC9CF6B1BULL);
    EXPECT_EQ(rng.next_u64(), 0x7EB3B394AC9EFC29ULL);
    EXPECT_EQ(rng.next_u64(), 0x1DB2233EB3BCAEB3ULL);
    EXPECT_EQ(CounterRng(42).uniform(), 0.30315012456577295);
}

TEST(Rng, DeriveKeyKnownAnswers) {
    EXPECT_EQ(derive_key(7, {}), 0xDE18BA9E4BC6EC06ULL);
    EXPECT_EQ(derive_key(7, {1, 2}), 0x25D0BFA26524BF7CULL);
}

TEST(Rng, AtDoesNotAdvance) {
    CounterRng rng(9);
    const auto v = rng.at(5);
    EXPECT_EQ(rng.counter(), 0u);
    for (int i = 0; i < 5; ++i) rng.next_u64();
    EXPECT_EQ(rng.next_u64(), v);
}

TEST(Rng, ForkLabelsGiveDistinctStreams) {
    const CounterRng root(3);
    std::set<std::uint64_t> firsts;
    for (std::uint64_t i = 0; i < 1000; ++i) firsts.insert(root.fork({i}).next_u64());
    EXPECT_EQ(firsts.size(), 1000u);
    EXPECT_EQ(root.fork({1, 2}).next_u64(), root.fork({1, 2}).next_u64());
    EXPECT_NE(root.fork({1, 2}).next_u64(), root.fork({2, 1}).next_u64());
}

TEST(Rng, UniformAndBelowRanges) {
    CounterRng rng(11);
    std::array<int, 7> counts{};
    for (int i = 0; i < 70000; ++i) {
        const double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        ++counts[rng.below(7)];
    }
    for (int c : counts) EXPECT_NEAR(c / 70000.0, 1.0 / 7.0, 0.01);
    EXPECT_EQ(rng.below(1), 0u);
    EXPECT_EQ(rng.below(0), 0u);
}

TEST(Rng, NormalMoments) {
    CounterRng rng(5);
    double s = 0, s2 = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        ASSERT_TRUE(std::isfinite(z));
        s += z;
        s2 += z * z;
    }
    EXPECT_NEAR(s / n, 0.0, 0.01);
    EXPECT_NEAR(s2 / n, 1.0, 0.02);
}
