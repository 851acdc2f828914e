#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "bols/core.hpp"
#include "bols/distributions.hpp"

using namespace bols;

namespace {

HistorySummary history(std::int64_t n0, double s0, std::int64_t n1, double s1)
{
    HistorySummary h;
    h.pulls = {n0, n1};
    h.reward_sum = {s0, s1};
    return h;
}

}

TEST(ClipProb, Examples)
{
    EXPECT_EQ(clip_prob(0.99, 0.1, 0.9), 0.9);
    EXPECT_EQ(clip_prob(0.5, 0.1, 0.9), 0.5);
    EXPECT_EQ(clip_prob(0.0, 0.05, 0.95), 0.05);
    EXPECT_THROW(clip_prob(0.5, 0.9, 0.1), std::invalid_argument);
}

TEST(EpsilonGreedy, Examples)
{
    EXPECT_DOUBLE_EQ(epsilon_greedy_prob(history(1, 0.0, 1, 1.0), 0.1), 0.95);
    EXPECT_DOUBLE_EQ(epsilon_greedy_prob(history(2, 1.0, 2, 1.0), 0.1), 0.05);
    EXPECT_DOUBLE_EQ(epsilon_greedy_prob(HistorySummary{}, 0.1), 0.5);
    // one arm unpulled falls back to the first-batch probability
    EXPECT_DOUBLE_EQ(epsilon_greedy_prob(history(0, 0.0, 3, 1.0), 0.1), 0.5);
}

TEST(EpsilonGreedy, ShiftInvariant)
{
    Rng rng(4);
    std::normal_distribution<double> nd;
    for (int i = 0; i < 500; ++i) {
        const std::int64_t n0 = 1 + i % 7, n1 = 1 + i % 5;
        auto h = history(n0, nd(rng), n1, nd(rng));
        const double c = 10.0 * nd(rng);
        auto g = history(n0, h.reward_sum[0] + c * n0, n1, h.reward_sum[1] + c * n1);
        // skip near-ties where rounding could flip the comparison
        if (std::abs(h.mean(1) - h.mean(0)) < 1e-9)
            continue;
        EXPECT_EQ(epsilon_greedy_prob(h, 0.1), epsilon_greedy_prob(g, 0.1));
    }
}

TEST(Thompson, Examples)
{
    EXPECT_DOUBLE_EQ(thompson_prob(HistorySummary{}, 1.0, 1.0), 0.5);
    EXPECT_NEAR(thompson_prob(history(1, 0.0, 1, 1.0), 1.0, 1.0), 0.6914624612740131, 1e-12);

    PolicySpec p;
    p.kind = PolicySpec::Kind::thompson;
    auto h = history(50, 0.0, 50, 25.0);
    ASSERT_GT(raw_policy_prob(p, h, 50, 2), 0.99);
    EXPECT_EQ(policy_prob(p, h, 50, 2), 0.9);
}

TEST(Thompson, MonotoneInArmOneRewards)
{
    Rng rng(9);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (int i = 0; i < 300; ++i) {
        auto h = history(1 + i % 9, u(rng), 1 + i % 4, u(rng));
        double prev = thompson_prob(h, 1.0, 1.0);
        for (int k = 0; k < 10; ++k) {
            h.reward_sum[1] += 0.3;
            const double cur = thompson_prob(h, 1.0, 1.0);
            EXPECT_GE(cur, prev);
            prev = cur;
        }
    }
}

TEST(Ucb, Examples)
{
    EXPECT_EQ(ucb_prob(history(3, 1.0, 0, 0.0), 0.1, 0.9), 0.9);
    EXPECT_EQ(ucb_prob(history(4, 0.0, 4, 4.0), 0.1, 0.9), 0.9);
    EXPECT_NEAR(ucb_prob(history(4, 4.0, 4, 0.0), 0.1, 0.9), 0.1, 1e-15);
    EXPECT_EQ(ucb_prob(HistorySummary{}, 0.1, 0.9), 0.5);
    EXPECT_TRUE(std::isinf(ucb_index(history(0, 0, 2, 1), 0, 0.1)));
}

TEST(Policy, ClippedProbabilityAlwaysInBounds)
{
    Rng rng(21);
    std::normal_distribution<double> nd(0.0, 30.0);
    for (auto kind : {PolicySpec::Kind::epsilon_greedy, PolicySpec::Kind::thompson,
                      PolicySpec::Kind::ucb, PolicySpec::Kind::fixed}) {
        PolicySpec p;
        p.kind = kind;
        p.clip_lo = 0.15;
        p.clip_hi = 0.8;
        p.fixed_prob = 0.99;
        for (int i = 0; i < 2000; ++i) {
            auto h = history(i % 13, nd(rng), (i * 7) % 11, nd(rng));
            const double pi = policy_prob(p, h, 25, 10);
            EXPECT_GE(pi, p.clip_lo);
            EXPECT_LE(pi, p.clip_hi);
        }
    }
}

TEST(Policy, FirstBatchDefault)
{
    PolicySpec p;
    for (auto kind : {PolicySpec::Kind::epsilon_greedy, PolicySpec::Kind::thompson,
                      PolicySpec::Kind::ucb})
    {
        p.kind = kind;
        EXPECT_EQ(raw_policy_prob(p, HistorySummary{}, 25, 25), 0.5);
    }
    p.kind = PolicySpec::Kind::fixed;
    p.fixed_prob = 0.3;
    EXPECT_EQ(raw_policy_prob(p, HistorySummary{}, 25, 25), 0.3);
}

TEST(Policy, ValidateAndNames)
{
    PolicySpec p;
    p.kind = PolicySpec::Kind::epsilon_greedy;
    p.epsilon = 0.0;
    EXPECT_THROW(p.validate(), std::invalid_argument);
    p.epsilon = 0.1;
    p.clip_lo = 0.0;
    EXPECT_THROW(p.validate(), std::invalid_argument);
    for (auto k : {PolicySpec::Kind::epsilon_greedy, PolicySpec::Kind::thompson,
                   PolicySpec::Kind::ucb, PolicySpec::Kind::fixed})
        EXPECT_EQ(policy_kind_from_string(to_string(k)), k);
    EXPECT_THROW(policy_kind_from_string("softmax"), std::invalid_argument);
}

// Under zero margin the second-batch Thompson probability does not settle:
// it stays spread over (0, 1) even with a huge first batch.
TEST(Thompson, NonConcentrationAtZeroMargin)
{
    const int n = 10'000, reps = 2000;
    std::vector<double> pis;
    pis.reserve(reps);
    PolicySpec p;
    p.kind = PolicySpec::Kind::thompson;
    for (int r = 0; r < reps; ++r) {
        Rng rng = make_stream(123, static_cast<std::uint64_t>(r), 1);
        auto b = generate_batch(1, 0.5, {0.0, 0.0}, 1.0, n, rng);
        HistorySummary h;
        h.absorb(b.actions, b.rewards);
        pis.push_back(raw_policy_prob(p, h, n, 2));
    }
    double m = 0.0;
    for (double v : pis)
        m += v;
    m /= reps;
    double ss = 0.0;
    for (double v : pis)
        ss += (v - m) * (v - m);
    EXPECT_GT(std::sqrt(ss / (reps - 1)), 0.2);
}
