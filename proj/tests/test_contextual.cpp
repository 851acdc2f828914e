#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "bols/contextual.hpp"
#include "bols/inference.hpp"

using namespace bols;

namespace {

ContextBatch scalar_batch(std::vector<double> ctx, std::vector<int> actions,
                          std::vector<double> rewards)
{
    ContextBatch b;
    b.contexts = Eigen::Map<Eigen::VectorXd>(ctx.data(), static_cast<Eigen::Index>(ctx.size()));
    b.actions = std::move(actions);
    b.rewards = std::move(rewards);
    b.propensities = Eigen::MatrixXd::Constant(b.size(), 2, 0.5);
    return b;
}

ContextSpec two_arm_spec(int d)
{
    ContextSpec s;
    s.d = d;
    s.K = 2;
    s.n = 200;
    s.T = 3;
    s.seed = 17;
    Eigen::MatrixXd beta(2, d);
    beta.setZero();
    beta(0, 0) = 0.3;
    beta(1, 0) = 0.1;
    s.coefficients = {beta};
    return s;
}

}

TEST(PerArmOls, ScalarNormalEquation)
{
    auto b = scalar_batch({1, 2, 3}, {1, 1, 0}, {1, 4, 9});
    auto g = arm_gram(b, 1);
    EXPECT_DOUBLE_EQ(g.gram(0, 0), 5.0);
    EXPECT_DOUBLE_EQ(g.moment[0], 9.0);
    auto f = per_arm_ols(b, 1);
    ASSERT_TRUE(f.valid);
    EXPECT_NEAR(f.beta[0], 9.0 / 5.0, 1e-15);
}

TEST(PerArmOls, ZeroRewardsAndInterpolation)
{
    auto z = scalar_batch({1, 2, 3}, {1, 1, 1}, {0, 0, 0});
    EXPECT_EQ(per_arm_ols(z, 1).beta[0], 0.0);
    auto dup = scalar_batch({2, 2, 2}, {0, 0, 0}, {3, 3, 3});
    EXPECT_NEAR(per_arm_ols(dup, 0).beta[0], 1.5, 1e-15);
}

TEST(PerArmOls, SingularGram)
{
    ContextBatch b;
    b.contexts.resize(3, 2);
    b.contexts << 1, 2, 1, 2, 1, 2;  // rank one
    b.actions = {0, 0, 0};
    b.rewards = {1, 2, 3};
    b.propensities = Eigen::MatrixXd::Constant(3, 2, 0.5);
    EXPECT_FALSE(per_arm_ols(b, 0).valid);
    EXPECT_FALSE(per_arm_ols(b, 1).valid);  // unpulled
    EXPECT_FALSE(contextual_bols_statistic(b, 0, 1, Eigen::VectorXd::Zero(2), 1.0).valid);
}

TEST(ContextualStatistic, ScalarArithmetic)
{
    // g_x = g_y = 2, difference 1
    auto b = scalar_batch({1, 1, 1, 1}, {1, 1, 0, 0}, {1, 1, 0, 0});
    auto s = contextual_bols_statistic(b, 1, 0, Eigen::VectorXd::Zero(1), 1.0);
    ASSERT_TRUE(s.valid);
    EXPECT_NEAR(s.value[0], 1.0, 1e-12);

    auto eq = scalar_batch({1, 1, 1, 1}, {1, 1, 0, 0}, {2, 2, 2, 2});
    EXPECT_NEAR(contextual_bols_statistic(eq, 1, 0, Eigen::VectorXd::Zero(1), 1.0).value[0], 0.0,
                1e-15);
}

TEST(InverseSqrt, IdentityOnRandomGrams)
{
    Rng rng(4);
    std::normal_distribution<double> nd;
    for (int r = 0; r < 200; ++r) {
        const int d = 1 + r % 5;
        Eigen::MatrixXd X(3 * d + 2, d);
        for (Eigen::Index i = 0; i < X.size(); ++i)
            X.data()[i] = nd(rng);
        const Eigen::MatrixXd m = X.transpose() * X;
        auto root = inverse_sqrt_psd(m);
        ASSERT_TRUE(root.has_value());
        const Eigen::MatrixXd id = (*root) * m * (*root);
        EXPECT_LT((id - Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff(), 1e-8);
    }
    Eigen::MatrixXd sing(2, 2);
    sing << 1, 1, 1, 1;
    EXPECT_FALSE(inverse_sqrt_psd(sing).has_value());
}

TEST(Projection, ClippedSimplex)
{
    Eigen::VectorXd p(3);
    p << 0.98, 0.01, 0.01;
    auto q = project_clipped_simplex(p, 0.05, 0.9);
    EXPECT_NEAR(q.sum(), 1.0, 1e-12);
    EXPECT_GE(q.minCoeff(), 0.05 - 1e-12);
    EXPECT_LE(q.maxCoeff(), 0.9 + 1e-12);

    Eigen::VectorXd two(2);
    two << 0.97, 0.03;
    auto c = project_clipped_simplex(two, 0.1, 0.9);
    EXPECT_NEAR(c[1], 0.1, 1e-12);
    EXPECT_NEAR(c[0], 0.9, 1e-12);

    Eigen::VectorXd inside(2);
    inside << 0.4, 0.6;
    EXPECT_EQ(project_clipped_simplex(inside, 0.1, 0.9), inside);
}

TEST(ContextGenerator, NoiselessRewardsAndDeterminism)
{
    auto s = two_arm_spec(3);
    s.sigma2 = 0.0;
    s.coefficients[0] << 1.0, -2.0, 0.5, 0.3, 0.7, -1.0;
    auto a = simulate_contextual(s, 2);
    auto b = simulate_contextual(s, 2);
    for (std::size_t t = 0; t < a.size(); ++t) {
        EXPECT_EQ(a[t].actions, b[t].actions);
        EXPECT_EQ(a[t].rewards, b[t].rewards);
        for (int i = 0; i < a[t].size(); ++i) {
            const int k = a[t].actions[static_cast<std::size_t>(i)];
            EXPECT_NEAR(a[t].rewards[static_cast<std::size_t>(i)],
                        a[t].contexts.row(i).dot(s.coefficients[0].row(k)), 1e-14);
            EXPECT_GE(a[t].propensities.row(i).minCoeff(), s.clip_lo - 1e-12);
            EXPECT_LE(a[t].propensities.row(i).maxCoeff(), s.clip_hi + 1e-12);
            EXPECT_EQ(a[t].contexts(i, 0), 1.0);
        }
    }
}

TEST(ContextGenerator, MultiArmThompsonProbabilitiesClipped)
{
    ContextSpec s;
    s.d = 2;
    s.K = 3;
    s.n = 100;
    s.T = 2;
    s.clip_lo = 0.1;
    s.clip_hi = 0.8;
    s.coefficients = {Eigen::MatrixXd::Zero(3, 2)};
    s.coefficients[0](2, 0) = 2.0;
    auto out = simulate_contextual(s, 0);
    for (const auto& b : out)
        for (int i = 0; i < b.size(); ++i) {
            EXPECT_NEAR(b.propensities.row(i).sum(), 1.0, 1e-12);
            EXPECT_GE(b.propensities.row(i).minCoeff(), 0.1 - 1e-12);
        }
}

TEST(ContextSpecTest, Validate)
{
    auto s = two_arm_spec(2);
    EXPECT_NO_THROW(s.validate());
    s.clip_lo = 0.6;
    EXPECT_THROW(s.validate(), std::invalid_argument);
    s = two_arm_spec(2);
    s.coefficients = {Eigen::MatrixXd::Zero(3, 2)};
    EXPECT_THROW(s.validate(), std::invalid_argument);
    s = two_arm_spec(2);
    s.policy = ContextSpec::Policy::fixed;
    EXPECT_THROW(s.validate(), std::invalid_argument);
}

// With contexts identically one and two arms, the contextual path reproduces
// the multi-arm simulator and its statistics.
TEST(Reduction, ConstantContextMatchesMultiArm)
{
    for (auto policy : {ContextSpec::Policy::fixed, ContextSpec::Policy::thompson}) {
        auto cs = two_arm_spec(1);
        cs.n = 60;
        cs.T = 4;
        cs.policy = policy;
        cs.fixed_probs = {0.7, 0.3};
        auto ctx = simulate_contextual(cs, 3);

        ExperimentSpec es;
        es.n = cs.n;
        es.T = cs.T;
        es.seed = cs.seed;
        es.trend = TrendSpec::constant_means(0.3, 0.1);
        es.policy.kind = policy == ContextSpec::Policy::fixed ? PolicySpec::Kind::fixed
                                                              : PolicySpec::Kind::thompson;
        es.policy.fixed_prob = 0.3;
        es.policy.first_batch_prob = 0.5;
        auto tr = simulate_trajectory(es, 3);

        for (int t = 0; t < cs.T; ++t) {
            const auto& cb = ctx[static_cast<std::size_t>(t)];
            const auto& mb = tr.batches[static_cast<std::size_t>(t)];
            ASSERT_EQ(cb.size(), mb.size());
            for (int i = 0; i < cb.size(); ++i) {
                ASSERT_EQ(cb.actions[static_cast<std::size_t>(i)],
                          mb.actions[static_cast<std::size_t>(i)]);
                EXPECT_NEAR(cb.rewards[static_cast<std::size_t>(i)],
                            mb.rewards[static_cast<std::size_t>(i)], 1e-10);
                EXPECT_NEAR(cb.propensities(i, 1), mb.propensity, 1e-10);
            }
            const auto e = bols_batch(mb);
            auto st = contextual_bols_statistic(cb, 1, 0, Eigen::VectorXd::Zero(1), 1.0);
            ASSERT_TRUE(st.valid);
            EXPECT_NEAR(st.beta_diff[0], e.delta_hat, 1e-10);
            EXPECT_NEAR(st.value[0], e.scale() * e.delta_hat, 1e-10);
        }
    }
}
