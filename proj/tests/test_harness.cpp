#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "bols/figures.hpp"
#include "bols/harness.hpp"

using namespace bols;

namespace {

McPlan small_plan(PolicySpec::Kind kind, int reps, std::uint64_t seed)
{
    McPlan p;
    p.spec.n = 25;
    p.spec.T = 5;
    p.spec.policy.kind = kind;
    p.spec.seed = seed;
    p.reps = reps;
    p.cutoff_draws = 20'000;
    p.lambda_reps = 200;
    return p;
}

}

TEST(Replication, NoiselessFixedDesignRecoversMargin)
{
    McPlan p;
    p.spec.n = 20;
    p.spec.T = 3;
    p.spec.noise_sigma2 = {0.0};
    p.spec.sigma_known = true;
    p.spec.set_clip(0.5, 0.5);
    p.spec.trend = TrendSpec::constant_means(2.0, 3.0);
    p.reps = 1;
    p.wdec_lambda = 1.0;
    auto r = run_replication(prepare(p), 0);
    for (auto id : {EstimatorId::ols, EstimatorId::bols, EstimatorId::wdecorrelated,
                    EstimatorId::awaipw, EstimatorId::snbound}) {
        ASSERT_NE(r.find(id), nullptr);
        EXPECT_NEAR(r.find(id)->report.estimate, 1.0, 1e-12) << to_string(id);
    }
}

TEST(Replication, Deterministic)
{
    auto p = prepare(small_plan(PolicySpec::Kind::thompson, 1, 5));
    auto a = run_replication(p, 7), b = run_replication(p, 7);
    EXPECT_EQ(a.digest, b.digest);
    ASSERT_EQ(a.outcomes.size(), b.outcomes.size());
    for (std::size_t i = 0; i < a.outcomes.size(); ++i) {
        EXPECT_EQ(a.outcomes[i].report.statistic, b.outcomes[i].report.statistic);
        EXPECT_EQ(a.outcomes[i].test.reject, b.outcomes[i].test.reject);
    }
    EXPECT_NE(a.digest, run_replication(p, 8).digest);
}

TEST(Replication, EpsilonGreedyZStatisticSample)
{
    auto plan = small_plan(PolicySpec::Kind::epsilon_greedy, 50, 2);
    plan.spec.n = 100;
    plan.spec.T = 25;
    plan.spec.sigma_known = true;
    plan.estimators = {EstimatorId::ols};
    plan.keep_raw = true;
    auto s = monte_carlo(plan);
    const auto& raw = s.at(EstimatorId::ols).raw_statistics;
    ASSERT_EQ(raw.size(), 50u);
    for (double z : raw)
        EXPECT_TRUE(std::isfinite(z));
}

TEST(MonteCarlo, AlwaysRejectAndStandardError)
{
    auto plan = small_plan(PolicySpec::Kind::fixed, 200, 3);
    plan.estimators = {EstimatorId::ols, EstimatorId::awaipw};
    plan.cutoff_overrides[EstimatorId::ols] = -1.0;
    auto s = monte_carlo(plan);
    EXPECT_EQ(s.at(EstimatorId::ols).rate, 1.0);
    EXPECT_EQ(s.at(EstimatorId::ols).se, 0.0);
    const auto& aw = s.at(EstimatorId::awaipw);
    EXPECT_EQ(aw.se, std::sqrt(aw.rate * (1.0 - aw.rate) / 200.0));
    EXPECT_NEAR(mc_standard_error(0.05, 10'000), 0.0021794494717703367, 1e-15);
}

TEST(MonteCarlo, WorkerCountDoesNotChangeResults)
{
    auto plan = small_plan(PolicySpec::Kind::thompson, 300, 4);
    plan.keep_raw = true;
    plan.bands = true;
    plan.workers = 1;
    auto a = monte_carlo(plan);
    plan.workers = 4;
    auto b = monte_carlo(plan);
    EXPECT_EQ(a.lambda, b.lambda);
    EXPECT_EQ(a.invalid_batch_frequency, b.invalid_batch_frequency);
    EXPECT_EQ(a.coverage, b.coverage);
    ASSERT_EQ(a.estimators.size(), b.estimators.size());
    for (std::size_t i = 0; i < a.estimators.size(); ++i) {
        EXPECT_EQ(a.estimators[i].rejections, b.estimators[i].rejections);
        ASSERT_EQ(a.estimators[i].raw_statistics.size(), b.estimators[i].raw_statistics.size());
        for (std::size_t r = 0; r < a.estimators[i].raw_statistics.size(); ++r) {
            const double x = a.estimators[i].raw_statistics[r];
            const double y = b.estimators[i].raw_statistics[r];
            EXPECT_TRUE(x == y || (std::isnan(x) && std::isnan(y)));
        }
    }
}

TEST(MonteCarlo, RatesInUnitInterval)
{
    auto s = monte_carlo(small_plan(PolicySpec::Kind::ucb, 200, 6));
    for (const auto& e : s.estimators) {
        EXPECT_GE(e.rate, 0.0);
        EXPECT_LE(e.rate, 1.0);
    }
    EXPECT_FALSE(s.coverage.has_value());
    EXPECT_GE(s.wall_clock_seconds, 0.0);
}

TEST(Plan, Validation)
{
    auto p = small_plan(PolicySpec::Kind::thompson, 0, 1);
    EXPECT_THROW(p.validate(), std::invalid_argument);
    p.reps = 10;
    p.alpha = 1.0;
    EXPECT_THROW(p.validate(), std::invalid_argument);
    p.alpha = 0.05;
    p.estimators.clear();
    EXPECT_THROW(p.validate(), std::invalid_argument);
    for (auto e : all_estimators())
        EXPECT_EQ(estimator_from_string(to_string(e)), e);
    EXPECT_THROW(estimator_from_string("ipw"), std::invalid_argument);
}

TEST(Calibration, RequiresZeroMargin)
{
    auto p = small_plan(PolicySpec::Kind::thompson, 10, 1);
    p.spec.trend = TrendSpec::constant_means(0.0, 0.5);
    EXPECT_FALSE(has_zero_margin(p.spec));
    EXPECT_THROW(calibrate_cutoffs(p), std::invalid_argument);
    auto z = null_spec(p.spec);
    EXPECT_TRUE(has_zero_margin(z));

    auto shifted = p.spec;
    shifted.trend = TrendSpec::shifted(0.3, TrendSpec::Baseline::quadratic, 1.0);
    auto zs = null_spec(shifted);
    EXPECT_TRUE(has_zero_margin(zs));
    EXPECT_EQ(build_trend(zs.trend, zs.T)[0].beta0, build_trend(shifted.trend, shifted.T)[0].beta0);
}

TEST(Calibration, OlsUnderThompsonNeedsLargerCutoff)
{
    McPlan p;
    p.spec.n = 100;
    p.spec.T = 25;
    p.spec.sigma_known = true;
    p.spec.set_clip(0.05, 0.95);
    p.spec.seed = 99;
    p.estimators = {EstimatorId::ols};
    p.reps = 4000;
    auto cal = calibrate_cutoffs(p);
    EXPECT_GT(cal.cutoffs.at(EstimatorId::ols).cutoff, 1.96);
}

TEST(Calibration, ClosureOnFreshNullRun)
{
    McPlan p;
    p.spec.n = 25;
    p.spec.T = 10;
    p.spec.sigma_known = true;
    p.spec.seed = 5;
    p.estimators = {EstimatorId::ols, EstimatorId::bols, EstimatorId::awaipw};
    p.reps = 3000;
    auto cal = calibrate_cutoffs(p);
    auto fresh = p;
    fresh.spec.seed = 6;
    for (const auto& [id, c] : cal.cutoffs)
        fresh.cutoff_overrides[id] = c.cutoff;
    auto s = monte_carlo(fresh);
    const double se = mc_standard_error(p.alpha, p.reps);
    for (const auto& e : s.estimators)
        EXPECT_NEAR(e.rate, p.alpha, 3.0 * std::sqrt(2.0) * se) << to_string(e.id);
}

TEST(Figures, UnknownNameThrows)
{
    FigureOptions o;
    EXPECT_THROW(reproduce_figure("fig99", o), std::invalid_argument);
    EXPECT_EQ(figure_names().size(), 6u);
}

TEST(Figures, Type1TableKeyedByT)
{
    FigureOptions o;
    o.reps = 40;
    o.Ts = {2, 5};
    o.cutoff_draws = 20'000;
    o.out = std::filesystem::temp_directory_path() / "bols_fig_test";
    std::filesystem::remove_all(o.out);
    auto j = reproduce_figure("type1_stationary", o);
    EXPECT_EQ(j["figure"], "type1_stationary");
    std::ifstream f(o.out / "type1_stationary.csv");
    std::string header, line;
    std::getline(f, header);
    EXPECT_EQ(header, "policy,T,estimator,rate,se,cutoff");
    int rows = 0;
    while (std::getline(f, line))
        ++rows;
    EXPECT_EQ(rows, 2 * 2 * 6);
    EXPECT_TRUE(std::filesystem::exists(o.out / "type1_stationary.json"));
}

TEST(Figures, ZstatHistogram)
{
    FigureOptions o;
    o.reps = 200;
    o.out = std::filesystem::temp_directory_path() / "bols_fig_hist";
    std::filesystem::remove_all(o.out);
    auto j = reproduce_figure("zstat_hist", o);
    EXPECT_TRUE(j.contains("thompson"));
    std::ifstream f(o.out / "zstat_hist.csv");
    std::string header;
    std::getline(f, header);
    EXPECT_EQ(header, "policy,bin_lo,bin_hi,count,density,normal_density");
}
