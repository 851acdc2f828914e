#include <gtest/gtest.h>

#include <sstream>

#include "bols/json_io.hpp"

using namespace bols;

TEST(JsonSpec, RoundTrip)
{
    ExperimentSpec s;
    s.n = 40;
    s.T = 3;
    s.noise_sigma2 = {1.0, 2.0, 0.5};
    s.sigma_known = true;
    s.trend = TrendSpec::shifted(0.25, TrendSpec::Baseline::sinusoidal, 2.0, 6.0);
    s.policy.kind = PolicySpec::Kind::ucb;
    s.policy.ucb_delta = 0.01;
    s.set_clip(0.2, 0.8);
    s.seed = 0xFFFFFFFFFFFFFFF0ULL;
    const json j = s;
    auto back = j.get<ExperimentSpec>();
    EXPECT_EQ(json(back), j);
    EXPECT_EQ(back.seed, s.seed);
    EXPECT_EQ(*back.trend.period, 6.0);
    EXPECT_NO_THROW(back.validate());
}

TEST(JsonSpec, PolicyInheritsClipAndScalarNoise)
{
    auto j = json::parse(R"({"n": 10, "T": 2, "clip_lo": 0.3, "clip_hi": 0.7, "noise_sigma2": 4,
        "policy": {"variant": "epsilon_greedy", "epsilon": 0.2},
        "trend": {"variant": "explicit", "pairs": [[0, 1], [1, 0]]}})");
    auto s = j.get<ExperimentSpec>();
    EXPECT_EQ(s.policy.clip_lo, 0.3);
    EXPECT_EQ(s.policy.clip_hi, 0.7);
    EXPECT_EQ(s.noise_sigma2, std::vector<double>{4.0});
    EXPECT_EQ(s.policy.epsilon, 0.2);
    EXPECT_EQ(build_trend(s.trend, 2)[1], (ArmMeans{1.0, 0.0}));
    EXPECT_NO_THROW(s.validate());
}

TEST(JsonSpec, Errors)
{
    EXPECT_THROW(json::parse(R"({"variant": "spline"})").get<TrendSpec>(), std::invalid_argument);
    EXPECT_THROW(json::parse(R"({"variant": "softmax"})").get<PolicySpec>(), std::invalid_argument);
    EXPECT_THROW(json::parse(R"({"variant": "explicit", "pairs": [[1]]})").get<TrendSpec>(),
                 std::invalid_argument);
    EXPECT_ANY_THROW(json::parse(R"({"T": 2})").get<ExperimentSpec>());
}

TEST(JsonTrajectory, ExactRoundTrip)
{
    ExperimentSpec s;
    s.n = 15;
    s.T = 4;
    s.seed = 3;
    auto tr = simulate_trajectory(s, 2);
    const std::string text = json(tr).dump();
    auto back = json::parse(text).get<Trajectory>();
    EXPECT_EQ(trajectory_digest(back), trajectory_digest(tr));
    for (std::size_t t = 0; t < tr.batches.size(); ++t) {
        EXPECT_EQ(back.batches[t].rewards, tr.batches[t].rewards);
        EXPECT_EQ(back.batches[t].raw_propensity, tr.batches[t].raw_propensity);
        EXPECT_EQ(back.batches[t].n1, tr.batches[t].n1);
    }
}

TEST(JsonTrajectory, RejectsBadBatches)
{
    auto j = json::parse(R"({"t": 1, "propensity": 0.5, "actions": [0, 2], "rewards": [1, 2]})");
    EXPECT_THROW(j.get<BatchRecord>(), std::invalid_argument);
    auto k = json::parse(R"({"t": 1, "propensity": 0.5, "actions": [0, 1], "rewards": [1, 2], "n1": 2})");
    EXPECT_THROW(k.get<BatchRecord>(), std::invalid_argument);
    ExperimentSpec s;
    s.T = 2;
    auto tr = simulate_trajectory(s, 0);
    json jt = tr;
    jt["batches"][1]["t"] = 5;
    EXPECT_THROW(jt.get<Trajectory>(), std::invalid_argument);
}

TEST(JsonPlan, RoundTrip)
{
    McPlan p;
    p.spec.seed = 8;
    p.estimators = {EstimatorId::bols, EstimatorId::snbound};
    p.reps = 123;
    p.alpha = 0.1;
    p.calibration = Calibration::null_calibrated;
    p.wdec_lambda = 3.5;
    p.cutoff_overrides[EstimatorId::bols] = 2.2;
    const json j = p;
    auto back = j.get<McPlan>();
    EXPECT_EQ(json(back), j);
    EXPECT_EQ(back.cutoff_overrides.at(EstimatorId::bols), 2.2);
    EXPECT_THROW(json::parse(R"({"spec": {"n": 5, "T": 2}, "calibration": "bayes"})").get<McPlan>(),
                 std::invalid_argument);
}

TEST(JsonReports, Fields)
{
    json t = normal_test(3.0, 0.05);
    EXPECT_EQ(t["method"], "normal");
    EXPECT_EQ(t["reject"], true);
    EXPECT_TRUE(t.contains("p_value"));

    std::vector<BatchEstimate> b(1);
    b[0].t = 1;
    b[0].n0 = b[0].n1 = 2;
    b[0].valid = true;
    auto bands = simultaneous_bands(b, 0.05, 1.0);
    json jb = bands;
    EXPECT_EQ(jb["intervals"].size(), 1u);
    std::ostringstream csv;
    write_band_csv(csv, bands);
    EXPECT_EQ(csv.str().substr(0, 9), "t,lo,hi\n1");

    json er = EstimateReport::make(1.0, 2.0, 0.0);
    EXPECT_EQ(er["statistic"], 2.0);
    EXPECT_TRUE(er["df_hint"].is_null());
}

TEST(Csv, EstimateAndReplicationHeaders)
{
    std::ostringstream a, b;
    write_estimate_csv(a, {{"bols", 1, EstimateReport::invalid("arm1_unpulled")}});
    EXPECT_EQ(a.str(), "estimator,t,estimate,scale,statistic,valid,reason\nbols,1,0,0,0,0,arm1_unpulled\n");
    write_replication_csv(b, {});
    EXPECT_EQ(b.str(), "rep,estimator,estimate,statistic,cutoff,reject,valid\n");
}

TEST(Csv, ContextBatchRoundTrip)
{
    ContextSpec s;
    s.n = 12;
    s.T = 1;
    s.d = 3;
    s.coefficients = {Eigen::MatrixXd::Ones(2, 3)};
    auto b = simulate_contextual(s, 0).front();
    std::stringstream csv;
    write_context_batch_csv(csv, b);
    std::string header;
    std::getline(csv, header);
    EXPECT_EQ(header, "i,c_1,c_2,c_3,action,reward");
    csv.seekg(0);
    auto back = read_context_batch(csv, context_batch_header(b));
    EXPECT_EQ(back.contexts, b.contexts);
    EXPECT_EQ(back.actions, b.actions);
    EXPECT_EQ(back.rewards, b.rewards);
    EXPECT_EQ(back.propensities, b.propensities);
}
