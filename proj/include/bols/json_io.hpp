#pragma once

// JSON and CSV forms of the public types. JSON field names follow the type
// definitions; CSV files are UTF-8, comma-delimited, with a header row.

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "bols/contextual.hpp"
#include "bols/core.hpp"
#include "bols/estimators.hpp"
#include "bols/harness.hpp"
#include "bols/inference.hpp"

namespace bols {

using nlohmann::json;

// ---------------------------------------------------------------------------
// TrendSpec / PolicySpec / ExperimentSpec

inline void to_json(json& j, const TrendSpec& t)
{
    j = json::object();
    j["variant"] = to_string(t.kind);
    switch (t.kind) {
    case TrendSpec::Kind::constant:
        j["beta0"] = t.beta0;
        j["beta1"] = t.beta1;
        break;
    case TrendSpec::Kind::explicit_pairs: {
        json pairs = json::array();
        for (const auto& p : t.pairs)
            pairs.push_back(json::array({p.beta0, p.beta1}));
        j["pairs"] = pairs;
        break;
    }
    case TrendSpec::Kind::baseline_shift:
        j["margin"] = t.margin;
        j["baseline"] = to_string(t.baseline);
        j["amplitude"] = t.amplitude;
        if (t.period)
            j["period"] = *t.period;
        if (t.baseline == TrendSpec::Baseline::sequence)
            j["sequence"] = t.sequence;
        break;
    }
}

inline void from_json(const json& j, TrendSpec& t)
{
    t = TrendSpec{};
    const auto variant = j.at("variant").get<std::string>();
    if (variant == "constant") {
        t.kind = TrendSpec::Kind::constant;
        t.beta0 = j.value("beta0", 0.0);
        t.beta1 = j.value("beta1", 0.0);
    } else if (variant == "explicit") {
        t.kind = TrendSpec::Kind::explicit_pairs;
        for (const auto& p : j.at("pairs")) {
            if (!p.is_array() || p.size() != 2)
                throw std::invalid_argument("trend: explicit pairs must be [beta0, beta1]");
            t.pairs.push_back({p[0].get<double>(), p[1].get<double>()});
        }
    } else if (variant == "baseline_shift") {
        t.kind = TrendSpec::Kind::baseline_shift;
        t.margin = j.value("margin", 0.0);
        const auto b = j.value("baseline", std::string("quadratic"));
        if (b == "quadratic")
            t.baseline = TrendSpec::Baseline::quadratic;
        else if (b == "sinusoidal")
            t.baseline = TrendSpec::Baseline::sinusoidal;
        else if (b == "sequence")
            t.baseline = TrendSpec::Baseline::sequence;
        else
            throw std::invalid_argument("trend: unknown baseline " + b);
        t.amplitude = j.value("amplitude", 1.0);
        if (j.contains("period"))
            t.period = j.at("period").get<double>();
        if (j.contains("sequence"))
            t.sequence = j.at("sequence").get<std::vector<double>>();
    } else {
        throw std::invalid_argument("trend: unknown variant " + variant);
    }
}

inline void to_json(json& j, const PolicySpec& p)
{
    j = json::object();
    j["variant"] = to_string(p.kind);
    switch (p.kind) {
    case PolicySpec::Kind::epsilon_greedy:
        j["epsilon"] = p.epsilon;
        break;
    case PolicySpec::Kind::thompson:
        j["prior_mean"] = p.prior_mean;
        j["prior_var"] = p.prior_var;
        j["model_var"] = p.model_var;
        break;
    case PolicySpec::Kind::ucb:
        if (p.ucb_delta)
            j["delta"] = *p.ucb_delta;
        break;
    case PolicySpec::Kind::fixed:
        j["prob"] = p.fixed_prob;
        break;
    }
    j["clip_lo"] = p.clip_lo;
    j["clip_hi"] = p.clip_hi;
    j["first_batch_prob"] = p.first_batch_prob;
}

inline void from_json(const json& j, PolicySpec& p)
{
    p = PolicySpec{};
    p.kind = policy_kind_from_string(j.at("variant").get<std::string>());
    p.epsilon = j.value("epsilon", p.epsilon);
    p.prior_mean = j.value("prior_mean", p.prior_mean);
    p.prior_var = j.value("prior_var", p.prior_var);
    p.model_var = j.value("model_var", p.model_var);
    if (j.contains("delta"))
        p.ucb_delta = j.at("delta").get<double>();
    p.fixed_prob = j.value("prob", p.fixed_prob);
    p.clip_lo = j.value("clip_lo", p.clip_lo);
    p.clip_hi = j.value("clip_hi", p.clip_hi);
    p.first_batch_prob = j.value("first_batch_prob", p.first_batch_prob);
}

inline void to_json(json& j, const ExperimentSpec& s)
{
    j = json::object();
    j["n"] = s.n;
    j["T"] = s.T;
    j["num_arms"] = s.num_arms;
    j["clip_lo"] = s.clip_lo;
    j["clip_hi"] = s.clip_hi;
    if (s.noise_sigma2.size() == 1)
        j["noise_sigma2"] = s.noise_sigma2.front();
    else
        j["noise_sigma2"] = s.noise_sigma2;
    j["sigma_known"] = s.sigma_known;
    j["trend"] = s.trend;
    j["policy"] = s.policy;
    j["seed"] = s.seed;
}

/// Missing policy clip bounds inherit the experiment's.
inline void from_json(const json& j, ExperimentSpec& s)
{
    s = ExperimentSpec{};
    s.n = j.at("n").get<int>();
    s.T = j.at("T").get<int>();
    s.num_arms = j.value("num_arms", 2);
    s.clip_lo = j.value("clip_lo", s.clip_lo);
    s.clip_hi = j.value("clip_hi", s.clip_hi);
    if (j.contains("noise_sigma2")) {
        const auto& v = j.at("noise_sigma2");
        if (v.is_array())
            s.noise_sigma2 = v.get<std::vector<double>>();
        else
            s.noise_sigma2 = {v.get<double>()};
    }
    s.sigma_known = j.value("sigma_known", false);
    if (j.contains("trend"))
        s.trend = j.at("trend").get<TrendSpec>();
    if (j.contains("policy")) {
        s.policy = j.at("policy").get<PolicySpec>();
        if (!j.at("policy").contains("clip_lo"))
            s.policy.clip_lo = s.clip_lo;
        if (!j.at("policy").contains("clip_hi"))
            s.policy.clip_hi = s.clip_hi;
    } else {
        s.policy.clip_lo = s.clip_lo;
        s.policy.clip_hi = s.clip_hi;
    }
    s.seed = j.value("seed", std::uint64_t{0});
}

// ---------------------------------------------------------------------------
// Batches and trajectories

inline void to_json(json& j, const BatchRecord& b)
{
    std::vector<int> actions(b.actions.begin(), b.actions.end());
    j = json{{"t", b.t},           {"propensity", b.propensity},
             {"raw_propensity", b.raw_propensity}, {"actions", actions},
             {"rewards", b.rewards}, {"n0", b.n0},
             {"n1", b.n1}};
}

inline void from_json(const json& j, BatchRecord& b)
{
    const auto actions = j.at("actions").get<std::vector<int>>();
    std::vector<std::uint8_t> a;
    a.reserve(actions.size());
    for (int v : actions) {
        if (v != 0 && v != 1)
            throw std::invalid_argument("batch: actions must be 0 or 1");
        a.push_back(static_cast<std::uint8_t>(v));
    }
    b = BatchRecord::from(j.at("t").get<int>(), j.at("propensity").get<double>(), std::move(a),
                          j.at("rewards").get<std::vector<double>>());
    b.raw_propensity = j.value("raw_propensity", b.propensity);
    if (j.contains("n1") && j.at("n1").get<int>() != b.n1)
        throw std::invalid_argument("batch: n1 disagrees with actions");
}

inline void to_json(json& j, const Trajectory& t)
{
    j = json{{"spec", t.spec}, {"batches", t.batches}};
}

inline void from_json(const json& j, Trajectory& t)
{
    t.spec = j.at("spec").get<ExperimentSpec>();
    t.batches = j.at("batches").get<std::vector<BatchRecord>>();
    if (!t.indices_contiguous())
        throw std::invalid_argument("trajectory: batch indices must run 1..T without gaps");
}

// ---------------------------------------------------------------------------
// Reports

inline void to_json(json& j, const EstimateReport& r)
{
    j = json{{"estimate", r.estimate}, {"scale", r.scale}, {"statistic", r.statistic},
             {"valid", r.valid},       {"reason", r.reason}};
    j["df_hint"] = r.df_hint ? json(*r.df_hint) : json(nullptr);
}

inline void to_json(json& j, const TestResult& r)
{
    j = json{{"statistic", r.statistic}, {"cutoff", r.cutoff}, {"alpha", r.alpha},
             {"reject", r.reject},       {"method", to_string(r.method)}, {"valid", r.valid}};
    j["p_value"] = r.p_value ? json(*r.p_value) : json(nullptr);
}

inline void to_json(json& j, const BandSet& b)
{
    json rows = json::array();
    for (const auto& iv : b.intervals)
        rows.push_back(json{{"t", iv.t}, {"lo", iv.lo}, {"hi", iv.hi}});
    j = json{{"alpha", b.alpha}, {"z", b.z}, {"excluded_batches", b.excluded_batches},
             {"intervals", rows}};
}

inline std::string to_string(Calibration c)
{
    return c == Calibration::null_calibrated ? "null_calibrated" : "theoretical_cutoffs";
}

inline void to_json(json& j, const McPlan& p)
{
    std::vector<std::string> est;
    for (auto e : p.estimators)
        est.push_back(to_string(e));
    j = json{{"spec", p.spec},       {"estimators", est},
             {"reps", p.reps},       {"alpha", p.alpha},
             {"calibration", to_string(p.calibration)},
             {"null_value", p.null_value},
             {"lambda_reps", p.lambda_reps},
             {"cutoff_draws", p.cutoff_draws},
             {"bands", p.bands},     {"workers", p.workers}};
    if (p.wdec_lambda)
        j["wdec_lambda"] = *p.wdec_lambda;
    if (p.sn_delta)
        j["sn_delta"] = *p.sn_delta;
    if (!p.cutoff_overrides.empty()) {
        json c = json::object();
        for (const auto& [id, v] : p.cutoff_overrides)
            c[to_string(id)] = v;
        j["cutoffs"] = c;
    }
}

inline void from_json(const json& j, McPlan& p)
{
    p = McPlan{};
    p.spec = j.at("spec").get<ExperimentSpec>();
    if (j.contains("estimators")) {
        p.estimators.clear();
        for (const auto& e : j.at("estimators"))
            p.estimators.push_back(estimator_from_string(e.get<std::string>()));
    }
    p.reps = j.value("reps", p.reps);
    p.alpha = j.value("alpha", p.alpha);
    const auto cal = j.value("calibration", std::string("theoretical_cutoffs"));
    if (cal == "null_calibrated")
        p.calibration = Calibration::null_calibrated;
    else if (cal == "theoretical_cutoffs")
        p.calibration = Calibration::theoretical_cutoffs;
    else
        throw std::invalid_argument("plan: unknown calibration " + cal);
    p.null_value = j.value("null_value", 0.0);
    if (j.contains("wdec_lambda"))
        p.wdec_lambda = j.at("wdec_lambda").get<double>();
    p.lambda_reps = j.value("lambda_reps", p.lambda_reps);
    if (j.contains("sn_delta"))
        p.sn_delta = j.at("sn_delta").get<double>();
    p.cutoff_draws = j.value("cutoff_draws", p.cutoff_draws);
    if (j.contains("cutoffs"))
        for (const auto& [k, v] : j.at("cutoffs").items())
            p.cutoff_overrides[estimator_from_string(k)] = v.get<double>();
    p.bands = j.value("bands", false);
    p.workers = j.value("workers", 0);
}

inline void to_json(json& j, const McSummary& s)
{
    json est = json::object();
    for (const auto& e : s.estimators) {
        json row{{"rejection_rate", e.rate}, {"se", e.se}, {"rejections", e.rejections},
                 {"invalid", e.invalid}};
        row["cutoff_override"] = e.cutoff_override ? json(*e.cutoff_override) : json(nullptr);
        est[to_string(e.id)] = row;
    }
    j = json{{"reps", s.reps},
             {"alpha", s.alpha},
             {"lambda", s.lambda},
             {"estimators", est},
             {"invalid_batch_frequency", s.invalid_batch_frequency},
             {"wall_clock_seconds", s.wall_clock_seconds}};
    j["coverage"] = s.coverage ? json(*s.coverage) : json(nullptr);
    j["coverage_se"] = s.coverage_se ? json(*s.coverage_se) : json(nullptr);
}

// ---------------------------------------------------------------------------
// CSV

inline std::string csv_number(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_band_csv(std::ostream& os, const BandSet& b)
{
    os << "t,lo,hi\n";
    for (const auto& iv : b.intervals)
        os << iv.t << ',' << csv_number(iv.lo) << ',' << csv_number(iv.hi) << '\n';
}

struct EstimateRow
{
    std::string estimator;
    int t = 0;  // 0: whole trajectory
    EstimateReport report;
};

inline void write_estimate_csv(std::ostream& os, const std::vector<EstimateRow>& rows)
{
    os << "estimator,t,estimate,scale,statistic,valid,reason\n";
    for (const auto& r : rows)
        os << r.estimator << ',' << r.t << ',' << csv_number(r.report.estimate) << ','
           << csv_number(r.report.scale) << ',' << csv_number(r.report.statistic) << ','
           << (r.report.valid ? 1 : 0) << ',' << r.report.reason << '\n';
}

/// One row per (replication, estimator).
inline void write_replication_csv(std::ostream& os, const std::vector<ReplicationResult>& results)
{
    os << "rep,estimator,estimate,statistic,cutoff,reject,valid\n";
    for (const auto& r : results)
        for (const auto& o : r.outcomes)
            os << r.rep << ',' << to_string(o.id) << ',' << csv_number(o.report.estimate) << ','
               << csv_number(o.report.statistic) << ',' << csv_number(o.test.cutoff) << ','
               << (o.test.reject ? 1 : 0) << ',' << (o.report.valid ? 1 : 0) << '\n';
}

/// Columnar CSV: i, c_1..c_d, action, reward (i is 1-based).
inline void write_context_batch_csv(std::ostream& os, const ContextBatch& b)
{
    os << 'i';
    for (Eigen::Index j = 0; j < b.contexts.cols(); ++j)
        os << ",c_" << (j + 1);
    os << ",action,reward\n";
    for (int i = 0; i < b.size(); ++i) {
        os << (i + 1);
        for (Eigen::Index j = 0; j < b.contexts.cols(); ++j)
            os << ',' << csv_number(b.contexts(i, j));
        os << ',' << b.actions[static_cast<std::size_t>(i)] << ','
           << csv_number(b.rewards[static_cast<std::size_t>(i)]) << '\n';
    }
}

/// Header accompanying the context CSV: shape plus the propensity record.
inline json context_batch_header(const ContextBatch& b)
{
    json props = json::array();
    for (Eigen::Index i = 0; i < b.propensities.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index k = 0; k < b.propensities.cols(); ++k)
            row.push_back(b.propensities(i, k));
        props.push_back(row);
    }
    return json{{"t", b.t},
                {"n", b.size()},
                {"d", b.contexts.cols()},
                {"K", b.propensities.cols()},
                {"propensities", props}};
}

/// Rebuilds a ContextBatch from its CSV body and JSON header.
inline ContextBatch read_context_batch(std::istream& csv, const json& header)
{
    ContextBatch b;
    b.t = header.at("t").get<int>();
    const int n = header.at("n").get<int>();
    const int d = header.at("d").get<int>();
    const int K = header.at("K").get<int>();
    b.contexts.resize(n, d);
    b.propensities.resize(n, K);
    b.actions.resize(static_cast<std::size_t>(n));
    b.rewards.resize(static_cast<std::size_t>(n));
    std::string line;
    std::getline(csv, line);  // header
    for (int i = 0; i < n; ++i) {
        if (!std::getline(csv, line))
            throw std::invalid_argument("context csv: fewer rows than header n");
        std::stringstream ss(line);
        std::string cell;
        std::getline(ss, cell, ',');
        for (int j = 0; j < d; ++j) {
            std::getline(ss, cell, ',');
            b.contexts(i, j) = std::stod(cell);
        }
        std::getline(ss, cell, ',');
        b.actions[static_cast<std::size_t>(i)] = std::stoi(cell);
        std::getline(ss, cell, ',');
        b.rewards[static_cast<std::size_t>(i)] = std::stod(cell);
        const auto& row = header.at("propensities").at(static_cast<std::size_t>(i));
        for (int k = 0; k < K; ++k)
            b.propensities(i, k) = row.at(static_cast<std::size_t>(k)).get<double>();
    }
    return b;
}

inline json read_json_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open " + path);
    return json::parse(in);
}

} // namespace bols
