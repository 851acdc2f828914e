#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "bols/core.hpp"
#include "bols/estimators.hpp"
#include "bols/inference.hpp"

namespace bols {

enum class EstimatorId { ols, bols, wdecorrelated, awaipw, snbound, bols_nste };

inline const std::vector<EstimatorId>& all_estimators()
{
    static const std::vector<EstimatorId> all{EstimatorId::ols,    EstimatorId::bols,
                                              EstimatorId::wdecorrelated, EstimatorId::awaipw,
                                              EstimatorId::snbound, EstimatorId::bols_nste};
    return all;
}

inline std::string to_string(EstimatorId e)
{
    switch (e) {
    case EstimatorId::ols: return "ols";
    case EstimatorId::bols: return "bols";
    case EstimatorId::wdecorrelated: return "wdecorrelated";
    case EstimatorId::awaipw: return "awaipw";
    case EstimatorId::snbound: return "snbound";
    case EstimatorId::bols_nste: return "bols_nste";
    }
    return "unknown";
}

inline EstimatorId estimator_from_string(const std::string& s)
{
    for (auto e : all_estimators())
        if (to_string(e) == s)
            return e;
    throw std::invalid_argument("unknown estimator: " + s);
}

enum class Calibration { theoretical_cutoffs, null_calibrated };

/// A Monte Carlo experiment: which spec, which tests, how many replications.
struct McPlan
{
    ExperimentSpec spec;
    std::vector<EstimatorId> estimators = all_estimators();
    int reps = 10'000;
    double alpha = 0.05;
    Calibration calibration = Calibration::theoretical_cutoffs;
    double null_value = 0.0;              // hypothesized margin c in H0: Delta = c
    std::optional<double> wdec_lambda;    // unset: select_lambda
    int lambda_reps = 1'000;
    std::optional<double> sn_delta;       // unset: alpha
    std::int64_t cutoff_draws = default_cutoff_draws;
    std::map<EstimatorId, double> cutoff_overrides;  // |statistic| > cutoff rejects
    bool bands = false;
    bool keep_raw = false;
    int workers = 0;                      // 0: hardware concurrency

    void validate() const
    {
        spec.validate();
        if (reps < 1)
            throw std::invalid_argument("plan: reps must be >= 1");
        if (!(alpha > 0.0 && alpha < 1.0))
            throw std::invalid_argument("plan: alpha outside (0, 1)");
        if (estimators.empty())
            throw std::invalid_argument("plan: no estimators requested");
    }
};

/// Copy of a spec whose trend has zero margin in every batch (baselines kept).
inline ExperimentSpec null_spec(const ExperimentSpec& spec)
{
    ExperimentSpec s = spec;
    switch (s.trend.kind) {
    case TrendSpec::Kind::constant:
        s.trend.beta1 = s.trend.beta0;
        break;
    case TrendSpec::Kind::explicit_pairs:
        for (auto& p : s.trend.pairs)
            p.beta1 = p.beta0;
        break;
    case TrendSpec::Kind::baseline_shift:
        s.trend.margin = 0.0;
        break;
    }
    return s;
}

inline bool has_zero_margin(const ExperimentSpec& spec)
{
    for (const auto& m : build_trend(spec.trend, spec.T))
        if (m.margin() != 0.0)
            return false;
    return true;
}

struct EstimatorOutcome
{
    EstimatorId id = EstimatorId::ols;
    EstimateReport report;
    TestResult test;
};

struct ReplicationResult
{
    std::uint64_t rep = 0;
    std::uint64_t digest = 0;
    std::vector<EstimatorOutcome> outcomes;
    int invalid_batches = 0;
    std::optional<bool> band_covered;

    const EstimatorOutcome* find(EstimatorId id) const
    {
        for (const auto& o : outcomes)
            if (o.id == id)
                return &o;
        return nullptr;
    }
};

/// A plan with its data-independent quantities resolved (lambda, default cutoffs).
struct PreparedPlan
{
    McPlan plan;
    double lambda = 1.0;
    double sn_delta = 0.05;
    std::vector<double> true_margins;
};

inline PreparedPlan prepare(const McPlan& plan)
{
    plan.validate();
    PreparedPlan p;
    p.plan = plan;
    p.sn_delta = plan.sn_delta.value_or(plan.alpha);
    for (const auto& m : build_trend(plan.spec.trend, plan.spec.T))
        p.true_margins.push_back(m.margin());
    const bool needs_lambda =
        std::find(plan.estimators.begin(), plan.estimators.end(), EstimatorId::wdecorrelated) !=
        plan.estimators.end();
    if (plan.wdec_lambda)
        p.lambda = *plan.wdec_lambda;
    else if (needs_lambda)
        p.lambda = select_lambda(plan.spec, std::max(plan.lambda_reps, 100), plan.spec.seed);
    // Warm the shared cutoff cache before workers start.
    if (!plan.spec.sigma_known && plan.spec.n >= 4) {
        for (auto e : plan.estimators) {
            if (e == EstimatorId::bols && !plan.cutoff_overrides.count(e))
                t_combination_cutoff(plan.spec.n, plan.spec.T, plan.alpha, plan.cutoff_draws);
            if (e == EstimatorId::bols_nste && !plan.cutoff_overrides.count(e))
                t_square_mean_cutoff(plan.spec.n, plan.spec.T, plan.alpha, plan.cutoff_draws);
        }
    }
    return p;
}

namespace detail {

inline TestResult finish_test(const PreparedPlan& p, EstimatorId id, const EstimateReport& r,
                              TestMethod method, double theoretical_cutoff)
{
    const double alpha = p.plan.alpha;
    if (!r.valid) {
        TestResult t;
        t.alpha = alpha;
        t.method = method;
        t.valid = false;
        t.cutoff = theoretical_cutoff;
        return t;
    }
    if (auto it = p.plan.cutoff_overrides.find(id); it != p.plan.cutoff_overrides.end())
        return cutoff_test(r.statistic, it->second, alpha, method);
    if (method == TestMethod::normal)
        return normal_test(r.statistic, alpha);
    return cutoff_test(r.statistic, theoretical_cutoff, alpha, method);
}

inline EstimateReport scaled_report(bool ok, const char* why, double estimate, double variance,
                                    double hypothesized)
{
    if (!ok)
        return EstimateReport::invalid(why, estimate);
    if (!(variance > 0.0))
        return EstimateReport::invalid("nonpositive_variance", estimate);
    return EstimateReport::make(estimate, 1.0 / std::sqrt(variance), hypothesized);
}

} // namespace detail

/// Simulates replication `rep` of the plan and evaluates every requested test.
/// Invalid estimators are flagged in their outcome and never reject.
inline ReplicationResult run_replication(const PreparedPlan& p, std::uint64_t rep)
{
    const auto& spec = p.plan.spec;
    const double alpha = p.plan.alpha;
    const double c = p.plan.null_value;
    const Trajectory traj = simulate_trajectory(spec, rep);

    ReplicationResult out;
    out.rep = rep;
    out.digest = trajectory_digest(traj);

    auto batches = bols_all(traj);
    if (spec.sigma_known)
        for (auto& b : batches)
            b.sigma2_hat = spec.sigma2_at(b.t);
    for (const auto& b : batches)
        out.invalid_batches += b.valid ? 0 : 1;

    std::optional<double> pooled_var;
    if (spec.sigma_known)
        pooled_var = spec.mean_sigma2();
    else
        pooled_var = pooled_sigma2(traj);

    for (auto id : p.plan.estimators) {
        EstimatorOutcome o;
        o.id = id;
        switch (id) {
        case EstimatorId::ols: {
            o.report = pooled_var ? ols_z_statistic(traj, c, *pooled_var)
                                  : EstimateReport::invalid("variance_unavailable",
                                                            pooled_ols(traj).delta);
            o.test = detail::finish_test(p, id, o.report, TestMethod::normal, 0.0);
            break;
        }
        case EstimatorId::bols: {
            double wsum = 0.0, wdelta = 0.0, plain = 0.0;
            int used = 0, valid = 0;
            for (const auto& b : batches) {
                if (!b.valid)
                    continue;
                plain += b.delta_hat;
                ++valid;
                if (!(b.sigma2_hat.value_or(0.0) > 0.0))
                    continue;
                const double w = b.scale() / std::sqrt(*b.sigma2_hat);
                wsum += w;
                wdelta += w * b.delta_hat;
                ++used;
            }
            if (valid == 0) {
                o.report = EstimateReport::invalid("no_valid_batch");
            } else if (used == 0) {
                // no usable variance: keep the unweighted point estimate
                o.report = EstimateReport::invalid("nonpositive_variance", plain / valid);
            } else {
                o.report = EstimateReport::make(wdelta / wsum, wsum / std::sqrt(double(used)), c);
                o.report.df_hint = spec.n - 2;
            }
            if (spec.sigma_known) {
                o.test = detail::finish_test(p, id, o.report, TestMethod::normal, 0.0);
            } else {
                const double cut = (used > 0 && spec.n >= 4)
                                       ? t_combination_cutoff(spec.n, used, alpha, p.plan.cutoff_draws)
                                       : 0.0;
                o.test = detail::finish_test(p, id, o.report, TestMethod::t_combination, cut);
            }
            break;
        }
        case EstimatorId::wdecorrelated: {
            const auto wd = w_decorrelated(traj, p.lambda, pooled_var.value_or(0.0));
            o.report = detail::scaled_report(wd.valid && pooled_var.has_value(),
                                             wd.valid ? "variance_unavailable" : "empty_arm",
                                             wd.delta, wd.variance(), c);
            o.test = detail::finish_test(p, id, o.report, TestMethod::normal, 0.0);
            break;
        }
        case EstimatorId::awaipw: {
            const auto aw = aw_aipw(traj);
            o.report = detail::scaled_report(aw.valid, "degenerate", aw.delta, aw.variance(), c);
            o.test = detail::finish_test(p, id, o.report, TestMethod::normal, 0.0);
            break;
        }
        case EstimatorId::snbound: {
            if (!pooled_var) {
                o.report = EstimateReport::invalid("variance_unavailable");
                o.test = detail::finish_test(p, id, o.report, TestMethod::sn_bound, 1.0);
                break;
            }
            const auto sn = sn_bound_test(traj, p.sn_delta, *pooled_var);
            if (!sn.valid) {
                o.report = EstimateReport::invalid("empty_arm");
                o.test = detail::finish_test(p, id, o.report, TestMethod::sn_bound, 1.0);
                break;
            }
            // statistic = (delta_hat - c) / (r0 + r1); |statistic| >= 1 is the
            // non-overlap condition when c = 0.
            o.report = EstimateReport::make(sn.beta1 - sn.beta0, 1.0 / (sn.radius0 + sn.radius1), c);
            if (p.plan.cutoff_overrides.count(id)) {
                o.test = detail::finish_test(p, id, o.report, TestMethod::sn_bound, 1.0);
            } else {
                o.test.statistic = o.report.statistic;
                o.test.cutoff = 1.0;
                o.test.alpha = alpha;
                o.test.method = TestMethod::sn_bound;
                o.test.reject = c == 0.0 ? sn.reject : std::abs(o.report.statistic) >= 1.0;
            }
            break;
        }
        case EstimatorId::bols_nste: {
            const auto g = global_null_statistic(batches);
            if (!g.valid) {
                o.report = EstimateReport::invalid("no_valid_batch");
            } else {
                o.report = EstimateReport::make(g.value, 1.0, 0.0);
                o.report.df_hint = spec.n - 2;
            }
            const double cut =
                g.valid && (spec.sigma_known || spec.n >= 4)
                    ? global_null_cutoff(spec.sigma_known, spec.n, g.used_batches, alpha,
                                         p.plan.cutoff_draws)
                    : 0.0;
            o.test = detail::finish_test(p, id, o.report, TestMethod::chi_sq_combination, cut);
            break;
        }
        }
        out.outcomes.push_back(std::move(o));
    }

    if (p.plan.bands) {
        const auto bands = simultaneous_bands(batches, alpha);
        out.band_covered = !bands.intervals.empty() && bands.covers(p.true_margins);
    }
    return out;
}

/// Runs replications 0..reps-1 across `workers` threads; results are stored by
/// replication index, so the output does not depend on scheduling.
inline std::vector<ReplicationResult> run_replications(const PreparedPlan& p, int workers = 0)
{
    const int reps = p.plan.reps;
    std::vector<ReplicationResult> results(static_cast<std::size_t>(reps));
    if (workers <= 0)
        workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    workers = std::min(workers, reps);
    if (workers == 1) {
        for (int r = 0; r < reps; ++r)
            results[static_cast<std::size_t>(r)] = run_replication(p, static_cast<std::uint64_t>(r));
        return results;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            try {
                for (int r = w; r < reps; r += workers)
                    results[static_cast<std::size_t>(r)] =
                        run_replication(p, static_cast<std::uint64_t>(r));
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    for (auto& t : pool)
        t.join();
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
    return results;
}

struct EstimatorSummary
{
    EstimatorId id = EstimatorId::ols;
    std::int64_t rejections = 0;
    std::int64_t invalid = 0;
    double rate = 0.0;
    double se = 0.0;
    std::optional<double> cutoff_override;
    std::vector<double> raw_statistics;  // per replication, NaN when invalid
};

struct McSummary
{
    int reps = 0;
    double alpha = 0.05;
    double lambda = 0.0;
    std::vector<EstimatorSummary> estimators;
    std::optional<double> coverage;
    std::optional<double> coverage_se;
    double invalid_batch_frequency = 0.0;
    double wall_clock_seconds = 0.0;

    const EstimatorSummary& at(EstimatorId id) const
    {
        for (const auto& e : estimators)
            if (e.id == id)
                return e;
        throw std::out_of_range("McSummary: estimator not in plan: " + to_string(id));
    }
};

/// Binomial Monte Carlo standard error sqrt(p (1 - p) / reps).
inline double mc_standard_error(double p, int reps)
{
    return std::sqrt(p * (1.0 - p) / static_cast<double>(reps));
}

/// Order-independent aggregation: every reduction is a sum over replications.
inline McSummary summarize(const PreparedPlan& p, const std::vector<ReplicationResult>& results)
{
    McSummary s;
    s.reps = static_cast<int>(results.size());
    s.alpha = p.plan.alpha;
    s.lambda = p.lambda;
    for (auto id : p.plan.estimators) {
        EstimatorSummary e;
        e.id = id;
        if (auto it = p.plan.cutoff_overrides.find(id); it != p.plan.cutoff_overrides.end())
            e.cutoff_override = it->second;
        for (const auto& r : results) {
            const auto* o = r.find(id);
            if (!o)
                continue;
            e.rejections += (o->test.valid && o->test.reject) ? 1 : 0;
            e.invalid += o->report.valid ? 0 : 1;
            if (p.plan.keep_raw)
                e.raw_statistics.push_back(o->report.valid ? o->report.statistic
                                                           : std::nan(""));
        }
        e.rate = s.reps > 0 ? static_cast<double>(e.rejections) / s.reps : 0.0;
        e.se = s.reps > 0 ? mc_standard_error(e.rate, s.reps) : 0.0;
        s.estimators.push_back(std::move(e));
    }
    std::int64_t invalid_batches = 0, covered = 0;
    for (const auto& r : results) {
        invalid_batches += r.invalid_batches;
        covered += r.band_covered.value_or(false) ? 1 : 0;
    }
    if (s.reps > 0)
        s.invalid_batch_frequency =
            static_cast<double>(invalid_batches) / (static_cast<double>(s.reps) * p.plan.spec.T);
    if (p.plan.bands && s.reps > 0) {
        s.coverage = static_cast<double>(covered) / s.reps;
        s.coverage_se = mc_standard_error(*s.coverage, s.reps);
    }
    return s;
}

struct CalibratedCutoff
{
    double cutoff = 0.0;
    double theoretical_rate = 0.0;  // null rejection rate with the default cutoff
    double theoretical_se = 0.0;
    bool inflated = false;          // theoretical_rate > alpha + 2 se
};

struct CalibrationResult
{
    std::map<EstimatorId, CalibratedCutoff> cutoffs;
    McSummary null_summary;

    /// Overrides for the estimators whose default test over-rejects under the null.
    std::map<EstimatorId, double> inflated_overrides() const
    {
        std::map<EstimatorId, double> out;
        for (const auto& [id, c] : cutoffs)
            if (c.inflated)
                out[id] = c.cutoff;
        return out;
    }
};

/// Empirical (1 - alpha) quantile of |statistic| per estimator over null
/// replications. The plan's trend must have zero margin in every batch.
inline CalibrationResult calibrate_cutoffs(const McPlan& null_plan, int workers = 0)
{
    if (!has_zero_margin(null_plan.spec))
        throw std::invalid_argument("calibrate_cutoffs: plan trend has a non-zero margin");
    McPlan plan = null_plan;
    plan.cutoff_overrides.clear();
    plan.keep_raw = true;
    const auto prepared = prepare(plan);
    const auto results = run_replications(prepared, workers > 0 ? workers : plan.workers);
    CalibrationResult out;
    out.null_summary = summarize(prepared, results);
    for (const auto& e : out.null_summary.estimators) {
        std::vector<double> abs_stats;
        abs_stats.reserve(e.raw_statistics.size());
        for (double v : e.raw_statistics)
            abs_stats.push_back(std::isnan(v) ? 0.0 : std::abs(v));
        CalibratedCutoff c;
        c.cutoff = upper_cutoff(std::move(abs_stats), plan.alpha);
        c.theoretical_rate = e.rate;
        c.theoretical_se = e.se;
        c.inflated = e.rate > plan.alpha + 2.0 * mc_standard_error(plan.alpha, out.null_summary.reps);
        out.cutoffs[e.id] = c;
    }
    return out;
}

/// Seed used for the null runs that calibrate a plan's cutoffs; distinct from
/// the plan's own replication streams.
inline std::uint64_t calibration_seed(std::uint64_t seed)
{
    return derive_seed(seed, 0x63616c6962ULL);
}

/// Full run: lambda selection, optional null calibration, then the replications.
/// When `raw` is given it receives the per-replication results.
inline McSummary monte_carlo(const McPlan& plan, std::vector<ReplicationResult>* raw = nullptr)
{
    const auto start = std::chrono::steady_clock::now();
    McPlan effective = plan;
    const bool needs_lambda =
        std::find(plan.estimators.begin(), plan.estimators.end(), EstimatorId::wdecorrelated) !=
        plan.estimators.end();
    if (needs_lambda && !effective.wdec_lambda)
        effective.wdec_lambda =
            select_lambda(plan.spec, std::max(plan.lambda_reps, 100), plan.spec.seed);
    if (plan.calibration == Calibration::null_calibrated && plan.cutoff_overrides.empty()) {
        McPlan null_plan = effective;
        null_plan.spec = null_spec(plan.spec);
        null_plan.spec.seed = calibration_seed(plan.spec.seed);
        null_plan.bands = false;
        const auto cal = calibrate_cutoffs(null_plan);
        effective.cutoff_overrides = cal.inflated_overrides();
    }
    const auto prepared = prepare(effective);
    const auto results = run_replications(prepared, effective.workers);
    auto summary = summarize(prepared, results);
    if (raw)
        *raw = results;
    summary.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return summary;
}

} // namespace bols
