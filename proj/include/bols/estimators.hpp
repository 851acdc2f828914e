#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bols/core.hpp"
#include "bols/distributions.hpp"

namespace bols {

/// Point estimate with its standardizing factor.
///
/// When valid, statistic == scale * (estimate - hypothesized).
struct EstimateReport
{
    double estimate = 0.0;
    double scale = 0.0;
    double statistic = 0.0;
    std::optional<int> df_hint;
    bool valid = false;
    std::string reason;

    static EstimateReport make(double estimate, double scale, double hypothesized,
                               std::optional<int> df = std::nullopt)
    {
        EstimateReport r;
        r.estimate = estimate;
        r.scale = scale;
        r.statistic = scale * (estimate - hypothesized);
        r.df_hint = df;
        r.valid = std::isfinite(r.statistic);
        if (!r.valid)
            r.reason = "non_finite_statistic";
        return r;
    }

    static EstimateReport invalid(std::string why, double estimate = 0.0)
    {
        EstimateReport r;
        r.estimate = estimate;
        r.reason = std::move(why);
        return r;
    }
};

// ---------------------------------------------------------------------------
// Pooled OLS

struct PooledOls
{
    double beta0 = 0.0;
    double beta1 = 0.0;
    double delta = 0.0;
    std::int64_t n0 = 0;
    std::int64_t n1 = 0;
    bool valid = false;
};

/// Per-arm pooled means over all batches; the two-arm form of (X'X)^-1 X'R.
inline PooledOls pooled_ols(std::span<const BatchRecord> batches)
{
    double sum[2] = {0.0, 0.0};
    std::int64_t cnt[2] = {0, 0};
    for (const auto& b : batches)
        for (std::size_t i = 0; i < b.actions.size(); ++i) {
            const int a = b.actions[i] ? 1 : 0;
            sum[a] += b.rewards[i];
            ++cnt[a];
        }
    PooledOls r;
    r.n0 = cnt[0];
    r.n1 = cnt[1];
    if (cnt[0] == 0 || cnt[1] == 0)
        return r;
    r.beta0 = sum[0] / static_cast<double>(cnt[0]);
    r.beta1 = sum[1] / static_cast<double>(cnt[1]);
    r.delta = r.beta1 - r.beta0;
    r.valid = true;
    return r;
}

inline PooledOls pooled_ols(const Trajectory& traj) { return pooled_ols(traj.batches); }

/// Z-statistic of the pooled margin: sqrt(N1 N0 / (N sigma^2)) (delta_hat - delta),
/// N the total sample count (n T for equal batches).
inline EstimateReport ols_z_statistic(const Trajectory& traj, double delta, double sigma2)
{
    const auto ols = pooled_ols(traj);
    if (!ols.valid)
        return EstimateReport::invalid("empty_arm");
    if (!(sigma2 > 0.0))
        return EstimateReport::invalid("nonpositive_variance", ols.delta);
    const double total = static_cast<double>(ols.n0 + ols.n1);
    const double scale =
        std::sqrt(static_cast<double>(ols.n1) * static_cast<double>(ols.n0) / (total * sigma2));
    return EstimateReport::make(ols.delta, scale, delta);
}

/// Residual variance around the pooled arm means with divisor N - 2.
inline std::optional<double> pooled_sigma2(const Trajectory& traj)
{
    const auto ols = pooled_ols(traj);
    const auto total = ols.n0 + ols.n1;
    if (!ols.valid || total < 3)
        return std::nullopt;
    double ss = 0.0;
    for (const auto& b : traj.batches)
        for (std::size_t i = 0; i < b.actions.size(); ++i) {
            const double e = b.rewards[i] - (b.actions[i] ? ols.beta1 : ols.beta0);
            ss += e * e;
        }
    return ss / static_cast<double>(total - 2);
}

// ---------------------------------------------------------------------------
// Batched OLS

/// Within-batch OLS of the margin.
struct BatchEstimate
{
    int t = 0;
    double delta_hat = 0.0;
    double beta0_hat = 0.0;
    double beta1_hat = 0.0;
    int n0 = 0;
    int n1 = 0;
    std::optional<double> sigma2_hat;
    bool valid = false;
    std::string reason;

    int n() const { return n0 + n1; }

    /// sqrt(N0 N1 / n); multiplies (delta_hat - delta) / sigma in the standardized statistic.
    double scale() const
    {
        return std::sqrt(static_cast<double>(n0) * static_cast<double>(n1) /
                         static_cast<double>(n()));
    }
};

/// Residual variance of one batch around its own arm means, divisor n - 2.
inline std::optional<double> batch_sigma2(const BatchRecord& b)
{
    if (b.size() < 3 || b.n0 == 0 || b.n1 == 0)
        return std::nullopt;
    double sum[2] = {0.0, 0.0};
    for (std::size_t i = 0; i < b.actions.size(); ++i)
        sum[b.actions[i] ? 1 : 0] += b.rewards[i];
    const double m0 = sum[0] / b.n0;
    const double m1 = sum[1] / b.n1;
    double ss = 0.0;
    for (std::size_t i = 0; i < b.actions.size(); ++i) {
        const double e = b.rewards[i] - (b.actions[i] ? m1 : m0);
        ss += e * e;
    }
    return ss / static_cast<double>(b.size() - 2);
}

/// delta_hat_t = (arm-1 batch mean) - (arm-0 batch mean).
inline BatchEstimate bols_batch(const BatchRecord& b)
{
    BatchEstimate e;
    e.t = b.t;
    e.n0 = b.n0;
    e.n1 = b.n1;
    if (b.n0 == 0 || b.n1 == 0) {
        e.reason = b.n1 == 0 ? "arm1_unpulled" : "arm0_unpulled";
        return e;
    }
    double sum[2] = {0.0, 0.0};
    for (std::size_t i = 0; i < b.actions.size(); ++i)
        sum[b.actions[i] ? 1 : 0] += b.rewards[i];
    e.beta0_hat = sum[0] / b.n0;
    e.beta1_hat = sum[1] / b.n1;
    e.delta_hat = e.beta1_hat - e.beta0_hat;
    e.sigma2_hat = batch_sigma2(b);
    e.valid = true;
    return e;
}

inline std::vector<BatchEstimate> bols_all(std::span<const BatchRecord> batches)
{
    std::vector<BatchEstimate> out;
    out.reserve(batches.size());
    for (const auto& b : batches)
        out.push_back(bols_batch(b));
    return out;
}

inline std::vector<BatchEstimate> bols_all(const Trajectory& traj) { return bols_all(traj.batches); }

// ---------------------------------------------------------------------------
// W-decorrelated estimator
//
// Observations are flattened in time order. For the two-arm design
// x_i = (1 - A_i, A_i) the weight matrix W is 2 x N.

struct DecorrelationWeights
{
    std::vector<double> w0;  // arm-0 row
    std::vector<double> w1;  // arm-1 row
};

inline std::vector<std::uint8_t> flatten_actions(std::span<const BatchRecord> batches)
{
    std::vector<std::uint8_t> a;
    for (const auto& b : batches)
        a.insert(a.end(), b.actions.begin(), b.actions.end());
    return a;
}

/// Generic recursion W_i = (I - sum_{j<i} W_j x_j') x_i / (lambda + |x_i|^2),
/// carried with the full 2 x 2 matrix P = I - sum W_j x_j'.
inline DecorrelationWeights decorrelation_weights_recursive(std::span<const std::uint8_t> actions,
                                                           double lambda)
{
    DecorrelationWeights w;
    w.w0.resize(actions.size());
    w.w1.resize(actions.size());
    double p[2][2] = {{1.0, 0.0}, {0.0, 1.0}};
    for (std::size_t i = 0; i < actions.size(); ++i) {
        const double x[2] = {actions[i] ? 0.0 : 1.0, actions[i] ? 1.0 : 0.0};
        const double denom = lambda + x[0] * x[0] + x[1] * x[1];
        const double wi[2] = {(p[0][0] * x[0] + p[0][1] * x[1]) / denom,
                              (p[1][0] * x[0] + p[1][1] * x[1]) / denom};
        w.w0[i] = wi[0];
        w.w1[i] = wi[1];
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c)
                p[r][c] -= wi[r] * x[c];
    }
    return w;
}

/// Two-arm closed form: W_{k,i} = r 1{A_i = k} (1 - r)^{N_{k,i-1}}, r = 1 / (lambda + 1).
inline DecorrelationWeights decorrelation_weights_closed_form(std::span<const std::uint8_t> actions,
                                                             double lambda)
{
    DecorrelationWeights w;
    w.w0.assign(actions.size(), 0.0);
    w.w1.assign(actions.size(), 0.0);
    const double r = 1.0 / (lambda + 1.0);
    std::int64_t seen[2] = {0, 0};
    for (std::size_t i = 0; i < actions.size(); ++i) {
        const int a = actions[i] ? 1 : 0;
        const double v = r * std::pow(1.0 - r, static_cast<double>(seen[a]));
        (a ? w.w1 : w.w0)[i] = v;
        ++seen[a];
    }
    return w;
}

struct WDecorrelated
{
    double beta0 = 0.0;
    double beta1 = 0.0;
    double delta = 0.0;
    double var0 = 0.0;  // sigma^2 * sum_i W_{0,i}^2
    double var1 = 0.0;
    bool valid = false;
    std::string reason;

    double variance() const { return var0 + var1; }
};

/// beta_d = beta_ols + W (R - X beta_ols). `sigma2` scales the variance proxy;
/// pass the pooled residual variance when the noise level is unknown.
inline WDecorrelated w_decorrelated(const Trajectory& traj, double lambda, double sigma2)
{
    WDecorrelated out;
    if (!(lambda > 0.0)) {
        out.reason = "nonpositive_lambda";
        return out;
    }
    const auto ols = pooled_ols(traj);
    if (!ols.valid) {
        out.reason = "empty_arm";
        return out;
    }
    const auto actions = flatten_actions(traj.batches);
    const auto w = decorrelation_weights_recursive(actions, lambda);
    double corr[2] = {0.0, 0.0};
    double ss[2] = {0.0, 0.0};
    std::size_t idx = 0;
    for (const auto& b : traj.batches)
        for (std::size_t i = 0; i < b.actions.size(); ++i, ++idx) {
            const double resid = b.rewards[i] - (b.actions[i] ? ols.beta1 : ols.beta0);
            corr[0] += w.w0[idx] * resid;
            corr[1] += w.w1[idx] * resid;
            ss[0] += w.w0[idx] * w.w0[idx];
            ss[1] += w.w1[idx] * w.w1[idx];
        }
    out.beta0 = ols.beta0 + corr[0];
    out.beta1 = ols.beta1 + corr[1];
    out.delta = out.beta1 - out.beta0;
    out.var0 = sigma2 * ss[0];
    out.var1 = sigma2 * ss[1];
    out.valid = true;
    return out;
}

/// lambda_min(X'X) / log(N) for one trajectory; X'X is diagonal for two arms.
inline double lambda_ratio(const Trajectory& traj)
{
    const auto ols = pooled_ols(traj);
    const double total = static_cast<double>(ols.n0 + ols.n1);
    return static_cast<double>(std::min(ols.n0, ols.n1)) / std::log(total);
}

/// Ridge parameter for the W-decorrelated estimator: the 1/(nT) empirical
/// quantile of lambda_min(X'X) / log(nT) over `reps` simulated trajectories
/// with the margin set to zero.
inline double select_lambda(const ExperimentSpec& spec, int reps, std::uint64_t seed)
{
    if (reps < 100)
        throw std::invalid_argument("select_lambda: reps must be >= 100");
    ExperimentSpec null_spec = spec;
    null_spec.trend = TrendSpec::constant_means(0.0, 0.0);
    null_spec.seed = derive_seed(seed, 0x6c616d6264614eULL);
    std::vector<double> ratios;
    ratios.reserve(static_cast<std::size_t>(reps));
    for (int r = 0; r < reps; ++r)
        ratios.push_back(lambda_ratio(simulate_trajectory(null_spec, static_cast<std::uint64_t>(r))));
    const double q = 1.0 / (static_cast<double>(spec.n) * spec.T);
    return lower_quantile(std::move(ratios), q);
}

// ---------------------------------------------------------------------------
// AW-AIPW with variance-stabilizing weights sqrt(pi)

/// What the augmentation term uses in a batch with no earlier arm data.
enum class AugmentationStart {
    within_batch,  // the current batch's own arm mean
    zero,
};

struct AipwScores
{
    std::vector<double> y1;
    std::vector<double> y0;
    std::vector<double> pi;
};

inline AipwScores aw_aipw_scores(std::span<const BatchRecord> batches,
                                 AugmentationStart start = AugmentationStart::within_batch)
{
    AipwScores s;
    double prior_sum[2] = {0.0, 0.0};
    std::int64_t prior_cnt[2] = {0, 0};
    for (const auto& b : batches) {
        const double pi = b.propensity;
        double batch_sum[2] = {0.0, 0.0};
        int batch_cnt[2] = {0, 0};
        for (std::size_t i = 0; i < b.actions.size(); ++i) {
            const int a = b.actions[i] ? 1 : 0;
            batch_sum[a] += b.rewards[i];
            ++batch_cnt[a];
        }
        double aug[2];
        for (int k = 0; k < 2; ++k) {
            if (prior_cnt[k] > 0)
                aug[k] = prior_sum[k] / static_cast<double>(prior_cnt[k]);
            else if (start == AugmentationStart::within_batch && batch_cnt[k] > 0)
                aug[k] = batch_sum[k] / batch_cnt[k];
            else
                aug[k] = 0.0;
        }
        for (std::size_t i = 0; i < b.actions.size(); ++i) {
            const double a = b.actions[i] ? 1.0 : 0.0;
            const double r = b.rewards[i];
            const double ipw1 = pi > 0.0 ? a / pi : 0.0;
            const double ipw0 = pi < 1.0 ? (1.0 - a) / (1.0 - pi) : 0.0;
            s.y1.push_back(ipw1 * r + (1.0 - ipw1) * aug[1]);
            s.y0.push_back(ipw0 * r + (1.0 - ipw0) * aug[0]);
            s.pi.push_back(pi);
        }
        for (int k = 0; k < 2; ++k) {
            prior_sum[k] += batch_sum[k];
            prior_cnt[k] += batch_cnt[k];
        }
    }
    return s;
}

struct AwAipw
{
    double beta1 = 0.0;
    double beta0 = 0.0;
    double delta = 0.0;
    double v1 = 0.0;
    double v0 = 0.0;
    double c01 = 0.0;
    bool valid = false;
    std::string reason;

    double variance() const { return v0 + v1 + 2.0 * c01; }
};

inline AwAipw aw_aipw(std::span<const BatchRecord> batches,
                      AugmentationStart start = AugmentationStart::within_batch)
{
    AwAipw out;
    const auto s = aw_aipw_scores(batches, start);
    if (s.y1.empty()) {
        out.reason = "no_data";
        return out;
    }
    double h1 = 0.0, h0 = 0.0, num1 = 0.0, num0 = 0.0;
    for (std::size_t i = 0; i < s.pi.size(); ++i) {
        const double w1 = std::sqrt(s.pi[i]);
        const double w0 = std::sqrt(1.0 - s.pi[i]);
        h1 += w1;
        h0 += w0;
        num1 += w1 * s.y1[i];
        num0 += w0 * s.y0[i];
    }
    if (!(h1 > 0.0 && h0 > 0.0)) {
        out.reason = "degenerate_propensity";
        return out;
    }
    out.beta1 = num1 / h1;
    out.beta0 = num0 / h0;
    out.delta = out.beta1 - out.beta0;
    double sv1 = 0.0, sv0 = 0.0, sc = 0.0;
    for (std::size_t i = 0; i < s.pi.size(); ++i) {
        const double d1 = s.y1[i] - out.beta1;
        const double d0 = s.y0[i] - out.beta0;
        sv1 += s.pi[i] * d1 * d1;
        sv0 += (1.0 - s.pi[i]) * d0 * d0;
        sc += std::sqrt(s.pi[i] * (1.0 - s.pi[i])) * d1 * d0;
    }
    out.v1 = sv1 / (h1 * h1);
    out.v0 = sv0 / (h0 * h0);
    out.c01 = -sc / (h1 * h0);
    out.valid = true;
    return out;
}

inline AwAipw aw_aipw(const Trajectory& traj,
                      AugmentationStart start = AugmentationStart::within_batch)
{
    return aw_aipw(traj.batches, start);
}

// ---------------------------------------------------------------------------
// Self-normalized martingale bound

/// Anytime radius for an arm pulled `pulls` times in total.
inline double sn_radius(double pulls, double delta, double sigma2)
{
    return std::sqrt(sigma2 * (1.0 + pulls) / (pulls * pulls) *
                     (1.0 + 2.0 * std::log(2.0 * std::sqrt(1.0 + pulls) / delta)));
}

struct SnBoundResult
{
    double beta0 = 0.0;
    double beta1 = 0.0;
    double radius0 = 0.0;
    double radius1 = 0.0;
    bool reject = false;
    bool valid = false;

    /// |beta1 - beta0| / (radius0 + radius1); the test rejects at >= 1.
    double ratio() const { return std::abs(beta1 - beta0) / (radius0 + radius1); }
};

/// Rejects Delta = 0 when the two arms' confidence intervals do not overlap.
inline SnBoundResult sn_bound_test(const Trajectory& traj, double delta, double sigma2)
{
    SnBoundResult r;
    const auto ols = pooled_ols(traj);
    if (!ols.valid)
        return r;
    r.beta0 = ols.beta0;
    r.beta1 = ols.beta1;
    r.radius0 = sn_radius(static_cast<double>(ols.n0), delta, sigma2);
    r.radius1 = sn_radius(static_cast<double>(ols.n1), delta, sigma2);
    r.reject = (r.beta1 + r.radius1 <= r.beta0 - r.radius0) ||
               (r.beta0 + r.radius0 <= r.beta1 - r.radius1);
    r.valid = true;
    return r;
}

} // namespace bols
