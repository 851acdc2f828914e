#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "bols/distributions.hpp"
#include "bols/estimators.hpp"
#include "bols/random.hpp"

namespace bols {

enum class TestMethod { normal, t_combination, chi_sq_combination, bonferroni_band, sn_bound };

inline std::string to_string(TestMethod m)
{
    switch (m) {
    case TestMethod::normal: return "normal";
    case TestMethod::t_combination: return "t_combination";
    case TestMethod::chi_sq_combination: return "chi_sq_combination";
    case TestMethod::bonferroni_band: return "bonferroni_band";
    case TestMethod::sn_bound: return "sn_bound";
    }
    return "unknown";
}

struct TestResult
{
    double statistic = 0.0;
    double cutoff = 0.0;
    double alpha = 0.05;
    bool reject = false;
    std::optional<double> p_value;
    TestMethod method = TestMethod::normal;
    bool valid = true;
};

/// Two-sided test against the standard normal. Ties at the cutoff do not reject.
inline TestResult normal_test(double statistic, double alpha)
{
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("normal_test: alpha outside (0, 1)");
    TestResult r;
    r.statistic = statistic;
    r.alpha = alpha;
    r.cutoff = normal_quantile(1.0 - alpha / 2.0);
    r.reject = std::abs(statistic) > r.cutoff;
    r.p_value = 2.0 * normal_cdf(-std::abs(statistic));
    r.method = TestMethod::normal;
    return r;
}

/// Two-sided test of |statistic| against an externally supplied cutoff.
inline TestResult cutoff_test(double statistic, double cutoff, double alpha, TestMethod method)
{
    TestResult r;
    r.statistic = statistic;
    r.cutoff = cutoff;
    r.alpha = alpha;
    r.reject = std::abs(statistic) > cutoff;
    r.method = method;
    return r;
}

/// Per-batch noise variance supplied to the batched statistics: a known value,
/// or each batch's own residual estimate when unset.
using VarianceSource = std::optional<double>;

struct CombinedStatistic
{
    double value = 0.0;
    int used_batches = 0;
    int excluded_batches = 0;
    bool valid = false;
};

namespace detail {

inline std::optional<double> batch_z(const BatchEstimate& b, double c, VarianceSource sigma2)
{
    if (!b.valid)
        return std::nullopt;
    const double s2 = sigma2 ? *sigma2 : b.sigma2_hat.value_or(0.0);
    if (!(s2 > 0.0))
        return std::nullopt;
    return b.scale() * (b.delta_hat - c) / std::sqrt(s2);
}

} // namespace detail

/// (1/sqrt(T)) sum_t sqrt(N_t0 N_t1 / (n sigma_t^2)) (delta_hat_t - c), over
/// the batches that have both arms pulled (and a positive variance estimate).
inline CombinedStatistic bols_combined_statistic(std::span<const BatchEstimate> batches, double c,
                                                 VarianceSource sigma2 = std::nullopt)
{
    CombinedStatistic out;
    double sum = 0.0;
    for (const auto& b : batches) {
        if (auto z = detail::batch_z(b, c, sigma2)) {
            sum += *z;
            ++out.used_batches;
        } else {
            ++out.excluded_batches;
        }
    }
    if (out.used_batches == 0)
        return out;
    out.value = sum / std::sqrt(static_cast<double>(out.used_batches));
    out.valid = true;
    return out;
}

/// Known variance: sum_t z_t^2 (chi-squared with T degrees of freedom under the
/// global null). Estimated variance: (1/T) sum_t t_t^2.
inline CombinedStatistic global_null_statistic(std::span<const BatchEstimate> batches,
                                               VarianceSource sigma2 = std::nullopt)
{
    CombinedStatistic out;
    double sum = 0.0;
    for (const auto& b : batches) {
        if (auto z = detail::batch_z(b, 0.0, sigma2)) {
            sum += *z * *z;
            ++out.used_batches;
        } else {
            ++out.excluded_batches;
        }
    }
    if (out.used_batches == 0)
        return out;
    out.value = sigma2 ? sum : sum / out.used_batches;
    out.valid = true;
    return out;
}

// ---------------------------------------------------------------------------
// Simulated Student-t cutoffs

enum class CutoffKind { t_sum, t_square_mean };

/// Thread-safe memo of simulated cutoffs keyed by (kind, n, T, alpha, draws, seed).
class CutoffCache
{
public:
    using Key = std::tuple<int, int, int, double, std::int64_t, std::uint64_t>;

    template <class F>
    double get_or_compute(const Key& key, F&& compute)
    {
        {
            std::shared_lock lock(mutex_);
            if (auto it = table_.find(key); it != table_.end())
                return it->second;
        }
        const double v = compute();
        std::unique_lock lock(mutex_);
        return table_.emplace(key, v).first->second;
    }

    std::size_t size() const
    {
        std::shared_lock lock(mutex_);
        return table_.size();
    }

    void clear()
    {
        std::unique_lock lock(mutex_);
        table_.clear();
    }

    static CutoffCache& global()
    {
        static CutoffCache cache;
        return cache;
    }

private:
    mutable std::shared_mutex mutex_;
    std::map<Key, double> table_;
};

constexpr std::int64_t default_cutoff_draws = 1'000'000;
constexpr std::uint64_t default_cutoff_seed = 20200601;

namespace detail {

inline double simulate_t_cutoff(CutoffKind kind, int n, int T, double alpha, std::int64_t draws,
                                std::uint64_t seed)
{
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(T)));
    std::student_t_distribution<double> tdist(static_cast<double>(n - 2));
    std::vector<double> stats;
    stats.reserve(static_cast<std::size_t>(draws));
    const double root_t = std::sqrt(static_cast<double>(T));
    for (std::int64_t d = 0; d < draws; ++d) {
        double acc = 0.0;
        for (int t = 0; t < T; ++t) {
            const double y = tdist(rng);
            acc += kind == CutoffKind::t_sum ? y : y * y;
        }
        stats.push_back(kind == CutoffKind::t_sum ? std::abs(acc) / root_t : acc / T);
    }
    return upper_cutoff(std::move(stats), alpha);
}

inline void check_cutoff_args(int n, int T, double alpha, std::int64_t draws)
{
    if (n < 4)
        throw std::invalid_argument("Student-t cutoff requires n >= 4");
    if (T < 1)
        throw std::invalid_argument("Student-t cutoff requires T >= 1");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("Student-t cutoff requires alpha in (0, 1)");
    if (draws < 1)
        throw std::invalid_argument("Student-t cutoff requires draws >= 1");
}

} // namespace detail

/// c with P(|(1/sqrt T) sum_t Y_t| > c) = alpha for Y_t i.i.d. t_{n-2}, by simulation.
inline double t_combination_cutoff(int n, int T, double alpha,
                                   std::int64_t draws = default_cutoff_draws,
                                   std::uint64_t seed = default_cutoff_seed,
                                   CutoffCache& cache = CutoffCache::global())
{
    detail::check_cutoff_args(n, T, alpha, draws);
    const CutoffCache::Key key{0, n, T, alpha, draws, seed};
    return cache.get_or_compute(key, [&] {
        return detail::simulate_t_cutoff(CutoffKind::t_sum, n, T, alpha, draws, seed);
    });
}

/// c with P((1/T) sum_t Y_t^2 > c) = alpha for Y_t i.i.d. t_{n-2}, by simulation.
inline double t_square_mean_cutoff(int n, int T, double alpha,
                                   std::int64_t draws = default_cutoff_draws,
                                   std::uint64_t seed = default_cutoff_seed,
                                   CutoffCache& cache = CutoffCache::global())
{
    detail::check_cutoff_args(n, T, alpha, draws);
    const CutoffCache::Key key{1, n, T, alpha, draws, seed};
    return cache.get_or_compute(key, [&] {
        return detail::simulate_t_cutoff(CutoffKind::t_square_mean, n, T, alpha, draws, seed);
    });
}

/// Cutoff for global_null_statistic: chi-squared_T upper quantile when the
/// variance is known, the simulated t^2 cutoff otherwise.
inline double global_null_cutoff(bool sigma_known, int n, int T, double alpha,
                                 std::int64_t draws = default_cutoff_draws,
                                 std::uint64_t seed = default_cutoff_seed)
{
    if (sigma_known)
        return chi_squared_upper_quantile(static_cast<double>(T), alpha);
    return t_square_mean_cutoff(n, T, alpha, draws, seed);
}

// ---------------------------------------------------------------------------
// Simultaneous confidence bands for a batch-varying margin

struct BandInterval
{
    int t = 0;
    double lo = 0.0;
    double hi = 0.0;

    bool contains(double x) const { return lo <= x && x <= hi; }
};

struct BandSet
{
    std::vector<BandInterval> intervals;
    double alpha = 0.05;
    double z = 0.0;
    int excluded_batches = 0;

    /// Whether every interval contains its batch's true margin (indexed by t - 1).
    bool covers(std::span<const double> margins) const
    {
        for (const auto& iv : intervals)
            if (!iv.contains(margins[static_cast<std::size_t>(iv.t - 1)]))
                return false;
        return true;
    }
};

/// delta_hat_t +- z_{1 - alpha/(2T)} sqrt(sigma_t^2 n / (N_t0 N_t1)); T counts
/// only usable batches.
inline BandSet simultaneous_bands(std::span<const BatchEstimate> batches, double alpha,
                                  VarianceSource sigma2 = std::nullopt)
{
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("simultaneous_bands: alpha outside (0, 1)");
    BandSet out;
    out.alpha = alpha;
    std::vector<std::pair<const BatchEstimate*, double>> usable;
    for (const auto& b : batches) {
        const double s2 = sigma2 ? *sigma2 : (b.sigma2_hat ? *b.sigma2_hat : 0.0);
        if (b.valid && s2 > 0.0)
            usable.emplace_back(&b, s2);
        else
            ++out.excluded_batches;
    }
    if (usable.empty())
        return out;
    const double T = static_cast<double>(usable.size());
    out.z = normal_quantile(1.0 - alpha / (2.0 * T));
    for (const auto& [b, s2] : usable) {
        const double half = out.z * std::sqrt(s2) / b->scale();
        out.intervals.push_back({b->t, b->delta_hat - half, b->delta_hat + half});
    }
    return out;
}

} // namespace bols
