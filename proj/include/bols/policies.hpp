#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>

#include "bols/distributions.hpp"

namespace bols {

/// Which batched bandit rule produces the arm-1 selection probability.
struct PolicySpec
{
    enum class Kind { epsilon_greedy, thompson, ucb, fixed };

    Kind kind = Kind::thompson;
    double epsilon = 0.1;
    double prior_mean = 0.0;
    double prior_var = 1.0;  // sigma_a^2
    double model_var = 1.0;  // noise variance the posterior assumes
    std::optional<double> ucb_delta;  // unset: 1 / (n T)
    double fixed_prob = 0.5;
    double clip_lo = 0.1;
    double clip_hi = 0.9;
    double first_batch_prob = 0.5;

    void validate() const
    {
        if (!(clip_lo > 0.0 && clip_lo <= clip_hi && clip_hi < 1.0))
            throw std::invalid_argument("policy: clipping requires 0 < clip_lo <= clip_hi < 1");
        if (!(first_batch_prob >= 0.0 && first_batch_prob <= 1.0))
            throw std::invalid_argument("policy: first_batch_prob outside [0, 1]");
        switch (kind) {
        case Kind::epsilon_greedy:
            if (!(epsilon > 0.0 && epsilon < 1.0))
                throw std::invalid_argument("policy: epsilon must lie in (0, 1)");
            break;
        case Kind::thompson:
            if (!(prior_var > 0.0 && model_var > 0.0))
                throw std::invalid_argument("policy: thompson variances must be positive");
            break;
        case Kind::ucb:
            if (ucb_delta && !(*ucb_delta > 0.0 && *ucb_delta < 1.0))
                throw std::invalid_argument("policy: ucb delta must lie in (0, 1)");
            break;
        case Kind::fixed:
            if (!(fixed_prob >= 0.0 && fixed_prob <= 1.0))
                throw std::invalid_argument("policy: fixed_prob outside [0, 1]");
            break;
        }
    }
};

inline std::string to_string(PolicySpec::Kind k)
{
    switch (k) {
    case PolicySpec::Kind::epsilon_greedy: return "epsilon_greedy";
    case PolicySpec::Kind::thompson: return "thompson";
    case PolicySpec::Kind::ucb: return "ucb";
    case PolicySpec::Kind::fixed: return "fixed";
    }
    return "unknown";
}

inline PolicySpec::Kind policy_kind_from_string(const std::string& s)
{
    if (s == "epsilon_greedy") return PolicySpec::Kind::epsilon_greedy;
    if (s == "thompson") return PolicySpec::Kind::thompson;
    if (s == "ucb") return PolicySpec::Kind::ucb;
    if (s == "fixed") return PolicySpec::Kind::fixed;
    throw std::invalid_argument("unknown policy variant: " + s);
}

/// Per-arm sufficient statistics over completed batches (index 0 = arm 0).
struct HistorySummary
{
    std::array<std::int64_t, 2> pulls{0, 0};
    std::array<double, 2> reward_sum{0.0, 0.0};

    bool empty() const { return pulls[0] == 0 && pulls[1] == 0; }

    double mean(int arm) const
    {
        return reward_sum[arm] / static_cast<double>(pulls[arm]);
    }

    void absorb(std::span<const std::uint8_t> actions, std::span<const double> rewards)
    {
        if (actions.size() != rewards.size())
            throw std::invalid_argument("absorb: actions/rewards length mismatch");
        for (std::size_t i = 0; i < actions.size(); ++i) {
            const int arm = actions[i] ? 1 : 0;
            ++pulls[arm];
            reward_sum[arm] += rewards[i];
        }
    }
};

inline double clip_prob(double p, double lo, double hi)
{
    if (lo > hi)
        throw std::invalid_argument("clip_prob: lo > hi");
    return std::min(hi, std::max(lo, p));
}

/// 1 - eps/2 when arm 1's pooled mean strictly exceeds arm 0's, eps/2 otherwise.
inline double epsilon_greedy_prob(const HistorySummary& h, double epsilon,
                                  double first_batch_prob = 0.5)
{
    if (h.pulls[0] == 0 || h.pulls[1] == 0)
        return first_batch_prob;
    return h.mean(1) > h.mean(0) ? 1.0 - epsilon / 2.0 : epsilon / 2.0;
}

/// Posterior probability that arm 1 has the larger mean, under independent
/// Normal(prior_mean, prior_var) priors and Gaussian rewards with variance
/// model_var. Returned before clipping.
inline double thompson_prob(const HistorySummary& h, double prior_var, double model_var,
                            double prior_mean = 0.0)
{
    double post_mean[2];
    double post_var[2];
    for (int k = 0; k < 2; ++k) {
        const double nk = static_cast<double>(h.pulls[k]);
        const double denom = model_var + nk * prior_var;
        post_mean[k] = (prior_var * h.reward_sum[k] + model_var * prior_mean) / denom;
        post_var[k] = model_var * prior_var / denom;
    }
    const double mu = post_mean[1] - post_mean[0];
    const double sd = std::sqrt(post_var[0] + post_var[1]);
    return normal_cdf(mu / sd);
}

/// Upper confidence bound of one arm; +inf when the arm has never been pulled.
inline double ucb_index(const HistorySummary& h, int arm, double delta)
{
    if (h.pulls[arm] == 0)
        return std::numeric_limits<double>::infinity();
    return h.mean(arm) +
           std::sqrt(2.0 * std::log(1.0 / delta) / static_cast<double>(h.pulls[arm]));
}

inline double ucb_prob(const HistorySummary& h, double delta, double pi_hi,
                       double first_batch_prob = 0.5)
{
    if (h.empty())
        return first_batch_prob;
    return ucb_index(h, 1, delta) > ucb_index(h, 0, delta) ? pi_hi : 1.0 - pi_hi;
}

/// Arm-1 probability for the next batch before clipping.
///
/// `n` and `T` only matter for the UCB default delta = 1 / (n T).
inline double raw_policy_prob(const PolicySpec& p, const HistorySummary& h, int n, int T)
{
    if (h.empty() && p.kind != PolicySpec::Kind::fixed)
        return p.first_batch_prob;
    switch (p.kind) {
    case PolicySpec::Kind::epsilon_greedy:
        return epsilon_greedy_prob(h, p.epsilon, p.first_batch_prob);
    case PolicySpec::Kind::thompson:
        return thompson_prob(h, p.prior_var, p.model_var, p.prior_mean);
    case PolicySpec::Kind::ucb: {
        const double delta = p.ucb_delta.value_or(1.0 / (static_cast<double>(n) * T));
        return ucb_prob(h, delta, p.clip_hi, p.first_batch_prob);
    }
    case PolicySpec::Kind::fixed:
        return p.fixed_prob;
    }
    return p.first_batch_prob;
}

/// Arm-1 probability actually used for the next batch: the raw rule composed
/// with the clipping constraint.
inline double policy_prob(const PolicySpec& p, const HistorySummary& h, int n, int T)
{
    return clip_prob(raw_policy_prob(p, h, n, T), p.clip_lo, p.clip_hi);
}

} // namespace bols
