#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bols/policies.hpp"
#include "bols/random.hpp"

namespace bols {

/// Per-batch arm means (beta_{t,0}, beta_{t,1}).
struct ArmMeans
{
    double beta0 = 0.0;
    double beta1 = 0.0;

    double margin() const { return beta1 - beta0; }
    bool operator==(const ArmMeans&) const = default;
};

/// How the arm means evolve across batches.
struct TrendSpec
{
    enum class Kind { constant, explicit_pairs, baseline_shift };
    enum class Baseline { quadratic, sinusoidal, sequence };

    Kind kind = Kind::constant;

    // constant
    double beta0 = 0.0;
    double beta1 = 0.0;

    // explicit_pairs
    std::vector<ArmMeans> pairs;

    // baseline_shift: beta_{t,0} = baseline_t, beta_{t,1} = baseline_t + margin
    double margin = 0.0;
    Baseline baseline = Baseline::quadratic;
    double amplitude = 1.0;
    std::optional<double> period;  // unset: T
    std::vector<double> sequence;

    static TrendSpec constant_means(double b0, double b1)
    {
        TrendSpec s;
        s.kind = Kind::constant;
        s.beta0 = b0;
        s.beta1 = b1;
        return s;
    }

    static TrendSpec explicit_means(std::vector<ArmMeans> p)
    {
        TrendSpec s;
        s.kind = Kind::explicit_pairs;
        s.pairs = std::move(p);
        return s;
    }

    static TrendSpec shifted(double margin, Baseline b, double amplitude,
                             std::optional<double> period = std::nullopt)
    {
        TrendSpec s;
        s.kind = Kind::baseline_shift;
        s.margin = margin;
        s.baseline = b;
        s.amplitude = amplitude;
        s.period = period;
        return s;
    }
};

inline std::string to_string(TrendSpec::Kind k)
{
    switch (k) {
    case TrendSpec::Kind::constant: return "constant";
    case TrendSpec::Kind::explicit_pairs: return "explicit";
    case TrendSpec::Kind::baseline_shift: return "baseline_shift";
    }
    return "unknown";
}

inline std::string to_string(TrendSpec::Baseline b)
{
    switch (b) {
    case TrendSpec::Baseline::quadratic: return "quadratic";
    case TrendSpec::Baseline::sinusoidal: return "sinusoidal";
    case TrendSpec::Baseline::sequence: return "sequence";
    }
    return "unknown";
}

/// Shape of a baseline (or margin) curve at batch t of T, 1-based.
///
/// quadratic:  amplitude * (1 - ((t-1)/(T-1))^2), decreasing from amplitude to 0
/// sinusoidal: amplitude * sin(2 pi (t-1) / period)
inline double curve_value(TrendSpec::Baseline shape, double amplitude, double period, int t, int T)
{
    switch (shape) {
    case TrendSpec::Baseline::quadratic: {
        if (T <= 1)
            return amplitude;
        const double x = static_cast<double>(t - 1) / static_cast<double>(T - 1);
        return amplitude * (1.0 - x * x);
    }
    case TrendSpec::Baseline::sinusoidal:
        return amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(t - 1) / period);
    case TrendSpec::Baseline::sequence:
        break;
    }
    throw std::invalid_argument("curve_value: sequence baselines have no closed form");
}

inline std::vector<ArmMeans> build_trend(const TrendSpec& spec, int T)
{
    if (T < 1)
        throw std::invalid_argument("build_trend: T must be >= 1");
    std::vector<ArmMeans> out;
    out.reserve(static_cast<std::size_t>(T));
    switch (spec.kind) {
    case TrendSpec::Kind::constant:
        out.assign(static_cast<std::size_t>(T), ArmMeans{spec.beta0, spec.beta1});
        break;
    case TrendSpec::Kind::explicit_pairs:
        if (spec.pairs.size() != static_cast<std::size_t>(T))
            throw std::invalid_argument("build_trend: explicit trend has " +
                                        std::to_string(spec.pairs.size()) +
                                        " pairs, expected " + std::to_string(T));
        out = spec.pairs;
        break;
    case TrendSpec::Kind::baseline_shift: {
        if (spec.baseline == TrendSpec::Baseline::sequence &&
            spec.sequence.size() != static_cast<std::size_t>(T))
            throw std::invalid_argument("build_trend: baseline sequence length mismatch");
        const double period = spec.period.value_or(static_cast<double>(T));
        for (int t = 1; t <= T; ++t) {
            const double base = spec.baseline == TrendSpec::Baseline::sequence
                                    ? spec.sequence[static_cast<std::size_t>(t - 1)]
                                    : curve_value(spec.baseline, spec.amplitude, period, t, T);
            out.push_back(ArmMeans{base, base + spec.margin});
        }
        break;
    }
    }
    return out;
}

/// Full description of one simulated batched experiment.
struct ExperimentSpec
{
    int n = 25;
    int T = 25;
    int num_arms = 2;
    double clip_lo = 0.1;
    double clip_hi = 0.9;
    std::vector<double> noise_sigma2{1.0};  // one entry, or one per batch
    bool sigma_known = false;
    TrendSpec trend;
    PolicySpec policy;
    std::uint64_t seed = 0;

    double sigma2_at(int t) const
    {
        return noise_sigma2.size() == 1 ? noise_sigma2.front()
                                        : noise_sigma2.at(static_cast<std::size_t>(t - 1));
    }

    /// Average noise variance across batches; the pooled estimators' known sigma^2.
    double mean_sigma2() const
    {
        double s = 0.0;
        for (int t = 1; t <= T; ++t)
            s += sigma2_at(t);
        return s / T;
    }

    void validate() const
    {
        if (n < 2)
            throw std::invalid_argument("spec: n must be >= 2");
        if (!sigma_known && n < 3)
            throw std::invalid_argument("spec: n must be >= 3 when sigma is estimated");
        if (T < 1)
            throw std::invalid_argument("spec: T must be >= 1");
        if (num_arms != 2)
            throw std::invalid_argument("spec: the multi-arm simulator is two-armed");
        if (!(clip_lo > 0.0 && clip_lo <= clip_hi && clip_hi < 1.0))
            throw std::invalid_argument("spec: clipping requires 0 < clip_lo <= clip_hi < 1");
        if (noise_sigma2.size() != 1 && noise_sigma2.size() != static_cast<std::size_t>(T))
            throw std::invalid_argument("spec: noise_sigma2 must have 1 or T entries");
        for (double s : noise_sigma2)
            if (!(s >= 0.0))
                throw std::invalid_argument("spec: noise variance must be >= 0");
        if (policy.clip_lo != clip_lo || policy.clip_hi != clip_hi)
            throw std::invalid_argument("spec: policy clipping disagrees with experiment clipping");
        policy.validate();
        build_trend(trend, T);
    }

    /// Sets clipping on both the experiment and its policy.
    void set_clip(double lo, double hi)
    {
        clip_lo = policy.clip_lo = lo;
        clip_hi = policy.clip_hi = hi;
    }
};

/// One batch: actions, rewards, and the propensity that generated them.
struct BatchRecord
{
    int t = 1;
    double propensity = 0.5;
    double raw_propensity = 0.5;  // before clipping
    std::vector<std::uint8_t> actions;
    std::vector<double> rewards;
    int n1 = 0;
    int n0 = 0;

    int size() const { return static_cast<int>(actions.size()); }

    void recount()
    {
        n1 = 0;
        for (auto a : actions)
            n1 += a ? 1 : 0;
        n0 = size() - n1;
    }

    bool consistent() const
    {
        int c = 0;
        for (auto a : actions)
            c += a ? 1 : 0;
        return actions.size() == rewards.size() && c == n1 && n0 + n1 == size();
    }

    static BatchRecord from(int t, double propensity, std::vector<std::uint8_t> actions,
                            std::vector<double> rewards)
    {
        BatchRecord b;
        b.t = t;
        b.propensity = b.raw_propensity = propensity;
        b.actions = std::move(actions);
        b.rewards = std::move(rewards);
        if (b.actions.size() != b.rewards.size())
            throw std::invalid_argument("BatchRecord: actions/rewards length mismatch");
        b.recount();
        return b;
    }
};

struct Trajectory
{
    ExperimentSpec spec;
    std::vector<BatchRecord> batches;

    int total_samples() const
    {
        int s = 0;
        for (const auto& b : batches)
            s += b.size();
        return s;
    }

    bool indices_contiguous() const
    {
        for (std::size_t i = 0; i < batches.size(); ++i)
            if (batches[i].t != static_cast<int>(i) + 1)
                return false;
        return true;
    }
};

/// Draws one batch: actions i.i.d. Bernoulli(propensity), rewards from the arm
/// means plus noise. Per sample the action is drawn before its noise term.
template <class Noise = GaussianNoise>
BatchRecord generate_batch(int t, double propensity, ArmMeans means, double sigma2, int n,
                           Rng& rng, Noise noise = {})
{
    if (!(propensity >= 0.0 && propensity <= 1.0))
        throw std::invalid_argument("generate_batch: propensity outside [0, 1]");
    if (!(sigma2 >= 0.0))
        throw std::invalid_argument("generate_batch: negative variance");
    BatchRecord b;
    b.t = t;
    b.propensity = b.raw_propensity = propensity;
    b.actions.resize(static_cast<std::size_t>(n));
    b.rewards.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const bool a = bernoulli(rng, propensity);
        b.actions[static_cast<std::size_t>(i)] = a ? 1 : 0;
        b.rewards[static_cast<std::size_t>(i)] = (a ? means.beta1 : means.beta0) + noise(rng, sigma2);
    }
    b.recount();
    return b;
}

/// Runs the configured policy over T batches. Batch t draws from the stream
/// (spec.seed, rep, t), so a replication is a pure function of its index.
template <class Noise = GaussianNoise>
Trajectory simulate_trajectory(const ExperimentSpec& spec, std::uint64_t rep, Noise noise = {})
{
    const auto means = build_trend(spec.trend, spec.T);
    Trajectory traj;
    traj.spec = spec;
    traj.batches.reserve(static_cast<std::size_t>(spec.T));
    HistorySummary history;
    for (int t = 1; t <= spec.T; ++t) {
        const double raw = raw_policy_prob(spec.policy, history, spec.n, spec.T);
        const double pi = clip_prob(raw, spec.policy.clip_lo, spec.policy.clip_hi);
        Rng rng = make_stream(spec.seed, rep, static_cast<std::uint64_t>(t));
        auto batch = generate_batch(t, pi, means[static_cast<std::size_t>(t - 1)],
                                    spec.sigma2_at(t), spec.n, rng, noise);
        batch.raw_propensity = raw;
        history.absorb(batch.actions, batch.rewards);
        traj.batches.push_back(std::move(batch));
    }
    return traj;
}

/// Order-sensitive FNV-1a digest of a trajectory's actions and rewards.
inline std::uint64_t trajectory_digest(const Trajectory& traj)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const void* data, std::size_t len) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < len; ++i) {
            h ^= p[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& b : traj.batches) {
        mix(&b.propensity, sizeof b.propensity);
        mix(b.actions.data(), b.actions.size());
        mix(b.rewards.data(), b.rewards.size() * sizeof(double));
    }
    return h;
}

} // namespace bols
