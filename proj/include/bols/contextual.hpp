#pragma once

#include <algorithm>
#include <limits>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bols/distributions.hpp"
#include "bols/random.hpp"

namespace bols {

/// Contextual K-arm experiment with linear per-arm rewards C' beta_{t,k}.
struct ContextSpec
{
    enum class Policy { thompson, fixed };

    int d = 2;
    int K = 2;
    int n = 500;
    int T = 3;
    double u = 1.0;  // contexts beyond the intercept are Uniform(-u, u)
    double sigma2 = 1.0;
    double clip_lo = 0.1;
    double clip_hi = 0.9;
    Policy policy = Policy::thompson;
    std::vector<double> fixed_probs;  // K entries for Policy::fixed
    double prior_var = 1.0;
    int mc_draws = 256;  // posterior draws per context when K > 2
    // One K x d coefficient matrix (row k = beta_k) per batch, or a single
    // matrix used for every batch.
    std::vector<Eigen::MatrixXd> coefficients;
    std::uint64_t seed = 0;

    const Eigen::MatrixXd& coefficients_at(int t) const
    {
        return coefficients.size() == 1 ? coefficients.front()
                                        : coefficients.at(static_cast<std::size_t>(t - 1));
    }

    void validate() const
    {
        if (d < 1 || K < 2 || n < 1 || T < 1)
            throw std::invalid_argument("context spec: need d >= 1, K >= 2, n >= 1, T >= 1");
        if (!(clip_lo >= 0.0 && clip_lo <= clip_hi && clip_hi <= 1.0))
            throw std::invalid_argument("context spec: bad clipping bounds");
        if (clip_lo * K > 1.0 + 1e-12 || clip_hi * K < 1.0 - 1e-12)
            throw std::invalid_argument("context spec: clipping box excludes the simplex");
        if (coefficients.size() != 1 && coefficients.size() != static_cast<std::size_t>(T))
            throw std::invalid_argument("context spec: need 1 or T coefficient matrices");
        for (const auto& m : coefficients)
            if (m.rows() != K || m.cols() != d)
                throw std::invalid_argument("context spec: coefficient matrix must be K x d");
        if (policy == Policy::fixed && fixed_probs.size() != static_cast<std::size_t>(K))
            throw std::invalid_argument("context spec: fixed policy needs K probabilities");
        if (!(sigma2 >= 0.0) || !(u >= 0.0))
            throw std::invalid_argument("context spec: sigma2 and u must be nonnegative");
    }
};

struct ContextBatch
{
    int t = 1;
    Eigen::MatrixXd contexts;       // n x d
    std::vector<int> actions;       // in [0, K)
    std::vector<double> rewards;
    Eigen::MatrixXd propensities;   // n x K, row i = pi_t(C_{t,i})

    int size() const { return static_cast<int>(actions.size()); }
};

/// Per-arm Gram matrix sum 1{A=k} c c' and moment vector sum 1{A=k} c R.
struct ArmGram
{
    Eigen::MatrixXd gram;
    Eigen::VectorXd moment;
    int count = 0;
};

inline ArmGram arm_gram(const ContextBatch& b, int k)
{
    const auto d = b.contexts.cols();
    ArmGram g{Eigen::MatrixXd::Zero(d, d), Eigen::VectorXd::Zero(d), 0};
    for (int i = 0; i < b.size(); ++i) {
        if (b.actions[static_cast<std::size_t>(i)] != k)
            continue;
        const Eigen::VectorXd c = b.contexts.row(i).transpose();
        g.gram.noalias() += c * c.transpose();
        g.moment += c * b.rewards[static_cast<std::size_t>(i)];
        ++g.count;
    }
    return g;
}

/// Projects p onto {q : lo <= q_k <= hi, sum q = 1} by a common additive shift
/// (the Euclidean projection), found by bisection.
inline Eigen::VectorXd project_clipped_simplex(const Eigen::VectorXd& p, double lo, double hi)
{
    if (p.minCoeff() >= lo && p.maxCoeff() <= hi && std::abs(p.sum() - 1.0) < 1e-12)
        return p;
    auto mass = [&](double tau) {
        double s = 0.0;
        for (Eigen::Index k = 0; k < p.size(); ++k)
            s += std::clamp(p[k] + tau, lo, hi);
        return s;
    };
    double a = lo - p.maxCoeff() - 1.0;
    double b = hi - p.minCoeff() + 1.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (a + b);
        (mass(mid) < 1.0 ? a : b) = mid;
    }
    const double tau = 0.5 * (a + b);
    Eigen::VectorXd q(p.size());
    for (Eigen::Index k = 0; k < p.size(); ++k)
        q[k] = std::clamp(p[k] + tau, lo, hi);
    return q / q.sum();
}

/// Gaussian posterior of each arm's coefficients under a N(0, prior_var I) prior.
struct ArmPosterior
{
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

inline std::vector<ArmPosterior> arm_posteriors(const std::vector<ArmGram>& grams, double prior_var,
                                                double sigma2)
{
    std::vector<ArmPosterior> out;
    for (const auto& g : grams) {
        const auto d = g.gram.rows();
        const Eigen::MatrixXd precision =
            Eigen::MatrixXd::Identity(d, d) / prior_var + g.gram / sigma2;
        Eigen::LLT<Eigen::MatrixXd> llt(precision);
        ArmPosterior p;
        p.cov = llt.solve(Eigen::MatrixXd::Identity(d, d));
        p.mean = llt.solve(g.moment / sigma2);
        out.push_back(std::move(p));
    }
    return out;
}

/// Thompson action probabilities for one context: P(arm k has the largest
/// sampled reward), exact for K = 2 and by `draws` posterior samples otherwise.
inline Eigen::VectorXd thompson_context_probs(const std::vector<ArmPosterior>& post,
                                              const Eigen::VectorXd& c, int draws, Rng& rng)
{
    const auto K = static_cast<Eigen::Index>(post.size());
    Eigen::VectorXd p(K);
    if (K == 2) {
        const double mu = c.dot(post[1].mean - post[0].mean);
        const double var = c.dot((post[1].cov + post[0].cov) * c);
        p[1] = var > 0.0 ? normal_cdf(mu / std::sqrt(var)) : (mu > 0.0 ? 1.0 : 0.0);
        p[0] = 1.0 - p[1];
        return p;
    }
    Eigen::VectorXd m(K), s(K);
    for (Eigen::Index k = 0; k < K; ++k) {
        m[k] = c.dot(post[static_cast<std::size_t>(k)].mean);
        s[k] = std::sqrt(std::max(0.0, c.dot(post[static_cast<std::size_t>(k)].cov * c)));
    }
    p.setZero();
    std::normal_distribution<double> z(0.0, 1.0);
    for (int r = 0; r < draws; ++r) {
        Eigen::Index best = 0;
        double best_v = -std::numeric_limits<double>::infinity();
        for (Eigen::Index k = 0; k < K; ++k) {
            const double v = m[k] + s[k] * z(rng);
            if (v > best_v) {
                best_v = v;
                best = k;
            }
        }
        p[best] += 1.0;
    }
    return p / static_cast<double>(draws);
}

/// Samples an arm using one uniform draw; arms are scanned from K-1 down to 0
/// so that K = 2 selects arm 1 exactly when u < p_1, as the two-arm simulator does.
inline int sample_arm(const Eigen::VectorXd& p, Rng& rng)
{
    const double u = uniform01(rng);
    double cum = 0.0;
    for (Eigen::Index k = p.size() - 1; k >= 1; --k) {
        cum += p[k];
        if (u < cum)
            return static_cast<int>(k);
    }
    return 0;
}

/// Draws one contextual batch. Per sample: the d-1 non-intercept context
/// coordinates, the action, then the reward noise.
///
/// `posterior` is the Thompson state built from earlier batches; pass an empty
/// vector for the first batch (prior only) or for the fixed policy.
inline ContextBatch generate_context_batch(const ContextSpec& spec, int t,
                                           const std::vector<ArmPosterior>& posterior, Rng& rng)
{
    const int d = spec.d, K = spec.K, n = spec.n;
    const Eigen::MatrixXd& beta = spec.coefficients_at(t);
    ContextBatch b;
    b.t = t;
    b.contexts.resize(n, d);
    b.actions.resize(static_cast<std::size_t>(n));
    b.rewards.resize(static_cast<std::size_t>(n));
    b.propensities.resize(n, K);

    std::vector<ArmPosterior> prior;
    const std::vector<ArmPosterior>* post = &posterior;
    if (spec.policy == ContextSpec::Policy::thompson && posterior.empty()) {
        for (int k = 0; k < K; ++k)
            prior.push_back({Eigen::VectorXd::Zero(d),
                             Eigen::MatrixXd::Identity(d, d) * spec.prior_var});
        post = &prior;
    }

    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd c(d);
        c[0] = 1.0;
        for (int j = 1; j < d; ++j)
            c[j] = (2.0 * uniform01(rng) - 1.0) * spec.u;

        Eigen::VectorXd p(K);
        if (spec.policy == ContextSpec::Policy::fixed) {
            for (int k = 0; k < K; ++k)
                p[k] = spec.fixed_probs[static_cast<std::size_t>(k)];
        } else {
            p = thompson_context_probs(*post, c, spec.mc_draws, rng);
        }
        p = project_clipped_simplex(p, spec.clip_lo, spec.clip_hi);

        const int a = sample_arm(p, rng);
        double noise = 0.0;
        if (spec.sigma2 > 0.0) {
            std::normal_distribution<double> z(0.0, std::sqrt(spec.sigma2));
            noise = z(rng);
        }
        b.contexts.row(i) = c.transpose();
        b.propensities.row(i) = p.transpose();
        b.actions[static_cast<std::size_t>(i)] = a;
        b.rewards[static_cast<std::size_t>(i)] = c.dot(beta.row(a).transpose()) + noise;
    }
    return b;
}

/// Runs T contextual batches; batch t draws from the stream (seed, rep, t).
inline std::vector<ContextBatch> simulate_contextual(const ContextSpec& spec, std::uint64_t rep)
{
    spec.validate();
    std::vector<ContextBatch> out;
    std::vector<ArmGram> cumulative(static_cast<std::size_t>(spec.K),
                                    ArmGram{Eigen::MatrixXd::Zero(spec.d, spec.d),
                                            Eigen::VectorXd::Zero(spec.d), 0});
    std::vector<ArmPosterior> posterior;
    for (int t = 1; t <= spec.T; ++t) {
        Rng rng = make_stream(spec.seed, rep, static_cast<std::uint64_t>(t));
        out.push_back(generate_context_batch(spec, t, posterior, rng));
        for (int k = 0; k < spec.K; ++k) {
            const auto g = arm_gram(out.back(), k);
            cumulative[static_cast<std::size_t>(k)].gram += g.gram;
            cumulative[static_cast<std::size_t>(k)].moment += g.moment;
            cumulative[static_cast<std::size_t>(k)].count += g.count;
        }
        if (spec.policy == ContextSpec::Policy::thompson)
            posterior = arm_posteriors(cumulative, spec.prior_var, spec.sigma2 > 0.0 ? spec.sigma2 : 1.0);
    }
    return out;
}

struct ArmFit
{
    Eigen::VectorXd beta;
    double condition_number = 0.0;
    bool valid = false;
    std::string reason;
};

/// Solves the per-arm normal equations; rejects Grams whose smallest
/// eigenvalue is below `rel_tol` times the largest.
inline ArmFit per_arm_ols(const ContextBatch& b, int k, double rel_tol = 1e-10)
{
    const auto g = arm_gram(b, k);
    ArmFit fit;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g.gram);
    const double lmax = es.eigenvalues().maxCoeff();
    const double lmin = es.eigenvalues().minCoeff();
    fit.condition_number = lmin > 0.0 ? lmax / lmin : std::numeric_limits<double>::infinity();
    if (!(lmax > 0.0) || !(lmin > rel_tol * lmax)) {
        fit.reason = "singular_gram";
        return fit;
    }
    fit.beta = g.gram.ldlt().solve(g.moment);
    fit.valid = true;
    return fit;
}

/// M^{-1/2} for symmetric positive definite M, via eigendecomposition. Fails
/// when an eigenvalue is below 1e-8 * trace(M) / dim.
inline std::optional<Eigen::MatrixXd> inverse_sqrt_psd(const Eigen::MatrixXd& m)
{
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    const double floor = 1e-8 * m.trace() / static_cast<double>(m.rows());
    const Eigen::VectorXd ev = es.eigenvalues();
    if (!(ev.minCoeff() > floor) || !(floor > 0.0))
        return std::nullopt;
    const Eigen::VectorXd inv_sqrt = ev.array().rsqrt();
    return es.eigenvectors() * inv_sqrt.asDiagonal() * es.eigenvectors().transpose();
}

struct ContextualStatistic
{
    Eigen::VectorXd value;
    Eigen::VectorXd beta_diff;
    bool valid = false;
    std::string reason;
};

/// M^{-1/2} ((beta_x - beta_y) - delta) / sigma with M = G_x^{-1} + G_y^{-1}.
inline ContextualStatistic contextual_bols_statistic(const ContextBatch& b, int x, int y,
                                                     const Eigen::VectorXd& delta, double sigma2)
{
    ContextualStatistic out;
    const auto fx = per_arm_ols(b, x);
    const auto fy = per_arm_ols(b, y);
    if (!fx.valid || !fy.valid) {
        out.reason = "singular_gram";
        return out;
    }
    const auto gx = arm_gram(b, x);
    const auto gy = arm_gram(b, y);
    const Eigen::MatrixXd m = gx.gram.inverse() + gy.gram.inverse();
    const auto root = inverse_sqrt_psd(m);
    if (!root) {
        out.reason = "eigenvalue_floor";
        return out;
    }
    out.beta_diff = fx.beta - fy.beta;
    out.value = (*root) * (out.beta_diff - delta) / std::sqrt(sigma2);
    out.valid = true;
    return out;
}

} // namespace bols
