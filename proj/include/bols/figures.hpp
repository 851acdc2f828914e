#pragma once

// Named experiment grids. Each writes CSV tables (and a JSON summary) into an
// output directory and returns the summary.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "bols/json_io.hpp"

namespace bols {

struct FigureOptions
{
    int reps = 10'000;
    std::uint64_t seed = 1;
    double alpha = 0.05;
    std::filesystem::path out = ".";
    int workers = 0;
    std::vector<int> Ts{2, 5, 10, 25};
    std::vector<int> ns{25, 50, 100};
    std::vector<double> margins{0.0, 0.05, 0.1, 0.2, 0.3, 0.5};
    double effect = 0.25;     // |beta1 - beta0| in the power grids
    double amplitude = 1.0;   // baseline / margin curve amplitude
    std::int64_t cutoff_draws = default_cutoff_draws;
};

namespace detail {

inline ExperimentSpec figure_spec(PolicySpec::Kind kind, int n, int T, double lo, double hi,
                                  bool sigma_known, std::uint64_t seed)
{
    ExperimentSpec s;
    s.n = n;
    s.T = T;
    s.sigma_known = sigma_known;
    s.policy.kind = kind;
    s.policy.epsilon = 0.1;
    s.set_clip(lo, hi);
    s.seed = seed;
    return s;
}

inline McPlan figure_plan(const ExperimentSpec& spec, const FigureOptions& o)
{
    McPlan p;
    p.spec = spec;
    p.reps = o.reps;
    p.alpha = o.alpha;
    p.workers = o.workers;
    p.cutoff_draws = o.cutoff_draws;
    return p;
}

inline std::ofstream open_csv(const FigureOptions& o, const std::string& name)
{
    std::filesystem::create_directories(o.out);
    std::ofstream f(o.out / name);
    if (!f)
        throw std::runtime_error("cannot write " + (o.out / name).string());
    return f;
}

inline const std::vector<PolicySpec::Kind>& two_policies()
{
    static const std::vector<PolicySpec::Kind> k{PolicySpec::Kind::thompson,
                                                 PolicySpec::Kind::epsilon_greedy};
    return k;
}

inline void write_rates(std::ostream& os, const std::string& prefix, const McSummary& s)
{
    for (const auto& e : s.estimators) {
        os << prefix << ',' << to_string(e.id) << ',' << csv_number(e.rate) << ','
           << csv_number(e.se) << ',';
        if (e.cutoff_override)
            os << csv_number(*e.cutoff_override);
        os << '\n';
    }
}

// OLS Z under the null with n = 100, T = 25, known variance.
inline json fig_zstat_hist(const FigureOptions& o)
{
    auto samples = open_csv(o, "zstat_hist_samples.csv");
    auto hist = open_csv(o, "zstat_hist.csv");
    samples << "policy,rep,z\n";
    hist << "policy,bin_lo,bin_hi,count,density,normal_density\n";
    json summary = json::object();
    const double width = 0.25, lo = -5.0;
    const int bins = 40;
    std::uint64_t cell = 0;
    for (auto kind : two_policies()) {
        auto spec = figure_spec(kind, 100, 25, 0.05, 0.95, true, derive_seed(o.seed, ++cell));
        auto plan = figure_plan(spec, o);
        plan.estimators = {EstimatorId::ols};
        plan.keep_raw = true;
        const auto s = monte_carlo(plan);
        const auto& z = s.at(EstimatorId::ols).raw_statistics;
        std::vector<int> counts(bins, 0);
        std::vector<double> finite;
        for (std::size_t r = 0; r < z.size(); ++r) {
            samples << to_string(kind) << ',' << r << ',' << csv_number(z[r]) << '\n';
            if (std::isnan(z[r]))
                continue;
            finite.push_back(z[r]);
            const int b = static_cast<int>(std::floor((z[r] - lo) / width));
            if (b >= 0 && b < bins)
                ++counts[static_cast<std::size_t>(b)];
        }
        for (int b = 0; b < bins; ++b) {
            const double a = lo + b * width;
            const double mid = a + width / 2.0;
            hist << to_string(kind) << ',' << csv_number(a) << ',' << csv_number(a + width) << ','
                 << counts[static_cast<std::size_t>(b)] << ','
                 << csv_number(counts[static_cast<std::size_t>(b)] / (width * finite.size()))
                 << ',' << csv_number(normal_pdf(mid)) << '\n';
        }
        summary[to_string(kind)] = json{{"type1", s.at(EstimatorId::ols).rate},
                                        {"ks_distance", ks_distance_to_normal(finite)}};
    }
    return summary;
}

// Coverage of the OLS normal interval over a grid of n and margin.
inline json fig_undercoverage_sweep(const FigureOptions& o)
{
    auto f = open_csv(o, "undercoverage_sweep.csv");
    f << "n,margin,coverage,se,shortfall\n";
    json rows = json::array();
    std::uint64_t cell = 0;
    for (int n : o.ns) {
        for (double m : o.margins) {
            auto spec = figure_spec(PolicySpec::Kind::thompson, n, 25, 0.05, 0.95, true,
                                    derive_seed(o.seed, ++cell));
            spec.trend = TrendSpec::constant_means(0.0, m);
            auto plan = figure_plan(spec, o);
            plan.estimators = {EstimatorId::ols};
            plan.null_value = m;  // rejecting the true margin is a coverage miss
            const auto s = monte_carlo(plan);
            const double cov = 1.0 - s.at(EstimatorId::ols).rate;
            const double se = s.at(EstimatorId::ols).se;
            const double nominal = 1.0 - o.alpha;
            f << n << ',' << csv_number(m) << ',' << csv_number(cov) << ',' << csv_number(se)
              << ',' << csv_number(std::max(0.0, nominal - cov)) << '\n';
            rows.push_back(json{{"n", n}, {"margin", m}, {"coverage", cov}, {"se", se}});
        }
    }
    return json{{"cells", rows}};
}

inline json rate_grid(const FigureOptions& o, const std::string& file, double beta0, double beta1,
                      Calibration cal)
{
    auto f = open_csv(o, file);
    f << "policy,T,estimator,rate,se,cutoff\n";
    json rows = json::array();
    std::uint64_t cell = 0;
    for (auto kind : two_policies()) {
        for (int T : o.Ts) {
            auto spec = figure_spec(kind, 25, T, 0.1, 0.9, false, derive_seed(o.seed, ++cell));
            spec.trend = TrendSpec::constant_means(beta0, beta1);
            auto plan = figure_plan(spec, o);
            plan.calibration = cal;
            const auto s = monte_carlo(plan);
            write_rates(f, to_string(kind) + ',' + std::to_string(T), s);
            rows.push_back(json{{"policy", to_string(kind)}, {"T", T}, {"summary", s}});
        }
    }
    return json{{"cells", rows}};
}

inline json fig_type1_stationary(const FigureOptions& o)
{
    return rate_grid(o, "type1_stationary.csv", 0.0, 0.0, Calibration::theoretical_cutoffs);
}

inline json fig_power_stationary(const FigureOptions& o)
{
    return rate_grid(o, "power_stationary.csv", o.effect, 0.0, Calibration::null_calibrated);
}

// Thompson sampling with a shared time-varying baseline; margin 0 and -effect.
inline json fig_nonstationary_baseline(const FigureOptions& o)
{
    auto f = open_csv(o, "nonstationary_baseline.csv");
    f << "baseline,margin,T,estimator,rate,se,cutoff\n";
    json rows = json::array();
    std::uint64_t cell = 0;
    for (auto b : {TrendSpec::Baseline::quadratic, TrendSpec::Baseline::sinusoidal}) {
        for (double m : {0.0, -o.effect}) {
            for (int T : o.Ts) {
                auto spec = figure_spec(PolicySpec::Kind::thompson, 25, T, 0.1, 0.9, false,
                                        derive_seed(o.seed, ++cell));
                spec.trend = TrendSpec::shifted(m, b, o.amplitude);
                auto plan = figure_plan(spec, o);
                if (m != 0.0)
                    plan.calibration = Calibration::null_calibrated;
                const auto s = monte_carlo(plan);
                write_rates(f, to_string(b) + ',' + csv_number(m) + ',' + std::to_string(T), s);
                rows.push_back(json{{"baseline", to_string(b)}, {"margin", m}, {"T", T},
                                    {"summary", s}});
            }
        }
    }
    return json{{"cells", rows}};
}

// Power against the global null when the margin itself drifts across batches.
inline json fig_nste_power(const FigureOptions& o)
{
    auto f = open_csv(o, "nste_power.csv");
    f << "margin_curve,T,estimator,rate,se,cutoff\n";
    json rows = json::array();
    std::uint64_t cell = 0;
    for (auto shape : {TrendSpec::Baseline::quadratic, TrendSpec::Baseline::sinusoidal}) {
        for (int T : o.Ts) {
            if (T < 2)
                continue;
            auto spec = figure_spec(PolicySpec::Kind::thompson, 25, T, 0.1, 0.9, false,
                                    derive_seed(o.seed, ++cell));
            std::vector<ArmMeans> pairs;
            for (int t = 1; t <= T; ++t)
                pairs.push_back({0.0, curve_value(shape, o.effect * 2.0, T, t, T)});
            spec.trend = TrendSpec::explicit_means(std::move(pairs));
            auto plan = figure_plan(spec, o);
            plan.calibration = Calibration::null_calibrated;
            const auto s = monte_carlo(plan);
            write_rates(f, to_string(shape) + ',' + std::to_string(T), s);
            rows.push_back(json{{"margin_curve", to_string(shape)}, {"T", T}, {"summary", s}});
        }
    }
    return json{{"cells", rows}};
}

} // namespace detail

inline const std::map<std::string, std::function<json(const FigureOptions&)>>& figure_registry()
{
    static const std::map<std::string, std::function<json(const FigureOptions&)>> r{
        {"zstat_hist", detail::fig_zstat_hist},
        {"undercoverage_sweep", detail::fig_undercoverage_sweep},
        {"type1_stationary", detail::fig_type1_stationary},
        {"power_stationary", detail::fig_power_stationary},
        {"nonstationary_baseline", detail::fig_nonstationary_baseline},
        {"nste_power", detail::fig_nste_power},
    };
    return r;
}

inline std::vector<std::string> figure_names()
{
    std::vector<std::string> out;
    for (const auto& [k, v] : figure_registry())
        out.push_back(k);
    return out;
}

/// Runs a named grid and writes <out>/<name>.json next to its CSV tables.
inline json reproduce_figure(const std::string& name, const FigureOptions& o)
{
    const auto& r = figure_registry();
    auto it = r.find(name);
    if (it == r.end()) {
        std::string known;
        for (const auto& n : figure_names())
            known += (known.empty() ? "" : ", ") + n;
        throw std::invalid_argument("unknown figure '" + name + "' (known: " + known + ")");
    }
    if (o.reps < 1)
        throw std::invalid_argument("figure: reps must be >= 1");
    json summary = it->second(o);
    summary["figure"] = name;
    summary["reps"] = o.reps;
    summary["seed"] = o.seed;
    summary["alpha"] = o.alpha;
    std::ofstream(o.out / (name + ".json")) << summary.dump(2) << '\n';
    return summary;
}

} // namespace bols
