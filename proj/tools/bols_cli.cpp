// Command-line front end: simulate, mc, calibrate, figure, bands.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "bols/bols.hpp"

namespace fs = std::filesystem;
using namespace bols;

namespace {

struct Common
{
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> reps;
    std::optional<double> alpha;
    std::string out;
    bool raw = false;
    int workers = 0;
};

void add_common(CLI::App* app, Common& c, bool config_required)
{
    auto* opt = app->add_option("--config", c.config, "JSON input file");
    if (config_required)
        opt->required()->check(CLI::ExistingFile);
    app->add_option("--seed", c.seed, "root seed (u64)");
    app->add_option("--reps", c.reps, "Monte Carlo replications")->check(CLI::PositiveNumber);
    app->add_option("--alpha", c.alpha, "test level")->check(CLI::Range(0.0, 1.0));
    app->add_option("--out", c.out, "output directory (default: stdout)");
    app->add_flag("--raw", c.raw, "also write per-replication statistics CSV");
    app->add_option("--workers", c.workers, "worker threads (0: all cores)");
}

void emit(const Common& c, const std::string& file, const std::string& body)
{
    if (c.out.empty()) {
        std::cout << body;
        return;
    }
    fs::create_directories(c.out);
    std::ofstream f(fs::path(c.out) / file);
    if (!f)
        throw std::runtime_error("cannot write " + (fs::path(c.out) / file).string());
    f << body;
}

McPlan load_plan(const Common& c)
{
    auto plan = read_json_file(c.config).get<McPlan>();
    if (c.seed)
        plan.spec.seed = *c.seed;
    if (c.reps)
        plan.reps = *c.reps;
    if (c.alpha)
        plan.alpha = *c.alpha;
    if (c.workers > 0)
        plan.workers = c.workers;
    plan.validate();
    return plan;
}

int cmd_simulate(const Common& c)
{
    auto spec = read_json_file(c.config).get<ExperimentSpec>();
    if (c.seed)
        spec.seed = *c.seed;
    spec.validate();
    const auto traj = simulate_trajectory(spec, 0);
    emit(c, "trajectory.json", json(traj).dump(2) + "\n");
    if (!c.out.empty()) {
        std::vector<EstimateRow> rows;
        const auto var = spec.sigma_known ? std::optional<double>(spec.mean_sigma2())
                                          : pooled_sigma2(traj);
        rows.push_back({"ols", 0,
                        var ? ols_z_statistic(traj, 0.0, *var)
                            : EstimateReport::invalid("arm_unpulled", 0.0)});
        for (const auto& b : bols_all(traj)) {
            const double s2 = spec.sigma_known ? spec.sigma2_at(b.t) : b.sigma2_hat.value_or(0.0);
            EstimateReport r = EstimateReport::invalid(b.valid ? "no_variance" : b.reason,
                                                       b.delta_hat);
            if (b.valid && s2 > 0.0)
                r = EstimateReport::make(b.delta_hat, b.scale() / std::sqrt(s2), 0.0,
                                         spec.sigma_known ? std::nullopt
                                                          : std::optional<int>(b.n() - 2));
            rows.push_back({"bols", b.t, r});
        }
        std::ostringstream csv;
        write_estimate_csv(csv, rows);
        emit(c, "estimates.csv", csv.str());
    }
    return 0;
}

int cmd_mc(const Common& c)
{
    auto plan = load_plan(c);
    std::vector<ReplicationResult> raw;
    const auto summary = monte_carlo(plan, c.raw ? &raw : nullptr);
    emit(c, "summary.json", json(summary).dump(2) + "\n");
    if (c.raw) {
        std::ostringstream csv;
        write_replication_csv(csv, raw);
        Common to_file = c;
        if (to_file.out.empty())
            to_file.out = ".";
        emit(to_file, "replications.csv", csv.str());
    }
    return 0;
}

int cmd_calibrate(const Common& c)
{
    auto plan = load_plan(c);
    const auto cal = calibrate_cutoffs(plan, plan.workers);
    json out = json::object();
    for (const auto& [id, v] : cal.cutoffs)
        out[to_string(id)] = json{{"cutoff", v.cutoff},
                                  {"theoretical_rate", v.theoretical_rate},
                                  {"theoretical_se", v.theoretical_se},
                                  {"inflated", v.inflated}};
    json doc{{"alpha", plan.alpha}, {"reps", plan.reps}, {"cutoffs", out},
             {"null_summary", cal.null_summary}};
    emit(c, "cutoffs.json", doc.dump(2) + "\n");
    return 0;
}

int cmd_figure(const Common& c, const std::string& name)
{
    FigureOptions o;
    if (c.reps)
        o.reps = *c.reps;
    if (c.seed)
        o.seed = *c.seed;
    if (c.alpha)
        o.alpha = *c.alpha;
    o.out = c.out.empty() ? fs::path(".") : fs::path(c.out);
    o.workers = c.workers;
    const auto summary = reproduce_figure(name, o);
    std::cout << summary.dump(2) << '\n';
    return 0;
}

int cmd_bands(const Common& c)
{
    const auto traj = read_json_file(c.config).get<Trajectory>();
    auto batches = bols_all(traj);
    if (traj.spec.sigma_known)
        for (auto& b : batches)
            b.sigma2_hat = traj.spec.sigma2_at(b.t);
    const auto bands = simultaneous_bands(batches, c.alpha.value_or(0.05));
    std::ostringstream csv;
    write_band_csv(csv, bands);
    emit(c, "bands.csv", csv.str());
    if (!c.out.empty())
        emit(c, "bands.json", json(bands).dump(2) + "\n");
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Batched two-arm bandit simulation and inference"};
    app.require_subcommand(1);

    Common sim, mc, cal, fig, bands;
    std::string figure_name;

    auto* s = app.add_subcommand("simulate", "simulate one trajectory and dump it as JSON");
    add_common(s, sim, true);
    auto* m = app.add_subcommand("mc", "Monte Carlo study from a plan file");
    add_common(m, mc, true);
    auto* k = app.add_subcommand("calibrate", "null-calibrated cutoffs from a plan file");
    add_common(k, cal, true);
    auto* f = app.add_subcommand("figure", "emit the data behind a named figure");
    add_common(f, fig, false);
    f->add_option("name", figure_name, "figure name")
        ->required()
        ->check(CLI::IsMember(figure_names()));
    auto* b = app.add_subcommand("bands", "simultaneous confidence bands from a trajectory file");
    add_common(b, bands, true);

    CLI11_PARSE(app, argc, argv);

    try {
        if (s->parsed())
            return cmd_simulate(sim);
        if (m->parsed())
            return cmd_mc(mc);
        if (k->parsed())
            return cmd_calibrate(cal);
        if (f->parsed())
            return cmd_figure(fig, figure_name);
        if (b->parsed())
            return cmd_bands(bands);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
