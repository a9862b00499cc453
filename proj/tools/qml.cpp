#include <CLI11.hpp>
#include <iostream>
#include <string>

#include "qml/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Multi-level quantile simulation optimization"};
    app.require_subcommand(1);

    std::string config_path, out_dir, algorithm, trace_dir;
    uint64_t seed = 0;
    int reps = 0, jobs = 0;

    auto* optimize = app.add_subcommand("optimize", "run a configured macro-replication experiment");
    optimize->add_option("--config", config_path, "config file (JSON)")->required();
    auto* opt_out = optimize->add_option("--out", out_dir, "output directory override");
    auto* opt_seed = optimize->add_option("--seed", seed, "seed override");
    auto* opt_reps = optimize->add_option("--reps", reps, "replication count override");
    auto* opt_jobs = optimize->add_option("--jobs", jobs, "worker count override");
    auto* opt_algo = optimize->add_option("--algorithm", algorithm, "qml or q-baseline");

    auto* validate = app.add_subcommand("validate-estimators",
                                        "Monte Carlo check of the sectioning estimators");
    validate->add_option("--config", config_path, "optional overrides (JSON)");

    auto* plotdata = app.add_subcommand("export-plotdata", "tidy plot CSVs from a run directory");
    plotdata->add_option("dir", trace_dir, "run directory containing traces")->required();
    plotdata->add_option("--out", out_dir, "output directory (defaults to the run directory)");

    auto* defaults = app.add_subcommand("defaults", "print the default config as JSON");
    (void)defaults;

    CLI11_PARSE(app, argc, argv);

    if (app.got_subcommand("optimize")) {
        qml::CliOverrides ov;
        if (*opt_out) ov.out = out_dir;
        if (*opt_seed) ov.seed = seed;
        if (*opt_reps) ov.reps = reps;
        if (*opt_jobs) ov.jobs = jobs;
        if (*opt_algo) ov.algorithm = algorithm;
        return qml::cmd_optimize(config_path, ov, std::cout);
    }
    if (app.got_subcommand("validate-estimators")) {
        return qml::cmd_validate_estimators(config_path, std::cout);
    }
    if (app.got_subcommand("export-plotdata")) {
        return qml::cmd_export_plotdata(trace_dir, out_dir, std::cout);
    }
    if (app.got_subcommand("defaults")) {
        return qml::cmd_defaults(std::cout);
    }
    return 1;
}
