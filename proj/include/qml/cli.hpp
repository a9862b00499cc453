#pragma once

#include <optional>
#include <ostream>
#include <string>

namespace qml {

/// Command-line overrides applied on top of the config file.
struct CliOverrides {
    std::optional<std::string> out;
    std::optional<uint64_t> seed;
    std::optional<int> reps;
    std::optional<int> jobs;
    std::optional<std::string> algorithm;
};

/// optimize: run the configured macro-replication experiment.
/// Exit 0 on full completion, 2 when some replications failed, 1 on
/// configuration errors.
int cmd_optimize(const std::string& config_path, const CliOverrides& overrides, std::ostream& log);

/// validate-estimators: Monte Carlo check of the sectioning estimators
/// against their closed-form asymptotics. Exit 0 when all checks pass.
int cmd_validate_estimators(const std::string& config_path, std::ostream& log);

/// export-plotdata: tidy CSVs (averaged gap-reduction curves, best-so-far
/// curves, per-point allocation counts) from a finished run directory.
int cmd_export_plotdata(const std::string& trace_dir, const std::string& out_dir, std::ostream& log);

/// defaults: print the default config as JSON.
int cmd_defaults(std::ostream& out);

}  // namespace qml
