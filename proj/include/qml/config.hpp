#pragma once

#include <optional>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "qml/optimizer.hpp"

namespace qml {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Declarative 1-D custom problem block: value tables on a uniform grid.
struct CustomProblemSpec {
    double lower = 0.0;
    double upper = 1.0;
    std::vector<double> mean_values;
    std::vector<double> scale_values;
    std::string noise_family = "normal";  // or "lognormal"
};

/// One declarative run configuration: problem selection, algorithm choice,
/// optimizer parameters and experiment layout. Unknown keys are rejected.
struct RunConfig {
    std::string problem = "exp1";
    int dim = 0;  // 0 keeps each problem's default dimension
    std::string algorithm = "qml";  // "qml" or "q-baseline"
    std::vector<double> levels = {0.6, 0.95};
    long total_budget = 1000;
    int d0_size = 0;
    int r0 = 50;
    double c0 = 0.0;
    double rk_power = 2.1;
    int ei_search_budget = 0;
    int n_b = 10;
    uint64_t seed = 1;
    bool classical_ocba = false;
    long max_lower_level_budget = -1;
    bool calibrate_r0 = false;
    int fit_starts = 8;
    int refit_starts = 3;
    double penalty_lambda = -1.0;
    int penalty_grid = 512;
    int n_reps = 1;
    int jobs = 1;
    std::string out_dir = "out";
    int inject_fault_rep = -1;
    std::optional<CustomProblemSpec> custom;

    static RunConfig defaults() { return {}; }
    /// Parse and validate; throws ConfigError naming the offending key.
    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig from_file(const std::string& path);

    nlohmann::json to_json() const;
    /// FNV-1a hash of the canonical JSON form, for provenance stamps.
    std::string hash() const;

    LossProblem make_problem() const;
    /// Optimizer parameters; the baseline algorithm keeps only the
    /// objective (last) level.
    OptimizerConfig optimizer_config() const;
};

}  // namespace qml
