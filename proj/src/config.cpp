#include "qml/config.hpp"

#include <fstream>
#include <set>

namespace qml {

namespace {

template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& dst) {
    if (!j.contains(key)) return;
    try {
        dst = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string("config key '") + key + "' has the wrong type");
    }
}

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "problem",         "dim",       "algorithm",     "levels",
        "total_budget",    "d0_size",   "r0",            "c0",
        "rk_power",        "ei_search_budget",           "n_b",
        "seed",            "classical_ocba",             "max_lower_level_budget",
        "calibrate_r0",    "fit_starts", "refit_starts", "penalty_lambda",
        "penalty_grid",    "n_reps",    "jobs",          "out_dir",
        "inject_fault_rep", "custom_problem"};
    return keys;
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (known_keys().find(key) == known_keys().end()) {
            throw ConfigError("unknown config key '" + key + "'");
        }
    }
    RunConfig c;
    read_key(j, "problem", c.problem);
    read_key(j, "dim", c.dim);
    read_key(j, "algorithm", c.algorithm);
    read_key(j, "levels", c.levels);
    read_key(j, "total_budget", c.total_budget);
    read_key(j, "d0_size", c.d0_size);
    read_key(j, "r0", c.r0);
    read_key(j, "c0", c.c0);
    read_key(j, "rk_power", c.rk_power);
    read_key(j, "ei_search_budget", c.ei_search_budget);
    read_key(j, "n_b", c.n_b);
    read_key(j, "seed", c.seed);
    read_key(j, "classical_ocba", c.classical_ocba);
    read_key(j, "max_lower_level_budget", c.max_lower_level_budget);
    read_key(j, "calibrate_r0", c.calibrate_r0);
    read_key(j, "fit_starts", c.fit_starts);
    read_key(j, "refit_starts", c.refit_starts);
    read_key(j, "penalty_lambda", c.penalty_lambda);
    read_key(j, "penalty_grid", c.penalty_grid);
    read_key(j, "n_reps", c.n_reps);
    read_key(j, "jobs", c.jobs);
    read_key(j, "out_dir", c.out_dir);
    read_key(j, "inject_fault_rep", c.inject_fault_rep);
    if (j.contains("custom_problem")) {
        const auto& cj = j.at("custom_problem");
        CustomProblemSpec spec;
        read_key(cj, "lower", spec.lower);
        read_key(cj, "upper", spec.upper);
        read_key(cj, "mean_values", spec.mean_values);
        read_key(cj, "scale_values", spec.scale_values);
        read_key(cj, "noise_family", spec.noise_family);
        c.custom = spec;
    }

    if (c.algorithm != "qml" && c.algorithm != "q-baseline") {
        throw ConfigError("config key 'algorithm' must be \"qml\" or \"q-baseline\"");
    }
    if (c.levels.empty()) throw ConfigError("config key 'levels' must not be empty");
    double prev = 0.0;
    for (double a : c.levels) {
        if (!(a > prev && a < 1.0)) {
            throw ConfigError("config key 'levels' must be strictly increasing in (0,1)");
        }
        prev = a;
    }
    if (c.r0 < 1) throw ConfigError("config key 'r0' must be >= 1");
    if (c.n_b < 2) throw ConfigError("config key 'n_b' must be >= 2");
    if (c.total_budget < 1) throw ConfigError("config key 'total_budget' must be positive");
    if (c.n_reps < 1) throw ConfigError("config key 'n_reps' must be >= 1");
    if (c.jobs < 1) throw ConfigError("config key 'jobs' must be >= 1");
    if (c.problem == "custom" && !c.custom.has_value()) {
        throw ConfigError("config key 'custom_problem' required when problem is \"custom\"");
    }
    return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    return from_json(j);
}

nlohmann::json RunConfig::to_json() const {
    nlohmann::json j;
    j["problem"] = problem;
    j["dim"] = dim;
    j["algorithm"] = algorithm;
    j["levels"] = levels;
    j["total_budget"] = total_budget;
    j["d0_size"] = d0_size;
    j["r0"] = r0;
    j["c0"] = c0;
    j["rk_power"] = rk_power;
    j["ei_search_budget"] = ei_search_budget;
    j["n_b"] = n_b;
    j["seed"] = seed;
    j["classical_ocba"] = classical_ocba;
    j["max_lower_level_budget"] = max_lower_level_budget;
    j["calibrate_r0"] = calibrate_r0;
    j["fit_starts"] = fit_starts;
    j["refit_starts"] = refit_starts;
    j["penalty_lambda"] = penalty_lambda;
    j["penalty_grid"] = penalty_grid;
    j["n_reps"] = n_reps;
    j["jobs"] = jobs;
    j["out_dir"] = out_dir;
    j["inject_fault_rep"] = inject_fault_rep;
    if (custom.has_value()) {
        j["custom_problem"] = {{"lower", custom->lower},
                               {"upper", custom->upper},
                               {"mean_values", custom->mean_values},
                               {"scale_values", custom->scale_values},
                               {"noise_family", custom->noise_family}};
    }
    return j;
}

std::string RunConfig::hash() const {
    // Only inputs that affect results are hashed: where the files go and
    // how many workers run them do not.
    nlohmann::json j = to_json();
    j.erase("out_dir");
    j.erase("jobs");
    const std::string dump = j.dump();
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : dump) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

LossProblem RunConfig::make_problem() const {
    if (problem == "custom") {
        if (!custom.has_value()) throw ConfigError("custom problem block missing");
        NoiseFamily fam;
        if (custom->noise_family == "normal") {
            fam = NoiseFamily::kNormal;
        } else if (custom->noise_family == "lognormal") {
            fam = NoiseFamily::kLognormal;
        } else {
            throw ConfigError("config key 'noise_family' must be \"normal\" or \"lognormal\"");
        }
        try {
            return LossProblem::from_tables(custom->lower, custom->upper, custom->mean_values,
                                            custom->scale_values, fam);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("custom_problem: ") + e.what());
        }
    }
    try {
        return LossProblem::builtin(problem, dim);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config key 'problem': ") + e.what());
    }
}

OptimizerConfig RunConfig::optimizer_config() const {
    OptimizerConfig oc;
    oc.total_budget = total_budget;
    oc.d0_size = d0_size;
    oc.r0 = r0;
    oc.levels = algorithm == "q-baseline" ? std::vector<double>{levels.back()} : levels;
    oc.c0 = c0;
    oc.rk_power = rk_power;
    oc.ei_search_budget = ei_search_budget;
    oc.n_b = n_b;
    oc.seed = seed;
    oc.classical_ocba = classical_ocba;
    oc.max_lower_level_budget = max_lower_level_budget;
    oc.calibrate_r0 = calibrate_r0;
    oc.fit_starts = fit_starts;
    oc.refit_starts = refit_starts;
    oc.penalty_lambda = penalty_lambda;
    oc.penalty_grid = penalty_grid;
    return oc;
}

}  // namespace qml
