#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "qml/bench.hpp"
#include "qml/cli.hpp"
#include "qml/config.hpp"

using namespace qml;
namespace fs = std::filesystem;

namespace {

fs::path write_config(const nlohmann::json& j, const std::string& name) {
    fs::path p = fs::temp_directory_path() / name;
    std::ofstream out(p);
    out << j.dump(2);
    return p;
}

nlohmann::json small_exp1_config() {
    return {{"problem", "exp1"},    {"algorithm", "qml"},  {"levels", {0.6, 0.95}},
            {"total_budget", 450},  {"d0_size", 6},        {"r0", 50},
            {"seed", 3},            {"n_reps", 2},         {"fit_starts", 2},
            {"refit_starts", 2},    {"ei_search_budget", 60}, {"penalty_grid", 128}};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("defaults subcommand prints a parseable config") {
    std::ostringstream os;
    CHECK(cmd_defaults(os) == 0);
    auto j = nlohmann::json::parse(os.str());
    CHECK(j.contains("levels"));
    CHECK(j.contains("total_budget"));
    CHECK(j["algorithm"] == "qml");
    // The printed defaults round-trip through the validator.
    CHECK_NOTHROW(RunConfig::from_json(j));
}

TEST_CASE("config parsing rejects unknown keys and bad values by name") {
    CHECK_THROWS_WITH_AS(RunConfig::from_json({{"notakey", 1}}),
                         doctest::Contains("notakey"), ConfigError);
    CHECK_THROWS_WITH_AS(RunConfig::from_json({{"levels", {0.95, 0.6}}}),
                         doctest::Contains("levels"), ConfigError);
    CHECK_THROWS_WITH_AS(RunConfig::from_json({{"r0", 0}}), doctest::Contains("r0"), ConfigError);
    CHECK_THROWS_WITH_AS(RunConfig::from_json({{"algorithm", "other"}}),
                         doctest::Contains("algorithm"), ConfigError);
    CHECK_THROWS_WITH_AS(RunConfig::from_json({{"problem", "custom"}}),
                         doctest::Contains("custom_problem"), ConfigError);
}

TEST_CASE("config hash is stable and key-order independent") {
    auto a = RunConfig::from_json(small_exp1_config());
    auto j = small_exp1_config();
    j.erase("problem");
    j["problem"] = "exp1";
    auto b = RunConfig::from_json(j);
    CHECK(a.hash() == b.hash());
    auto c = a;
    c.seed = 4;
    CHECK(a.hash() != c.hash());
}

TEST_CASE("optimize subcommand: happy path, overrides, idempotency") {
    fs::path out_a = fs::temp_directory_path() / "qml_cli_a";
    fs::path out_b = fs::temp_directory_path() / "qml_cli_b";
    fs::remove_all(out_a);
    fs::remove_all(out_b);

    auto cfg_path = write_config(small_exp1_config(), "qml_cli_cfg.json");
    CliOverrides ov;
    ov.out = out_a.string();
    std::ostringstream log;
    CHECK(cmd_optimize(cfg_path.string(), ov, log) == 0);
    CHECK(fs::exists(out_a / "trace_rep0000.csv"));
    CHECK(fs::exists(out_a / "trace_rep0001.csv"));
    CHECK(fs::exists(out_a / "summary.json"));
    CHECK(fs::exists(out_a / "config_resolved.json"));
    CHECK(fs::exists(out_a / "meta.json"));

    ov.out = out_b.string();
    std::ostringstream log2;
    CHECK(cmd_optimize(cfg_path.string(), ov, log2) == 0);
    // Identical inputs and seed: outputs identical apart from the sidecar.
    CHECK(slurp(out_a / "summary.json") == slurp(out_b / "summary.json"));
    CHECK(slurp(out_a / "trace_rep0001.csv") == slurp(out_b / "trace_rep0001.csv"));

    // The baseline override runs on the objective level only.
    fs::path out_c = fs::temp_directory_path() / "qml_cli_c";
    fs::remove_all(out_c);
    CliOverrides ov2;
    ov2.out = out_c.string();
    ov2.algorithm = "q-baseline";
    ov2.reps = 1;
    std::ostringstream log3;
    CHECK(cmd_optimize(cfg_path.string(), ov2, log3) == 0);
    auto summary = nlohmann::json::parse(slurp(out_c / "summary.json"));
    CHECK(summary["algorithm"] == "q-baseline");

    fs::remove_all(out_a);
    fs::remove_all(out_b);
    fs::remove_all(out_c);
}

TEST_CASE("optimize subcommand: config errors exit 1 with the offending key") {
    auto bad = small_exp1_config();
    bad["levels"] = {0.95, 0.6};
    auto cfg_path = write_config(bad, "qml_cli_bad.json");
    std::ostringstream log;
    CHECK(cmd_optimize(cfg_path.string(), {}, log) == 1);
    CHECK(log.str().find("levels") != std::string::npos);

    std::ostringstream log2;
    CHECK(cmd_optimize("/nonexistent/path.json", {}, log2) == 1);
}

TEST_CASE("optimize subcommand: injected fault exits 2 and reports the partial count") {
    auto j = small_exp1_config();
    j["n_reps"] = 3;
    j["total_budget"] = 300;
    j["inject_fault_rep"] = 1;
    auto cfg_path = write_config(j, "qml_cli_fault.json");
    fs::path out = fs::temp_directory_path() / "qml_cli_fault";
    fs::remove_all(out);
    CliOverrides ov;
    ov.out = out.string();
    std::ostringstream log;
    CHECK(cmd_optimize(cfg_path.string(), ov, log) == 2);
    CHECK(log.str().find("2/3") != std::string::npos);
    fs::remove_all(out);
}

TEST_CASE("validate-estimators subcommand") {
    auto cfg_path = write_config({{"n_panels", 150}, {"n", 10000}, {"seed", 99}},
                                 "qml_cli_est.json");
    std::ostringstream log;
    CHECK(cmd_validate_estimators(cfg_path.string(), log) == 0);
    CHECK(log.str().find("PASS") != std::string::npos);

    // Degenerate batching: non-fatal, flagged.
    auto tiny_path = write_config({{"n_panels", 10}, {"n", 3}, {"n_b", 2}}, "qml_cli_tiny.json");
    std::ostringstream log2;
    int rc = cmd_validate_estimators(tiny_path.string(), log2);
    CHECK((rc == 0 || rc == 1));
    CHECK(log2.str().find("low-confidence") != std::string::npos);
}

TEST_CASE("export-plotdata aggregates curves") {
    fs::path dir = fs::temp_directory_path() / "qml_cli_plot";
    fs::remove_all(dir);
    fs::create_directories(dir);

    // Two synthetic reps with known curves: the export is the elementwise mean.
    MetricReport a, b;
    a.final_x = Eigen::VectorXd::Constant(1, 0.2);
    b.final_x = Eigen::VectorXd::Constant(1, 0.3);
    a.g_curve = {0.0, 0.5, 1.0};
    b.g_curve = {0.2, 0.7};
    a.eval_counts = {100, 200, 300};
    b.eval_counts = {100, 200};
    auto summary = aggregate({a, b}, "hash", "exp1", "qml");
    {
        std::ofstream sf(dir / "summary.json");
        sf << summary.to_json().dump(2);
    }
    std::ostringstream log;
    CHECK(cmd_export_plotdata(dir.string(), "", log) == 0);
    std::string g = slurp(dir / "plot_g.csv");
    CHECK(g.find("1,0.1,2") != std::string::npos);   // mean(0, 0.2)
    CHECK(g.find("2,0.6,2") != std::string::npos);   // mean(0.5, 0.7)
    CHECK(g.find("3,1,1") != std::string::npos);     // single surviving rep

    // Empty directory: exit 1.
    fs::path empty = fs::temp_directory_path() / "qml_cli_empty";
    fs::remove_all(empty);
    fs::create_directories(empty);
    std::ostringstream log2;
    CHECK(cmd_export_plotdata(empty.string(), "", log2) == 1);

    fs::remove_all(dir);
    fs::remove_all(empty);
}
