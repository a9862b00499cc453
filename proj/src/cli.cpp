#include "qml/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "qml/bench.hpp"
#include "qml/config.hpp"

namespace qml {

namespace fs = std::filesystem;

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

const char* env_or_null(const char* name) { return std::getenv(name); }

}  // namespace

int cmd_optimize(const std::string& config_path, const CliOverrides& overrides, std::ostream& log) {
    RunConfig cfg;
    try {
        cfg = RunConfig::from_file(config_path);
    } catch (const ConfigError& e) {
        log << "config error: " << e.what() << "\n";
        return 1;
    }

    // Only the output directory and worker count may come from the
    // environment; everything else stays in the config file.
    if (const char* v = env_or_null("QML_OUT")) cfg.out_dir = v;
    if (const char* v = env_or_null("QML_JOBS")) cfg.jobs = std::max(1, std::atoi(v));
    if (overrides.out) cfg.out_dir = *overrides.out;
    if (overrides.seed) cfg.seed = *overrides.seed;
    if (overrides.reps) cfg.n_reps = *overrides.reps;
    if (overrides.jobs) cfg.jobs = *overrides.jobs;
    if (overrides.algorithm) cfg.algorithm = *overrides.algorithm;

    try {
        LossProblem problem = cfg.make_problem();
        OptimizerConfig oc = cfg.optimizer_config();
        oc.validate(problem.dim());

        MacroOptions mo;
        mo.n_reps = cfg.n_reps;
        mo.jobs = cfg.jobs;
        mo.out_dir = cfg.out_dir;
        mo.inject_fault_rep = cfg.inject_fault_rep;
        mo.algorithm_label = cfg.algorithm;
        mo.config_hash = cfg.hash();

        fs::create_directories(mo.out_dir);
        {
            std::ofstream cf(mo.out_dir / "config_resolved.json");
            nlohmann::json j = cfg.to_json();
            j["config_hash"] = mo.config_hash;
            cf << j.dump(2) << "\n";
        }

        MacroSummary summary = run_macro(oc, problem, mo);

        {
            // Timestamps live only in this sidecar so result files stay
            // byte-identical across reruns.
            std::ofstream meta(mo.out_dir / "meta.json");
            auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
            meta << nlohmann::json{{"written_at_unix", static_cast<long>(now)}}.dump(2) << "\n";
        }

        log << "completed " << summary.completed << "/" << summary.n_reps << " replications\n";
        log << "true_selection_freq=" << fmt_double(summary.true_selection_freq)
            << " mean_pred_error=" << fmt_double(summary.mean_pred_error);
        if (summary.mean_s99) log << " mean_s99=" << fmt_double(*summary.mean_s99);
        log << "\n";
        for (const auto& r : summary.reps) {
            if (r.crashed) log << "rep seed=" << r.seed << " crashed: " << r.error << "\n";
        }
        return summary.completed == summary.n_reps ? 0 : 2;
    } catch (const ConfigError& e) {
        log << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        log << "config error: " << e.what() << "\n";
        return 1;
    }
}

int cmd_validate_estimators(const std::string& config_path, std::ostream& log) {
    int n_panels = 500, n = 10000, n_b = 10;
    uint64_t seed = 0xE57u;
    double lo = 0.6, hi = 0.95;
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) {
            log << "config error: cannot open " << config_path << "\n";
            return 1;
        }
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::parse_error& e) {
            log << "config error: " << e.what() << "\n";
            return 1;
        }
        if (j.contains("n_panels")) n_panels = j["n_panels"].get<int>();
        if (j.contains("n")) n = j["n"].get<int>();
        if (j.contains("n_b")) n_b = j["n_b"].get<int>();
        if (j.contains("seed")) seed = j["seed"].get<uint64_t>();
        if (j.contains("lo_level")) lo = j["lo_level"].get<double>();
        if (j.contains("hi_level")) hi = j["hi_level"].get<double>();
    }
    EstimatorValidation v = validate_estimators(n_panels, n, n_b, seed, lo, hi);
    log << "variance   level=0.5        n*mean=" << fmt_double(v.var_ratio * v.var_target)
        << " target=" << fmt_double(v.var_target) << " ratio=" << fmt_double(v.var_ratio) << " "
        << (v.var_pass ? "PASS" : "FAIL") << "\n";
    log << "covariance levels=" << lo << "/" << hi << " n*mean=" << fmt_double(v.cov_ratio * v.cov_target)
        << " target=" << fmt_double(v.cov_target) << " ratio=" << fmt_double(v.cov_ratio) << " "
        << (v.cov_pass ? "PASS" : "FAIL") << "\n";
    if (v.low_confidence_flagged) {
        log << "note: some panels were flagged low-confidence (clamped batch order statistics)\n";
    }
    return v.var_pass && v.cov_pass ? 0 : 1;
}

namespace {

struct TraceData {
    std::vector<int> k;
    std::vector<double> v_true;
};

bool read_trace_csv(const fs::path& path, TraceData& out) {
    std::ifstream in(path);
    if (!in) return false;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line[0] == 'k') continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cols.push_back(cell);
        if (cols.size() < 10) continue;
        out.k.push_back(std::atoi(cols[0].c_str()));
        out.v_true.push_back(std::atof(cols[9].c_str()));
    }
    return !out.k.empty();
}

}  // namespace

int cmd_export_plotdata(const std::string& trace_dir, const std::string& out_dir, std::ostream& log) {
    fs::path dir(trace_dir);
    if (!fs::is_directory(dir)) {
        log << "error: not a directory: " << trace_dir << "\n";
        return 1;
    }
    std::vector<fs::path> traces;
    for (const auto& entry : fs::directory_iterator(dir)) {
        std::string name = entry.path().filename().string();
        if (name.rfind("trace_rep", 0) == 0 && name.size() > 4 &&
            name.substr(name.size() - 4) == ".csv") {
            traces.push_back(entry.path());
        }
    }
    std::sort(traces.begin(), traces.end());
    const fs::path summary_path = dir / "summary.json";
    if (traces.empty() && !fs::exists(summary_path)) {
        log << "error: no trace files or summary.json in " << trace_dir << "\n";
        return 1;
    }
    fs::path out = out_dir.empty() ? dir : fs::path(out_dir);
    fs::create_directories(out);

    // Averaged G curves from the summary reports.
    if (fs::exists(summary_path)) {
        std::ifstream sf(summary_path);
        nlohmann::json sj;
        sf >> sj;
        std::vector<std::vector<double>> curves;
        for (const auto& rj : sj.at("reps")) {
            if (rj.at("crashed").get<bool>()) continue;
            curves.push_back(rj.at("g_curve").get<std::vector<double>>());
        }
        size_t max_len = 0;
        for (const auto& c : curves) max_len = std::max(max_len, c.size());
        std::ofstream gf(out / "plot_g.csv");
        gf << "iteration,mean_g,n_reps\n";
        for (size_t i = 0; i < max_len; ++i) {
            double acc = 0.0;
            int cnt = 0;
            for (const auto& c : curves) {
                if (i < c.size()) {
                    acc += c[i];
                    ++cnt;
                }
            }
            gf << (i + 1) << ',' << fmt_double(cnt ? acc / cnt : 0.0) << ',' << cnt << "\n";
        }
        // Per-point replication totals for allocation histograms.
        std::ofstream af(out / "plot_alloc.csv");
        af << "rep,point_index,x,n\n";
        int rep = 0;
        for (const auto& rj : sj.at("reps")) {
            if (!rj.at("crashed").get<bool>()) {
                int pi = 0;
                for (const auto& dj : rj.at("design")) {
                    auto xs = dj.at("x").get<std::vector<double>>();
                    std::string coords;
                    for (size_t c = 0; c < xs.size(); ++c) {
                        if (c) coords += ';';
                        coords += fmt_double(xs[c]);
                    }
                    af << rep << ',' << pi << ',' << coords << ',' << dj.at("n").get<long>() << "\n";
                    ++pi;
                }
            }
            ++rep;
        }
    }

    // Best-so-far true-value curves averaged across the trace files.
    if (!traces.empty()) {
        std::vector<std::vector<double>> best;
        for (const auto& path : traces) {
            TraceData td;
            if (!read_trace_csv(path, td)) continue;
            std::vector<double> b(td.v_true.size());
            double cur = std::numeric_limits<double>::infinity();
            for (size_t i = 0; i < td.v_true.size(); ++i) {
                cur = std::min(cur, td.v_true[i]);
                b[i] = cur;
            }
            best.push_back(std::move(b));
        }
        size_t max_len = 0;
        for (const auto& b : best) max_len = std::max(max_len, b.size());
        std::ofstream bf(out / "plot_best.csv");
        bf << "iteration,mean_best_v_true,n_reps\n";
        for (size_t i = 0; i < max_len; ++i) {
            double acc = 0.0;
            int cnt = 0;
            for (const auto& b : best) {
                if (i < b.size()) {
                    acc += b[i];
                    ++cnt;
                }
            }
            bf << (i + 1) << ',' << fmt_double(cnt ? acc / cnt : 0.0) << ',' << cnt << "\n";
        }
    }
    log << "wrote plot data to " << out.string() << "\n";
    return 0;
}

int cmd_defaults(std::ostream& out) {
    out << RunConfig::defaults().to_json().dump(2) << "\n";
    return 0;
}

}  // namespace qml
