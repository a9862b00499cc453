#include "qml/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <thread>

#include "qml/lhs.hpp"
#include "qml/math.hpp"

namespace qml {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

std::string join_coords(const Eigen::VectorXd& x) {
    std::string s;
    for (int i = 0; i < x.size(); ++i) {
        if (i) s += ';';
        s += fmt_double(x(i));
    }
    return s;
}

std::vector<double> json_doubles(const nlohmann::json& j) {
    return j.get<std::vector<double>>();
}

Eigen::VectorXd json_vector(const nlohmann::json& j) {
    auto v = json_doubles(j);
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::vector<double> g_curve_from_values(const std::vector<double>& v_true_rows, double v0,
                                        double v_star, bool* degenerate) {
    const double denom = v0 - v_star;
    std::vector<double> g;
    g.reserve(v_true_rows.size());
    bool degen = !(denom > 1e-12);
    if (degenerate) *degenerate = degen;
    for (double v : v_true_rows) {
        g.push_back(degen ? 1.0 : (v0 - v) / denom);
    }
    return g;
}

std::optional<long> s99(const std::vector<double>& g, const std::vector<long>& eval_counts) {
    const size_t n = std::min(g.size(), eval_counts.size());
    for (size_t i = 0; i < n; ++i) {
        if (g[i] >= 0.99) return eval_counts[i];
    }
    return std::nullopt;
}

bool true_selection(const Eigen::VectorXd& final_x, const Eigen::VectorXd& argmin, const Box& domain,
                    double tol) {
    double acc = 0.0;
    for (int j = 0; j < domain.dim(); ++j) {
        double dj = (final_x(j) - argmin(j)) / domain.width(j);
        acc += dj * dj;
    }
    return std::sqrt(acc) < tol;
}

double holdout_rmse(const CoKrigeModel& model, int model_level, const LossProblem& problem,
                    double alpha, int n_holdout, uint64_t seed) {
    const Box& box = problem.domain();
    Eigen::MatrixXd pts = scale_to_box(latin_hypercube(n_holdout, box.dim(), seed), box.lower, box.upper);
    Eigen::MatrixXd means = model.predict_means(pts);
    double acc = 0.0;
    for (int i = 0; i < n_holdout; ++i) {
        double err = means(i, model_level - 1) - problem.true_quantile(pts.row(i).transpose(), alpha);
        acc += err * err;
    }
    return std::sqrt(acc / n_holdout);
}

nlohmann::json MetricReport::to_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["final_x"] = std::vector<double>(final_x.begin(), final_x.end());
    j["final_y"] = final_y;
    j["final_v_true"] = final_v_true;
    j["g_curve"] = g_curve;
    j["eval_counts"] = eval_counts;
    if (s99.has_value()) {
        j["s99"] = *s99;
    } else {
        j["s99"] = nullptr;
    }
    j["true_selection"] = true_selection;
    j["pred_error"] = pred_error;
    j["iterations"] = iterations;
    j["total_spent"] = total_spent;
    j["degenerate_g"] = degenerate_g;
    j["crashed"] = crashed;
    j["error"] = error;
    nlohmann::json design = nlohmann::json::array();
    for (const auto& [x, n] : design_reps) {
        design.push_back({{"x", std::vector<double>(x.begin(), x.end())}, {"n", n}});
    }
    j["design"] = design;
    return j;
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
    MetricReport r;
    r.seed = j.at("seed").get<uint64_t>();
    r.final_x = json_vector(j.at("final_x"));
    r.final_y = j.at("final_y").get<double>();
    r.final_v_true = j.at("final_v_true").get<double>();
    r.g_curve = j.at("g_curve").get<std::vector<double>>();
    r.eval_counts = j.at("eval_counts").get<std::vector<long>>();
    if (!j.at("s99").is_null()) r.s99 = j.at("s99").get<long>();
    r.true_selection = j.at("true_selection").get<bool>();
    r.pred_error = j.at("pred_error").get<double>();
    r.iterations = j.at("iterations").get<int>();
    r.total_spent = j.at("total_spent").get<long>();
    r.degenerate_g = j.at("degenerate_g").get<bool>();
    r.crashed = j.at("crashed").get<bool>();
    r.error = j.at("error").get<std::string>();
    for (const auto& dj : j.at("design")) {
        r.design_reps.emplace_back(json_vector(dj.at("x")), dj.at("n").get<long>());
    }
    return r;
}

MacroSummary aggregate(const std::vector<MetricReport>& reps, const std::string& config_hash,
                       const std::string& problem_id, const std::string& algorithm) {
    MacroSummary s;
    s.n_reps = static_cast<int>(reps.size());
    s.config_hash = config_hash;
    s.problem_id = problem_id;
    s.algorithm = algorithm;
    s.reps = reps;
    double s99_acc = 0.0, pred_acc = 0.0, vtrue_acc = 0.0;
    int selected = 0;
    for (const auto& r : reps) {
        if (r.crashed) continue;
        ++s.completed;
        if (r.true_selection) ++selected;
        if (r.s99.has_value()) {
            ++s.s99_count;
            s99_acc += static_cast<double>(*r.s99);
        }
        pred_acc += r.pred_error;
        vtrue_acc += r.final_v_true;
    }
    if (s.completed > 0) {
        s.true_selection_freq = static_cast<double>(selected) / s.completed;
        s.mean_pred_error = pred_acc / s.completed;
        s.mean_final_v_true = vtrue_acc / s.completed;
    }
    if (s.s99_count > 0) s.mean_s99 = s99_acc / s.s99_count;
    return s;
}

nlohmann::json MacroSummary::to_json() const {
    nlohmann::json j;
    j["schema"] = "v1";
    j["config_hash"] = config_hash;
    j["problem"] = problem_id;
    j["algorithm"] = algorithm;
    j["n_reps"] = n_reps;
    j["completed"] = completed;
    j["true_selection_freq"] = true_selection_freq;
    if (mean_s99.has_value()) {
        j["mean_s99"] = *mean_s99;
    } else {
        j["mean_s99"] = nullptr;
    }
    j["s99_count"] = s99_count;
    j["mean_pred_error"] = mean_pred_error;
    j["mean_final_v_true"] = mean_final_v_true;
    nlohmann::json reps_json = nlohmann::json::array();
    for (const auto& r : reps) reps_json.push_back(r.to_json());
    j["reps"] = reps_json;
    return j;
}

void write_trace_header(std::ostream& os, const std::string& config_hash, uint64_t seed,
                        const std::string& problem_id, const std::string& algorithm) {
    os << "# schema=trace-v1 config_hash=" << config_hash << " seed=" << seed
       << " problem=" << problem_id << " algorithm=" << algorithm << "\n";
    os << "k,x_next,alloc_total,h,pi,B,A,xhat,y_hat,v_true\n";
}

void write_trace_row(std::ostream& os, const TraceRow& row) {
    std::string pi;
    for (size_t i = 0; i < row.pi_levels.size(); ++i) {
        if (i) pi += ';';
        pi += fmt_double(row.pi_levels[i]);
    }
    os << row.k << ',' << join_coords(row.x_next) << ',' << row.alloc_total << ',' << row.h << ','
       << pi << ',' << row.budget_iter << ',' << row.remaining << ',' << join_coords(row.xhat) << ','
       << fmt_double(row.yhat) << ',' << fmt_double(row.v_true) << "\n";
}

namespace {

MetricReport run_one_rep(const OptimizerConfig& base, const LossProblem& problem,
                         const MacroOptions& opts, int rep, const Eigen::VectorXd& argmin,
                         double v_star) {
    MetricReport rep_report;
    OptimizerConfig cfg = base;
    cfg.seed = derive_seed(base.seed, static_cast<uint64_t>(rep));
    rep_report.seed = cfg.seed;
    const double alpha_m = cfg.levels.back();

    std::ofstream trace;
    if (!opts.out_dir.empty()) {
        char name[48];
        std::snprintf(name, sizeof(name), "trace_rep%04d.csv", rep);
        trace.open(opts.out_dir / name);
        write_trace_header(trace, opts.config_hash, cfg.seed, problem.id(), opts.algorithm_label);
    }

    try {
        if (rep == opts.inject_fault_rep) {
            throw std::runtime_error("injected fault for testing");
        }
        std::vector<double> v_rows;
        std::vector<long> evals;
        long cumulative = 0;
        RunResult res = run(cfg, problem, [&](TraceRow& row) {
            row.v_true = problem.true_quantile(row.xhat, alpha_m);
            v_rows.push_back(row.v_true);
            cumulative += row.alloc_total;
            evals.push_back(cumulative);
            if (trace.is_open()) write_trace_row(trace, row);
        });
        // Cumulative counts include the initial design.
        const long initial = res.total_spent - cumulative;
        for (auto& e : evals) e += initial;

        rep_report.final_x = res.final_x;
        rep_report.final_y = res.final_y;
        rep_report.final_v_true = problem.true_quantile(res.final_x, alpha_m);
        rep_report.iterations = static_cast<int>(res.rows.size());
        rep_report.total_spent = res.total_spent;
        rep_report.eval_counts = evals;

        const int d0 = static_cast<int>(res.design.size()) - static_cast<int>(res.rows.size());
        double v0 = std::numeric_limits<double>::infinity();
        for (int i = 0; i < d0; ++i) {
            v0 = std::min(v0, problem.true_quantile(res.design[static_cast<size_t>(i)].x, alpha_m));
        }
        rep_report.g_curve = g_curve_from_values(v_rows, v0, v_star, &rep_report.degenerate_g);
        rep_report.s99 = s99(rep_report.g_curve, rep_report.eval_counts);
        rep_report.true_selection = true_selection(res.final_x, argmin, problem.domain());
        if (res.initial_model) {
            rep_report.pred_error = holdout_rmse(*res.initial_model, 1, problem, res.initial_model_alpha);
        }
        for (const auto& p : res.design) rep_report.design_reps.emplace_back(p.x, p.n());

        if (!opts.out_dir.empty() && res.final_model) {
            char name[48];
            std::snprintf(name, sizeof(name), "model_rep%04d.json", rep);
            std::ofstream mf(opts.out_dir / name);
            mf << res.final_model->to_json().dump(2) << "\n";
        }
    } catch (const std::exception& e) {
        rep_report.crashed = true;
        rep_report.error = e.what();
    }
    return rep_report;
}

}  // namespace

MacroSummary run_macro(const OptimizerConfig& base, const LossProblem& problem,
                       const MacroOptions& opts) {
    if (opts.n_reps < 1) throw std::invalid_argument("run_macro: n_reps must be >= 1");
    if (!opts.out_dir.empty()) std::filesystem::create_directories(opts.out_dir);

    const double alpha_m = base.levels.back();
    Eigen::VectorXd argmin = problem.true_argmin(alpha_m);
    double v_star = problem.true_quantile(argmin, alpha_m);

    std::vector<MetricReport> reports(static_cast<size_t>(opts.n_reps));
    const int jobs = std::max(1, opts.jobs);
    if (jobs == 1) {
        for (int r = 0; r < opts.n_reps; ++r) {
            reports[static_cast<size_t>(r)] = run_one_rep(base, problem, opts, r, argmin, v_star);
        }
    } else {
        std::atomic<int> next{0};
        auto worker = [&]() {
            for (int r = next.fetch_add(1); r < opts.n_reps; r = next.fetch_add(1)) {
                reports[static_cast<size_t>(r)] = run_one_rep(base, problem, opts, r, argmin, v_star);
            }
        };
        std::vector<std::thread> pool;
        for (int t = 0; t < std::min(jobs, opts.n_reps); ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    MacroSummary summary = aggregate(reports, opts.config_hash, problem.id(), opts.algorithm_label);
    if (!opts.out_dir.empty()) {
        std::ofstream sf(opts.out_dir / "summary.json");
        sf << summary.to_json().dump(2) << "\n";
    }
    return summary;
}

EstimatorValidation validate_estimators(int n_panels, int n, int n_b, uint64_t seed, double lo_level,
                                        double hi_level) {
    EstimatorValidation out;
    out.n_panels = n_panels;
    out.n = n;
    out.n_b = n_b;
    const std::vector<double> levels = {0.5, lo_level, hi_level};
    double var_acc = 0.0, cov_acc = 0.0;
    std::vector<double> samples(static_cast<size_t>(n));
    for (int p = 0; p < n_panels; ++p) {
        RngStream stream(seed, static_cast<uint64_t>(p));
        for (int i = 0; i < n; ++i) samples[static_cast<size_t>(i)] = stream.next_normal();
        QuantilePanel panel = sectioning_panel(samples, levels, n_b);
        var_acc += panel.noise_cov(0, 0);
        cov_acc += panel.noise_cov(1, 2);
        out.low_confidence_flagged = out.low_confidence_flagged || panel.low_confidence;
    }
    out.var_target = 0.25 / (norm_pdf(0.0) * norm_pdf(0.0));
    out.cov_target = lo_level * (1.0 - hi_level) /
                     (norm_pdf(norm_ppf(lo_level)) * norm_pdf(norm_ppf(hi_level)));
    out.var_ratio = n * var_acc / n_panels / out.var_target;
    out.cov_ratio = n * cov_acc / n_panels / out.cov_target;
    out.var_pass = std::abs(out.var_ratio - 1.0) <= 0.10;
    out.cov_pass = std::abs(out.cov_ratio - 1.0) <= 0.15;
    return out;
}

}  // namespace qml
