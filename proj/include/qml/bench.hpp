#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qml/optimizer.hpp"

namespace qml {

/// Per-replication metrics.
struct MetricReport {
    uint64_t seed = 0;
    Eigen::VectorXd final_x;
    double final_y = 0.0;
    double final_v_true = 0.0;
    std::vector<double> g_curve;
    std::vector<long> eval_counts;  // cumulative simulator evaluations per iteration
    std::optional<long> s99;
    bool true_selection = false;
    double pred_error = 0.0;  // holdout RMSE of the initial model
    int iterations = 0;
    long total_spent = 0;
    bool degenerate_g = false;  // starting point already optimal
    bool crashed = false;
    std::string error;
    std::vector<std::pair<Eigen::VectorXd, long>> design_reps;  // final per-point totals

    nlohmann::json to_json() const;
    static MetricReport from_json(const nlohmann::json& j);
};

/// Gap-reduction curve G_k from per-iteration true objective values. The
/// denominator is v0 - v_star; a degenerate denominator yields all ones.
std::vector<double> g_curve_from_values(const std::vector<double>& v_true_rows, double v0,
                                        double v_star, bool* degenerate = nullptr);

/// First cumulative evaluation count at which G reaches 0.99, if any.
std::optional<long> s99(const std::vector<double>& g, const std::vector<long>& eval_counts);

/// Distance test against the true minimizer: per-coordinate differences are
/// scaled by the domain width and compared in Euclidean norm, strictly below
/// tol (0.035 reproduces the 1-D rule on a unit domain).
bool true_selection(const Eigen::VectorXd& final_x, const Eigen::VectorXd& argmin, const Box& domain,
                    double tol = 0.035);

/// RMSE of the model's level predictions against the exact quantile at LHS
/// holdout points (fixed holdout seed so algorithms see the same points).
double holdout_rmse(const CoKrigeModel& model, int model_level, const LossProblem& problem,
                    double alpha, int n_holdout = 1000, uint64_t seed = 0x401dU);

struct MacroOptions {
    int n_reps = 1;
    int jobs = 1;
    std::filesystem::path out_dir;  // empty: keep everything in memory
    int inject_fault_rep = -1;      // testing hook: that replication reports a crash
    std::string algorithm_label = "qml";
    std::string config_hash;
};

struct MacroSummary {
    int n_reps = 0;
    int completed = 0;
    double true_selection_freq = 0.0;
    std::optional<double> mean_s99;
    int s99_count = 0;
    double mean_pred_error = 0.0;
    double mean_final_v_true = 0.0;
    std::vector<MetricReport> reps;
    std::string config_hash;
    std::string problem_id;
    std::string algorithm;

    nlohmann::json to_json() const;
};

/// Pure fold of per-replication reports into the summary aggregates.
MacroSummary aggregate(const std::vector<MetricReport>& reps, const std::string& config_hash,
                       const std::string& problem_id, const std::string& algorithm);

/// Macro-replication experiment: independent seeds per replication, trace
/// CSV and final-model JSON per rep plus a JSON summary when out_dir is
/// set. A crashed replication is recorded, not fatal.
MacroSummary run_macro(const OptimizerConfig& base, const LossProblem& problem,
                       const MacroOptions& opts);

/// One trace CSV row in the documented column order.
void write_trace_row(std::ostream& os, const TraceRow& row);
void write_trace_header(std::ostream& os, const std::string& config_hash, uint64_t seed,
                        const std::string& problem_id, const std::string& algorithm);

/// Monte Carlo check of the sectioning estimators on standard normal
/// samples against the closed-form asymptotics.
struct EstimatorValidation {
    double var_ratio = 0.0;  // n * mean variance estimate / (alpha(1-alpha)/pdf^2) at 0.5
    double cov_ratio = 0.0;  // n * mean covariance estimate / gamma for (0.6, 0.95)
    double var_target = 0.0;
    double cov_target = 0.0;
    bool var_pass = false;
    bool cov_pass = false;
    bool low_confidence_flagged = false;
    int n_panels = 0;
    int n = 0;
    int n_b = 0;
};

EstimatorValidation validate_estimators(int n_panels = 500, int n = 10000, int n_b = 10,
                                        uint64_t seed = 0xE57u, double lo_level = 0.6,
                                        double hi_level = 0.95);

}  // namespace qml
