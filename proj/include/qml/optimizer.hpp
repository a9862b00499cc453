#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qml/cokrige.hpp"
#include "qml/problems.hpp"
#include "qml/quantile.hpp"

namespace qml {

/// Parameters of the sequential multi-level quantile optimizer.
struct OptimizerConfig {
    long total_budget = 1000;      // T, total simulation replications
    int d0_size = 0;               // initial design size; 0 -> max(6, 2d+2)
    int r0 = 50;                   // replications for a newly selected point
    std::vector<double> levels;    // strictly increasing quantile levels in (0,1)
    double c0 = 0.0;               // noise tolerance; 0 -> max level-1 noise var over D0
    double rk_power = 2.1;         // r_k = r0 + ceil((k-1)^rk_power)
    int ei_search_budget = 0;      // EI candidate count; 0 -> 200*d
    int n_b = 10;                  // sectioning batches per panel
    uint64_t seed = 1;
    bool classical_ocba = false;   // use n_i^2/var_i inside the best-point weight
    long max_lower_level_budget = -1;  // effort cap below the objective level; -1 = off
    bool calibrate_r0 = false;     // leave-one-out doubling of r0 before the run
    int fit_starts = 8;            // multistart count for the first fit of a level set
    int refit_starts = 3;          // multistart count when refitting the same level set
    double penalty_lambda = -1.0;  // <0 automatic, 0 disables the penalty
    int penalty_grid = 512;

    void validate(int dim) const;
    long rk(int k) const;
};

/// One design point with its raw-sample history and current panel.
struct DesignPoint {
    Eigen::VectorXd x;
    uint64_t point_index = 0;  // RNG substream lineage
    std::vector<double> samples;
    QuantilePanel panel;

    long n() const { return static_cast<long>(samples.size()); }
};

/// Per-iteration log row. v_true is filled by the benchmark layer.
struct TraceRow {
    int k = 0;
    Eigen::VectorXd x_next;
    std::vector<long> alloc;  // per design point, aligned with design order
    long alloc_total = 0;
    int h = 1;
    std::vector<double> pi_levels;
    long budget_iter = 0;  // B_k
    long remaining = 0;    // A after this iteration
    double c0 = 0.0;       // tolerance after this iteration's update
    Eigen::VectorXd xhat;
    double yhat = 0.0;
    double v_true = std::numeric_limits<double>::quiet_NaN();
    bool exploration_fallback = false;
    bool fit_skipped = false;
    bool deficit_shortfall = false;
};

struct RunResult {
    std::vector<TraceRow> rows;
    Eigen::VectorXd final_x;
    double final_y = 0.0;
    std::vector<DesignPoint> design;
    std::shared_ptr<const CoKrigeModel> initial_model;  // level-1 model after the initial design
    double initial_model_alpha = 0.0;
    std::shared_ptr<const CoKrigeModel> final_model;
    long total_spent = 0;
    double c0_final = 0.0;
    int h_final = 1;
    int r0_used = 0;  // after optional calibration
};

/// Expected improvement of a Gaussian predictive value against z_star.
double expected_improvement(double z_star, double mean, double s);

struct SearchResult {
    Eigen::VectorXd x;
    double ei = 0.0;
    double spatial_var = 0.0;
    bool exploration_fallback = false;  // every EI was negligible
};

/// Searching stage: EI argmax at the given model level over an LHS
/// candidate set plus local polish of the best candidates, using the
/// spatial-only predictive variance. Existing design points are never
/// returned (their spatial variance, hence EI, is zero).
SearchResult ei_search(const CoKrigeModel& model, int level, double z_star, const Box& domain,
                       const std::vector<Eigen::VectorXd>& existing, int candidates, uint64_t seed);

/// Iteration budget update: max of the replication deficit and the floored
/// geometric growth driven by noise-to-spatial variance, clipped to the
/// remaining budget.
long update_budget(long b_prev, long deficit, double max_noise_var, double spatial_var_new,
                   long remaining);

/// Budget split across design points by the variance/gap ratio rule around
/// the best point. Returns one count per point summing to `budget`
/// (largest-remainder rounding, ties to the lowest index).
std::vector<long> ocba_allocate(const Eigen::VectorXd& estimates, const Eigen::VectorXd& noise_vars,
                                long budget, bool classical = false);

struct LevelUpdate {
    std::vector<std::vector<int>> accept_sets;  // E_l: indices of accepted points per level
    int h = 1;                                  // 1-based current highest level
    std::vector<int> pi;                        // 1-based active levels, ascending
    bool e1_empty_flagged = false;
};

/// Accept-set / level bookkeeping: per-point maximum accepted level against
/// the noise tolerance, highest non-empty level, and the pruned active
/// subset (a level is kept only when no higher level has an identical
/// accept set). h never decreases below h_prev.
LevelUpdate update_levels(const std::vector<Eigen::VectorXd>& point_noise_diags, double c0,
                          int h_prev);

/// Adaptive noise-tolerance update; monotone non-decreasing.
double update_c0(double c0_prev, double eps_hat, long n_incumbent, long remaining, int n_design,
                 long b_k);

using RowCallback = std::function<void(TraceRow&)>;

/// Full sequential run: initial design, then searching / allocation /
/// modeling-update iterations until the budget is exhausted. A single
/// level yields the single-level baseline behaviour.
RunResult run(const OptimizerConfig& config, const LossProblem& problem,
              const RowCallback& on_row = nullptr);

/// Leave-one-out calibration utility: doubles r0 until the level-1 model on
/// the initial design has |standardized LOO residual| < 3 for 95% of
/// points; returns the calibrated r0.
int calibrate_r0(const OptimizerConfig& config, const LossProblem& problem, int max_doublings = 4);

}  // namespace qml
