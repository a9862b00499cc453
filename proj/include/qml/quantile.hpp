#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

namespace qml {

/**
 * Per-point quantile panel: order-statistic point estimates at all levels
 * plus the sectioning estimate of the noise covariance between levels.
 *
 * noise_cov is a scaled Gram matrix of batch deviations, so it is
 * symmetric positive semidefinite by construction.
 */
struct QuantilePanel {
    std::vector<double> levels;
    Eigen::VectorXd point_estimates;  // one per level, non-decreasing
    Eigen::MatrixXd noise_cov;        // levels x levels
    int n_used = 0;                   // total samples behind the point estimates
    int n_b = 0;                      // batch count
    int n_c = 0;                      // batch size
    bool low_confidence = false;      // some batch order-statistic index clamped
};

/// The floor(alpha*n)-th order statistic (1-based), index clamped to [1, n].
double empirical_quantile(std::span<const double> samples, double alpha);

/// Sectioning panel: full-sample point estimates per level and the batch
/// deviation covariance between every level pair. Remainder samples
/// (n mod n_b) enter only the full-sample estimates.
QuantilePanel sectioning_panel(std::span<const double> samples, const std::vector<double>& levels,
                               int n_b);

}  // namespace qml
