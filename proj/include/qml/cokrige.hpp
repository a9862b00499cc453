#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qml/box.hpp"

namespace qml {

/// Raised when no hyperparameter/jitter combination yields a positive
/// definite covariance.
class FitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Model parameters of the m-level autoregressive co-kriging model.
struct Hyperparams {
    Eigen::VectorXd rho;                 // m-1 autoregressive scales
    std::vector<Eigen::VectorXd> theta;  // per level: d Gaussian-kernel sensitivities
    Eigen::VectorXd sigma2;              // m process variances

    int levels() const { return static_cast<int>(sigma2.size()); }
};

/// Box bounds for the hyperparameter search.
struct HyperBounds {
    Eigen::VectorXd theta_lo, theta_hi;    // per input dimension
    Eigen::VectorXd sigma2_lo, sigma2_hi;  // per level
    double rho_lo = 0.0;
    double rho_hi = 5.0;

    /// theta in [1e-3, 1e3] * squared domain width; sigma2 in
    /// [1e-6, 1e2] * sample variance of each level's estimates; rho in [0, 5].
    static HyperBounds defaults(const Box& domain, const std::vector<Eigen::VectorXd>& y);
};

/// Model inputs: a common design for every level, per-level point-estimate
/// vectors, and the per-point noise covariance blocks between levels.
struct ModelInputs {
    Eigen::MatrixXd design;                    // n x d
    std::vector<Eigen::VectorXd> y;            // m vectors of length n
    std::vector<Eigen::MatrixXd> point_noise;  // n matrices of size m x m; empty = noise-free
    Box domain;

    int levels() const { return static_cast<int>(y.size()); }
    int points() const { return static_cast<int>(design.rows()); }
    int dim() const { return static_cast<int>(design.cols()); }
    Eigen::VectorXd stacked_y() const;
    void validate() const;
};

/**
 * Assembled co-kriging model: block covariances, trend matrix, SPD
 * factorizations and the GLS trend coefficients. Immutable after
 * construction; prediction is safe concurrently.
 */
class CoKrigeModel {
public:
    struct Prediction {
        double mean;
        double var_full;     // uses the full covariance (spatial + noise)
        double var_spatial;  // uses the spatial covariance only
    };

    /// Builds all matrices and factorizations. Escalating diagonal jitter
    /// (1e-8..1e-4 of the mean diagonal) is applied only if plain
    /// factorization fails; throws FitError beyond the ladder.
    static CoKrigeModel assemble(const ModelInputs& inputs, const Hyperparams& hyper);

    Prediction predict(int level, const Eigen::VectorXd& x) const;
    double predict_mean(int level, const Eigen::VectorXd& x) const;
    /// Predictive means for many points at once; rows follow `points`,
    /// one column per level.
    Eigen::MatrixXd predict_means(const Eigen::MatrixXd& points) const;

    double loglik() const { return loglik_; }
    const Eigen::VectorXd& beta() const { return beta_; }
    const Hyperparams& hyper() const { return hyper_; }
    const ModelInputs& inputs() const { return inputs_; }
    int levels() const { return hyper_.levels(); }
    double jitter_r() const { return jitter_r_; }
    double jitter_rz() const { return jitter_rz_; }
    const Eigen::MatrixXd& r() const { return r_; }
    const Eigen::MatrixXd& r_z() const { return rz_; }
    const Eigen::MatrixXd& h_matrix() const { return h_matrix_; }

    /// Hyperparameters + design + estimates as JSON for post-hoc inspection.
    nlohmann::json to_json() const;

private:
    CoKrigeModel() = default;

    // Correlation vectors between x and the design under each level kernel.
    std::vector<Eigen::VectorXd> corr_vectors(const Eigen::VectorXd& x) const;
    Eigen::VectorXd stacked_t(int level, const std::vector<Eigen::VectorXd>& a) const;
    Eigen::VectorXd trend_h(int level) const;
    double prior_var(int level) const;

    ModelInputs inputs_;
    Hyperparams hyper_;
    std::vector<Eigen::MatrixXd> corr_;  // per-level design correlation A_l
    Eigen::MatrixXd r_, rz_;             // full and spatial covariance, as factorized
    Eigen::MatrixXd h_matrix_;           // (m n) x m trend matrix
    Eigen::LLT<Eigen::MatrixXd> llt_r_, llt_rz_;
    Eigen::MatrixXd rinv_h_, rzinv_h_;
    Eigen::LLT<Eigen::MatrixXd> llt_m_, llt_mz_;  // H' R^-1 H and H' Rz^-1 H
    Eigen::VectorXd beta_;
    Eigen::VectorXd w_;  // R^-1 (y - H beta)
    double loglik_ = 0.0;
    double jitter_r_ = 0.0, jitter_rz_ = 0.0;
};

/// Log-likelihood of the stacked estimates under the model with GLS trend;
/// -inf if the covariance cannot be factorized.
double loglik(const ModelInputs& inputs, const Hyperparams& hyper);

/// Per-level terms of the decomposed likelihood: term 1 is the single-level
/// likelihood of the first level; term j is the likelihood of the
/// autoregressive residual y_j - rho_{j-1} y_{j-1} under its own kernel plus
/// the first-order noise correction. With zero noise the terms sum to the
/// full log-likelihood exactly.
Eigen::VectorXd decomposed_loglik(const ModelInputs& inputs, const Hyperparams& hyper);

struct CrossingReport {
    double phi = 0.0;    // minimized gap between successive level curves
    double kappa = 0.0;  // |phi| when phi < 0, else 0
};

/// Minimum predictive gap between successive levels over an LHS grid plus
/// local polish from the 5 tightest grid points. Single-level models have
/// no gap; kappa is 0 by convention.
CrossingReport crossing_penalty(const CoKrigeModel& model, int grid_points = 512,
                                uint64_t seed = 0xAD17u);

struct FitOptions {
    double lambda = -1.0;         // <0 -> 1e3 * (1 + |log-likelihood at warm start|); 0 disables
    int starts = 8;               // warm start + perturbations
    int max_iter_per_param = 200;
    int penalty_grid = 512;       // grid for the penalty term inside the search
    int audit_grid = 512;         // grid for the post-fit non-crossing audit
    int lambda_escalations = 3;   // x10 escalations when the audit fails
    double nm_ftol_rel = 1e-8;    // simplex convergence tolerance
    uint64_t seed = 0x5eedu;
};

struct FitResult {
    Hyperparams hyper;
    double loglik = 0.0;
    double lambda_used = 0.0;
    double kappa_initial = 0.0;  // audit kappa of the first fit, before escalation
    double kappa_audit = 0.0;    // audit kappa of the returned fit
    int escalations = 0;
    bool crossing_flagged = false;  // audit still crossing after escalation
};

/// Penalized maximum-likelihood fit. Stage 1 maximizes each decomposed term
/// independently for a warm start; stage 2 minimizes -loglik + lambda*kappa
/// by bounded multistart Nelder-Mead. The returned fit is audited for
/// crossing; failures escalate lambda x10 and refit.
FitResult fit(const ModelInputs& inputs, const HyperBounds& bounds, const FitOptions& options = {});

}  // namespace qml
