#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "qml/box.hpp"
#include "qml/rng.hpp"

namespace qml {

enum class NoiseFamily { kNormal, kLognormal };

/**
 * A stochastic loss: deterministic mean plus location-dependent noise.
 *
 * For the normal family a sample is mean(x) + scale(x)*Z; for the lognormal
 * family it is mean(x) + exp(scale(x)*Z), with Z standard normal. The scale
 * is the standard deviation (normal) or the log-standard-deviation
 * (lognormal), floored away from zero so every point has a proper
 * distribution.
 */
class LossProblem {
public:
    using ScalarFn = std::function<double(const Eigen::VectorXd&)>;

    LossProblem(std::string id, Box domain, ScalarFn mean_fn, ScalarFn noise_scale_fn,
                NoiseFamily family);

    /// Built-in problems: fig1, exp1, exp2, ackley_logn, rastrigin_logn,
    /// levy_logn. The lognormal test problems default to 5 dimensions and
    /// accept a dim override (e.g. 2 for desk-scale runs).
    static LossProblem builtin(const std::string& id, int dim = 0);

    /// Custom 1-D problem from mean/scale value tables on a uniform grid
    /// over [lo, hi], linearly interpolated.
    static LossProblem from_tables(double lo, double hi, const std::vector<double>& mean_values,
                                   const std::vector<double>& scale_values, NoiseFamily family);

    const std::string& id() const { return id_; }
    int dim() const { return domain_.dim(); }
    const Box& domain() const { return domain_; }
    NoiseFamily noise_family() const { return family_; }

    double mean(const Eigen::VectorXd& x) const { return mean_fn_(x); }
    double noise_scale(const Eigen::VectorXd& x) const;

    /// One loss sample given a standard normal draw.
    double sample_from_z(const Eigen::VectorXd& x, double z) const;

    /// n i.i.d. loss samples at x, consuming draws from the stream.
    /// Appending is additive: simulate(n1) then simulate(n2) on the same
    /// stream equals simulate(n1+n2) sample-for-sample.
    std::vector<double> simulate(const Eigen::VectorXd& x, int n, RngStream& stream) const;

    /// Exact alpha-quantile of the loss at x.
    double true_quantile(const Eigen::VectorXd& x, double alpha) const;

    /// Minimizer of the alpha-quantile surface: dense grid plus local
    /// polish in 1-D, multistart polish in higher dimensions.
    Eigen::VectorXd true_argmin(double alpha, int grid_points = 10000, int multistarts = 50) const;

private:
    std::string id_;
    Box domain_;
    ScalarFn mean_fn_;
    ScalarFn noise_scale_fn_;
    NoiseFamily family_;
};

}  // namespace qml
