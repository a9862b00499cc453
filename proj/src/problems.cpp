#include "qml/problems.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "qml/lhs.hpp"
#include "qml/math.hpp"
#include "qml/nelder_mead.hpp"

namespace qml {

namespace {

constexpr double kScaleFloor = 1e-9;

double ackley(const Eigen::VectorXd& x) {
    const double d = static_cast<double>(x.size());
    double sq = x.squaredNorm() / d;
    double cs = 0.0;
    for (int i = 0; i < x.size(); ++i) cs += std::cos(2.0 * std::numbers::pi * x(i));
    return -20.0 * std::exp(-0.2 * std::sqrt(sq)) - std::exp(cs / d) + 20.0 + std::exp(1.0);
}

double rastrigin(const Eigen::VectorXd& x) {
    double s = 10.0 * static_cast<double>(x.size());
    for (int i = 0; i < x.size(); ++i) {
        s += x(i) * x(i) - 10.0 * std::cos(2.0 * std::numbers::pi * x(i));
    }
    return s;
}

double levy(const Eigen::VectorXd& x) {
    const double pi = std::numbers::pi;
    auto w = [&](int i) { return 1.0 + (x(i) - 1.0) / 4.0; };
    const int d = static_cast<int>(x.size());
    double s = std::pow(std::sin(pi * w(0)), 2);
    for (int i = 0; i < d - 1; ++i) {
        double wi = w(i);
        s += (wi - 1.0) * (wi - 1.0) * (1.0 + 10.0 * std::pow(std::sin(pi * wi + 1.0), 2));
    }
    double wd = w(d - 1);
    s += (wd - 1.0) * (wd - 1.0) * (1.0 + std::pow(std::sin(2.0 * pi * wd), 2));
    return s;
}

// Shared 1-D mean of the two illustrating experiments.
double wiggly_mean(double x) {
    return 5.0 * (0.2 * (x - 0.02) + 1.0) * std::cos(13.0 * (x - 0.02));
}

Box box1d(double lo, double hi) {
    Box b;
    b.lower = Eigen::VectorXd::Constant(1, lo);
    b.upper = Eigen::VectorXd::Constant(1, hi);
    return b;
}

Box cube(int d, double lo, double hi) {
    Box b;
    b.lower = Eigen::VectorXd::Constant(d, lo);
    b.upper = Eigen::VectorXd::Constant(d, hi);
    return b;
}

}  // namespace

LossProblem::LossProblem(std::string id, Box domain, ScalarFn mean_fn, ScalarFn noise_scale_fn,
                         NoiseFamily family)
    : id_(std::move(id)),
      domain_(std::move(domain)),
      mean_fn_(std::move(mean_fn)),
      noise_scale_fn_(std::move(noise_scale_fn)),
      family_(family) {
    for (int j = 0; j < domain_.dim(); ++j) {
        if (!(domain_.lower(j) < domain_.upper(j))) {
            throw std::invalid_argument("LossProblem: domain lower must be < upper per coordinate");
        }
    }
}

double LossProblem::noise_scale(const Eigen::VectorXd& x) const {
    return std::max(noise_scale_fn_(x), kScaleFloor);
}

double LossProblem::sample_from_z(const Eigen::VectorXd& x, double z) const {
    double s = noise_scale(x);
    if (family_ == NoiseFamily::kNormal) return mean_fn_(x) + s * z;
    return mean_fn_(x) + std::exp(s * z);
}

std::vector<double> LossProblem::simulate(const Eigen::VectorXd& x, int n, RngStream& stream) const {
    if (!domain_.contains(x)) throw std::domain_error("simulate: x outside problem domain");
    if (n < 1) throw std::invalid_argument("simulate: replication count must be >= 1");
    std::vector<double> out(static_cast<size_t>(n));
    const double m = mean_fn_(x);
    const double s = noise_scale(x);
    if (family_ == NoiseFamily::kNormal) {
        for (int i = 0; i < n; ++i) out[static_cast<size_t>(i)] = m + s * stream.next_normal();
    } else {
        for (int i = 0; i < n; ++i) out[static_cast<size_t>(i)] = m + std::exp(s * stream.next_normal());
    }
    return out;
}

double LossProblem::true_quantile(const Eigen::VectorXd& x, double alpha) const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("true_quantile: alpha must be in (0,1)");
    if (!domain_.contains(x)) throw std::domain_error("true_quantile: x outside problem domain");
    double z = norm_ppf(alpha);
    double s = noise_scale(x);
    if (family_ == NoiseFamily::kNormal) return mean_fn_(x) + s * z;
    return mean_fn_(x) + std::exp(s * z);
}

Eigen::VectorXd LossProblem::true_argmin(double alpha, int grid_points, int multistarts) const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("true_argmin: alpha must be in (0,1)");
    auto objective = [&](const Eigen::VectorXd& x) { return true_quantile(x, alpha); };
    NelderMeadOptions nm;
    nm.max_evals = 400 * dim();

    if (dim() == 1) {
        double lo = domain_.lower(0), hi = domain_.upper(0);
        double best_x = lo, best_f = std::numeric_limits<double>::infinity();
        for (int i = 0; i < grid_points; ++i) {
            double x = lo + (hi - lo) * (static_cast<double>(i) + 0.5) / grid_points;
            Eigen::VectorXd v = Eigen::VectorXd::Constant(1, x);
            double f = objective(v);
            if (f < best_f) {
                best_f = f;
                best_x = x;
            }
        }
        auto res = nelder_mead_minimize(objective, Eigen::VectorXd::Constant(1, best_x),
                                        domain_.lower, domain_.upper, nm);
        return res.f < best_f ? res.x : Eigen::VectorXd::Constant(1, best_x);
    }

    // Multistart polish: LHS starts plus the usual attractors of the
    // built-in test functions (origin, ones, center).
    Eigen::MatrixXd starts = scale_to_box(latin_hypercube(multistarts, dim(), 0xa59f17u),
                                          domain_.lower, domain_.upper);
    std::vector<Eigen::VectorXd> extra = {Eigen::VectorXd::Zero(dim()),
                                          Eigen::VectorXd::Ones(dim()), domain_.center()};
    Eigen::VectorXd best;
    double best_f = std::numeric_limits<double>::infinity();
    auto try_start = [&](const Eigen::VectorXd& s) {
        if (!domain_.contains(s)) return;
        auto res = nelder_mead_minimize(objective, s, domain_.lower, domain_.upper, nm);
        if (res.f < best_f) {
            best_f = res.f;
            best = res.x;
        }
    };
    for (const auto& s : extra) try_start(s);
    for (int i = 0; i < starts.rows(); ++i) try_start(starts.row(i).transpose());
    return best;
}

LossProblem LossProblem::builtin(const std::string& id, int dim) {
    auto x0 = [](const Eigen::VectorXd& x) { return x(0); };
    if (id == "fig1") {
        // Domain bounds are not stated for this illustration; [0, 2] covers
        // the plotted range.
        return LossProblem(
            "fig1", box1d(0.0, 2.0),
            [](const Eigen::VectorXd& x) { return std::sin(2.5 * x(0)) * std::sin(1.5 * x(0)); },
            [x0](const Eigen::VectorXd& x) {
                double t = 1.0 - std::sin(2.5 * x0(x));
                return std::sqrt(0.01 + 0.25 * t * t);
            },
            NoiseFamily::kNormal);
    }
    if (id == "exp1") {
        return LossProblem(
            "exp1", box1d(0.0, 1.0),
            [x0](const Eigen::VectorXd& x) { return wiggly_mean(x0(x)); },
            [x0](const Eigen::VectorXd& x) { return std::sqrt(5.0 * x0(x)); },
            NoiseFamily::kNormal);
    }
    if (id == "exp2") {
        return LossProblem(
            "exp2", box1d(0.0, 1.0),
            [x0](const Eigen::VectorXd& x) { return wiggly_mean(x0(x)); },
            [x0](const Eigen::VectorXd& x) {
                return std::sqrt(10.0 * (2.0 + std::sin(10.0 * std::numbers::pi * x0(x) - 0.5)));
            },
            NoiseFamily::kNormal);
    }

    int d = dim > 0 ? dim : 5;
    auto shifted_scale = [](const Eigen::VectorXd& x) {
        return 1.6 + 0.01 * (x.array() - 1.0).square().sum();
    };
    auto centered_scale = [](const Eigen::VectorXd& x) { return 1.6 + 0.01 * x.squaredNorm(); };
    if (id == "ackley_logn") {
        return LossProblem("ackley_logn", cube(d, -10.0, 10.0), ackley, shifted_scale,
                           NoiseFamily::kLognormal);
    }
    if (id == "rastrigin_logn") {
        return LossProblem("rastrigin_logn", cube(d, -10.0, 10.0), rastrigin, shifted_scale,
                           NoiseFamily::kLognormal);
    }
    if (id == "levy_logn") {
        return LossProblem("levy_logn", cube(d, -10.0, 10.0), levy, centered_scale,
                           NoiseFamily::kLognormal);
    }
    throw std::invalid_argument("unknown problem id: " + id);
}

LossProblem LossProblem::from_tables(double lo, double hi, const std::vector<double>& mean_values,
                                     const std::vector<double>& scale_values, NoiseFamily family) {
    if (mean_values.size() < 2 || scale_values.size() < 2) {
        throw std::invalid_argument("custom problem: value tables need at least 2 entries");
    }
    for (double s : scale_values) {
        if (!(s > 0.0)) throw std::invalid_argument("custom problem: noise scale values must be positive");
    }
    auto interp = [lo, hi](const std::vector<double>& table) {
        return [lo, hi, table](const Eigen::VectorXd& x) {
            double t = (x(0) - lo) / (hi - lo) * static_cast<double>(table.size() - 1);
            t = std::clamp(t, 0.0, static_cast<double>(table.size() - 1));
            int i = std::min(static_cast<int>(t), static_cast<int>(table.size()) - 2);
            double w = t - i;
            return (1.0 - w) * table[static_cast<size_t>(i)] + w * table[static_cast<size_t>(i) + 1];
        };
    };
    return LossProblem("custom", box1d(lo, hi), interp(mean_values), interp(scale_values), family);
}

}  // namespace qml
