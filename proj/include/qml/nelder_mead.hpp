#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace qml {

struct NelderMeadOptions {
    int max_evals = 2000;
    double ftol = 1e-10;        // absolute spread of simplex values
    double ftol_rel = 1e-9;     // relative spread
    double xtol = 1e-11;        // simplex diameter
    double init_step_frac = 0.08;  // initial simplex step as a fraction of box width
};

struct NelderMeadResult {
    Eigen::VectorXd x;
    double f = 0.0;
    int evals = 0;
    bool converged = false;
};

/// Box-constrained Nelder-Mead simplex minimizer. Candidate vertices are
/// clamped into [lower, upper] before evaluation.
inline NelderMeadResult nelder_mead_minimize(const std::function<double(const Eigen::VectorXd&)>& f,
                                             const Eigen::VectorXd& x0,
                                             const Eigen::VectorXd& lower,
                                             const Eigen::VectorXd& upper,
                                             const NelderMeadOptions& opts = {}) {
    const int n = static_cast<int>(x0.size());
    auto clamp = [&](Eigen::VectorXd v) {
        for (int i = 0; i < n; ++i) v(i) = std::clamp(v(i), lower(i), upper(i));
        return v;
    };
    int evals = 0;
    auto eval = [&](const Eigen::VectorXd& v) {
        ++evals;
        double y = f(v);
        return std::isfinite(y) ? y : 1e300;
    };

    std::vector<Eigen::VectorXd> xs(n + 1);
    std::vector<double> fs(n + 1);
    xs[0] = clamp(x0);
    fs[0] = eval(xs[0]);
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd v = xs[0];
        double step = opts.init_step_frac * (upper(i) - lower(i));
        if (step <= 0) step = std::max(1e-8, 0.05 * std::abs(v(i)) + 1e-8);
        v(i) += (v(i) + step <= upper(i)) ? step : -step;
        xs[i + 1] = clamp(v);
        fs[i + 1] = eval(xs[i + 1]);
    }

    std::vector<int> order(n + 1);
    auto sort_simplex = [&]() {
        for (int i = 0; i <= n; ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](int a, int b) { return fs[a] < fs[b]; });
        std::vector<Eigen::VectorXd> xs2(n + 1);
        std::vector<double> fs2(n + 1);
        for (int i = 0; i <= n; ++i) {
            xs2[i] = xs[order[i]];
            fs2[i] = fs[order[i]];
        }
        xs.swap(xs2);
        fs.swap(fs2);
    };

    NelderMeadResult res;
    while (evals < opts.max_evals) {
        sort_simplex();
        double spread = fs[n] - fs[0];
        if (spread < opts.ftol + opts.ftol_rel * std::abs(fs[0])) {
            res.converged = true;
            break;
        }
        double diam = 0.0;
        for (int i = 1; i <= n; ++i) diam = std::max(diam, (xs[i] - xs[0]).norm());
        if (diam < opts.xtol) {
            res.converged = true;
            break;
        }

        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
        for (int i = 0; i < n; ++i) centroid += xs[i];
        centroid /= n;

        Eigen::VectorXd xr = clamp(centroid + (centroid - xs[n]));
        double fr = eval(xr);
        if (fr < fs[0]) {
            Eigen::VectorXd xe = clamp(centroid + 2.0 * (centroid - xs[n]));
            double fe = eval(xe);
            if (fe < fr) {
                xs[n] = xe;
                fs[n] = fe;
            } else {
                xs[n] = xr;
                fs[n] = fr;
            }
        } else if (fr < fs[n - 1]) {
            xs[n] = xr;
            fs[n] = fr;
        } else {
            bool outside = fr < fs[n];
            Eigen::VectorXd xc = outside ? clamp(centroid + 0.5 * (xr - centroid))
                                         : clamp(centroid + 0.5 * (xs[n] - centroid));
            double fc = eval(xc);
            if (fc < std::min(fr, fs[n])) {
                xs[n] = xc;
                fs[n] = fc;
            } else {
                for (int i = 1; i <= n; ++i) {
                    xs[i] = clamp(xs[0] + 0.5 * (xs[i] - xs[0]));
                    fs[i] = eval(xs[i]);
                }
            }
        }
    }
    sort_simplex();
    res.x = xs[0];
    res.f = fs[0];
    res.evals = evals;
    return res;
}

}  // namespace qml
