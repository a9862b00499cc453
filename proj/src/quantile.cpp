#include "qml/quantile.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qml {

namespace {

// Order statistic with the floor(alpha*n) rule on an already sorted vector.
double order_stat(const std::vector<double>& sorted, double alpha, bool* clamped = nullptr) {
    const int n = static_cast<int>(sorted.size());
    int idx = static_cast<int>(std::floor(alpha * n));
    if (clamped) *clamped = idx < 1;
    idx = std::clamp(idx, 1, n);
    return sorted[static_cast<size_t>(idx - 1)];
}

}  // namespace

double empirical_quantile(std::span<const double> samples, double alpha) {
    if (samples.empty()) throw std::invalid_argument("empirical_quantile: empty sample vector");
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    return order_stat(sorted, alpha);
}

QuantilePanel sectioning_panel(std::span<const double> samples, const std::vector<double>& levels,
                               int n_b) {
    if (n_b < 2) throw std::invalid_argument("sectioning_panel: need n_b >= 2 batches");
    const int n = static_cast<int>(samples.size());
    const int n_c = n / n_b;
    if (n_c < 1) throw std::invalid_argument("sectioning_panel: fewer samples than batches");
    const int m = static_cast<int>(levels.size());

    QuantilePanel panel;
    panel.levels = levels;
    panel.n_used = n;
    panel.n_b = n_b;
    panel.n_c = n_c;

    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    panel.point_estimates.resize(m);
    for (int l = 0; l < m; ++l) panel.point_estimates(l) = order_stat(sorted, levels[static_cast<size_t>(l)]);

    // Batch quantiles deviate around the full-sample quantile.
    Eigen::MatrixXd dev(n_b, m);
    std::vector<double> batch(static_cast<size_t>(n_c));
    for (int b = 0; b < n_b; ++b) {
        auto begin = samples.begin() + static_cast<ptrdiff_t>(b) * n_c;
        batch.assign(begin, begin + n_c);
        std::sort(batch.begin(), batch.end());
        for (int l = 0; l < m; ++l) {
            bool clamped = false;
            dev(b, l) = order_stat(batch, levels[static_cast<size_t>(l)], &clamped) -
                        panel.point_estimates(l);
            if (clamped) panel.low_confidence = true;
        }
    }
    panel.noise_cov = dev.transpose() * dev / (static_cast<double>(n_b) * (n_b - 1));
    return panel;
}

}  // namespace qml
