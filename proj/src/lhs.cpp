#include "qml/lhs.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "qml/rng.hpp"

namespace qml {

namespace {

double min_pairwise_dist2(const Eigen::MatrixXd& pts) {
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < pts.rows(); ++i) {
        for (int j = i + 1; j < pts.rows(); ++j) {
            best = std::min(best, (pts.row(i) - pts.row(j)).squaredNorm());
        }
    }
    return best;
}

}  // namespace

Eigen::MatrixXd latin_hypercube(int n, int d, uint64_t seed) {
    if (n < 1 || d < 1) throw std::invalid_argument("latin_hypercube: n and d must be positive");
    Pcg rng(seed);
    Eigen::MatrixXd pts(n, d);
    std::vector<int> perm(n);
    for (int j = 0; j < d; ++j) {
        std::iota(perm.begin(), perm.end(), 0);
        for (int i = n - 1; i > 0; --i) {
            std::swap(perm[i], perm[static_cast<int>(rng.below(static_cast<uint64_t>(i + 1)))]);
        }
        for (int i = 0; i < n; ++i) {
            pts(i, j) = (perm[i] + rng.uniform()) / n;
        }
    }
    return pts;
}

Eigen::MatrixXd maximin_lhs(int n, int d, uint64_t seed, int candidates, int polish_iters) {
    Eigen::MatrixXd best;
    double best_score = -1.0;
    for (int c = 0; c < std::max(1, candidates); ++c) {
        Eigen::MatrixXd cand = latin_hypercube(n, d, derive_seed(seed, 1000 + c));
        double score = min_pairwise_dist2(cand);
        if (score > best_score) {
            best_score = score;
            best = cand;
        }
    }
    if (n < 2) return best;
    // Swap polish: exchange two entries within a column, keep if maximin improves.
    Pcg rng(derive_seed(seed, 0x9911));
    for (int it = 0; it < polish_iters; ++it) {
        int j = static_cast<int>(rng.below(static_cast<uint64_t>(d)));
        int a = static_cast<int>(rng.below(static_cast<uint64_t>(n)));
        int b = static_cast<int>(rng.below(static_cast<uint64_t>(n)));
        if (a == b) continue;
        std::swap(best(a, j), best(b, j));
        double score = min_pairwise_dist2(best);
        if (score > best_score) {
            best_score = score;
        } else {
            std::swap(best(a, j), best(b, j));
        }
    }
    return best;
}

Eigen::MatrixXd scale_to_box(const Eigen::MatrixXd& unit, const Eigen::VectorXd& lower,
                             const Eigen::VectorXd& upper) {
    if (unit.cols() != lower.size() || lower.size() != upper.size()) {
        throw std::invalid_argument("scale_to_box: dimension mismatch");
    }
    Eigen::MatrixXd out = unit;
    for (int j = 0; j < unit.cols(); ++j) {
        out.col(j) = (lower(j) + (upper(j) - lower(j)) * unit.col(j).array()).matrix();
    }
    return out;
}

}  // namespace qml
