#pragma once

#include <Eigen/Dense>

namespace qml {

/// Axis-aligned box domain.
struct Box {
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;

    int dim() const { return static_cast<int>(lower.size()); }
    double width(int j) const { return upper(j) - lower(j); }
    Eigen::VectorXd center() const { return 0.5 * (lower + upper); }

    bool contains(const Eigen::VectorXd& x) const {
        if (x.size() != lower.size()) return false;
        for (int j = 0; j < lower.size(); ++j) {
            if (x(j) < lower(j) || x(j) > upper(j)) return false;
        }
        return true;
    }
};

}  // namespace qml
