#pragma once

#include <Eigen/Dense>
#include <cstdint>

namespace qml {

/// Random Latin hypercube sample of n points in the unit cube [0,1)^d.
Eigen::MatrixXd latin_hypercube(int n, int d, uint64_t seed);

/// Latin hypercube polished for the maximin criterion: best of several
/// random candidates, then pairwise column swaps kept when they improve
/// the minimum pairwise distance.
Eigen::MatrixXd maximin_lhs(int n, int d, uint64_t seed, int candidates = 16, int polish_iters = 200);

/// Affine map of unit-cube rows into the box [lower, upper].
Eigen::MatrixXd scale_to_box(const Eigen::MatrixXd& unit, const Eigen::VectorXd& lower,
                             const Eigen::VectorXd& upper);

}  // namespace qml
