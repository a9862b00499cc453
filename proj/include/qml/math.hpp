#pragma once

#include <boost/math/distributions/normal.hpp>

namespace qml {

/// Standard normal density.
inline double norm_pdf(double z) {
    static const boost::math::normal_distribution<double> kStdNormal;
    return boost::math::pdf(kStdNormal, z);
}

/// Standard normal CDF.
inline double norm_cdf(double z) {
    static const boost::math::normal_distribution<double> kStdNormal;
    return boost::math::cdf(kStdNormal, z);
}

/// Standard normal quantile (inverse CDF); u must lie in (0, 1).
inline double norm_ppf(double u) {
    static const boost::math::normal_distribution<double> kStdNormal;
    return boost::math::quantile(kStdNormal, u);
}

}  // namespace qml
