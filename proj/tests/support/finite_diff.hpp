#pragma once

// Central-difference gradient oracle used by the gradient-correctness tests.
// Only ever re-evaluates the scalar loss; independent of the analytic path.

#include <algorithm>
#include <cmath>
#include <functional>

namespace testsupport {

inline double central_difference(const std::function<double()>& eval, double& param,
                                 double step = 1e-5) {
    const double orig = param;
    param = orig + step;
    const double hi = eval();
    param = orig - step;
    const double lo = eval();
    param = orig;
    return (hi - lo) / (2.0 * step);
}

inline double relative_error(double analytic, double numeric, double denom_floor = 1e-8) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), denom_floor});
    return std::abs(analytic - numeric) / denom;
}

}  // namespace testsupport
