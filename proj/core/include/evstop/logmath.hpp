#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

namespace evstop {

// log(sum_i exp(x_i)), shifted by the max so no exponential overflows.
// Returns -inf for an empty input or when every term is -inf.
inline double log_sum_exp(std::span<const double> x) {
    if (x.empty()) {
        return -std::numeric_limits<double>::infinity();
    }
    const double peak = *std::max_element(x.begin(), x.end());
    if (!std::isfinite(peak)) {
        return peak;
    }
    double sum = 0.0;
    for (double v : x) {
        sum += std::exp(v - peak);
    }
    return peak + std::log(sum);
}

// log((1/K) sum_i exp(x_i)).
inline double log_mean_exp(std::span<const double> x) {
    return log_sum_exp(x) - std::log(static_cast<double>(x.size()));
}

} // namespace evstop
