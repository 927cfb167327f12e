#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace popmort {

/// Empirical quantile with linear interpolation between order statistics
/// (the common "type 7" definition). q in [0, 1].
inline double quantile(std::vector<double> v, double q) {
    if (v.empty()) throw std::invalid_argument("quantile: empty sample");
    q = std::clamp(q, 0.0, 1.0);
    std::sort(v.begin(), v.end());
    const double h = q * (static_cast<double>(v.size()) - 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

} // namespace popmort
