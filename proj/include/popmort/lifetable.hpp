#pragma once

#include "popmort/types.hpp"

#include <map>

namespace popmort::lt {

struct LifeTable {
    Vector mx, qx, ax, lx, dx, Lx, Tx, ex;
    bool clamped = false; // some interior q_x exceeded 1 and was clamped
};

enum class A0Rule {
    coale_demeny, // a_0 = 0.07 + 1.7 m_0, capped at 0.35
    half,         // a_0 = 0.5 like every other age
};

struct LifeTableOptions {
    A0Rule a0 = A0Rule::coale_demeny;
};

/// Period life table from age-specific central death rates on a single-year
/// grid with an open-ended terminal group (radix 1). q = m / (1 + (1-a) m) at
/// closed ages; the terminal group gets q = 1 and L = l / m.
LifeTable life_table(const Vector& m, const AgeGrid& grid, const LifeTableOptions& opts = {});

/// Life expectancy at the first grid age.
double e0(const Vector& m, const AgeGrid& grid, const LifeTableOptions& opts = {});

struct E0Distribution {
    std::vector<std::vector<double>> samples; // per horizon: one e0 per path
    Vector point;                             // e0 of the pointwise median path
    Matrix intervals;                         // H x 4: lo80, hi80, lo95, hi95
};

/// e0 per simulated log-rate path (each path H x p), with empirical
/// percentile intervals per horizon.
E0Distribution e0_distribution(const std::vector<Matrix>& log_rate_paths, const AgeGrid& grid,
                               const LifeTableOptions& opts = {});

} // namespace popmort::lt
