#pragma once

#include "popmort/dataset.hpp"
#include "popmort/types.hpp"

namespace popmort {

/// Smoothed log-mortality surface for one population.
struct SmoothedSurface {
    AgeGrid grid;
    int first_year = 0;
    Matrix y;       // observed log rates, n x p
    Matrix f;       // smoothed log rates, n x p
    Matrix delta2;  // smoothing-error variances, n x p
    Matrix weights; // 1 / delta2

    int n_years() const { return static_cast<int>(f.rows()); }
};

/// Poisson approximation of the log-rate variance: 1 / (m * N) per cell.
Matrix log_rate_variance(const Matrix& rates, const Matrix& exposures);

struct AlphaPolicy {
    bool automatic = true;
    double fixed = 1.0;
    // Cross-validation folds are subsampled deterministically to keep the
    // exact LP solves tractable on full-size surfaces.
    int cv_years = 5;
    int cv_ages = 8;
    std::vector<double> grid; // default: 10 log-spaced values in [1e-3, 1e2]

    static AlphaPolicy fixed_value(double a) { return {false, a, 5, 8, {}}; }
    std::vector<double> alpha_grid() const;
};

struct SmoothOptions {
    AlphaPolicy alpha;
    double monotone_from_age = 65.0;
};

/// Weighted L1 fit with an L1 penalty on slope changes and a non-decreasing
/// constraint from `monotone_from_age` upward, solved exactly as a linear
/// program. Slopes are forward first differences over the grid spacing.
Vector smooth_year(const Vector& y, const Vector& w, const std::vector<double>& ages, double alpha,
                   double monotone_from_age);

SmoothedSurface smooth_surface(const Matrix& rates, const Matrix& exposures, const AgeGrid& grid,
                               int first_year, const SmoothOptions& opts = {});
SmoothedSurface smooth_surface(const MortalityDataset& ds, const PopulationLabel& pop,
                               const SmoothOptions& opts = {});

/// Picks alpha over the policy grid by leave-one-age-out cross-validation of
/// the weighted L1 prediction error on subsampled (year, age) folds.
double select_alpha(const Matrix& log_rates, const Matrix& weights, const AgeGrid& grid,
                    const SmoothOptions& opts);

/// Wrap an already-smooth log-rate surface (synthetic data, pre-smoothed
/// inputs) as a SmoothedSurface with the given error variance.
SmoothedSurface presmoothed_surface(const Matrix& log_rates, const AgeGrid& grid, int first_year,
                                    double delta2 = 1e-8);

} // namespace popmort
