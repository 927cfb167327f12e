#pragma once

#include "popmort/smooth.hpp"
#include "popmort/types.hpp"

#include <map>

namespace popmort {

/// Truncated Karhunen-Loeve system. Eigenfunctions are rows, orthonormal under
/// the trapezoidal quadrature inner product of the grid; eigenvalues descend;
/// scores have zero column means and (1/n) sum of squares equal to the
/// eigenvalue (the covariance estimator uses 1/n).
struct EigenSystem {
    Matrix eigenfunctions; // K x p
    Vector eigenvalues;    // K
    Matrix scores;         // n x K
    double lambda_total = 0.0; // sum of all positive eigenvalues, pre-truncation

    int order() const { return static_cast<int>(eigenvalues.size()); }
    Matrix reconstruct() const {
        if (order() == 0) return Matrix::Zero(scores.rows(), eigenfunctions.cols());
        return scores * eigenfunctions;
    }
};

struct MultilevelDecomposition {
    AgeGrid grid;
    int first_year = 0;
    Vector mu;
    std::vector<std::string> population_keys; // fit order
    std::map<std::string, Vector> eta;
    EigenSystem common;                          // phi, lambda_k, beta
    std::map<std::string, EigenSystem> specific; // psi^j, lambda_l^j, gamma^j
    std::map<std::string, double> sigma2;        // residual error variance per population
    double p1 = 0.9, p2 = 0.9;

    int K() const { return common.order(); }
    int L(const std::string& key) const { return specific.at(key).order(); }

    /// mu + eta^j + R_t + U_t^j on the grid for all in-sample years.
    Matrix fitted(const std::string& key) const;
};

/// Pointwise average of the total-mortality curves.
Vector mean_function(const Matrix& total_f);

/// Population mean curve minus the aggregate mean curve.
Vector deviation_function(const Matrix& population_f, const Vector& mu);

/// Eigen-decomposition of the sample covariance of `centered` (rows = curves)
/// under grid quadrature; retains the smallest K whose cumulative eigenvalue
/// share reaches `threshold`. All-zero input yields an empty system.
EigenSystem empirical_fpca(const Matrix& centered, const AgeGrid& grid, double threshold);

MultilevelDecomposition multilevel_decompose(
    const SmoothedSurface& total,
    const std::vector<std::pair<std::string, const SmoothedSurface*>>& populations, double p1 = 0.9,
    double p2 = 0.9);

/// Share of total eigenvalue mass carried by the common trend.
double within_cluster_variability(double common_lambda_sum, double specific_lambda_sum);

/// (1/n) sum_t (f_t - fbar) (f_t - fbar)^T on the grid.
Matrix total_variability(const Matrix& f);

/// Quadrature trace of total_variability: integral of the pointwise variance.
double integrated_variance(const Matrix& f, const AgeGrid& grid);

} // namespace popmort
