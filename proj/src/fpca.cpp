#include "popmort/fpca.hpp"

#include <Eigen/SVD>

#include <cmath>

namespace popmort {

Vector mean_function(const Matrix& total_f) {
    if (total_f.rows() < 2) throw ConfigError("mean_function: need at least two curves");
    return total_f.colwise().mean().transpose();
}

Vector deviation_function(const Matrix& population_f, const Vector& mu) {
    if (population_f.cols() != mu.size()) throw ConfigError("deviation_function: shape mismatch");
    return population_f.colwise().mean().transpose() - mu;
}

EigenSystem empirical_fpca(const Matrix& centered, const AgeGrid& grid, double threshold) {
    const auto n = centered.rows();
    const auto p = centered.cols();
    if (n < 2) throw ConfigError("empirical_fpca: need at least two curves");
    if (p != static_cast<Eigen::Index>(grid.size()))
        throw ConfigError("empirical_fpca: grid/curve size mismatch");
    if (!(threshold > 0.0) || threshold > 1.0)
        throw ConfigError("empirical_fpca: threshold must be in (0, 1]");

    const Vector w = grid.quadrature_weights();
    const Vector sqrt_w = w.array().sqrt().matrix();

    // B = C W^{1/2}; eigenpairs of the quadrature covariance operator come from
    // the SVD of B / sqrt(n), which never forms the p x p matrix.
    Matrix B = centered * sqrt_w.asDiagonal();
    Eigen::BDCSVD<Matrix> svd(B / std::sqrt(static_cast<double>(n)),
                              Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector s = svd.singularValues();

    EigenSystem sys;
    sys.scores = Matrix::Zero(n, 0);
    sys.eigenfunctions = Matrix::Zero(0, p);
    sys.eigenvalues = Vector::Zero(0);
    if (s.size() == 0 || !(s[0] > 0.0)) return sys; // all-zero input

    const double cutoff = 1e-12 * s[0] * s[0];
    int n_pos = 0;
    double total = 0.0;
    for (Eigen::Index k = 0; k < s.size(); ++k) {
        const double lam = s[k] * s[k];
        if (lam <= cutoff) break;
        total += lam;
        ++n_pos;
    }
    if (n_pos == 0) return sys;
    sys.lambda_total = total;

    int K = n_pos;
    double cum = 0.0;
    for (int k = 0; k < n_pos; ++k) {
        cum += s[k] * s[k];
        if (cum / total >= threshold) {
            K = k + 1;
            break;
        }
    }

    sys.eigenvalues = Vector(K);
    sys.eigenfunctions = Matrix(K, p);
    for (int k = 0; k < K; ++k) {
        sys.eigenvalues[k] = s[k] * s[k];
        // phi = W^{-1/2} u, orthonormal under the quadrature inner product.
        Vector phi = svd.matrixV().col(k).cwiseQuotient(sqrt_w);
        Eigen::Index imax = 0;
        phi.cwiseAbs().maxCoeff(&imax);
        if (phi[imax] < 0.0) phi = -phi;
        sys.eigenfunctions.row(k) = phi.transpose();
    }
    // Scores are quadrature inner products of curves with eigenfunctions.
    sys.scores = centered * w.asDiagonal() * sys.eigenfunctions.transpose();
    return sys;
}

Matrix MultilevelDecomposition::fitted(const std::string& key) const {
    const auto& spec = specific.at(key);
    const auto n = common.scores.rows() > 0 ? common.scores.rows() : spec.scores.rows();
    const auto p = static_cast<Eigen::Index>(grid.size());
    Matrix out = Matrix::Zero(n, p);
    out.rowwise() += mu.transpose();
    out.rowwise() += eta.at(key).transpose();
    if (common.order() > 0) out += common.reconstruct();
    if (spec.order() > 0) out += spec.reconstruct();
    return out;
}

MultilevelDecomposition multilevel_decompose(
    const SmoothedSurface& total,
    const std::vector<std::pair<std::string, const SmoothedSurface*>>& populations, double p1,
    double p2) {
    if (populations.empty()) throw ConfigError("multilevel_decompose: no populations");
    MultilevelDecomposition dec;
    dec.grid = total.grid;
    dec.first_year = total.first_year;
    dec.p1 = p1;
    dec.p2 = p2;

    const auto n = total.f.rows();
    dec.mu = mean_function(total.f);
    // Noise-floor guard: a centered/residual matrix that is zero up to
    // floating-point crumbs must yield an empty system, not noise components.
    auto floored = [](Matrix m, double ref) {
        if (m.squaredNorm() <= 1e-20 * std::max(1.0, ref)) m.setZero();
        return m;
    };
    dec.common = empirical_fpca(
        floored(total.f.rowwise() - dec.mu.transpose(), total.f.squaredNorm()), total.grid, p1);
    const Matrix common_fit =
        dec.common.order() > 0 ? dec.common.reconstruct() : Matrix::Zero(n, total.f.cols());

    for (const auto& [key, surf] : populations) {
        if (!surf) throw ConfigError("multilevel_decompose: null surface for " + key);
        if (surf->f.rows() != n || surf->f.cols() != total.f.cols() || !(surf->grid == total.grid))
            throw DataError("multilevel_decompose: population " + key +
                            " does not share the total's grid and years");
        dec.population_keys.push_back(key);
        Vector eta = deviation_function(surf->f, dec.mu);
        Matrix resid = surf->f;
        resid.rowwise() -= dec.mu.transpose();
        resid.rowwise() -= eta.transpose();
        resid -= common_fit;
        resid = floored(std::move(resid), surf->f.squaredNorm());
        EigenSystem spec = empirical_fpca(resid, total.grid, p2);
        Matrix err = resid - (spec.order() > 0 ? spec.reconstruct()
                                               : Matrix::Zero(resid.rows(), resid.cols()));
        dec.sigma2[key] = err.squaredNorm() / static_cast<double>(err.size());
        dec.eta[key] = std::move(eta);
        dec.specific[key] = std::move(spec);
    }
    return dec;
}

double within_cluster_variability(double common_lambda_sum, double specific_lambda_sum) {
    if (common_lambda_sum < 0.0 || specific_lambda_sum < 0.0)
        throw ConfigError("within_cluster_variability: negative eigenvalue sum");
    const double denom = common_lambda_sum + specific_lambda_sum;
    if (!(denom > 0.0))
        throw ConfigError("within_cluster_variability: both eigenvalue sums are zero");
    return common_lambda_sum / denom;
}

Matrix total_variability(const Matrix& f) {
    if (f.rows() < 2) throw ConfigError("total_variability: need at least two curves");
    const Matrix centered = f.rowwise() - f.colwise().mean();
    return centered.transpose() * centered / static_cast<double>(f.rows());
}

double integrated_variance(const Matrix& f, const AgeGrid& grid) {
    const Matrix cov = total_variability(f);
    return grid.quadrature_weights().dot(cov.diagonal());
}

} // namespace popmort
