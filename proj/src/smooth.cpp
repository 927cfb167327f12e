#include "popmort/smooth.hpp"

#include "popmort/lp.hpp"
#include "popmort/parallel.hpp"

#include <cmath>

namespace popmort {

Matrix log_rate_variance(const Matrix& rates, const Matrix& exposures) {
    if (rates.rows() != exposures.rows() || rates.cols() != exposures.cols())
        throw DataError("log_rate_variance: shape mismatch");
    Matrix v(rates.rows(), rates.cols());
    for (Eigen::Index t = 0; t < rates.rows(); ++t) {
        for (Eigen::Index i = 0; i < rates.cols(); ++i) {
            const double m = rates(t, i), N = exposures(t, i);
            if (!(m > 0.0) || !(N > 0.0))
                throw DataError("log_rate_variance: nonpositive rate or exposure at year index " +
                                std::to_string(t) + ", age index " + std::to_string(i));
            v(t, i) = 1.0 / (m * N);
        }
    }
    return v;
}

std::vector<double> AlphaPolicy::alpha_grid() const {
    if (!grid.empty()) return grid;
    std::vector<double> g(10);
    const double lo = std::log(1e-3), hi = std::log(1e2);
    for (int k = 0; k < 10; ++k) g[static_cast<std::size_t>(k)] = std::exp(lo + (hi - lo) * k / 9.0);
    return g;
}

namespace {

// Build the LP for one year's curve. Variable layout:
//   [0, p)      theta+      [p, 2p)     theta-
//   [2p, 3p)    u  (data absolute values)
//   [3p, 3p+p-2) v (slope-change absolute values)
lp::Problem build_smooth_lp(const Vector& y, const Vector& w, const std::vector<double>& ages,
                            double alpha, double monotone_from_age) {
    const int p = static_cast<int>(y.size());
    const int nv = p - 2;
    const int ncols = 3 * p + nv;

    int mono_from = p;
    for (int i = 0; i < p; ++i) {
        if (ages[static_cast<std::size_t>(i)] >= monotone_from_age) {
            mono_from = i;
            break;
        }
    }
    const int n_mono = std::max(0, p - 1 - mono_from);
    const int nrows = 2 * p + 2 * nv + n_mono;

    lp::Problem prob;
    prob.A = Matrix::Zero(nrows, ncols);
    prob.b = Vector::Zero(nrows);
    prob.c = Vector::Zero(ncols);
    prob.rel.assign(static_cast<std::size_t>(nrows), lp::Relation::ge);

    for (int i = 0; i < p; ++i) {
        prob.c[2 * p + i] = w[i];
    }
    for (int k = 0; k < nv; ++k) prob.c[3 * p + k] = alpha;

    auto theta = [&](int r, int i, double coef) {
        prob.A(r, i) += coef;
        prob.A(r, p + i) -= coef;
    };

    int r = 0;
    // u_i >= y_i - theta_i  and  u_i >= theta_i - y_i
    for (int i = 0; i < p; ++i) {
        theta(r, i, 1.0);
        prob.A(r, 2 * p + i) = 1.0;
        prob.b[r] = y[i];
        ++r;
        theta(r, i, -1.0);
        prob.A(r, 2 * p + i) = 1.0;
        prob.b[r] = -y[i];
        ++r;
    }
    // v_k >= +/- slope change
    for (int k = 0; k < nv; ++k) {
        const double h0 = ages[static_cast<std::size_t>(k) + 1] - ages[static_cast<std::size_t>(k)];
        const double h1 =
            ages[static_cast<std::size_t>(k) + 2] - ages[static_cast<std::size_t>(k) + 1];
        // s_k = (theta_{k+2}-theta_{k+1})/h1 - (theta_{k+1}-theta_k)/h0
        for (int sgn : {+1, -1}) {
            theta(r, k + 2, sgn / h1);
            theta(r, k + 1, -sgn / h1 - sgn / h0);
            theta(r, k, sgn / h0);
            prob.A(r, 3 * p + k) = 1.0;
            prob.b[r] = 0.0;
            ++r;
        }
    }
    // theta_{i+1} >= theta_i in the monotone region
    for (int i = mono_from; i + 1 < p; ++i) {
        theta(r, i + 1, 1.0);
        theta(r, i, -1.0);
        prob.b[r] = 0.0;
        ++r;
    }
    return prob;
}

} // namespace

Vector smooth_year(const Vector& y, const Vector& w, const std::vector<double>& ages, double alpha,
                   double monotone_from_age) {
    const int p = static_cast<int>(y.size());
    if (p < 3) throw ConfigError("smooth_year: need at least 3 grid points");
    if (static_cast<int>(ages.size()) != p || w.size() != y.size())
        throw ConfigError("smooth_year: shape mismatch");
    if (alpha < 0.0) throw ConfigError("smooth_year: alpha must be >= 0");
    if ((w.array() <= 0.0).any()) throw ConfigError("smooth_year: weights must be positive");

    const auto prob = build_smooth_lp(y, w, ages, alpha, monotone_from_age);
    auto sol = lp::solve(prob);
    if (!sol.feasible) throw NumericError("smooth_year: infeasible LP (internal error)");
    Vector f(p);
    if (sol.x.size() > 0)
        for (int i = 0; i < p; ++i) f[i] = sol.x[i] - sol.x[p + i];
    if (!sol.optimal) {
        double resid = 0.0;
        if (sol.x.size() > 0) resid = (y - f).cwiseAbs().dot(w);
        throw NumericError("smooth_year: simplex did not converge after " +
                           std::to_string(sol.iterations) +
                           " iterations; best weighted residual " + std::to_string(resid));
    }
    return f;
}

double select_alpha(const Matrix& log_rates, const Matrix& weights, const AgeGrid& grid,
                    const SmoothOptions& opts) {
    const int n = static_cast<int>(log_rates.rows());
    const int p = static_cast<int>(log_rates.cols());
    const auto alphas = opts.alpha.alpha_grid();
    if (p < 4 || n < 1) return alphas.front();

    // Deterministic, evenly spaced fold subsample: years and interior ages.
    std::vector<int> cv_years, cv_ages;
    const int ny = std::min(opts.alpha.cv_years, n);
    for (int k = 0; k < ny; ++k) cv_years.push_back(k * (n - 1) / std::max(1, ny - 1));
    const int na = std::min(opts.alpha.cv_ages, p - 2);
    for (int k = 0; k < na; ++k) cv_ages.push_back(1 + k * (p - 3) / std::max(1, na - 1));
    std::sort(cv_years.begin(), cv_years.end());
    cv_years.erase(std::unique(cv_years.begin(), cv_years.end()), cv_years.end());
    std::sort(cv_ages.begin(), cv_ages.end());
    cv_ages.erase(std::unique(cv_ages.begin(), cv_ages.end()), cv_ages.end());

    std::vector<double> cv_err(alphas.size(), 0.0);
    struct Fold {
        int t, i;
    };
    std::vector<Fold> folds;
    for (int t : cv_years)
        for (int i : cv_ages) folds.push_back({t, i});

    std::vector<std::vector<double>> fold_err(alphas.size(),
                                              std::vector<double>(folds.size(), 0.0));
    parallel_for(folds.size() * alphas.size(), [&](std::size_t idx) {
        const std::size_t a = idx / folds.size();
        const auto& fd = folds[idx % folds.size()];
        Vector yy(p - 1), ww(p - 1);
        std::vector<double> aa(static_cast<std::size_t>(p) - 1);
        int k = 0;
        for (int i = 0; i < p; ++i) {
            if (i == fd.i) continue;
            yy[k] = log_rates(fd.t, i);
            ww[k] = weights(fd.t, i);
            aa[static_cast<std::size_t>(k)] = grid.ages[static_cast<std::size_t>(i)];
            ++k;
        }
        const Vector f = smooth_year(yy, ww, aa, alphas[a], opts.monotone_from_age);
        // Linear interpolation across the held-out age.
        const double x = grid.ages[static_cast<std::size_t>(fd.i)];
        const double x0 = aa[static_cast<std::size_t>(fd.i) - 1],
                     x1 = aa[static_cast<std::size_t>(fd.i)];
        const double pred = f[fd.i - 1] + (f[fd.i] - f[fd.i - 1]) * (x - x0) / (x1 - x0);
        fold_err[a][idx % folds.size()] =
            weights(fd.t, fd.i) * std::abs(log_rates(fd.t, fd.i) - pred);
    });
    for (std::size_t a = 0; a < alphas.size(); ++a)
        for (double e : fold_err[a]) cv_err[a] += e;

    std::size_t best = 0;
    for (std::size_t a = 1; a < alphas.size(); ++a)
        if (cv_err[a] <= cv_err[best]) best = a; // ties -> smoother fit
    return alphas[best];
}

SmoothedSurface smooth_surface(const Matrix& rates, const Matrix& exposures, const AgeGrid& grid,
                               int first_year, const SmoothOptions& opts) {
    SmoothedSurface s;
    s.grid = grid;
    s.first_year = first_year;
    s.delta2 = log_rate_variance(rates, exposures);
    s.weights = s.delta2.cwiseInverse();
    s.y = rates.array().log().matrix();
    s.f = Matrix::Zero(rates.rows(), rates.cols());

    const double alpha = opts.alpha.automatic ? select_alpha(s.y, s.weights, grid, opts)
                                              : opts.alpha.fixed;
    const auto n = static_cast<std::size_t>(rates.rows());
    parallel_for(n, [&](std::size_t t) {
        const auto ti = static_cast<Eigen::Index>(t);
        s.f.row(ti) = smooth_year(s.y.row(ti).transpose(), s.weights.row(ti).transpose(), grid.ages,
                                  alpha, opts.monotone_from_age)
                          .transpose();
    });
    return s;
}

SmoothedSurface smooth_surface(const MortalityDataset& ds, const PopulationLabel& pop,
                               const SmoothOptions& opts) {
    const auto* data = ds.find(pop);
    if (!data) throw DataError("unknown population: " + pop.key());
    return smooth_surface(data->rates, data->exposures, ds.grid, ds.first_year, opts);
}

SmoothedSurface presmoothed_surface(const Matrix& log_rates, const AgeGrid& grid, int first_year,
                                    double delta2) {
    if (!(delta2 > 0.0)) throw ConfigError("presmoothed_surface: delta2 must be positive");
    SmoothedSurface s;
    s.grid = grid;
    s.first_year = first_year;
    s.y = log_rates;
    s.f = log_rates;
    s.delta2 = Matrix::Constant(log_rates.rows(), log_rates.cols(), delta2);
    s.weights = Matrix::Constant(log_rates.rows(), log_rates.cols(), 1.0 / delta2);
    return s;
}

} // namespace popmort
