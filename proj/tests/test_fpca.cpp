#include "doctest.h"

#include "popmort/fpca.hpp"
#include "popmort/rng.hpp"

#include <cmath>

using namespace popmort;

namespace {

AgeGrid unit_grid(int p) {
    std::vector<double> ages(static_cast<std::size_t>(p));
    for (int i = 0; i < p; ++i) ages[static_cast<std::size_t>(i)] = i;
    return AgeGrid(ages, false);
}

double quad_dot(const Vector& a, const Vector& b, const AgeGrid& g) {
    return a.cwiseProduct(b).dot(g.quadrature_weights());
}

Matrix random_surface(int n, int p, std::uint64_t seed) {
    RngStream rng(seed);
    Matrix f(n, p);
    for (int t = 0; t < n; ++t)
        for (int i = 0; i < p; ++i)
            f(t, i) = -4.0 + 0.03 * i - 0.02 * t + 0.3 * rng.normal();
    return f;
}

} // namespace

TEST_CASE("mean and deviation functions") {
    Matrix f(2, 3);
    f << 0, 0, 0, 2, 2, 2;
    const Vector mu = mean_function(f);
    CHECK((mu.array() == 1.0).all());

    Matrix g(2, 3);
    g << 1, 1, 1, 1, 1, 1;
    CHECK((deviation_function(g, mu).array() == 0.0).all());

    Matrix h = g.array() - 0.1;
    const Vector eta = deviation_function(h, Vector::Ones(3));
    CHECK(eta[0] == doctest::Approx(-0.1));

    // With total defined as the average of two populations, eta sums to zero.
    Matrix fem = random_surface(6, 3, 1), mal = random_surface(6, 3, 2);
    const Matrix tot = (fem + mal) / 2.0;
    const Vector m = mean_function(tot);
    const Vector sum = deviation_function(fem, m) + deviation_function(mal, m);
    CHECK(sum.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("rank-one data yields a single component matching the pattern") {
    const int n = 20, p = 15;
    const auto grid = unit_grid(p);
    Vector v(p);
    for (int i = 0; i < p; ++i) v[i] = std::sin(0.3 * i) + 1.5;
    RngStream rng(3);
    Matrix c(n, p);
    Vector score(n);
    for (int t = 0; t < n; ++t) score[t] = rng.normal();
    score.array() -= score.mean();
    for (int t = 0; t < n; ++t) c.row(t) = score[t] * v.transpose();

    const auto sys = empirical_fpca(c, grid, 0.9);
    REQUIRE(sys.order() == 1);
    CHECK(sys.lambda_total == doctest::Approx(sys.eigenvalues[0]).epsilon(1e-9));
    // eigenfunction proportional to v (normalized under quadrature)
    Vector vn = v / std::sqrt(quad_dot(v, v, grid));
    const Vector phi = sys.eigenfunctions.row(0).transpose();
    const double sgn = phi.dot(vn) > 0 ? 1.0 : -1.0;
    CHECK((phi - sgn * vn).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("threshold selection on an exact {9, 0.5, 0.5} spectrum") {
    const int p = 24;
    const auto grid = unit_grid(p);
    const Vector w = grid.quadrature_weights();
    // Orthonormal patterns under quadrature built from disjoint supports.
    Matrix E = Matrix::Zero(3, p);
    for (int k = 0; k < 3; ++k) {
        for (int i = 8 * k; i < 8 * (k + 1); ++i) E(k, i) = 1.0;
        double nrm = 0;
        for (int i = 0; i < p; ++i) nrm += w[i] * E(k, i) * E(k, i);
        E.row(k) /= std::sqrt(nrm);
    }
    // Hadamard-style scores: column k has (1/n) sum = a_k^2 exactly.
    const int n = 4;
    Matrix H(n, 3);
    H << 1, 1, 1, 1, -1, -1, -1, 1, -1, -1, -1, 1;
    Vector a(3);
    a << 3.0, std::sqrt(0.5), std::sqrt(0.5);
    Matrix scores = H * a.asDiagonal();
    const Matrix c = scores * E;

    const auto sys = empirical_fpca(c, grid, 0.9);
    REQUIRE(sys.order() == 1); // 9 / 10 >= 0.9
    CHECK(sys.eigenvalues[0] == doctest::Approx(9.0).epsilon(1e-9));
    CHECK(sys.lambda_total == doctest::Approx(10.0).epsilon(1e-9));

    const auto sys2 = empirical_fpca(c, grid, 0.95);
    CHECK(sys2.order() == 2);
}

TEST_CASE("orthonormality, score variance, and full reconstruction") {
    const int n = 50, p = 96;
    const auto grid = unit_grid(p);
    const Matrix f = random_surface(n, p, 11);
    const Matrix c = f.rowwise() - f.colwise().mean();
    const auto sys = empirical_fpca(c, grid, 1.0);

    for (int a = 0; a < sys.order(); ++a)
        for (int b = 0; b <= a; ++b) {
            const double ip = quad_dot(sys.eigenfunctions.row(a).transpose(),
                                       sys.eigenfunctions.row(b).transpose(), grid);
            CHECK(std::abs(ip - (a == b ? 1.0 : 0.0)) <= 1e-8);
        }
    for (int k = 0; k < sys.order(); ++k) {
        CHECK(std::abs(sys.scores.col(k).mean()) <= 1e-8);
        const double var = sys.scores.col(k).squaredNorm() / n;
        CHECK(std::abs(var - sys.eigenvalues[k]) <= 1e-6 * sys.eigenvalues[k]);
    }
    for (int k = 1; k < sys.order(); ++k)
        CHECK(sys.eigenvalues[k] <= sys.eigenvalues[k - 1] + 1e-12);

    CHECK((c - sys.reconstruct()).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("scale equivariance and the sign convention") {
    const int n = 12, p = 10;
    const auto grid = unit_grid(p);
    Matrix c = random_surface(n, p, 13);
    c.rowwise() -= c.colwise().mean();
    const auto s1 = empirical_fpca(c, grid, 0.9);
    const auto s2 = empirical_fpca((3.0 * c).eval(), grid, 0.9);
    REQUIRE(s1.order() == s2.order());
    for (int k = 0; k < s1.order(); ++k) {
        CHECK(s2.eigenvalues[k] == doctest::Approx(9.0 * s1.eigenvalues[k]).epsilon(1e-9));
        CHECK((s2.eigenfunctions.row(k) - s1.eigenfunctions.row(k)).cwiseAbs().maxCoeff() < 1e-8);
        Eigen::Index imax;
        s1.eigenfunctions.row(k).cwiseAbs().maxCoeff(&imax);
        CHECK(s1.eigenfunctions(k, imax) > 0.0);
    }
}

TEST_CASE("all-zero input yields an empty system") {
    const auto sys = empirical_fpca(Matrix::Zero(5, 7), unit_grid(7), 0.9);
    CHECK(sys.order() == 0);
    CHECK(sys.lambda_total == 0.0);
}

TEST_CASE("populations identical to a rank-one total leave nothing specific") {
    const int n = 20, p = 12;
    const auto grid = unit_grid(p);
    Vector v = Vector::LinSpaced(p, 1.0, 2.0);
    RngStream rng(5);
    Matrix f(n, p);
    for (int t = 0; t < n; ++t) f.row(t) = (-4.0 + 0.5 * rng.normal()) * v.transpose();

    const auto surf = presmoothed_surface(f, grid, 1950);
    const auto dec = multilevel_decompose(surf, {{"a", &surf}, {"b", &surf}}, 0.9, 0.9);
    CHECK(dec.K() == 1);
    for (const auto& key : dec.population_keys) {
        CHECK(dec.L(key) == 0);
        CHECK(dec.sigma2.at(key) < 1e-16);
        CHECK(dec.eta.at(key).cwiseAbs().maxCoeff() < 1e-12);
    }
    // Reconstruction residual has (near) zero mean per age.
    const Matrix fitted = dec.fitted("a");
    const Vector col_mean = (surf.f - fitted).colwise().mean().transpose();
    CHECK(col_mean.cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("full multilevel reconstruction at P1 = P2 = 1") {
    const int n = 18, p = 14;
    const auto grid = unit_grid(p);
    const Matrix fem = random_surface(n, p, 21);
    const Matrix mal = random_surface(n, p, 22);
    const Matrix tot = (fem + mal) / 2.0;
    const auto sf = presmoothed_surface(fem, grid, 1960);
    const auto sm = presmoothed_surface(mal, grid, 1960);
    const auto st = presmoothed_surface(tot, grid, 1960);
    const auto dec = multilevel_decompose(st, {{"f", &sf}, {"m", &sm}}, 1.0, 1.0);
    CHECK((fem - dec.fitted("f")).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((mal - dec.fitted("m")).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("common and specific scores are weakly correlated on independent processes") {
    const int n = 60, p = 20;
    const auto grid = unit_grid(p);
    RngStream rng(31);
    Vector phi(p), psi(p);
    for (int i = 0; i < p; ++i) {
        phi[i] = 1.0 + 0.1 * i;
        psi[i] = std::cos(0.5 * i);
    }
    Matrix tot(n, p), fem(n, p), mal(n, p);
    for (int t = 0; t < n; ++t) {
        const double beta = 2.0 * rng.normal();
        const double gf = 0.7 * rng.normal();
        const double gm = 0.7 * rng.normal();
        tot.row(t) = beta * phi.transpose();
        fem.row(t) = beta * phi.transpose() + gf * psi.transpose();
        mal.row(t) = beta * phi.transpose() + gm * psi.transpose();
    }
    const auto st = presmoothed_surface(tot, grid, 1950);
    const auto sf = presmoothed_surface(fem, grid, 1950);
    const auto sm = presmoothed_surface(mal, grid, 1950);
    const auto dec = multilevel_decompose(st, {{"f", &sf}, {"m", &sm}}, 0.99, 0.99);
    REQUIRE(dec.K() >= 1);
    for (const auto& key : dec.population_keys) {
        const auto& spec = dec.specific.at(key);
        for (int l = 0; l < spec.order(); ++l) {
            const Vector b = dec.common.scores.col(0);
            const Vector g = spec.scores.col(l);
            const double corr = b.dot(g) / std::sqrt(b.squaredNorm() * g.squaredNorm());
            CHECK(std::abs(corr) <= 0.15);
        }
    }
}

TEST_CASE("synthetic eigenvalues are recovered within ten percent") {
    const int n = 200, p = 16;
    const auto grid = unit_grid(p);
    const Vector w = grid.quadrature_weights();
    // Two orthonormal patterns for the common level, one for the specific.
    Matrix basis = Matrix::Zero(3, p);
    for (int i = 0; i < p; ++i) {
        basis(0, i) = 1.0;
        basis(1, i) = std::sin(2.0 * M_PI * i / p);
        basis(2, i) = std::cos(2.0 * M_PI * i / p);
    }
    // Gram-Schmidt under the quadrature inner product.
    for (int k = 0; k < 3; ++k) {
        Vector v = basis.row(k).transpose();
        for (int j = 0; j < k; ++j) {
            const Vector u = basis.row(j).transpose();
            v -= quad_dot(v, u, grid) * u;
        }
        basis.row(k) = (v / std::sqrt(quad_dot(v, v, grid))).transpose();
    }
    const double lam1 = 4.0, lam2 = 1.0, lamj = 0.5;
    RngStream rng(77);
    Matrix tot(n, p), fem(n, p), mal(n, p);
    for (int t = 0; t < n; ++t) {
        const double b1 = std::sqrt(lam1) * rng.normal();
        const double b2 = std::sqrt(lam2) * rng.normal();
        const double gf = std::sqrt(lamj) * rng.normal();
        const double gm = std::sqrt(lamj) * rng.normal();
        const Vector common = b1 * basis.row(0).transpose() + b2 * basis.row(1).transpose();
        tot.row(t) = common.transpose();
        fem.row(t) = (common + gf * basis.row(2).transpose()).transpose();
        mal.row(t) = (common + gm * basis.row(2).transpose()).transpose();
    }
    const auto st = presmoothed_surface(tot, grid, 1900);
    const auto sf = presmoothed_surface(fem, grid, 1900);
    const auto sm = presmoothed_surface(mal, grid, 1900);
    const auto dec = multilevel_decompose(st, {{"f", &sf}, {"m", &sm}}, 0.999, 0.9);
    REQUIRE(dec.K() >= 2);
    CHECK(dec.common.eigenvalues[0] == doctest::Approx(lam1).epsilon(0.10));
    CHECK(dec.common.eigenvalues[1] == doctest::Approx(lam2).epsilon(0.10));
    REQUIRE(dec.L("f") >= 1);
    CHECK(dec.specific.at("f").eigenvalues[0] == doctest::Approx(lamj).epsilon(0.10));
}

TEST_CASE("within-cluster variability ratios") {
    CHECK(within_cluster_variability(9.0, 1.0) == doctest::Approx(0.9));
    CHECK(within_cluster_variability(2.0, 0.0) == doctest::Approx(1.0));
    CHECK_THROWS_AS(within_cluster_variability(0.0, 0.0), ConfigError);
}

TEST_CASE("total variability matches per-age variances") {
    Matrix f = random_surface(30, 6, 9);
    const Matrix cov = total_variability(f);
    const Matrix c = f.rowwise() - f.colwise().mean();
    for (int i = 0; i < 6; ++i)
        CHECK(cov(i, i) == doctest::Approx(c.col(i).squaredNorm() / 30.0).epsilon(1e-12));
    CHECK(total_variability(Matrix::Constant(4, 3, 1.0)).cwiseAbs().maxCoeff() == 0.0);
}
