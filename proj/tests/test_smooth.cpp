#include "doctest.h"

#include "popmort/rng.hpp"
#include "popmort/smooth.hpp"

#include <cmath>
#include <limits>
#include <vector>

using namespace popmort;

namespace {

double l1_objective(const Vector& theta, const Vector& y, const Vector& w,
                    const std::vector<double>& ages, double alpha) {
    double obj = (y - theta).cwiseAbs().dot(w);
    for (int i = 0; i + 2 < theta.size(); ++i) {
        const double s0 = (theta[i + 1] - theta[i]) / (ages[i + 1] - ages[i]);
        const double s1 = (theta[i + 2] - theta[i + 1]) / (ages[i + 2] - ages[i + 1]);
        obj += alpha * std::abs(s1 - s0);
    }
    return obj;
}

// Independent oracle: the same objective as a Big-M tableau simplex with
// Bland's rule over shifted variables z = theta + S. Written separately from
// the production solver on purpose.
double oracle_lp_objective(const Vector& y, const Vector& w, const std::vector<double>& ages,
                           double alpha, double monotone_from) {
    const int p = static_cast<int>(y.size());
    const int nv = p - 2;
    const double S = 2.0 * y.cwiseAbs().maxCoeff() + 10.0;
    const int n_struct = 2 * p + nv; // z, u, v

    struct Row {
        std::vector<double> a;
        double b;
        bool ge;
    };
    std::vector<Row> rows;
    auto zcol = [](int i) { return i; };
    auto ucol = [&](int i) { return p + i; };
    auto vcol = [&](int k) { return 2 * p + k; };

    for (int i = 0; i < p; ++i) {
        Row r1{std::vector<double>(n_struct, 0.0), y[i] + S, true};
        r1.a[static_cast<std::size_t>(ucol(i))] = 1.0;
        r1.a[static_cast<std::size_t>(zcol(i))] = 1.0;
        rows.push_back(r1);
        Row r2{std::vector<double>(n_struct, 0.0), -(y[i] + S), true};
        r2.a[static_cast<std::size_t>(ucol(i))] = 1.0;
        r2.a[static_cast<std::size_t>(zcol(i))] = -1.0;
        rows.push_back(r2);
    }
    for (int k = 0; k < nv; ++k) {
        const double h0 = ages[k + 1] - ages[k], h1 = ages[k + 2] - ages[k + 1];
        for (int sgn : {1, -1}) {
            Row r{std::vector<double>(n_struct, 0.0), 0.0, true};
            r.a[static_cast<std::size_t>(vcol(k))] = 1.0;
            r.a[static_cast<std::size_t>(zcol(k + 2))] = -sgn / h1;
            r.a[static_cast<std::size_t>(zcol(k + 1))] = sgn / h1 + sgn / h0;
            r.a[static_cast<std::size_t>(zcol(k))] = -sgn / h0;
            rows.push_back(r);
        }
    }
    for (int i = 0; i + 1 < p; ++i) {
        if (ages[i] < monotone_from) continue;
        Row r{std::vector<double>(n_struct, 0.0), 0.0, true};
        r.a[static_cast<std::size_t>(zcol(i + 1))] = 1.0;
        r.a[static_cast<std::size_t>(zcol(i))] = -1.0;
        rows.push_back(r);
    }

    const int m = static_cast<int>(rows.size());
    // columns: structural + surplus (one per ge row with b != anything) + artificials
    int n_extra = 0;
    for (auto& r : rows) {
        if (r.b < 0) { // flip to <=, gets a slack only
            for (auto& a : r.a) a = -a;
            r.b = -r.b;
            r.ge = false;
        }
        ++n_extra;
    }
    int n_art = 0;
    for (const auto& r : rows)
        if (r.ge) ++n_art;
    const int total = n_struct + n_extra + n_art;

    std::vector<std::vector<double>> T(static_cast<std::size_t>(m),
                                       std::vector<double>(static_cast<std::size_t>(total) + 1, 0.0));
    std::vector<double> cost(static_cast<std::size_t>(total), 0.0);
    for (int i = 0; i < p; ++i) cost[static_cast<std::size_t>(ucol(i))] = w[i];
    for (int k = 0; k < nv; ++k) cost[static_cast<std::size_t>(vcol(k))] = alpha;
    double big_m = 0.0;
    for (double c : cost) big_m = std::max(big_m, std::abs(c));
    // Large enough to dominate any dual value here, small enough not to
    // swamp the reduced costs with cancellation noise.
    big_m = 1e3 * (big_m + 1.0);

    std::vector<int> basis(static_cast<std::size_t>(m), -1);
    {
        int extra = n_struct, art = n_struct + n_extra;
        for (int r = 0; r < m; ++r) {
            for (int j = 0; j < n_struct; ++j) T[r][static_cast<std::size_t>(j)] = rows[r].a[static_cast<std::size_t>(j)];
            T[r][static_cast<std::size_t>(total)] = rows[r].b;
            if (rows[r].ge) {
                T[r][static_cast<std::size_t>(extra)] = -1.0;
                ++extra;
                T[r][static_cast<std::size_t>(art)] = 1.0;
                cost[static_cast<std::size_t>(art)] = big_m;
                basis[static_cast<std::size_t>(r)] = art++;
            } else {
                T[r][static_cast<std::size_t>(extra)] = 1.0;
                basis[static_cast<std::size_t>(r)] = extra++;
            }
        }
    }

    std::vector<double> red(static_cast<std::size_t>(total) + 1, 0.0);
    auto rebuild = [&] {
        for (int j = 0; j <= total; ++j)
            red[static_cast<std::size_t>(j)] = j < total ? cost[static_cast<std::size_t>(j)] : 0.0;
        for (int r = 0; r < m; ++r) {
            const double cb = cost[static_cast<std::size_t>(basis[static_cast<std::size_t>(r)])];
            if (cb == 0.0) continue;
            for (int j = 0; j <= total; ++j) red[static_cast<std::size_t>(j)] -= cb * T[static_cast<std::size_t>(r)][static_cast<std::size_t>(j)];
        }
    };
    rebuild();

    for (int iter = 0; iter < 200000; ++iter) {
        if (iter % 256 == 255) rebuild(); // shed accumulated roundoff
        int enter = -1;
        for (int j = 0; j < total; ++j)
            if (red[static_cast<std::size_t>(j)] < -1e-7) { enter = j; break; } // Bland
        if (enter < 0) break;
        int leave = -1;
        double best = std::numeric_limits<double>::infinity();
        for (int r = 0; r < m; ++r) {
            const double a = T[static_cast<std::size_t>(r)][static_cast<std::size_t>(enter)];
            if (a > 1e-9) {
                const double ratio = T[static_cast<std::size_t>(r)][static_cast<std::size_t>(total)] / a;
                if (ratio < best - 1e-12 ||
                    (ratio < best + 1e-12 &&
                     (leave < 0 || basis[static_cast<std::size_t>(r)] < basis[static_cast<std::size_t>(leave)]))) {
                    best = ratio;
                    leave = r;
                }
            }
        }
        REQUIRE(leave >= 0);
        const double piv = T[static_cast<std::size_t>(leave)][static_cast<std::size_t>(enter)];
        for (int j = 0; j <= total; ++j) T[static_cast<std::size_t>(leave)][static_cast<std::size_t>(j)] /= piv;
        for (int r = 0; r < m; ++r) {
            if (r == leave) continue;
            const double f = T[static_cast<std::size_t>(r)][static_cast<std::size_t>(enter)];
            if (f == 0.0) continue;
            for (int j = 0; j <= total; ++j)
                T[static_cast<std::size_t>(r)][static_cast<std::size_t>(j)] -= f * T[static_cast<std::size_t>(leave)][static_cast<std::size_t>(j)];
        }
        const double f = red[static_cast<std::size_t>(enter)];
        for (int j = 0; j <= total; ++j)
            red[static_cast<std::size_t>(j)] -= f * T[static_cast<std::size_t>(leave)][static_cast<std::size_t>(j)];
        basis[static_cast<std::size_t>(leave)] = enter;
    }

    Vector z = Vector::Zero(n_struct);
    for (int r = 0; r < m; ++r)
        if (basis[static_cast<std::size_t>(r)] < n_struct)
            z[basis[static_cast<std::size_t>(r)]] = T[static_cast<std::size_t>(r)][static_cast<std::size_t>(total)];
    Vector theta(p);
    for (int i = 0; i < p; ++i) {
        theta[i] = z[i] - S;
        REQUIRE(z[i] > 0.1); // shift was large enough
    }
    return l1_objective(theta, y, w, ages, alpha);
}

std::vector<double> iota_ages(int p, double start = 0.0) {
    std::vector<double> a(static_cast<std::size_t>(p));
    for (int i = 0; i < p; ++i) a[static_cast<std::size_t>(i)] = start + i;
    return a;
}

} // namespace

TEST_CASE("log_rate_variance evaluates 1/(mN) and rejects bad cells") {
    Matrix m(1, 2), N(1, 2);
    m << 0.01, 0.5;
    N << 10000, 2;
    const Matrix v = log_rate_variance(m, N);
    CHECK(v(0, 0) == doctest::Approx(0.01));
    CHECK(v(0, 1) == doctest::Approx(1.0));

    Matrix bad = m;
    bad(0, 0) = 0.0;
    CHECK_THROWS_AS(log_rate_variance(bad, N), DataError);
}

TEST_CASE("variance decreases as exposure grows at fixed rate") {
    Matrix m(3, 3), N(3, 3);
    for (int t = 0; t < 3; ++t)
        for (int i = 0; i < 3; ++i) {
            m(t, i) = 0.02;
            N(t, i) = 100.0 * (t + 1);
        }
    const Matrix v = log_rate_variance(m, N);
    for (int i = 0; i < 3; ++i) {
        CHECK(v(1, i) < v(0, i));
        CHECK(v(2, i) < v(1, i));
    }
}

TEST_CASE("alpha zero reproduces the data exactly") {
    RngStream rng(5);
    const int p = 10;
    Vector y(p), w(p);
    for (int i = 0; i < p; ++i) {
        y[i] = -4.0 + 0.3 * i + 0.1 * rng.normal();
        w[i] = 0.5 + rng.uniform(); // no ties
    }
    const Vector f = smooth_year(y, w, iota_ages(p), 0.0, 1e9);
    CHECK((f - y).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("large alpha drives curvature to zero") {
    const int p = 12;
    Vector y(p), w = Vector::Ones(p);
    const auto ages = iota_ages(p);
    for (int i = 0; i < p; ++i) y[i] = 0.05 * (i - 4.0) * (i - 4.0);
    const Vector f = smooth_year(y, w, ages, 1e7, 200.0);
    for (int i = 0; i + 2 < p; ++i) {
        const double d2 = f[i + 2] - 2.0 * f[i + 1] + f[i];
        CHECK(std::abs(d2) < 1e-6);
    }
}

TEST_CASE("monotone constraint binds on a downward spike at 80") {
    const int p = 16;
    std::vector<double> ages = iota_ages(p, 70.0);
    Vector y(p), w = Vector::Ones(p);
    for (int i = 0; i < p; ++i) y[i] = -3.0 + 0.08 * i;
    y[10] -= 1.0; // dip at age 80
    const Vector f = smooth_year(y, w, ages, 0.1, 65.0);
    for (int i = 0; i + 1 < p; ++i) CHECK(f[i] - f[i + 1] <= 1e-9);
    CHECK(f[10] >= f[9] - 1e-9);
}

TEST_CASE("objective matches an independent LP oracle for p <= 12") {
    RngStream rng(17);
    for (int rep = 0; rep < 6; ++rep) {
        const int p = 6 + 2 * (rep % 4);
        const auto ages = iota_ages(p, 60.0);
        Vector y(p), w(p);
        for (int i = 0; i < p; ++i) {
            y[i] = -3.0 + 0.1 * i + 0.4 * rng.normal();
            w[i] = 0.3 + 2.0 * rng.uniform();
        }
        for (double alpha : {0.0, 0.7, 8.0}) {
            const double mono = rep % 2 == 0 ? 65.0 : 1e9;
            const Vector f = smooth_year(y, w, ages, alpha, mono);
            const double got = l1_objective(f, y, w, ages, alpha);
            const double want = oracle_lp_objective(y, w, ages, alpha, mono);
            CHECK(std::abs(got - want) < 1e-6);
        }
    }
}

TEST_CASE("solution is locally optimal under coordinate perturbations") {
    RngStream rng(23);
    const int p = 14;
    const auto ages = iota_ages(p, 55.0);
    Vector y(p), w(p);
    for (int i = 0; i < p; ++i) {
        y[i] = -2.5 + 0.12 * i + 0.3 * rng.normal();
        w[i] = 0.5 + rng.uniform();
    }
    const double alpha = 1.3;
    const Vector f = smooth_year(y, w, ages, alpha, 65.0);
    const double base = l1_objective(f, y, w, ages, alpha);
    auto feasible = [&](const Vector& t) {
        for (int i = 0; i + 1 < p; ++i)
            if (ages[static_cast<std::size_t>(i)] >= 65.0 && t[i] > t[i + 1]) return false;
        return true;
    };
    for (int i = 0; i < p; ++i) {
        for (double d : {1e-3, -1e-3}) {
            Vector t = f;
            t[i] += d;
            if (!feasible(t)) continue;
            CHECK(l1_objective(t, y, w, ages, alpha) >= base - 1e-12);
        }
    }
}

TEST_CASE("smooth_surface of constant rates is the constant log rate") {
    const int n = 5, p = 8;
    Matrix rates = Matrix::Constant(n, p, 0.02);
    Matrix expo = Matrix::Constant(n, p, 1000.0);
    AgeGrid grid(iota_ages(p), false);
    SmoothOptions opts;
    opts.alpha = AlphaPolicy::fixed_value(2.0);
    const auto s = smooth_surface(rates, expo, grid, 2000, opts);
    CHECK((s.f.array() - std::log(0.02)).abs().maxCoeff() < 1e-9);
    CHECK((s.weights.array() - 0.02 * 1000.0).abs().maxCoeff() < 1e-9);
}

TEST_CASE("a low-weight outlier is pulled toward its neighbors harder") {
    const int p = 11;
    const auto ages = iota_ages(p);
    Vector y(p);
    for (int i = 0; i < p; ++i) y[i] = -3.0 + 0.1 * i;
    y[5] += 0.8;
    Vector w_hi = Vector::Ones(p), w_lo = Vector::Ones(p);
    w_hi[5] = 10.0;
    w_lo[5] = 0.05;
    const double alpha = 2.0;
    const Vector f_hi = smooth_year(y, w_hi, ages, alpha, 1e9);
    const Vector f_lo = smooth_year(y, w_lo, ages, alpha, 1e9);
    CHECK(std::abs(f_lo[5] - y[5]) > std::abs(f_hi[5] - y[5]) - 1e-12);
    CHECK(f_lo[5] < f_hi[5] + 1e-12);
}

TEST_CASE("monotone region invariant holds on random inputs") {
    RngStream rng(31);
    for (int rep = 0; rep < 5; ++rep) {
        const int p = 20;
        const auto ages = iota_ages(p, 50.0);
        Vector y(p), w(p);
        for (int i = 0; i < p; ++i) {
            y[i] = -3.0 + 0.05 * i + 0.5 * rng.normal();
            w[i] = 0.2 + rng.uniform();
        }
        const Vector f = smooth_year(y, w, ages, 0.5, 65.0);
        double worst = -1e9;
        for (int i = 0; i + 1 < p; ++i)
            if (ages[static_cast<std::size_t>(i)] >= 65.0) worst = std::max(worst, f[i] - f[i + 1]);
        CHECK(worst <= 1e-9);
    }
}

TEST_CASE("alpha selection returns a value from the policy grid") {
    RngStream rng(41);
    const int n = 6, p = 12;
    Matrix f(n, p), w(n, p);
    AgeGrid grid(iota_ages(p), false);
    for (int t = 0; t < n; ++t)
        for (int i = 0; i < p; ++i) {
            f(t, i) = -4.0 + 0.15 * i + 0.2 * rng.normal();
            w(t, i) = 1.0 + rng.uniform();
        }
    SmoothOptions opts;
    opts.alpha.cv_years = 2;
    opts.alpha.cv_ages = 4;
    const double a = select_alpha(f, w, grid, opts);
    const auto g = opts.alpha.alpha_grid();
    CHECK(std::find(g.begin(), g.end(), a) != g.end());
}
