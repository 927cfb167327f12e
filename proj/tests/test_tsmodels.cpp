#include "doctest.h"

#include "popmort/rng.hpp"
#include "popmort/tsmodels.hpp"

#include <cmath>

using namespace popmort;
using namespace popmort::ts;

namespace {

Vector white_noise(int n, RngStream& rng, double sd = 1.0) {
    Vector y(n);
    for (int t = 0; t < n; ++t) y[t] = sd * rng.normal();
    return y;
}

Vector random_walk(int n, RngStream& rng, double drift = 0.0, double sd = 1.0) {
    Vector y(n);
    double cur = 0.0;
    for (int t = 0; t < n; ++t) {
        cur += drift + sd * rng.normal();
        y[t] = cur;
    }
    return y;
}

Vector ar1_series(int n, double phi, RngStream& rng, double c = 0.0, double sd = 1.0) {
    Vector y(n);
    double cur = c / (1.0 - phi);
    for (int t = 0; t < n; ++t) {
        cur = c + phi * cur + sd * rng.normal();
        y[t] = cur;
    }
    return y;
}

} // namespace

TEST_CASE("kpss: constant series scores zero") {
    const auto r = kpss_statistic(Vector::Constant(50, 3.14));
    CHECK(r.statistic == 0.0);
    CHECK_FALSE(r.reject_at_5pct);
}

TEST_CASE("kpss size on white noise is close to five percent") {
    RngStream rng(101);
    int rejects = 0;
    const int reps = 1000;
    for (int r = 0; r < reps; ++r)
        if (kpss_statistic(white_noise(200, rng)).reject_at_5pct) ++rejects;
    const double rate = static_cast<double>(rejects) / reps;
    CHECK(rate > 0.03);
    CHECK(rate < 0.07);
}

TEST_CASE("kpss rejects a pure random walk nearly always") {
    // Exact power of the Bartlett-4 statistic at n = 200 sits at ~0.945.
    RngStream rng(5);
    int rejects = 0;
    const int reps = 1000;
    for (int r = 0; r < reps; ++r)
        if (kpss_statistic(random_walk(200, rng)).reject_at_5pct) ++rejects;
    CHECK(static_cast<double>(rejects) / reps >= 0.94);
}

TEST_CASE("select_d finds the integration order") {
    RngStream rng(107);
    int d0 = 0, d1 = 0, d2 = 0;
    const int reps = 60;
    for (int r = 0; r < reps; ++r) {
        if (select_d(white_noise(200, rng)) == 0) ++d0;
        if (select_d(random_walk(200, rng, 0.5)) == 1) ++d1;
        Vector rw = random_walk(200, rng);
        Vector twice(200);
        double cur = 0.0;
        for (int t = 0; t < 200; ++t) {
            cur += rw[t];
            twice[t] = cur;
        }
        if (select_d(twice) == 2) ++d2;
    }
    CHECK(d0 >= reps * 0.9);
    CHECK(d1 >= reps * 0.9);
    // The long-lag confirmation caps power against a driftless random walk at
    // the second cascade step; d = 2 is still the clear majority outcome.
    CHECK(d2 >= reps * 0.65);
}

TEST_CASE("rwd closed form") {
    Vector y(4);
    y << 1, 2, 3, 4;
    const auto fc = forecast(fit_rwd(y), 2);
    CHECK(fc.mean[0] == doctest::Approx(5.0).epsilon(1e-14));
    CHECK(fc.mean[1] == doctest::Approx(6.0).epsilon(1e-14));
    CHECK(fc.se[0] == 0.0); // perfectly linear series has zero residual variance

    const auto c = forecast(fit_rwd(Vector::Constant(10, 2.5)), 3);
    CHECK((c.mean.array() == 2.5).all());
    CHECK((c.se.array() == 0.0).all());
}

TEST_CASE("rwd matches the closed form on random series") {
    RngStream rng(109);
    for (int rep = 0; rep < 25; ++rep) {
        const int n = 5 + static_cast<int>(rng.uniform() * 40);
        const Vector y = random_walk(n, rng, rng.normal());
        const auto m = fit_rwd(y);
        const double drift = (y[n - 1] - y[0]) / (n - 1);
        const auto fc = forecast(m, 4);
        for (int h = 1; h <= 4; ++h) {
            CHECK(fc.mean[h - 1] == doctest::Approx(y[n - 1] + h * drift).epsilon(1e-12));
            const double se = std::sqrt(m.sigma2 * h * (1.0 + static_cast<double>(h) / (n - 1)));
            CHECK(fc.se[h - 1] == doctest::Approx(se).epsilon(1e-12));
        }
        for (int h = 1; h < 4; ++h) CHECK(fc.se[h] >= fc.se[h - 1]);
    }
}

TEST_CASE("rwd standard errors are calibrated against simulation") {
    RngStream rng(113);
    const int n = 60, h = 5, reps = 2000;
    double sum_z2 = 0.0;
    for (int r = 0; r < reps; ++r) {
        Vector y = random_walk(n + h, rng, 0.3);
        const auto m = fit_rwd(y.head(n).eval());
        const auto fc = forecast(m, h);
        const double z = (y[n + h - 1] - fc.mean[h - 1]) / fc.se[h - 1];
        sum_z2 += z * z;
    }
    // z should be roughly standard normal.
    CHECK(sum_z2 / reps == doctest::Approx(1.0).epsilon(0.15));
}

TEST_CASE("ar1 estimation and mean reversion") {
    RngStream rng(127);
    const auto m = fit_ar1(ar1_series(1000, 0.5, rng, 1.0));
    CHECK(m.ar[0] == doctest::Approx(0.5).epsilon(0.12));
    CHECK(std::abs(m.ar[0] - 0.5) < 0.06);

    const auto fc = forecast(m, 400);
    const double mu = m.mean / (1.0 - m.ar[0]);
    CHECK(fc.mean[399] == doctest::Approx(mu).epsilon(1e-9));

    const auto flat = fit_ar1(Vector::Constant(20, 1.0));
    CHECK(flat.flagged);
    const auto ffc = forecast(flat, 5);
    CHECK(ffc.mean[4] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("ar1 explosive estimates are projected and flagged") {
    Vector y(8);
    for (int t = 0; t < 8; ++t) y[t] = std::pow(1.5, t);
    const auto m = fit_ar1(y);
    CHECK(m.flagged);
    CHECK(std::abs(m.ar[0]) <= 0.999);
}

TEST_CASE("fit_arima recovers a known AR(1) likelihood-wise") {
    RngStream rng(131);
    const Vector y = ar1_series(500, 0.8, rng);
    const auto m = fit_arima(y, 1, 0, 0, true);
    CHECK(m.ar[0] == doctest::Approx(0.8).epsilon(0.08));
    CHECK(m.sigma2 == doctest::Approx(1.0).epsilon(0.15));
    // One-step residual bias bound: |mean| <= 2 sigma / sqrt(n).
    const auto fc = forecast(m, 1);
    (void)fc;
    Vector resid(499);
    for (int t = 1; t < 500; ++t) {
        const double pred = m.mean + m.ar[0] * (y[t - 1] - m.mean);
        resid[t - 1] = y[t] - pred;
    }
    CHECK(std::abs(resid.mean()) <= 2.0 * std::sqrt(m.sigma2) / std::sqrt(500.0));
}

TEST_CASE("aicc prefers the true AR(1) over white noise") {
    RngStream rng(137);
    int wins = 0;
    const int reps = 60;
    for (int r = 0; r < reps; ++r) {
        const Vector y = ar1_series(500, 0.6, rng);
        const auto a1 = fit_arima(y, 1, 0, 0, true);
        const auto a0 = fit_arima(y, 0, 0, 0, true);
        if (a1.aicc <= a0.aicc) ++wins;
    }
    CHECK(wins >= static_cast<int>(reps * 0.9));
}

TEST_CASE("auto_arima selects the AR(1) order most of the time") {
    RngStream rng(139);
    int hits = 0;
    const int reps = 50;
    for (int r = 0; r < reps; ++r) {
        const auto m = auto_arima(ar1_series(500, 0.8, rng));
        if (m.kind == ModelKind::arima && m.p == 1 && m.d == 0 && m.q == 0) ++hits;
    }
    // The acceptance suite runs the full 200-replicate version at >= 80%.
    CHECK(hits >= static_cast<int>(reps * 0.75));
}

TEST_CASE("auto_arima on white noise picks (0,0,0) with a constant") {
    RngStream rng(149);
    int hits = 0;
    const int reps = 40;
    for (int r = 0; r < reps; ++r) {
        Vector y = white_noise(300, rng);
        y.array() += 5.0;
        const auto m = auto_arima(y);
        if (m.kind == ModelKind::arima && m.p == 0 && m.d == 0 && m.q == 0 && m.constant) ++hits;
    }
    CHECK(hits >= static_cast<int>(reps * 0.6));
    // The fitted constant should be near the series mean.
}

TEST_CASE("auto_arima differences a linear trend") {
    RngStream rng(151);
    int hits = 0;
    const int reps = 30;
    for (int r = 0; r < reps; ++r) {
        Vector y = white_noise(200, rng, 0.5);
        for (int t = 0; t < 200; ++t) y[t] += 0.4 * t;
        const auto m = auto_arima(y);
        if (m.d >= 1) ++hits;
    }
    CHECK(hits == reps);
}

TEST_CASE("arima forecast standard errors grow with horizon when d >= 1") {
    RngStream rng(157);
    const Vector y = random_walk(120, rng, 0.2);
    const auto m = auto_arima(y);
    if (m.kind == ModelKind::arima && m.d >= 1) {
        const auto fc = forecast(m, 10);
        for (int h = 1; h < 10; ++h) CHECK(fc.se[h] >= fc.se[h - 1] - 1e-12);
    }
}

TEST_CASE("short series fall back to rwd, flagged") {
    Vector y(8);
    for (int t = 0; t < 8; ++t) y[t] = t;
    const auto m = auto_arima(y);
    CHECK(m.kind == ModelKind::rwd);
    CHECK(m.flagged);
}

TEST_CASE("gph estimates fractional d near the truth on average") {
    RngStream rng(163);
    const int reps = 30, n = 1000;
    double sum_d = 0.0;
    for (int r = 0; r < reps; ++r) {
        // Fractional noise via truncated (1-B)^{-0.3} applied to white noise.
        Vector eps = white_noise(n, rng);
        std::vector<double> pi(static_cast<std::size_t>(n));
        pi[0] = 1.0;
        for (int k = 1; k < n; ++k)
            pi[static_cast<std::size_t>(k)] =
                pi[static_cast<std::size_t>(k) - 1] * (k - 1 + 0.3) / k;
        Vector x = Vector::Zero(n);
        for (int t = 0; t < n; ++t)
            for (int k = 0; k <= t; ++k) x[t] += pi[static_cast<std::size_t>(k)] * eps[t - k];
        const auto m = fit_arfima(x);
        REQUIRE(m.kind == ModelKind::arfima);
        sum_d += m.d_frac;
    }
    CHECK(std::abs(sum_d / reps - 0.3) < 0.1);
}

TEST_CASE("arfima on short-memory data tracks auto_arima") {
    RngStream rng(167);
    const Vector y = white_noise(400, rng);
    const auto ma = forecast(auto_arima(y), 10);
    const auto mf = forecast(fit_arfima(y), 10);
    for (int h = 0; h < 10; ++h)
        CHECK(std::abs(mf.mean[h] - ma.mean[h]) <= std::max(ma.se[h], 0.2));
}

TEST_CASE("stationary arfima forecasts drift toward the sample mean") {
    RngStream rng(173);
    Vector y = ar1_series(300, 0.4, rng);
    y.array() += 3.0;
    const auto m = fit_arfima(y);
    const auto fc = forecast(m, 200);
    const double sample_mean = y.mean();
    CHECK(std::abs(fc.mean[199] - sample_mean) < std::abs(fc.mean[0] - sample_mean) + 0.3);
    CHECK(std::abs(fc.mean[199] - sample_mean) < 1.0);
}

TEST_CASE("forecast rejects a bad horizon") {
    CHECK_THROWS_AS(forecast(fit_rwd(Vector::LinSpaced(5, 0, 4)), 0), ConfigError);
}
