#include "doctest.h"

#include "popmort/rng.hpp"

#include <cmath>

using popmort::RngStream;

TEST_CASE("streams are reproducible and distinct per address") {
    RngStream a(42, 1, 2, 3), b(42, 1, 2, 3), c(42, 1, 2, 4);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    int diff = 0;
    RngStream a2(42, 1, 2, 3);
    for (int i = 0; i < 100; ++i)
        if (a2.next_u64() != c.next_u64()) ++diff;
    CHECK(diff > 90);
}

TEST_CASE("uniform lies in [0,1) with sane moments") {
    RngStream r(7);
    double sum = 0, sum2 = 0;
    const int N = 50000;
    for (int i = 0; i < N; ++i) {
        const double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        sum += u;
        sum2 += u * u;
    }
    CHECK(sum / N == doctest::Approx(0.5).epsilon(0.02));
    CHECK(sum2 / N - (sum / N) * (sum / N) == doctest::Approx(1.0 / 12).epsilon(0.05));
}

TEST_CASE("normal and gamma match their first two moments") {
    RngStream r(11);
    const int N = 100000;
    double s = 0, s2 = 0;
    for (int i = 0; i < N; ++i) {
        const double z = r.normal();
        s += z;
        s2 += z * z;
    }
    CHECK(s / N == doctest::Approx(0.0).epsilon(0.02));
    CHECK(s2 / N == doctest::Approx(1.0).epsilon(0.02));

    const double shape = 3.5, scale = 2.0;
    s = s2 = 0;
    for (int i = 0; i < N; ++i) {
        const double g = r.gamma(shape, scale);
        s += g;
        s2 += g * g;
    }
    const double mean = s / N;
    CHECK(mean == doctest::Approx(shape * scale).epsilon(0.02));
    CHECK(s2 / N - mean * mean == doctest::Approx(shape * scale * scale).epsilon(0.05));

    // shape < 1 branch
    s = 0;
    for (int i = 0; i < N; ++i) s += r.gamma(0.4, 1.5);
    CHECK(s / N == doctest::Approx(0.4 * 1.5).epsilon(0.03));
}
