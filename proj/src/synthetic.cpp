#include "popmort/synthetic.hpp"

#include "popmort/rng.hpp"

#include <cmath>

namespace popmort::synthetic {

namespace {

double base_rate(double x) {
    // Infant decline + young-adult hump + senescent exponential.
    return 4e-3 * std::exp(-0.25 * x) + 3.5e-4 * std::exp(-0.5 * std::pow((x - 22.0) / 6.0, 2)) +
           3e-5 * std::exp(0.105 * x);
}

} // namespace

TwoSexSurfaces two_sex_surfaces(const TwoSexConfig& cfg) {
    if (cfg.n_years < 4 || cfg.p_ages < 4) throw ConfigError("two_sex_surfaces: grid too small");
    const int n = cfg.n_years, p = cfg.p_ages;

    std::vector<double> ages(static_cast<std::size_t>(p));
    for (int i = 0; i < p; ++i) ages[static_cast<std::size_t>(i)] = i;
    const bool open_last = true;

    TwoSexSurfaces out;
    out.grid = AgeGrid(ages, open_last);
    out.first_year = cfg.first_year;

    Vector mu(p), eta(p), b(p), c(p);
    double b_sum = 0.0;
    for (int i = 0; i < p; ++i) {
        const double x = ages[static_cast<std::size_t>(i)];
        mu[i] = std::log(base_rate(x));
        // Sex level gap, widest at young-adult ages.
        eta[i] = 0.20 * (0.4 + std::exp(-0.5 * std::pow((x - 25.0) / 20.0, 2)));
        // Improvement loading, stronger at childhood ages.
        b[i] = 1.5 - x / (p + 20.0);
        b_sum += b[i];
        // Sex residual pattern: oscillating, near-zero grid mean.
        c[i] = std::exp(-0.5 * std::pow((x - 25.0) / 12.0, 2)) -
               std::exp(-0.5 * std::pow((x - 55.0) / 18.0, 2));
    }
    b /= b_sum; // sum(b) = 1, Lee-Carter style scaling

    RngStream rng(cfg.seed, 0, 0, 0);
    Vector k(n);
    k[0] = 0.0;
    for (int t = 1; t < n; ++t)
        k[t] = k[t - 1] + cfg.common_drift + cfg.common_sd * rng.normal();

    const double stat_sd = cfg.resid_sd / std::sqrt(1.0 - cfg.resid_phi * cfg.resid_phi);
    double zF = stat_sd * rng.normal(), zM = stat_sd * rng.normal();
    Vector zfv(n), zmv(n);
    for (int t = 0; t < n; ++t) {
        zfv[t] = zF;
        zmv[t] = zM;
        zF = cfg.resid_phi * zF + cfg.resid_sd * rng.normal();
        zM = cfg.resid_phi * zM + cfg.resid_sd * rng.normal();
    }

    out.female = Matrix(n, p);
    out.male = Matrix(n, p);
    for (int t = 0; t < n; ++t) {
        for (int i = 0; i < p; ++i) {
            const double shared = mu[i] + b[i] * k[t];
            out.female(t, i) = shared - eta[i] + cfg.resid_scale * c[i] * zfv[t];
            out.male(t, i) = shared + eta[i] + cfg.resid_scale * c[i] * zmv[t];
        }
    }
    out.total = (out.female + out.male) / 2.0;
    return out;
}

MortalityDataset two_sex_dataset(const TwoSexConfig& cfg) {
    const auto surf = two_sex_surfaces(cfg);
    const int n = cfg.n_years, p = cfg.p_ages;

    RngStream rng(cfg.seed, 1, 0, 0);
    MortalityDataset ds;
    ds.grid = surf.grid;
    ds.first_year = cfg.first_year;

    Matrix expo(n, p);
    for (int t = 0; t < n; ++t)
        for (int i = 0; i < p; ++i)
            expo(t, i) = cfg.exposure_base * std::exp(-0.012 * i) * (1.0 + 0.004 * t);

    auto observe = [&](const Matrix& f) {
        Matrix m(n, p);
        for (int t = 0; t < n; ++t) {
            for (int i = 0; i < p; ++i) {
                const double rate = std::exp(f(t, i));
                const double delta = std::sqrt(1.0 / (rate * expo(t, i)));
                m(t, i) = std::exp(f(t, i) + cfg.noise_scale * delta * rng.normal());
            }
        }
        return m;
    };

    const Matrix mf = observe(surf.female);
    const Matrix mm = observe(surf.male);
    Matrix mt(n, p), et(n, p);
    for (int t = 0; t < n; ++t) {
        for (int i = 0; i < p; ++i) {
            et(t, i) = 2.0 * expo(t, i);
            mt(t, i) = (mf(t, i) * expo(t, i) + mm(t, i) * expo(t, i)) / et(t, i);
        }
    }

    const std::string name = "demo";
    ds.populations.push_back(
        {PopulationLabel{name, Sex::female, std::nullopt}, {mf, expo, {}}});
    ds.populations.push_back({PopulationLabel{name, Sex::male, std::nullopt}, {mm, expo, {}}});
    ds.populations.push_back({PopulationLabel{name, Sex::total, std::nullopt}, {mt, et, {}}});
    ds.hierarchy = default_hierarchy(ds.populations);
    ds.validate();
    return ds;
}

} // namespace popmort::synthetic
