#include "popmort/lifetable.hpp"

#include "popmort/stats.hpp"

#include <cmath>

namespace popmort::lt {

LifeTable life_table(const Vector& m, const AgeGrid& grid, const LifeTableOptions& opts) {
    const auto p = m.size();
    if (p != static_cast<Eigen::Index>(grid.size())) throw ConfigError("life_table: shape mismatch");
    if ((m.array() <= 0.0).any()) throw ConfigError("life_table: rates must be positive");

    LifeTable t;
    t.mx = m;
    t.qx = Vector(p);
    t.ax = Vector(p);
    t.lx = Vector(p);
    t.dx = Vector(p);
    t.Lx = Vector(p);
    t.Tx = Vector(p);
    t.ex = Vector(p);

    for (Eigen::Index i = 0; i < p; ++i) {
        if (i + 1 == p) {
            t.ax[i] = 1.0 / m[i]; // implied mean time lived in the open group
            t.qx[i] = 1.0;
            continue;
        }
        double a = 0.5;
        if (i == 0 && grid.ages[0] == 0.0 && opts.a0 == A0Rule::coale_demeny)
            a = std::min(0.35, 0.07 + 1.7 * m[0]);
        t.ax[i] = a;
        double q = m[i] / (1.0 + (1.0 - a) * m[i]);
        if (q >= 1.0) {
            q = 1.0 - 1e-12;
            t.clamped = true;
        }
        t.qx[i] = q;
    }

    t.lx[0] = 1.0;
    for (Eigen::Index i = 0; i < p; ++i) {
        t.dx[i] = t.lx[i] * t.qx[i];
        const double l_next = t.lx[i] - t.dx[i];
        if (i + 1 == p) {
            t.Lx[i] = t.lx[i] / m[i];
        } else {
            t.Lx[i] = l_next + t.ax[i] * t.dx[i];
            t.lx[i + 1] = l_next;
        }
    }
    double acc = 0.0;
    for (Eigen::Index i = p - 1; i >= 0; --i) {
        acc += t.Lx[i];
        t.Tx[i] = acc;
        t.ex[i] = t.lx[i] > 0.0 ? t.Tx[i] / t.lx[i] : 0.0;
    }
    return t;
}

double e0(const Vector& m, const AgeGrid& grid, const LifeTableOptions& opts) {
    return life_table(m, grid, opts).ex[0];
}

E0Distribution e0_distribution(const std::vector<Matrix>& log_rate_paths, const AgeGrid& grid,
                               const LifeTableOptions& opts) {
    if (log_rate_paths.empty()) throw ConfigError("e0_distribution: no paths");
    const auto H = log_rate_paths.front().rows();
    E0Distribution out;
    out.samples.assign(static_cast<std::size_t>(H), {});
    out.point = Vector(H);
    out.intervals = Matrix(H, 4);

    for (Eigen::Index h = 0; h < H; ++h) {
        auto& bucket = out.samples[static_cast<std::size_t>(h)];
        bucket.reserve(log_rate_paths.size());
        for (const auto& path : log_rate_paths) {
            if (path.rows() != H) throw ConfigError("e0_distribution: ragged paths");
            const Vector m = path.row(h).array().exp().matrix().transpose();
            bucket.push_back(e0(m, grid, opts));
        }
        out.point[h] = quantile(bucket, 0.5);
        out.intervals(h, 0) = quantile(bucket, 0.10);
        out.intervals(h, 1) = quantile(bucket, 0.90);
        out.intervals(h, 2) = quantile(bucket, 0.025);
        out.intervals(h, 3) = quantile(bucket, 0.975);
    }
    return out;
}

} // namespace popmort::lt
