#include "popmort/tsmodels.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <map>
#include <numbers>
#include <tuple>

namespace popmort::ts {

namespace {

constexpr double kKpssCrit5 = 0.463;

double sample_sd(const Vector& x) {
    if (x.size() < 2) return 0.0;
    const double m = x.mean();
    return std::sqrt((x.array() - m).square().sum() / static_cast<double>(x.size() - 1));
}

// ---------------------------------------------------------------------------
// Nelder-Mead minimizer (used for the ARMA likelihood only).

double nelder_mead(const std::function<double(const Vector&)>& fn, Vector& x, double step,
                   double tol, int max_iter) {
    const int n = static_cast<int>(x.size());
    if (n == 0) return fn(x);
    std::vector<Vector> pts(static_cast<std::size_t>(n) + 1, x);
    std::vector<double> fv(static_cast<std::size_t>(n) + 1);
    for (int i = 0; i < n; ++i) pts[static_cast<std::size_t>(i) + 1][i] += step;
    for (std::size_t i = 0; i <= static_cast<std::size_t>(n); ++i) fv[i] = fn(pts[i]);

    auto order = [&] {
        std::vector<std::size_t> idx(fv.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return fv[a] < fv[b]; });
        std::vector<Vector> p2;
        std::vector<double> f2;
        for (auto i : idx) {
            p2.push_back(pts[i]);
            f2.push_back(fv[i]);
        }
        pts = std::move(p2);
        fv = std::move(f2);
    };

    for (int it = 0; it < max_iter; ++it) {
        order();
        if (std::abs(fv.back() - fv.front()) < tol * (std::abs(fv.front()) + tol)) break;
        Vector centroid = Vector::Zero(n);
        for (int i = 0; i < n; ++i) centroid += pts[static_cast<std::size_t>(i)];
        centroid /= n;

        const Vector xr = centroid + (centroid - pts.back());
        const double fr = fn(xr);
        if (fr < fv.front()) {
            const Vector xe = centroid + 2.0 * (centroid - pts.back());
            const double fe = fn(xe);
            if (fe < fr) { pts.back() = xe; fv.back() = fe; }
            else { pts.back() = xr; fv.back() = fr; }
        } else if (fr < fv[fv.size() - 2]) {
            pts.back() = xr;
            fv.back() = fr;
        } else {
            const Vector xc = centroid + 0.5 * (pts.back() - centroid);
            const double fc = fn(xc);
            if (fc < fv.back()) { pts.back() = xc; fv.back() = fc; }
            else {
                for (std::size_t i = 1; i < pts.size(); ++i) {
                    pts[i] = pts.front() + 0.5 * (pts[i] - pts.front());
                    fv[i] = fn(pts[i]);
                }
            }
        }
    }
    order();
    x = pts.front();
    return fv.front();
}

// ---------------------------------------------------------------------------
// Stationarity-preserving parametrization: unconstrained reals -> partial
// autocorrelations in (-1, 1) -> AR coefficients (Durbin-Levinson).

Vector pacf_to_ar(const Vector& r) {
    const int p = static_cast<int>(r.size());
    Vector phi = r, work = r;
    for (int k = 1; k < p; ++k) {
        for (int i = 0; i < k; ++i) work[i] = phi[i] - r[k] * phi[k - 1 - i];
        for (int i = 0; i < k; ++i) phi[i] = work[i];
        phi[k] = r[k];
    }
    return phi;
}

struct ArmaLik {
    double loglik = -std::numeric_limits<double>::infinity();
    double sigma2 = 0.0;
    bool ok = false;
};

// Exact Gaussian likelihood of a zero-mean ARMA via the Kalman filter with the
// stationary initial state covariance; sigma2 is concentrated out.
ArmaLik arma_loglik(const Vector& z, const Vector& phi, const Vector& theta) {
    const int p = static_cast<int>(phi.size());
    const int q = static_cast<int>(theta.size());
    const int m = std::max(p, q + 1);
    const auto N = z.size();

    Matrix T = Matrix::Zero(m, m);
    for (int i = 0; i < p; ++i) T(i, 0) = phi[i];
    for (int i = 0; i + 1 < m; ++i) T(i, i + 1) = 1.0;
    Vector R = Vector::Zero(m);
    R[0] = 1.0;
    for (int j = 0; j < q; ++j) R[j + 1] = theta[j];
    const Matrix RR = R * R.transpose();

    // Stationary P0: vec(P) = (I - T (x) T)^{-1} vec(RR').
    Matrix P(m, m);
    {
        const int mm = m * m;
        Matrix A = Matrix::Identity(mm, mm);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j)
                for (int k = 0; k < m; ++k)
                    for (int l = 0; l < m; ++l) A(i + j * m, k + l * m) -= T(i, k) * T(j, l);
        Vector vecRR(mm);
        for (int j = 0; j < m; ++j)
            for (int i = 0; i < m; ++i) vecRR[i + j * m] = RR(i, j);
        const Vector vecP = A.partialPivLu().solve(vecRR);
        for (int j = 0; j < m; ++j)
            for (int i = 0; i < m; ++i) P(i, j) = vecP[i + j * m];
    }
    if (!P.allFinite()) return {};

    Vector a = Vector::Zero(m);
    double sumlogF = 0.0, ssq = 0.0;
    for (Eigen::Index t = 0; t < N; ++t) {
        const double F = P(0, 0);
        if (!(F > 1e-12) || !std::isfinite(F)) return {};
        const double v = z[t] - a[0];
        sumlogF += std::log(F);
        ssq += v * v / F;
        const Vector K = T * P.col(0) / F;
        a = T * a + K * v;
        P = T * P * T.transpose() - K * K.transpose() * F + RR;
        P = 0.5 * (P + P.transpose());
    }
    ArmaLik out;
    out.sigma2 = ssq / static_cast<double>(N);
    if (out.sigma2 <= 0.0) return {};
    out.loglik = -0.5 * static_cast<double>(N) *
                     (std::log(2.0 * std::numbers::pi) + 1.0 + std::log(out.sigma2)) -
                 0.5 * sumlogF;
    out.ok = std::isfinite(out.loglik);
    return out;
}

double aicc_from(double loglik, int k, int n_eff) {
    if (n_eff - k - 1 <= 0) return std::numeric_limits<double>::infinity();
    return -2.0 * loglik + 2.0 * k * static_cast<double>(n_eff) / (n_eff - k - 1);
}

int n_params(const FittedTsModel& m) { return m.p + m.q + (m.constant ? 1 : 0); }

// CSS residuals of the fitted ARMA, used to seed the forecast recursion.
Vector css_residuals(const Vector& zc, const Vector& phi, const Vector& theta) {
    const auto N = zc.size();
    const int p = static_cast<int>(phi.size());
    const int q = static_cast<int>(theta.size());
    Vector a = Vector::Zero(N);
    for (Eigen::Index t = 0; t < N; ++t) {
        double v = zc[t];
        for (int i = 1; i <= p; ++i)
            if (t - i >= 0) v -= phi[i - 1] * zc[t - i];
        for (int j = 1; j <= q; ++j)
            if (t - j >= 0) v -= theta[j - 1] * a[t - j];
        a[t] = v;
    }
    return a;
}

// Coefficients of (1 - B)^d for real d, pi_0 = 1.
std::vector<double> frac_diff_coeffs(double d, int length) {
    std::vector<double> pi(static_cast<std::size_t>(length));
    pi[0] = 1.0;
    for (int k = 1; k < length; ++k)
        pi[static_cast<std::size_t>(k)] = pi[static_cast<std::size_t>(k) - 1] * (k - 1 - d) / k;
    return pi;
}

Vector apply_frac_diff(const Vector& x, double d) {
    const auto N = x.size();
    const auto pi = frac_diff_coeffs(d, static_cast<int>(N));
    Vector w = Vector::Zero(N);
    for (Eigen::Index t = 0; t < N; ++t) {
        double s = 0.0;
        for (Eigen::Index k = 0; k <= t; ++k) s += pi[static_cast<std::size_t>(k)] * x[t - k];
        w[t] = s;
    }
    return w;
}

// psi weights of theta(B) / (phi(B) (1-B)^{d_int + d_frac}) up to horizon H.
std::vector<double> psi_weights(const Vector& phi, const Vector& theta, int d_int, double d_frac,
                                int H) {
    // Expanded AR-side polynomial phi(B) (1-B)^d as a coefficient vector.
    std::vector<double> poly(static_cast<std::size_t>(phi.size()) + 1, 0.0);
    poly[0] = 1.0;
    for (int i = 0; i < phi.size(); ++i) poly[static_cast<std::size_t>(i) + 1] = -phi[i];
    auto convolve = [&](const std::vector<double>& a, const std::vector<double>& b) {
        std::vector<double> c(std::min<std::size_t>(a.size() + b.size() - 1,
                                                    static_cast<std::size_t>(H) + 1),
                              0.0);
        for (std::size_t i = 0; i < a.size(); ++i)
            for (std::size_t j = 0; j < b.size() && i + j < c.size(); ++j) c[i + j] += a[i] * b[j];
        return c;
    };
    for (int k = 0; k < d_int; ++k) poly = convolve(poly, {1.0, -1.0});
    if (d_frac != 0.0) poly = convolve(poly, frac_diff_coeffs(d_frac, H + 1));

    std::vector<double> psi(static_cast<std::size_t>(H) + 1, 0.0);
    psi[0] = 1.0;
    for (int j = 1; j <= H; ++j) {
        double s = j <= theta.size() ? theta[j - 1] : 0.0;
        for (std::size_t i = 1; i < poly.size() && static_cast<int>(i) <= j; ++i)
            s -= poly[i] * psi[static_cast<std::size_t>(j) - i];
        psi[static_cast<std::size_t>(j)] = s;
    }
    return psi;
}

} // namespace

Vector difference(const Vector& series, int d) {
    Vector x = series;
    for (int k = 0; k < d; ++k) {
        if (x.size() < 2) throw ConfigError("difference: series too short");
        x = (x.tail(x.size() - 1) - x.head(x.size() - 1)).eval();
    }
    return x;
}

KpssResult kpss_statistic(const Vector& series, KpssLags lags) {
    const auto T = series.size();
    if (T < 10) throw ConfigError("kpss_statistic: need n >= 10");
    const double mult = lags == KpssLags::bartlett_short ? 4.0 : 12.0;
    const int L = static_cast<int>(std::floor(mult * std::pow(static_cast<double>(T) / 100.0, 0.25)));

    KpssResult res;
    res.lags = L;
    const Vector e = series.array() - series.mean();
    if (e.cwiseAbs().maxCoeff() == 0.0) return res; // constant series

    double numer = 0.0, S = 0.0;
    for (Eigen::Index t = 0; t < T; ++t) {
        S += e[t];
        numer += S * S;
    }
    numer /= static_cast<double>(T) * static_cast<double>(T);

    double lrv = e.squaredNorm() / static_cast<double>(T);
    for (int l = 1; l <= L; ++l) {
        double g = 0.0;
        for (Eigen::Index t = l; t < T; ++t) g += e[t] * e[t - l];
        g /= static_cast<double>(T);
        lrv += 2.0 * (1.0 - static_cast<double>(l) / (L + 1)) * g;
    }
    if (!(lrv > 0.0)) return res;
    res.statistic = numer / lrv;
    res.reject_at_5pct = res.statistic > kKpssCrit5;
    return res;
}

int select_d(const Vector& series, int max_d) {
    Vector x = series;
    for (int d = 0; d <= max_d; ++d) {
        if (x.size() < 10) return d;
        const bool reject = kpss_statistic(x, KpssLags::bartlett_short).reject_at_5pct &&
                            kpss_statistic(x, KpssLags::bartlett_long).reject_at_5pct;
        if (!reject) return d;
        if (d < max_d) x = difference(x, 1);
    }
    return max_d;
}

FittedTsModel fit_arima(const Vector& series, int p, int d, int q, bool constant) {
    if (p < 0 || q < 0 || d < 0) throw ConfigError("fit_arima: negative order");
    const Vector w = difference(series, d);
    const auto N = w.size();
    const int k = p + q + (constant ? 1 : 0) + 1;
    if (N < k + 2) throw ConfigError("fit_arima: series too short for the requested order");

    FittedTsModel m;
    m.kind = ModelKind::arima;
    m.p = p;
    m.d = d;
    m.q = q;
    m.constant = constant;
    m.n = static_cast<int>(series.size());
    m.series = series;

    const double scale = sample_sd(w);
    if (scale == 0.0) {
        // Degenerate (constant after differencing): exact fit with no noise.
        m.p = 0;
        m.q = 0;
        m.ar = Vector::Zero(0);
        m.ma = Vector::Zero(0);
        m.mean = constant ? w[0] : 0.0;
        m.sigma2 = 0.0;
        m.loglik = 1e15;
        m.aicc = -1e15;
        return m;
    }
    const Vector ws = w / scale;
    const double w_mean0 = constant ? ws.mean() : 0.0;

    const int dim = (constant ? 1 : 0) + p + q;
    auto unpack = [&](const Vector& x, double& mu, Vector& phi, Vector& theta) {
        int at = 0;
        mu = constant ? x[at++] : 0.0;
        Vector r(p);
        for (int i = 0; i < p; ++i) r[i] = std::tanh(x[at++]);
        phi = pacf_to_ar(r);
        Vector s(q);
        for (int j = 0; j < q; ++j) s[j] = std::tanh(x[at++]);
        theta = -pacf_to_ar(s);
    };
    auto objective = [&](const Vector& x) -> double {
        double mu;
        Vector phi, theta;
        unpack(x, mu, phi, theta);
        const auto lik = arma_loglik(ws.array() - mu, phi, theta);
        return lik.ok ? -lik.loglik : 1e12;
    };

    Vector x0 = Vector::Zero(dim);
    if (constant) x0[0] = w_mean0;
    double best = objective(x0);
    if (dim > 0) {
        best = nelder_mead(objective, x0, 0.4, 1e-10, 400 * dim + 400);
        // One restart with a fresh simplex around the optimum.
        Vector x1 = x0;
        const double b2 = nelder_mead(objective, x1, 0.1, 1e-10, 400 * dim + 400);
        if (b2 < best - 1e-8) {
            best = b2;
            x0 = x1;
        }
    }

    double mu;
    Vector phi, theta;
    unpack(x0, mu, phi, theta);
    const auto lik = arma_loglik(ws.array() - mu, phi, theta);
    if (!lik.ok) throw NumericError("fit_arima: likelihood evaluation failed at the optimum");

    m.ar = phi;
    m.ma = theta;
    m.mean = mu * scale;
    m.sigma2 = lik.sigma2 * scale * scale;
    m.loglik = lik.loglik - static_cast<double>(N) * std::log(scale);
    m.aicc = aicc_from(m.loglik, p + q + (constant ? 1 : 0) + 1, static_cast<int>(N));
    return m;
}

namespace {

// Stepwise neighborhood search at fixed d over (p, q, constant).
FittedTsModel stepwise_search(const Vector& series, int d, bool allow_const) {
    const auto N = series.size() - d;
    const int max_order = std::min<int>(5, static_cast<int>(N / 3));

    std::map<std::tuple<int, int, bool>, FittedTsModel> cache;
    auto eval = [&](int p, int q, bool c) -> const FittedTsModel& {
        const auto key = std::make_tuple(p, q, c);
        auto it = cache.find(key);
        if (it == cache.end()) {
            FittedTsModel m;
            m.aicc = std::numeric_limits<double>::infinity();
            if (p >= 0 && q >= 0 && p <= max_order && q <= max_order && (allow_const || !c)) {
                try {
                    m = fit_arima(series, p, d, q, c);
                } catch (const std::exception&) {
                    m.aicc = std::numeric_limits<double>::infinity();
                }
            }
            it = cache.emplace(key, std::move(m)).first;
        }
        return it->second;
    };
    // Ties (and near-ties) go to the smaller model: a richer candidate must
    // beat the incumbent by a margin per extra parameter, which keeps the
    // search from drifting into overfitted neighbors on noise.
    constexpr double kParsimonyMargin = 2.0;
    auto better = [&](const FittedTsModel& a, const FittedTsModel& b) {
        const int ka = n_params(a), kb = n_params(b);
        if (ka == kb) return a.aicc < b.aicc - 1e-9;
        if (ka < kb) return a.aicc < b.aicc + 1e-9; // simpler model wins ties
        return a.aicc < b.aicc - kParsimonyMargin * (ka - kb);
    };

    FittedTsModel best;
    best.aicc = std::numeric_limits<double>::infinity();
    const bool c0 = allow_const;
    for (auto [p, q] : {std::pair{2, 2}, {0, 0}, {1, 0}, {0, 1}}) {
        const auto& m = eval(p, q, c0);
        if (better(m, best)) best = m;
    }
    if (!std::isfinite(best.aicc)) {
        for (auto [p, q] : {std::pair{2, 2}, {0, 0}, {1, 0}, {0, 1}}) {
            const auto& m = eval(p, q, false);
            if (better(m, best)) best = m;
        }
    }
    if (!std::isfinite(best.aicc)) return best;

    for (;;) {
        bool improved = false;
        const int p = best.p, q = best.q;
        const bool c = best.constant;
        const std::pair<int, int> moves[] = {{p - 1, q}, {p + 1, q}, {p, q - 1}, {p, q + 1},
                                             {p - 1, q - 1}, {p + 1, q + 1}, {p - 1, q + 1},
                                             {p + 1, q - 1}};
        for (const auto& [np, nq] : moves) {
            const auto& m = eval(np, nq, c);
            if (better(m, best)) {
                best = m;
                improved = true;
            }
        }
        if (allow_const) {
            const auto& m = eval(p, q, !c);
            if (better(m, best)) {
                best = m;
                improved = true;
            }
        }
        if (!improved) break;
    }
    return best;
}

} // namespace

FittedTsModel auto_arima(const Vector& series) {
    if (series.size() < 15) {
        auto m = fit_rwd(series);
        m.flagged = true;
        return m;
    }
    const int d = select_d(series, 2);
    FittedTsModel best = stepwise_search(series, d, d <= 1);
    if (!std::isfinite(best.aicc)) {
        auto m = fit_rwd(series);
        m.flagged = true;
        return m;
    }
    return best;
}

FittedTsModel fit_rwd(const Vector& series) {
    const auto n = series.size();
    if (n < 2) throw ConfigError("fit_rwd: need n >= 2");
    FittedTsModel m;
    m.kind = ModelKind::rwd;
    m.n = static_cast<int>(n);
    m.series = series;
    m.d = 1;
    m.constant = true;
    m.drift = (series[n - 1] - series[0]) / static_cast<double>(n - 1);
    m.mean = m.drift;
    double ssq = 0.0;
    for (Eigen::Index t = 1; t < n; ++t) {
        const double e = series[t] - series[t - 1] - m.drift;
        ssq += e * e;
    }
    m.sigma2 = n > 2 ? ssq / static_cast<double>(n - 2) : 0.0;
    return m;
}

FittedTsModel fit_ar1(const Vector& series) {
    const auto n = series.size();
    if (n < 5) throw ConfigError("fit_ar1: need n >= 5");
    FittedTsModel m;
    m.kind = ModelKind::ar1;
    m.p = 1;
    m.n = static_cast<int>(n);
    m.series = series;
    m.constant = true;

    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const auto N = n - 1;
    for (Eigen::Index t = 1; t < n; ++t) {
        sx += series[t - 1];
        sy += series[t];
        sxx += series[t - 1] * series[t - 1];
        sxy += series[t - 1] * series[t];
    }
    const double denom = sxx - sx * sx / static_cast<double>(N);
    double phi;
    if (std::abs(denom) < 1e-12 * std::max(1.0, sxx)) {
        phi = 0.0; // indeterminate (constant regressor)
        m.flagged = true;
    } else {
        phi = (sxy - sx * sy / static_cast<double>(N)) / denom;
    }
    if (std::abs(phi) >= 1.0) {
        phi = phi > 0 ? 0.999 : -0.999;
        m.flagged = true;
    }
    const double c = (sy - phi * sx) / static_cast<double>(N);
    m.ar = Vector::Constant(1, phi);
    m.mean = c;
    double ssq = 0.0;
    for (Eigen::Index t = 1; t < n; ++t) {
        const double e = series[t] - c - phi * series[t - 1];
        ssq += e * e;
    }
    m.sigma2 = N > 2 ? ssq / static_cast<double>(N - 2) : 0.0;
    return m;
}

namespace {

// GPH log-periodogram regression on the lowest floor(sqrt(N)) frequencies.
double gph_estimate(const Vector& x) {
    const Vector xc = x.array() - x.mean();
    const auto N = xc.size();
    const int nf = static_cast<int>(std::floor(std::sqrt(static_cast<double>(N))));
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int cnt = 0;
    for (int j = 1; j <= nf; ++j) {
        const double lam = 2.0 * std::numbers::pi * j / static_cast<double>(N);
        std::complex<double> acc(0.0, 0.0);
        for (Eigen::Index t = 0; t < N; ++t)
            acc += xc[t] * std::exp(std::complex<double>(0.0, -lam * static_cast<double>(t)));
        const double I = std::norm(acc) / (2.0 * std::numbers::pi * static_cast<double>(N));
        if (!(I > 0.0)) continue;
        const double X = std::log(4.0 * std::pow(std::sin(lam / 2.0), 2));
        sx += X;
        sy += std::log(I);
        sxx += X * X;
        sxy += X * std::log(I);
        ++cnt;
    }
    if (cnt < 3) return 0.0;
    return -(sxy - sx * sy / cnt) / (sxx - sx * sx / cnt);
}

} // namespace

FittedTsModel fit_arfima(const Vector& series) {
    if (series.size() < 30) {
        auto m = auto_arima(series);
        m.flagged = true;
        return m;
    }
    // Estimate the memory parameter first; difference once if it points at a
    // nonstationary d, then re-estimate on the differenced series.
    int d_int = 0;
    double d_frac = gph_estimate(series);
    if (d_frac > 0.5) {
        d_int = 1;
        d_frac = gph_estimate(difference(series, 1));
    }
    Vector x = difference(series, d_int);
    const double x_mean = x.mean();
    const Vector xc = x.array() - x_mean;

    bool clamped = false;
    if (d_frac <= -0.49 || d_frac >= 0.49) {
        d_frac = std::clamp(d_frac, -0.49, 0.49);
        clamped = true;
    }

    const Vector w = apply_frac_diff(xc, d_frac);
    FittedTsModel arma = stepwise_search(w, 0, true);
    if (!std::isfinite(arma.aicc)) {
        auto m = fit_rwd(series);
        m.flagged = true;
        return m;
    }
    FittedTsModel m = arma;
    m.kind = ModelKind::arfima;
    m.d = d_int;
    m.d_frac = d_frac;
    m.n = static_cast<int>(series.size());
    m.series = series;
    m.flagged = clamped;
    // drift field reused to carry the mean of the integer-differenced series.
    m.drift = x_mean;
    return m;
}

namespace {

// ARMA mean forecasts of the (differenced, centered) series via the CSS
// residual recursion; returns H values.
Vector arma_mean_forecast(const Vector& zc, const Vector& phi, const Vector& theta, int H) {
    const auto N = zc.size();
    const Vector a = css_residuals(zc, phi, theta);
    const int p = static_cast<int>(phi.size());
    const int q = static_cast<int>(theta.size());
    Vector zf(H);
    auto zval = [&](Eigen::Index idx) -> double {
        return idx < N ? zc[idx] : zf[idx - N];
    };
    for (int h = 0; h < H; ++h) {
        const Eigen::Index t = N + h;
        double v = 0.0;
        for (int i = 1; i <= p; ++i)
            if (t - i >= 0) v += phi[i - 1] * zval(t - i);
        for (int j = 1; j <= q; ++j)
            if (t - j >= 0 && t - j < N) v += theta[j - 1] * a[t - j];
        zf[h] = v;
    }
    return zf;
}

// Integrate differenced-scale forecasts back to the original scale using the
// last values of the intermediate differences of the training series.
Vector integrate_forecasts(const Vector& series, int d, const Vector& wf) {
    Vector cur = wf;
    for (int k = d - 1; k >= 0; --k) {
        const Vector dk = difference(series, k);
        double level = dk[dk.size() - 1];
        for (Eigen::Index h = 0; h < cur.size(); ++h) {
            level += cur[h];
            cur[h] = level;
        }
    }
    return cur;
}

} // namespace

ScoreForecast forecast(const FittedTsModel& model, int horizon) {
    if (horizon < 1) throw ConfigError("forecast: horizon must be >= 1");
    ScoreForecast fc;
    fc.horizon = horizon;
    fc.model = model;
    fc.mean = Vector::Zero(horizon);
    fc.se = Vector::Zero(horizon);
    const auto& y = model.series;
    const auto n = y.size();

    switch (model.kind) {
        case ModelKind::rwd: {
            const double sigma = std::sqrt(std::max(0.0, model.sigma2));
            for (int h = 1; h <= horizon; ++h) {
                fc.mean[h - 1] = y[n - 1] + h * model.drift;
                fc.se[h - 1] =
                    sigma * std::sqrt(h * (1.0 + static_cast<double>(h) / (model.n - 1)));
            }
            return fc;
        }
        case ModelKind::ar1: {
            const double phi = model.ar[0];
            const double mu = std::abs(1.0 - phi) > 1e-12 ? model.mean / (1.0 - phi) : y[n - 1];
            double var = 0.0, phih = 1.0, phi2h = 1.0;
            for (int h = 1; h <= horizon; ++h) {
                var += phi2h * model.sigma2;
                phih *= phi;
                phi2h *= phi * phi;
                fc.mean[h - 1] = mu + phih * (y[n - 1] - mu);
                fc.se[h - 1] = std::sqrt(var);
            }
            return fc;
        }
        case ModelKind::arima: {
            const Vector w = difference(y, model.d);
            const Vector zc = w.array() - model.mean;
            Vector zf = arma_mean_forecast(zc, model.ar, model.ma, horizon);
            Vector wf = zf.array() + model.mean;
            fc.mean = model.d > 0 ? integrate_forecasts(y, model.d, wf) : wf;
            const auto psi = psi_weights(model.ar, model.ma, model.d, 0.0, horizon);
            double acc = 0.0;
            for (int h = 1; h <= horizon; ++h) {
                acc += psi[static_cast<std::size_t>(h) - 1] * psi[static_cast<std::size_t>(h) - 1];
                fc.se[h - 1] = std::sqrt(model.sigma2 * acc);
            }
            return fc;
        }
        case ModelKind::arfima: {
            const Vector x = difference(y, model.d);
            const Vector xc = x.array() - model.drift;
            const Vector w = apply_frac_diff(xc, model.d_frac);
            const Vector zc = w.array() - model.mean;
            Vector zf = arma_mean_forecast(zc, model.ar, model.ma, horizon);
            const Vector wf = zf.array() + model.mean;
            // Fractional re-integration: x_t = w_t - sum_{k>=1} pi_k x_{t-k}.
            const auto Nx = xc.size();
            const auto pi = frac_diff_coeffs(model.d_frac, static_cast<int>(Nx) + horizon);
            Vector xf(horizon);
            auto xval = [&](Eigen::Index idx) -> double {
                return idx < Nx ? xc[idx] : xf[idx - Nx];
            };
            for (int h = 0; h < horizon; ++h) {
                const Eigen::Index t = Nx + h;
                double s = wf[h];
                for (Eigen::Index k = 1; k <= t; ++k)
                    s -= pi[static_cast<std::size_t>(k)] * xval(t - k);
                xf[h] = s;
            }
            Vector out = xf.array() + model.drift;
            fc.mean = model.d > 0 ? integrate_forecasts(y, model.d, out) : out;
            const auto psi = psi_weights(model.ar, model.ma, model.d, model.d_frac, horizon);
            double acc = 0.0;
            for (int h = 1; h <= horizon; ++h) {
                acc += psi[static_cast<std::size_t>(h) - 1] * psi[static_cast<std::size_t>(h) - 1];
                fc.se[h - 1] = std::sqrt(model.sigma2 * acc);
            }
            return fc;
        }
    }
    throw NumericError("forecast: unknown model kind");
}

} // namespace popmort::ts
