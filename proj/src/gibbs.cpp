#include "popmort/gibbs.hpp"

#include "popmort/parallel.hpp"
#include "popmort/stats.hpp"

#include <cmath>

namespace popmort::bayes {

double draw_sigma2(double alpha1, double alpha2, double resid_ssq, double j_n_p, RngStream& rng) {
    const double shape = alpha1 + 0.5 * j_n_p;
    const double rate = alpha2 + 0.5 * resid_ssq;
    const double precision = rng.gamma(shape, 1.0 / rate);
    return 1.0 / precision;
}

NormalParams beta_conditional(double lambda, double sigma2, int j_populations, double sum_phi2,
                              double cross) {
    NormalParams out;
    if (!(lambda > 0.0)) return out; // score pinned at zero
    const double denom = lambda * j_populations * sum_phi2 + sigma2;
    out.mean = lambda * cross / denom;
    out.var = lambda * sigma2 / denom;
    return out;
}

NormalParams gamma_conditional(double lambda, double sigma2, double sum_psi2, double cross) {
    return beta_conditional(lambda, sigma2, 1, sum_psi2, cross);
}

double draw_omega(double ssr, double v_omega, RngStream& rng) {
    // f_G(mean, dof): shape = dof/2, scale = 2 mean / dof.
    const double mean = (v_omega + 1.0) / (ssr + v_omega);
    const double dof = v_omega + 1.0;
    return rng.gamma(dof / 2.0, 2.0 * mean / dof);
}

double v_omega_log_target(double v, double eta, int p) {
    if (!(v > 0.0)) return -std::numeric_limits<double>::infinity();
    return 0.5 * p * v * std::log(v / 2.0) - p * std::lgamma(v / 2.0) - eta * v;
}

double v_omega_eta(const Vector& omega, double v0) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < omega.size(); ++i)
        s += std::log(1.0 / omega[i]) + omega[i];
    return 1.0 / v0 + 0.5 * s;
}

namespace {

struct ChainState {
    Matrix beta;                         // n x K
    std::map<std::string, Matrix> gamma; // n x L_j
    double sigma2 = 1.0;
    std::map<std::string, Vector> omega;
    std::map<std::string, double> v_omega;
    std::map<std::string, double> v_step; // log-scale proposal sd
    std::map<std::string, Matrix> resid;  // model residuals f - fit, n x p
};

} // namespace

PosteriorDraws run_gibbs(const MultilevelDecomposition& dec,
                         const std::vector<std::pair<std::string, const SmoothedSurface*>>& surfaces,
                         const GibbsConfig& cfg) {
    cfg.validate();
    if (surfaces.empty()) throw ConfigError("run_gibbs: no surfaces");
    for (const auto& [key, surf] : surfaces) {
        if (!surf) throw ConfigError("run_gibbs: null surface for " + key);
        if (!dec.specific.count(key))
            throw ConfigError("run_gibbs: population " + key + " not in the decomposition");
    }

    const int J = static_cast<int>(surfaces.size());
    const auto n = surfaces.front().second->f.rows();
    const auto p = surfaces.front().second->f.cols();
    const int K = dec.K();

    // Fixed quantities.
    Vector sum_phi2(K);
    for (int k = 0; k < K; ++k) sum_phi2[k] = dec.common.eigenfunctions.row(k).squaredNorm();
    std::map<std::string, Vector> sum_psi2;
    std::map<std::string, Vector> smooth_ssr; // per-age sum_t (y - f)^2
    for (const auto& [key, surf] : surfaces) {
        const auto& spec = dec.specific.at(key);
        Vector s(spec.order());
        for (int l = 0; l < spec.order(); ++l) s[l] = spec.eigenfunctions.row(l).squaredNorm();
        sum_psi2[key] = s;
        smooth_ssr[key] = (surf->y - surf->f).array().square().colwise().sum().transpose();
    }

    PosteriorDraws out;
    out.config = cfg;
    const int retained = cfg.retained_per_chain();
    out.draws.reserve(static_cast<std::size_t>(retained) * cfg.chains);

    std::vector<std::vector<GibbsDraw>> per_chain(static_cast<std::size_t>(cfg.chains));
    std::map<std::string, double> accept_sum;
    std::map<std::string, double> accept_cnt;

    for (int chain = 0; chain < cfg.chains; ++chain) {
        ChainState st;
        st.beta = dec.common.scores;
        double s2 = 0.0;
        for (const auto& [key, surf] : surfaces) {
            st.gamma[key] = dec.specific.at(key).scores;
            st.omega[key] = Vector::Ones(p);
            st.v_omega[key] = cfg.v_omega_init;
            st.v_step[key] = 0.5;
            s2 += dec.sigma2.at(key);
        }
        st.sigma2 = std::max(1e-12, s2 / J);
        for (const auto& [key, surf] : surfaces) {
            Matrix fit = Matrix::Zero(n, p);
            fit.rowwise() += (dec.mu + dec.eta.at(key)).transpose();
            if (K > 0) fit += st.beta * dec.common.eigenfunctions;
            const auto& spec = dec.specific.at(key);
            if (spec.order() > 0) fit += st.gamma[key] * spec.eigenfunctions;
            st.resid[key] = surf->f - fit;
        }

        for (int iter = 0; iter < cfg.total_draws; ++iter) {
            RngStream rng(cfg.seed, static_cast<std::uint32_t>(chain),
                          static_cast<std::uint32_t>(iter), 0);

            // 1. Pooled inverse error variance.
            double ssq = 0.0;
            for (const auto& [key, r] : st.resid) ssq += r.squaredNorm();
            st.sigma2 = draw_sigma2(cfg.alpha1, cfg.alpha2, ssq,
                                    static_cast<double>(J) * n * p, rng);

            // 2. Common scores.
            for (int k = 0; k < K; ++k) {
                const double lambda = dec.common.eigenvalues[k];
                const auto phi = dec.common.eigenfunctions.row(k);
                for (Eigen::Index t = 0; t < n; ++t) {
                    double cross = 0.0;
                    for (auto& [key, r] : st.resid) cross += phi.dot(r.row(t));
                    cross += J * st.beta(t, k) * sum_phi2[k];
                    const auto np = beta_conditional(lambda, st.sigma2, J, sum_phi2[k], cross);
                    const double nb = lambda > 0.0 ? rng.normal(np.mean, std::sqrt(np.var)) : 0.0;
                    const double delta = nb - st.beta(t, k);
                    if (delta != 0.0) {
                        for (auto& [key, r] : st.resid) r.row(t) -= delta * phi;
                        st.beta(t, k) = nb;
                    }
                }
            }

            // 3. Population-specific scores.
            for (const auto& [key, surf] : surfaces) {
                const auto& spec = dec.specific.at(key);
                auto& g = st.gamma[key];
                auto& r = st.resid[key];
                for (int l = 0; l < spec.order(); ++l) {
                    const double lambda = spec.eigenvalues[l];
                    const auto psi = spec.eigenfunctions.row(l);
                    for (Eigen::Index t = 0; t < n; ++t) {
                        double cross = psi.dot(r.row(t)) + g(t, l) * sum_psi2[key][l];
                        const auto np = gamma_conditional(lambda, st.sigma2, sum_psi2[key][l], cross);
                        const double ng = lambda > 0.0 ? rng.normal(np.mean, std::sqrt(np.var)) : 0.0;
                        const double delta = ng - g(t, l);
                        if (delta != 0.0) {
                            r.row(t) -= delta * psi;
                            g(t, l) = ng;
                        }
                    }
                }
            }

            // 4. Per-age precisions and their hyperparameter.
            for (const auto& [key, surf] : surfaces) {
                auto& om = st.omega[key];
                const auto& ssr = smooth_ssr[key];
                const double v = st.v_omega[key];
                for (Eigen::Index i = 0; i < p; ++i) om[i] = draw_omega(ssr[i], v, rng);

                const double eta = v_omega_eta(om, cfg.v_omega_init);
                const double cur = st.v_omega[key];
                const double prop = cur * std::exp(st.v_step[key] * rng.normal());
                // log-scale random walk: include the Jacobian log(prop/cur).
                const double log_acc = v_omega_log_target(prop, eta, static_cast<int>(p)) -
                                       v_omega_log_target(cur, eta, static_cast<int>(p)) +
                                       std::log(prop) - std::log(cur);
                const bool accept = prop > 0.0 && std::log(rng.uniform()) < log_acc;
                if (accept) st.v_omega[key] = prop;
                if (iter < cfg.burn_in) {
                    // Adapt toward a 0.3 acceptance rate.
                    const double adj = (accept ? 1.0 : -0.3) * 0.05;
                    st.v_step[key] = std::clamp(st.v_step[key] * std::exp(adj), 0.01, 5.0);
                } else {
                    accept_sum[key] += accept ? 1.0 : 0.0;
                    accept_cnt[key] += 1.0;
                }
            }

            if (iter >= cfg.burn_in && (iter - cfg.burn_in) % cfg.thin == 0 &&
                static_cast<int>(per_chain[static_cast<std::size_t>(chain)].size()) < retained) {
                GibbsDraw d;
                d.beta = st.beta;
                d.gamma = st.gamma;
                d.sigma2 = st.sigma2;
                d.omega = st.omega;
                d.v_omega = st.v_omega;
                per_chain[static_cast<std::size_t>(chain)].push_back(std::move(d));
            }
        }
    }

    for (auto& chain_draws : per_chain)
        for (auto& d : chain_draws) out.draws.push_back(std::move(d));
    for (const auto& [key, cnt] : accept_cnt)
        out.v_omega_acceptance[key] = cnt > 0 ? accept_sum[key] / cnt : 0.0;
    return out;
}

namespace {

ts::FittedTsModel score_model_fit(const Vector& series, methods::ScoreModel model) {
    switch (model) {
        case methods::ScoreModel::rwd: return ts::fit_rwd(series);
        case methods::ScoreModel::auto_arima: return ts::auto_arima(series);
    }
    throw ConfigError("unknown score model");
}

// Re-apply fitted coefficients to a new history of the same length.
Vector apply_model(const ts::FittedTsModel& model, const Vector& history, int horizon) {
    ts::FittedTsModel m = model;
    m.series = history;
    return ts::forecast(m, horizon).mean;
}

} // namespace

SamplePaths simulate_paths(const MultilevelDecomposition& dec, const PosteriorDraws& draws,
                           const SimulateOptions& opts) {
    if (draws.draws.empty()) throw ConfigError("simulate_paths: no posterior draws");
    if (opts.horizon < 1) throw ConfigError("simulate_paths: horizon must be >= 1");
    const int B = static_cast<int>(draws.draws.size());
    const int H = opts.horizon;
    const auto p = dec.mu.size();
    const int K = dec.K();

    SamplePaths out;
    out.horizon = H;
    out.small_sample_warning = B < 100;
    const auto n = K > 0 ? dec.common.scores.rows()
                         : dec.specific.at(dec.population_keys.front()).scores.rows();
    out.first_forecast_year = dec.first_year + static_cast<int>(n);

    // Fit-once models on the empirical scores (also the per-draw fallback order).
    std::vector<ts::FittedTsModel> beta_models;
    for (int k = 0; k < K; ++k)
        beta_models.push_back(score_model_fit(dec.common.scores.col(k), opts.score_model));
    std::map<std::string, std::vector<ts::FittedTsModel>> gamma_models;
    for (const auto& key : dec.population_keys) {
        const auto& spec = dec.specific.at(key);
        std::vector<ts::FittedTsModel> ms;
        for (int l = 0; l < spec.order(); ++l)
            ms.push_back(score_model_fit(spec.scores.col(l), opts.score_model));
        gamma_models[key] = std::move(ms);
    }

    for (const auto& key : dec.population_keys) {
        out.paths[key] =
            std::vector<Matrix>(static_cast<std::size_t>(B), Matrix::Zero(H, p));
    }

    std::vector<const GibbsDraw*> dptr;
    for (const auto& d : draws.draws) dptr.push_back(&d);

    parallel_for(static_cast<std::size_t>(B), [&](std::size_t b) {
        const GibbsDraw& d = *dptr[b];
        // Forecast common scores from this draw's history.
        Matrix beta_fc(H, std::max(1, K));
        for (int k = 0; k < K; ++k) {
            const Vector hist = d.beta.col(k);
            Vector mean;
            if (opts.refit_per_draw)
                mean = ts::forecast(score_model_fit(hist, opts.score_model), H).mean;
            else
                mean = apply_model(beta_models[static_cast<std::size_t>(k)], hist, H);
            beta_fc.col(k) = mean;
        }
        std::size_t pop_idx = 0;
        for (const auto& key : dec.population_keys) {
            const auto& spec = dec.specific.at(key);
            const int L = spec.order();
            Matrix gamma_fc(H, std::max(1, L));
            for (int l = 0; l < L; ++l) {
                const Vector hist = d.gamma.at(key).col(l);
                Vector mean;
                if (opts.refit_per_draw)
                    mean = ts::forecast(score_model_fit(hist, opts.score_model), H).mean;
                else
                    mean = apply_model(gamma_models[key][static_cast<std::size_t>(l)], hist, H);
                gamma_fc.col(l) = mean;
            }

            RngStream rng(opts.seed, 0x70617468u, static_cast<std::uint32_t>(b),
                          static_cast<std::uint32_t>(pop_idx));
            Matrix& path = out.paths[key][b];
            const double sig = std::sqrt(std::max(0.0, d.sigma2));
            const Vector& om = d.omega.at(key);
            for (int h = 0; h < H; ++h) {
                Vector row = dec.mu + dec.eta.at(key);
                for (int k = 0; k < K; ++k)
                    row += dec.common.eigenfunctions.row(k).transpose() * beta_fc(h, k);
                for (int l = 0; l < L; ++l)
                    row += spec.eigenfunctions.row(l).transpose() * gamma_fc(h, l);
                for (Eigen::Index i = 0; i < p; ++i) {
                    const double delta = 1.0 / std::sqrt(std::max(1e-300, om[i]));
                    row[i] += sig * rng.normal() + delta * rng.normal();
                }
                path.row(h) = row.transpose();
            }
            ++pop_idx;
        }
    });
    return out;
}

IntervalSurface prediction_interval(const std::vector<Matrix>& paths, double alpha) {
    if (paths.size() < 100)
        throw ConfigError("prediction_interval: need at least 100 sample paths");
    if (!(alpha > 0.0) || !(alpha < 1.0))
        throw ConfigError("prediction_interval: alpha must be in (0, 1)");
    const auto H = paths.front().rows();
    const auto p = paths.front().cols();
    IntervalSurface out;
    out.lower = Matrix(H, p);
    out.upper = Matrix(H, p);
    std::vector<double> buf(paths.size());
    for (Eigen::Index h = 0; h < H; ++h) {
        for (Eigen::Index i = 0; i < p; ++i) {
            for (std::size_t b = 0; b < paths.size(); ++b) buf[b] = paths[b](h, i);
            out.lower(h, i) = quantile(buf, alpha / 2.0);
            out.upper(h, i) = quantile(buf, 1.0 - alpha / 2.0);
        }
    }
    return out;
}

} // namespace popmort::bayes
