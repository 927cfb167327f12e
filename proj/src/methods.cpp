#include "popmort/methods.hpp"

#include <Eigen/SVD>

#include <cmath>

namespace popmort::methods {

MethodKind method_from_string(const std::string& s) {
    if (s == "lee_carter" || s == "lee-carter") return MethodKind::lee_carter;
    if (s == "li_lee" || s == "li-lee") return MethodKind::li_lee;
    if (s == "independent_fdm" || s == "independent") return MethodKind::independent_fdm;
    if (s == "product_ratio" || s == "product-ratio") return MethodKind::product_ratio;
    if (s == "multilevel_fdm" || s == "multilevel") return MethodKind::multilevel_fdm;
    throw ConfigError("unknown method: " + s);
}

std::string to_string(MethodKind m) {
    switch (m) {
        case MethodKind::lee_carter: return "lee_carter";
        case MethodKind::li_lee: return "li_lee";
        case MethodKind::independent_fdm: return "independent_fdm";
        case MethodKind::product_ratio: return "product_ratio";
        case MethodKind::multilevel_fdm: return "multilevel_fdm";
    }
    return "";
}

std::string method_row_label(MethodKind m, ScoreModel s) {
    switch (m) {
        case MethodKind::lee_carter: return "Lee-Carter";
        case MethodKind::li_lee: return "Li-Lee";
        case MethodKind::independent_fdm: return "Independent FDM";
        case MethodKind::product_ratio: return "Product-ratio";
        case MethodKind::multilevel_fdm:
            return s == ScoreModel::rwd ? "Multilevel FDM (rwf)" : "Multilevel FDM (arima)";
    }
    return "";
}

ts::ScoreForecast score_forecast(const Vector& series, ScoreModel model, int horizon) {
    switch (model) {
        case ScoreModel::rwd: return ts::forecast(ts::fit_rwd(series), horizon);
        case ScoreModel::auto_arima: return ts::forecast(ts::auto_arima(series), horizon);
    }
    throw ConfigError("unknown score model");
}

namespace {

// First singular pair of a (column-sum-zero) matrix, normalized so the age
// loading sums to one and the time index sums to zero. Degenerate input
// yields a zero index and uniform loading.
void first_pair_sum_one(const Matrix& Z, Vector& loading, Vector& index) {
    const auto p = Z.cols();
    Eigen::BDCSVD<Matrix> svd(Z, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double scale = Z.cwiseAbs().maxCoeff();
    if (svd.singularValues().size() == 0 || svd.singularValues()[0] <= 1e-14 * std::max(1.0, scale)) {
        loading = Vector::Constant(p, 1.0 / static_cast<double>(p));
        index = Vector::Zero(Z.rows());
        return;
    }
    Vector v = svd.matrixV().col(0);
    const double vsum = v.sum();
    if (std::abs(vsum) < 1e-10) {
        // The sum-one normalization is undefined for a sign-balanced loading.
        throw NumericError("principal pair: loading sums to zero, b is undefined");
    }
    loading = v / vsum;
    index = svd.matrixU().col(0) * svd.singularValues()[0] * vsum;
}

Matrix normal_se_surface(const std::vector<const ts::ScoreForecast*>& score_fcs,
                         const std::vector<const Vector*>& loadings, const Vector& resid_var,
                         int horizon) {
    const auto p = resid_var.size();
    Matrix se(horizon, p);
    for (int h = 0; h < horizon; ++h) {
        for (Eigen::Index i = 0; i < p; ++i) {
            double v = resid_var[i];
            for (std::size_t k = 0; k < score_fcs.size(); ++k) {
                const double s = score_fcs[k]->se[h];
                const double l = (*loadings[k])[i];
                v += s * s * l * l;
            }
            se(h, i) = std::sqrt(v);
        }
    }
    return se;
}

Vector column_mean_square(const Matrix& resid) {
    return resid.array().square().colwise().mean().transpose();
}

} // namespace

LeeCarterFit fit_lee_carter(const Matrix& log_rates) {
    if (log_rates.rows() < 3) throw ConfigError("fit_lee_carter: need n >= 3");
    LeeCarterFit fit;
    fit.ax = log_rates.colwise().mean().transpose();
    const Matrix Z = log_rates.rowwise() - fit.ax.transpose();
    first_pair_sum_one(Z, fit.bx, fit.kt);
    const Matrix resid = Z - fit.kt * fit.bx.transpose();
    fit.resid_var = column_mean_square(resid);
    return fit;
}

ForecastSurface forecast_lee_carter(const SmoothedSurface& surf, const std::string& pop_key,
                                    int horizon) {
    const auto fit = fit_lee_carter(surf.f);
    const auto kfc = ts::forecast(ts::fit_rwd(fit.kt), horizon);

    ForecastSurface out;
    out.population = pop_key;
    out.method = "lee_carter";
    out.first_forecast_year = surf.first_year + surf.n_years();
    const auto p = surf.f.cols();
    out.log_rates = Matrix(horizon, p);
    for (int h = 0; h < horizon; ++h)
        out.log_rates.row(h) = (fit.ax + fit.bx * kfc.mean[h]).transpose();
    out.se = normal_se_surface({&kfc}, {&fit.bx}, fit.resid_var, horizon);
    return out;
}

std::map<std::string, ForecastSurface> fit_li_lee(
    const SmoothedSurface& total,
    const std::vector<std::pair<std::string, const SmoothedSurface*>>& populations, int horizon) {
    if (populations.size() < 2) throw ConfigError("fit_li_lee: need a total plus >= 2 populations");
    const auto common = fit_lee_carter(total.f);
    const auto beta_fc = ts::forecast(ts::fit_rwd(common.kt), horizon);

    std::map<std::string, ForecastSurface> out;
    for (const auto& [key, surf] : populations) {
        if (!surf) throw ConfigError("fit_li_lee: null surface for " + key);
        const Vector mu_j = surf->f.colwise().mean().transpose();
        Matrix resid = surf->f;
        resid.rowwise() -= mu_j.transpose();
        resid -= common.kt * common.bx.transpose();

        Vector psi, gamma;
        first_pair_sum_one(resid, psi, gamma);
        const Matrix err = resid - gamma * psi.transpose();
        const Vector resid_var = column_mean_square(err);
        const auto gamma_fc = ts::forecast(ts::fit_ar1(gamma), horizon);

        ForecastSurface fs;
        fs.population = key;
        fs.method = "li_lee";
        fs.first_forecast_year = surf->first_year + surf->n_years();
        fs.log_rates = Matrix(horizon, surf->f.cols());
        for (int h = 0; h < horizon; ++h)
            fs.log_rates.row(h) =
                (mu_j + common.bx * beta_fc.mean[h] + psi * gamma_fc.mean[h]).transpose();
        fs.se = normal_se_surface({&beta_fc, &gamma_fc}, {&common.bx, &psi}, resid_var, horizon);
        out.emplace(key, std::move(fs));
    }
    return out;
}

ForecastSurface fit_independent_fdm(const SmoothedSurface& surf, const std::string& pop_key,
                                    int horizon, double threshold, ScoreModel score_model) {
    const Vector mu = mean_function(surf.f);
    const auto sys = empirical_fpca(surf.f.rowwise() - mu.transpose(), surf.grid, threshold);

    std::vector<ts::ScoreForecast> fcs;
    fcs.reserve(static_cast<std::size_t>(sys.order()));
    for (int k = 0; k < sys.order(); ++k)
        fcs.push_back(score_forecast(sys.scores.col(k), score_model, horizon));

    const Matrix err =
        (surf.f.rowwise() - mu.transpose()) -
        (sys.order() > 0 ? sys.reconstruct() : Matrix::Zero(surf.f.rows(), surf.f.cols()));

    ForecastSurface out;
    out.population = pop_key;
    out.method = "independent_fdm";
    out.first_forecast_year = surf.first_year + surf.n_years();
    out.log_rates = Matrix(horizon, surf.f.cols());
    for (int h = 0; h < horizon; ++h) {
        Vector row = mu;
        for (int k = 0; k < sys.order(); ++k)
            row += sys.eigenfunctions.row(k).transpose() * fcs[static_cast<std::size_t>(k)].mean[h];
        out.log_rates.row(h) = row.transpose();
    }
    std::vector<const ts::ScoreForecast*> fps;
    std::vector<Vector> loads;
    std::vector<const Vector*> lps;
    for (int k = 0; k < sys.order(); ++k) {
        fps.push_back(&fcs[static_cast<std::size_t>(k)]);
        loads.push_back(sys.eigenfunctions.row(k).transpose());
    }
    for (const auto& l : loads) lps.push_back(&l);
    out.se = normal_se_surface(fps, lps, column_mean_square(err), horizon);
    return out;
}

std::pair<ForecastSurface, ForecastSurface> fit_product_ratio(const SmoothedSurface& female,
                                                              const SmoothedSurface& male,
                                                              const std::string& female_key,
                                                              const std::string& male_key,
                                                              int horizon) {
    if (!(female.grid == male.grid) || female.f.rows() != male.f.rows())
        throw DataError("fit_product_ratio: surfaces do not share grid/years");

    SmoothedSurface prod = female, ratio = female;
    prod.f = (female.f + male.f) / 2.0; // log of the geometric mean rate
    ratio.f = (female.f - male.f) / 2.0; // log of the square-root rate ratio
    prod.y = prod.f;
    ratio.y = ratio.f;

    // Product: FDM with auto-ARIMA scores. Ratio: FDM with ARFIMA scores, the
    // stationarity constraint that keeps the sexes from diverging.
    ForecastSurface pf = fit_independent_fdm(prod, "product", horizon, 0.9, ScoreModel::auto_arima);

    const Vector mu_r = mean_function(ratio.f);
    const auto sys = empirical_fpca(ratio.f.rowwise() - mu_r.transpose(), ratio.grid, 0.9);
    std::vector<ts::ScoreForecast> rfcs;
    for (int k = 0; k < sys.order(); ++k)
        rfcs.push_back(ts::forecast(ts::fit_arfima(sys.scores.col(k)), horizon));
    const Matrix rerr =
        (ratio.f.rowwise() - mu_r.transpose()) -
        (sys.order() > 0 ? sys.reconstruct() : Matrix::Zero(ratio.f.rows(), ratio.f.cols()));

    Matrix ratio_fc(horizon, ratio.f.cols());
    for (int h = 0; h < horizon; ++h) {
        Vector row = mu_r;
        for (int k = 0; k < sys.order(); ++k)
            row += sys.eigenfunctions.row(k).transpose() * rfcs[static_cast<std::size_t>(k)].mean[h];
        ratio_fc.row(h) = row.transpose();
    }
    std::vector<const ts::ScoreForecast*> fps;
    std::vector<Vector> loads;
    std::vector<const Vector*> lps;
    for (int k = 0; k < sys.order(); ++k) {
        fps.push_back(&rfcs[static_cast<std::size_t>(k)]);
        loads.push_back(sys.eigenfunctions.row(k).transpose());
    }
    for (const auto& l : loads) lps.push_back(&l);
    const Matrix ratio_se = normal_se_surface(fps, lps, column_mean_square(rerr), horizon);

    ForecastSurface ff, mf;
    ff.population = female_key;
    mf.population = male_key;
    ff.method = mf.method = "product_ratio";
    ff.first_forecast_year = mf.first_forecast_year = female.first_year + female.n_years();
    ff.log_rates = pf.log_rates + ratio_fc;
    mf.log_rates = pf.log_rates - ratio_fc;
    ff.se = (pf.se.array().square() + ratio_se.array().square()).sqrt();
    mf.se = ff.se;
    return {std::move(ff), std::move(mf)};
}

std::map<std::string, ForecastSurface> multilevel_point_forecast(
    const MultilevelDecomposition& dec, ScoreModel score_model, int horizon) {
    std::vector<ts::ScoreForecast> beta_fcs;
    for (int k = 0; k < dec.K(); ++k)
        beta_fcs.push_back(score_forecast(dec.common.scores.col(k), score_model, horizon));

    std::map<std::string, ForecastSurface> out;
    for (const auto& key : dec.population_keys) {
        const auto& spec = dec.specific.at(key);
        std::vector<ts::ScoreForecast> gamma_fcs;
        for (int l = 0; l < spec.order(); ++l)
            gamma_fcs.push_back(score_forecast(spec.scores.col(l), score_model, horizon));

        ForecastSurface fs;
        fs.population = key;
        fs.method = "multilevel_fdm";
        fs.first_forecast_year =
            dec.first_year + static_cast<int>(std::max(dec.common.scores.rows(), spec.scores.rows()));
        const auto p = dec.mu.size();
        fs.log_rates = Matrix(horizon, p);
        for (int h = 0; h < horizon; ++h) {
            Vector row = dec.mu + dec.eta.at(key);
            for (int k = 0; k < dec.K(); ++k)
                row += dec.common.eigenfunctions.row(k).transpose() *
                       beta_fcs[static_cast<std::size_t>(k)].mean[h];
            for (int l = 0; l < spec.order(); ++l)
                row += spec.eigenfunctions.row(l).transpose() *
                       gamma_fcs[static_cast<std::size_t>(l)].mean[h];
            fs.log_rates.row(h) = row.transpose();
        }
        std::vector<const ts::ScoreForecast*> fps;
        std::vector<Vector> loads;
        for (int k = 0; k < dec.K(); ++k) {
            fps.push_back(&beta_fcs[static_cast<std::size_t>(k)]);
            loads.push_back(dec.common.eigenfunctions.row(k).transpose());
        }
        for (int l = 0; l < spec.order(); ++l) {
            fps.push_back(&gamma_fcs[static_cast<std::size_t>(l)]);
            loads.push_back(spec.eigenfunctions.row(l).transpose());
        }
        std::vector<const Vector*> lps;
        for (const auto& l : loads) lps.push_back(&l);
        fs.se = normal_se_surface(fps, lps, Vector::Constant(p, dec.sigma2.at(key)), horizon);
        out.emplace(key, std::move(fs));
    }
    return out;
}

std::map<std::string, ForecastSurface> hierarchical_multilevel(const HierarchicalInput& input,
                                                               ScoreModel score_model,
                                                               int horizon) {
    if (input.states.size() < 2 || input.sexes.size() < 2)
        throw ConfigError("hierarchical_multilevel: need a two-level hierarchy "
                          "(>= 2 states and >= 2 sexes)");
    for (const auto& s : input.states)
        for (const auto& j : input.sexes)
            if (!input.leaves.count({s, j}))
                throw ConfigError("hierarchical_multilevel: missing leaf surface " + s + "/" + j);

    auto average_surface = [](const std::vector<const SmoothedSurface*>& surfs) {
        SmoothedSurface avg = *surfs.front();
        for (std::size_t i = 1; i < surfs.size(); ++i) avg.f += surfs[i]->f;
        avg.f /= static_cast<double>(surfs.size());
        avg.y = avg.f;
        return avg;
    };

    // Decomposition 1: common trend across sexes within each state.
    std::map<std::string, std::map<std::string, ForecastSurface>> within_state;
    for (const auto& s : input.states) {
        std::vector<std::pair<std::string, const SmoothedSurface*>> pops;
        std::vector<const SmoothedSurface*> surfs;
        for (const auto& j : input.sexes) {
            pops.push_back({j, input.leaves.at({s, j})});
            surfs.push_back(input.leaves.at({s, j}));
        }
        SmoothedSurface avg;
        const SmoothedSurface* total = nullptr;
        if (auto it = input.state_totals.find(s); it != input.state_totals.end()) {
            total = it->second;
        } else {
            avg = average_surface(surfs);
            total = &avg;
        }
        const auto dec = multilevel_decompose(*total, pops, input.p1, input.p2);
        within_state[s] = multilevel_point_forecast(dec, score_model, horizon);
    }

    // Decomposition 2: common trend across states within each sex.
    std::map<std::string, std::map<std::string, ForecastSurface>> within_sex;
    for (const auto& j : input.sexes) {
        std::vector<std::pair<std::string, const SmoothedSurface*>> pops;
        std::vector<const SmoothedSurface*> surfs;
        for (const auto& s : input.states) {
            pops.push_back({s, input.leaves.at({s, j})});
            surfs.push_back(input.leaves.at({s, j}));
        }
        const SmoothedSurface avg = average_surface(surfs);
        const auto dec = multilevel_decompose(avg, pops, input.p1, input.p2);
        within_sex[j] = multilevel_point_forecast(dec, score_model, horizon);
    }

    // Combine: f = mu + (R + U + S + W) / 2 = average of the two forecasts.
    std::map<std::string, ForecastSurface> out;
    for (const auto& s : input.states) {
        for (const auto& j : input.sexes) {
            const auto& f1 = within_state.at(s).at(j);
            const auto& f2 = within_sex.at(j).at(s);
            ForecastSurface fs;
            fs.population = s + "/" + j;
            fs.method = "hierarchical_multilevel";
            fs.first_forecast_year = f1.first_forecast_year;
            fs.log_rates = (f1.log_rates + f2.log_rates) / 2.0;
            fs.se = 0.5 * (f1.se.array().square() + f2.se.array().square()).sqrt();
            out.emplace(fs.population, std::move(fs));
        }
    }
    return out;
}

} // namespace popmort::methods
