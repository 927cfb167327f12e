#include "popmort/evaluate.hpp"

#include "popmort/fpca.hpp"

#include <cmath>
#include <ostream>
#include <set>

namespace popmort::eval {

namespace {

// Acklam's rational approximation of the standard normal quantile.
double normal_quantile(double p) {
    if (!(p > 0.0) || !(p < 1.0)) throw ConfigError("normal_quantile: p must be in (0, 1)");
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425, phigh = 1 - plow;
    double q, r;
    if (p < plow) {
        q = std::sqrt(-2 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    }
    if (p > phigh) {
        q = std::sqrt(-2 * std::log(1 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    }
    q = p - 0.5;
    r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
}

struct Group {
    std::string name;
    const PopulationLabel* female = nullptr;
    const PopulationLabel* male = nullptr;
    const PopulationLabel* total = nullptr;
};

std::vector<Group> dataset_groups(const MortalityDataset& ds) {
    std::vector<Group> groups;
    auto find_group = [&](const std::string& g) -> Group& {
        for (auto& gr : groups)
            if (gr.name == g) return gr;
        groups.push_back({g, nullptr, nullptr, nullptr});
        return groups.back();
    };
    for (const auto& [label, data] : ds.populations) {
        const std::string g = label.region ? label.name + "/" + *label.region : label.name;
        auto& gr = find_group(g);
        if (label.sex == Sex::female) gr.female = &label;
        else if (label.sex == Sex::male) gr.male = &label;
        else gr.total = &label;
    }
    return groups;
}

} // namespace

void BacktestPlan::validate(int n_years) const {
    if (holdout < 1 || holdout >= n_years)
        throw ConfigError("backtest plan: holdout must be in [1, n_years)");
    if (!(alpha > 0.0) || !(alpha < 1.0)) throw ConfigError("backtest plan: alpha in (0, 1)");
    if (methods.empty()) throw ConfigError("backtest plan: no methods");
}

SmoothedSurface training_surface(const MortalityDataset& ds, const PopulationLabel& label,
                                 int n_train, const BacktestPlan& plan) {
    const auto* data = ds.find(label);
    if (!data) throw DataError("unknown population " + label.key());
    const Matrix rates = data->rates.topRows(n_train);
    const Matrix expo = data->exposures.topRows(n_train);
    if (plan.smoothing == SmoothingChoice::penalized) {
        SmoothOptions opts;
        opts.alpha = AlphaPolicy::fixed_value(plan.smooth_alpha);
        opts.monotone_from_age = plan.monotone_from_age;
        return smooth_surface(rates, expo, ds.grid, ds.first_year, opts);
    }
    SmoothedSurface s;
    s.grid = ds.grid;
    s.first_year = ds.first_year;
    s.delta2 = log_rate_variance(rates, expo);
    s.weights = s.delta2.cwiseInverse();
    s.y = rates.array().log().matrix();
    s.f = s.y;
    return s;
}

MethodBacktest rolling_origin(const MortalityDataset& ds, const BacktestPlan& plan,
                              const methods::MethodSpec& method) {
    const int n = ds.n_years();
    plan.validate(n);
    const auto groups = dataset_groups(ds);
    const double z = -normal_quantile(plan.alpha / 2.0);

    MethodBacktest bt;
    bt.method_label = methods::method_row_label(method.kind, method.score_model);

    auto record = [&](const std::string& key, const PopulationLabel& label, int n_train,
                      const methods::ForecastSurface& fs) {
        const auto* data = ds.find(label);
        const int H = static_cast<int>(fs.log_rates.rows());
        for (int h = 1; h <= H; ++h) {
            OriginForecast rec;
            rec.origin_year = ds.first_year + n_train - 1;
            rec.horizon = h;
            rec.forecast = fs.log_rates.row(h - 1).array().exp().matrix().transpose();
            rec.actual = data->rates.row(n_train + h - 1).transpose();
            if (plan.intervals) {
                rec.lower = (fs.log_rates.row(h - 1).array() - z * fs.se.row(h - 1).array())
                                .exp()
                                .matrix()
                                .transpose();
                rec.upper = (fs.log_rates.row(h - 1).array() + z * fs.se.row(h - 1).array())
                                .exp()
                                .matrix()
                                .transpose();
            }
            bt.per_population[key].push_back(std::move(rec));
        }
    };

    for (int n_train = n - plan.holdout; n_train <= n - 1; ++n_train) {
        const int H = n - n_train;
        for (const auto& group : groups) {
            std::vector<const PopulationLabel*> sexed;
            if (group.female) sexed.push_back(group.female);
            if (group.male) sexed.push_back(group.male);
            try {
                switch (method.kind) {
                    case methods::MethodKind::lee_carter: {
                        for (const auto* label : sexed) {
                            const auto surf = training_surface(ds, *label, n_train, plan);
                            record(label->key(), *label, n_train,
                                   methods::forecast_lee_carter(surf, label->key(), H));
                        }
                        break;
                    }
                    case methods::MethodKind::independent_fdm: {
                        for (const auto* label : sexed) {
                            const auto surf = training_surface(ds, *label, n_train, plan);
                            record(label->key(), *label, n_train,
                                   methods::fit_independent_fdm(surf, label->key(), H, method.p1,
                                                                methods::ScoreModel::auto_arima));
                        }
                        break;
                    }
                    case methods::MethodKind::product_ratio: {
                        if (!group.female || !group.male)
                            throw DataError("product_ratio needs a female/male pair in group " +
                                            group.name);
                        const auto f = training_surface(ds, *group.female, n_train, plan);
                        const auto m = training_surface(ds, *group.male, n_train, plan);
                        auto [ff, mf] = methods::fit_product_ratio(f, m, group.female->key(),
                                                                   group.male->key(), H);
                        record(group.female->key(), *group.female, n_train, ff);
                        record(group.male->key(), *group.male, n_train, mf);
                        break;
                    }
                    case methods::MethodKind::li_lee: {
                        if (!group.total || sexed.size() < 2)
                            throw DataError("li_lee needs a total plus both sexes in group " +
                                            group.name);
                        const auto total = training_surface(ds, *group.total, n_train, plan);
                        std::vector<SmoothedSurface> keep;
                        std::vector<std::pair<std::string, const SmoothedSurface*>> pops;
                        keep.reserve(sexed.size());
                        for (const auto* label : sexed)
                            keep.push_back(training_surface(ds, *label, n_train, plan));
                        for (std::size_t i = 0; i < sexed.size(); ++i)
                            pops.push_back({sexed[i]->key(), &keep[i]});
                        auto fcs = methods::fit_li_lee(total, pops, H);
                        for (const auto* label : sexed)
                            record(label->key(), *label, n_train, fcs.at(label->key()));
                        break;
                    }
                    case methods::MethodKind::multilevel_fdm: {
                        if (!group.total || sexed.size() < 2)
                            throw DataError("multilevel needs a total plus both sexes in group " +
                                            group.name);
                        const auto total = training_surface(ds, *group.total, n_train, plan);
                        std::vector<SmoothedSurface> keep;
                        std::vector<std::pair<std::string, const SmoothedSurface*>> pops;
                        keep.reserve(sexed.size());
                        for (const auto* label : sexed)
                            keep.push_back(training_surface(ds, *label, n_train, plan));
                        for (std::size_t i = 0; i < sexed.size(); ++i)
                            pops.push_back({sexed[i]->key(), &keep[i]});
                        const auto dec = multilevel_decompose(total, pops, method.p1, method.p2);
                        auto fcs = methods::multilevel_point_forecast(dec, method.score_model, H);
                        for (const auto* label : sexed)
                            record(label->key(), *label, n_train, fcs.at(label->key()));
                        break;
                    }
                }
            } catch (const std::exception&) {
                for (const auto* label : sexed) bt.failed_origins[label->key()] += 1;
            }
        }
    }
    return bt;
}

PointMetrics point_metrics(const Matrix& forecast, const Matrix& actual) {
    if (forecast.rows() != actual.rows() || forecast.cols() != actual.cols())
        throw ConfigError("point_metrics: shape mismatch");
    if (forecast.size() == 0) throw ConfigError("point_metrics: empty horizon set");
    const Matrix err = actual - forecast;
    PointMetrics pm;
    pm.rmsfe = std::sqrt(err.array().square().mean());
    pm.mafe = err.array().abs().mean();
    pm.mfe = err.array().mean();
    pm.max_afe = err.array().abs().maxCoeff();
    pm.max_rsfe = std::sqrt(err.array().square().maxCoeff());
    pm.n = static_cast<int>(forecast.rows());
    return pm;
}

double interval_score(double lower, double upper, double observed, double alpha) {
    if (lower > upper) throw ConfigError("interval_score: lower > upper");
    if (!(alpha > 0.0) || !(alpha < 1.0)) throw ConfigError("interval_score: alpha in (0, 1)");
    double s = upper - lower;
    if (observed < lower) s += 2.0 / alpha * (lower - observed);
    if (observed > upper) s += 2.0 / alpha * (observed - upper);
    return s;
}

ScoreMetrics score_metrics(const Matrix& lower, const Matrix& upper, const Matrix& actual,
                           double alpha) {
    if (lower.rows() != actual.rows() || upper.rows() != actual.rows() ||
        lower.cols() != actual.cols() || upper.cols() != actual.cols())
        throw ConfigError("score_metrics: shape mismatch");
    ScoreMetrics sm;
    double total = 0.0;
    for (Eigen::Index r = 0; r < actual.rows(); ++r) {
        for (Eigen::Index c = 0; c < actual.cols(); ++c) {
            const double s = interval_score(lower(r, c), upper(r, c), actual(r, c), alpha);
            total += s;
            sm.max_score = std::max(sm.max_score, s);
        }
    }
    sm.mean_score = actual.size() > 0 ? total / static_cast<double>(actual.size()) : 0.0;
    sm.n = static_cast<int>(actual.rows());
    return sm;
}

namespace {

struct MetricTable {
    // metric -> horizon -> (value, n)
    std::map<std::string, std::map<int, std::pair<double, int>>> values;
};

MetricTable horizon_metrics(const std::vector<OriginForecast>& recs, double alpha,
                            bool intervals) {
    MetricTable tab;
    std::set<int> horizons;
    for (const auto& r : recs) horizons.insert(r.horizon);
    for (int h : horizons) {
        std::vector<const OriginForecast*> at_h;
        for (const auto& r : recs)
            if (r.horizon == h) at_h.push_back(&r);
        const auto p = at_h.front()->forecast.size();
        Matrix fc(at_h.size(), p), ac(at_h.size(), p);
        for (std::size_t i = 0; i < at_h.size(); ++i) {
            fc.row(static_cast<Eigen::Index>(i)) = at_h[i]->forecast.transpose();
            ac.row(static_cast<Eigen::Index>(i)) = at_h[i]->actual.transpose();
        }
        const auto pm = point_metrics(fc, ac);
        const int n = pm.n;
        tab.values["RMSFE"][h] = {pm.rmsfe, n};
        tab.values["MAFE"][h] = {pm.mafe, n};
        tab.values["MFE"][h] = {pm.mfe, n};
        tab.values["max_AFE"][h] = {pm.max_afe, n};
        tab.values["max_RSFE"][h] = {pm.max_rsfe, n};
        if (intervals && at_h.front()->lower.size() > 0) {
            Matrix lo(at_h.size(), p), up(at_h.size(), p);
            for (std::size_t i = 0; i < at_h.size(); ++i) {
                lo.row(static_cast<Eigen::Index>(i)) = at_h[i]->lower.transpose();
                up.row(static_cast<Eigen::Index>(i)) = at_h[i]->upper.transpose();
            }
            const auto sm = score_metrics(lo, up, ac, alpha);
            tab.values["mean_interval_score"][h] = {sm.mean_score, n};
            tab.values["max_interval_score"][h] = {sm.max_score, n};
        }
    }
    return tab;
}

} // namespace

EvaluationReport evaluate(const MortalityDataset& ds, const BacktestPlan& plan) {
    plan.validate(ds.n_years());
    EvaluationReport report;

    for (const auto& spec : plan.methods) {
        const auto bt = rolling_origin(ds, plan, spec);
        // population -> metric -> horizon -> (value, n)
        std::map<std::string, MetricTable> tables;
        for (const auto& [key, recs] : bt.per_population)
            tables[key] = horizon_metrics(recs, plan.alpha, plan.intervals);

        for (const auto& [key, tab] : tables) {
            for (const auto& [metric, by_h] : tab.values) {
                double sum = 0.0, wsum = 0.0;
                int wn = 0;
                for (const auto& [h, vn] : by_h) {
                    report.rows.push_back(
                        {bt.method_label, key, std::to_string(h), metric, vn.first, vn.second});
                    sum += vn.first;
                    wsum += vn.first * vn.second;
                    wn += vn.second;
                }
                if (!by_h.empty()) {
                    report.rows.push_back({bt.method_label, key, "all", metric,
                                           sum / static_cast<double>(by_h.size()),
                                           static_cast<int>(by_h.size())});
                    report.rows.push_back(
                        {bt.method_label, key, "all_weighted", metric, wsum / wn, wn});
                }
            }
        }
        // Across-population averages of the per-population metric values.
        if (tables.size() > 1) {
            std::set<std::string> metrics;
            std::set<int> horizons;
            for (const auto& [key, tab] : tables)
                for (const auto& [metric, by_h] : tab.values) {
                    metrics.insert(metric);
                    for (const auto& [h, vn] : by_h) horizons.insert(h);
                }
            for (const auto& metric : metrics) {
                double all_sum = 0.0;
                int all_cnt = 0;
                for (int h : horizons) {
                    double sum = 0.0;
                    int cnt = 0, n = 0;
                    for (const auto& [key, tab] : tables) {
                        auto mit = tab.values.find(metric);
                        if (mit == tab.values.end()) continue;
                        auto hit = mit->second.find(h);
                        if (hit == mit->second.end()) continue;
                        sum += hit->second.first;
                        n += hit->second.second;
                        ++cnt;
                    }
                    if (cnt > 0) {
                        report.rows.push_back(
                            {bt.method_label, "all", std::to_string(h), metric, sum / cnt, n});
                        all_sum += sum / cnt;
                        ++all_cnt;
                    }
                }
                if (all_cnt > 0)
                    report.rows.push_back(
                        {bt.method_label, "all", "all", metric, all_sum / all_cnt, all_cnt});
            }
        }
        for (const auto& [key, cnt] : bt.failed_origins)
            report.rows.push_back(
                {bt.method_label, key, "all", "failed_origins", static_cast<double>(cnt), cnt});
    }
    return report;
}

void write_report_csv(std::ostream& out, const EvaluationReport& report) {
    out << "method,population,horizon,metric,value,n_forecasts\n";
    char buf[40];
    for (const auto& r : report.rows) {
        std::snprintf(buf, sizeof buf, "%.12g", r.value);
        out << r.method << ',' << r.population << ',' << r.horizon << ',' << r.metric << ',' << buf
            << ',' << r.n_forecasts << '\n';
    }
}

} // namespace popmort::eval
