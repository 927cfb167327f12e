// popmort: coherent mortality and life-expectancy forecasting for groups of
// populations. Subcommands cover the full pipeline from HMD-style ingestion
// to rolling-origin evaluation.

#include "CLI11.hpp"
#include "json.hpp"

#include "popmort/dataset.hpp"
#include "popmort/evaluate.hpp"
#include "popmort/fpca.hpp"
#include "popmort/gibbs.hpp"
#include "popmort/lifetable.hpp"
#include "popmort/methods.hpp"
#include "popmort/smooth.hpp"
#include "popmort/stats.hpp"
#include "popmort/synthetic.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace popmort;

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

void write_atomic(const std::string& path, const std::function<void(std::ostream&)>& fn) {
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot open " + tmp + " for writing");
        fn(out);
        if (!out) throw DataError("write failed: " + tmp);
    }
    fs::rename(tmp, target);
}

std::string age_token(const AgeGrid& grid, std::size_t i) {
    std::string s = fmt(grid.ages[i]);
    if (grid.open_ended_last && i + 1 == grid.size()) s += "+";
    return s;
}

SmoothOptions smooth_options(const std::string& alpha, double monotone_from) {
    SmoothOptions opts;
    opts.monotone_from_age = monotone_from;
    if (alpha == "auto") {
        opts.alpha.automatic = true;
    } else {
        try {
            opts.alpha = AlphaPolicy::fixed_value(std::stod(alpha));
        } catch (const std::exception&) {
            throw ConfigError("--alpha must be 'auto' or a number, got '" + alpha + "'");
        }
    }
    return opts;
}

struct SurfaceSet {
    std::map<std::string, SmoothedSurface> by_key;

    const SmoothedSurface& at(const std::string& key) const {
        auto it = by_key.find(key);
        if (it == by_key.end()) throw DataError("no surface for population " + key);
        return it->second;
    }
};

SurfaceSet smooth_all(const MortalityDataset& ds, bool penalized, const SmoothOptions& opts) {
    SurfaceSet set;
    for (const auto& [label, data] : ds.populations) {
        if (penalized) {
            set.by_key.emplace(label.key(), smooth_surface(ds, label, opts));
        } else {
            SmoothedSurface s;
            s.grid = ds.grid;
            s.first_year = ds.first_year;
            s.delta2 = log_rate_variance(data.rates, data.exposures);
            s.weights = s.delta2.cwiseInverse();
            s.y = data.rates.array().log().matrix();
            s.f = s.y;
            set.by_key.emplace(label.key(), std::move(s));
        }
    }
    return set;
}

struct SexGroup {
    std::string name;
    const PopulationLabel* female = nullptr;
    const PopulationLabel* male = nullptr;
    const PopulationLabel* total = nullptr;
};

std::vector<SexGroup> sex_groups(const MortalityDataset& ds) {
    std::vector<SexGroup> groups;
    auto find = [&](const std::string& g) -> SexGroup& {
        for (auto& gr : groups)
            if (gr.name == g) return gr;
        groups.push_back({g});
        return groups.back();
    };
    for (const auto& [label, data] : ds.populations) {
        const std::string g = label.region ? label.name + "/" + *label.region : label.name;
        auto& gr = find(g);
        if (label.sex == Sex::female) gr.female = &label;
        else if (label.sex == Sex::male) gr.male = &label;
        else gr.total = &label;
    }
    return groups;
}

std::map<std::string, methods::ForecastSurface> run_method(const MortalityDataset& ds,
                                                           const SurfaceSet& surfaces,
                                                           const methods::MethodSpec& spec,
                                                           int horizon) {
    std::map<std::string, methods::ForecastSurface> out;
    for (const auto& group : sex_groups(ds)) {
        std::vector<const PopulationLabel*> sexed;
        if (group.female) sexed.push_back(group.female);
        if (group.male) sexed.push_back(group.male);
        switch (spec.kind) {
            case methods::MethodKind::lee_carter:
                for (const auto* l : sexed)
                    out.emplace(l->key(), methods::forecast_lee_carter(surfaces.at(l->key()),
                                                                       l->key(), horizon));
                break;
            case methods::MethodKind::independent_fdm:
                for (const auto* l : sexed)
                    out.emplace(l->key(),
                                methods::fit_independent_fdm(surfaces.at(l->key()), l->key(),
                                                             horizon, spec.p1));
                break;
            case methods::MethodKind::product_ratio: {
                if (!group.female || !group.male)
                    throw DataError("product_ratio needs both sexes in group " + group.name);
                auto [f, m] = methods::fit_product_ratio(
                    surfaces.at(group.female->key()), surfaces.at(group.male->key()),
                    group.female->key(), group.male->key(), horizon);
                out.emplace(f.population, std::move(f));
                out.emplace(m.population, std::move(m));
                break;
            }
            case methods::MethodKind::li_lee: {
                if (!group.total || sexed.size() < 2)
                    throw DataError("li_lee needs a total plus both sexes in group " + group.name);
                std::vector<std::pair<std::string, const SmoothedSurface*>> pops;
                for (const auto* l : sexed) pops.push_back({l->key(), &surfaces.at(l->key())});
                for (auto& [k, fs] : methods::fit_li_lee(surfaces.at(group.total->key()), pops,
                                                         horizon))
                    out.emplace(k, std::move(fs));
                break;
            }
            case methods::MethodKind::multilevel_fdm: {
                if (!group.total || sexed.size() < 2)
                    throw DataError("multilevel needs a total plus both sexes in group " +
                                    group.name);
                std::vector<std::pair<std::string, const SmoothedSurface*>> pops;
                for (const auto* l : sexed) pops.push_back({l->key(), &surfaces.at(l->key())});
                const auto dec = multilevel_decompose(surfaces.at(group.total->key()), pops,
                                                      spec.p1, spec.p2);
                for (auto& [k, fs] :
                     methods::multilevel_point_forecast(dec, spec.score_model, horizon))
                    out.emplace(k, std::move(fs));
                break;
            }
        }
    }
    return out;
}

methods::ScoreModel score_model_from(const std::string& s) {
    if (s == "arima") return methods::ScoreModel::auto_arima;
    if (s == "rwf" || s == "rwd") return methods::ScoreModel::rwd;
    throw ConfigError("--score-model must be arima or rwf, got '" + s + "'");
}

void write_forecast_csv(std::ostream& out, const AgeGrid& grid,
                        const std::map<std::string, methods::ForecastSurface>& fcs,
                        const std::string& method_label) {
    out << "method,population,horizon,age,log_rate_forecast\n";
    for (const auto& [key, fs] : fcs) {
        for (Eigen::Index h = 0; h < fs.log_rates.rows(); ++h)
            for (Eigen::Index i = 0; i < fs.log_rates.cols(); ++i)
                out << method_label << ',' << key << ',' << h + 1 << ','
                    << age_token(grid, static_cast<std::size_t>(i)) << ','
                    << fmt(fs.log_rates(h, i)) << '\n';
    }
}

// ---------------------------------------------------------------------------
// evaluate plan config

const char* const kPlanSchema = R"schema({
  "dataset": "path to canonical CSV (required)",
  "hierarchy": "optional path to hierarchy JSON",
  "holdout": "int >= 1 (default 30)",
  "alpha": "interval level in (0,1) (default 0.2)",
  "smoothing": "\"none\" or \"penalized\" (default none)",
  "smooth_alpha": "number (default 1.0)",
  "monotone_from_age": "number (default 65)",
  "intervals": "bool (default true)",
  "methods": "[{\"kind\": ..., \"score_model\": \"arima|rwf\", \"p1\": 0.9, \"p2\": 0.9}]"
})schema";

struct PlanFile {
    std::string dataset;
    std::string hierarchy;
    eval::BacktestPlan plan;
};

PlanFile parse_plan(const json& j) {
    if (!j.is_object()) throw ConfigError("plan: expected a JSON object; schema:\n" + std::string(kPlanSchema));
    const std::set<std::string> known{"dataset",     "hierarchy", "holdout",
                                      "alpha",       "smoothing", "smooth_alpha",
                                      "monotone_from_age", "intervals", "methods"};
    for (const auto& [key, val] : j.items())
        if (!known.count(key)) throw ConfigError("plan: unknown key '" + key + "'");
    PlanFile pf;
    if (!j.contains("dataset") || !j.at("dataset").is_string())
        throw ConfigError("plan: 'dataset' (string) is required");
    pf.dataset = j.at("dataset").get<std::string>();
    if (j.contains("hierarchy")) pf.hierarchy = j.at("hierarchy").get<std::string>();
    if (j.contains("holdout")) pf.plan.holdout = j.at("holdout").get<int>();
    if (j.contains("alpha")) pf.plan.alpha = j.at("alpha").get<double>();
    if (j.contains("smooth_alpha")) pf.plan.smooth_alpha = j.at("smooth_alpha").get<double>();
    if (j.contains("monotone_from_age"))
        pf.plan.monotone_from_age = j.at("monotone_from_age").get<double>();
    if (j.contains("intervals")) pf.plan.intervals = j.at("intervals").get<bool>();
    if (j.contains("smoothing")) {
        const auto s = j.at("smoothing").get<std::string>();
        if (s == "none") pf.plan.smoothing = eval::SmoothingChoice::none;
        else if (s == "penalized") pf.plan.smoothing = eval::SmoothingChoice::penalized;
        else throw ConfigError("plan: smoothing must be 'none' or 'penalized'");
    }
    if (!j.contains("methods") || !j.at("methods").is_array() || j.at("methods").empty())
        throw ConfigError("plan: 'methods' (non-empty array) is required");
    for (const auto& m : j.at("methods")) {
        methods::MethodSpec spec;
        if (m.is_string()) {
            spec.kind = methods::method_from_string(m.get<std::string>());
        } else if (m.is_object()) {
            if (!m.contains("kind")) throw ConfigError("plan: method entry needs 'kind'");
            spec.kind = methods::method_from_string(m.at("kind").get<std::string>());
            if (m.contains("score_model"))
                spec.score_model = score_model_from(m.at("score_model").get<std::string>());
            if (m.contains("p1")) spec.p1 = m.at("p1").get<double>();
            if (m.contains("p2")) spec.p2 = m.at("p2").get<double>();
        } else {
            throw ConfigError("plan: method entries must be strings or objects");
        }
        pf.plan.methods.push_back(spec);
    }
    return pf;
}

// ---------------------------------------------------------------------------
// subcommand bodies

int cmd_ingest(const std::vector<std::string>& rates, const std::vector<std::string>& exposures,
               std::vector<std::string> names, const std::string& hierarchy, double age_cap,
               const std::string& out) {
    LoadOptions opts;
    opts.age_cap = age_cap;
    if (names.empty())
        for (std::size_t i = 0; i < rates.size(); ++i) names.push_back(fs::path(rates[i]).stem().string());
    const auto ds = load_hmd_dataset(rates, exposures, names, hierarchy, opts);
    write_atomic(out, [&](std::ostream& os) { write_csv_dataset(os, ds); });
    std::cout << "wrote " << out << ": " << ds.populations.size() << " populations, years "
              << ds.first_year << ".." << ds.first_year + ds.n_years() - 1 << ", " << ds.grid.size()
              << " age groups\n";
    return 0;
}

int cmd_smooth(const std::string& input, const std::string& hierarchy, const std::string& alpha,
               double monotone_from, const std::string& out) {
    const auto ds = load_csv_dataset_file(input, hierarchy);
    const auto opts = smooth_options(alpha, monotone_from);
    const auto surfaces = smooth_all(ds, true, opts);
    write_atomic(out, [&](std::ostream& os) {
        os << "population,year,age,f,delta2\n";
        for (const auto& [key, s] : surfaces.by_key)
            for (Eigen::Index t = 0; t < s.f.rows(); ++t)
                for (Eigen::Index i = 0; i < s.f.cols(); ++i)
                    os << key << ',' << s.first_year + t << ','
                       << age_token(s.grid, static_cast<std::size_t>(i)) << ',' << fmt(s.f(t, i))
                       << ',' << fmt(s.delta2(t, i)) << '\n';
    });
    std::cout << "wrote " << out << '\n';
    return 0;
}

struct FitInputs {
    MortalityDataset ds;
    SurfaceSet surfaces;
    MultilevelDecomposition dec;
    std::vector<std::string> pop_keys;
    std::string total_key;
};

FitInputs fit_multilevel(const std::string& input, const std::string& hierarchy,
                         const std::string& alpha, double monotone_from, bool penalized, double p1,
                         double p2) {
    FitInputs fi;
    fi.ds = load_csv_dataset_file(input, hierarchy);
    fi.surfaces = smooth_all(fi.ds, penalized, smooth_options(alpha, monotone_from));
    const auto groups = sex_groups(fi.ds);
    const SexGroup* chosen = nullptr;
    for (const auto& g : groups)
        if (g.total && g.female && g.male) {
            chosen = &g;
            break;
        }
    if (!chosen) throw DataError("fit: need a group with total, female, and male populations");
    fi.total_key = chosen->total->key();
    std::vector<std::pair<std::string, const SmoothedSurface*>> pops;
    for (const auto* l : {chosen->female, chosen->male}) {
        fi.pop_keys.push_back(l->key());
        pops.push_back({l->key(), &fi.surfaces.at(l->key())});
    }
    fi.dec = multilevel_decompose(fi.surfaces.at(fi.total_key), pops, p1, p2);
    return fi;
}

int cmd_fit(const std::string& input, const std::string& hierarchy, const std::string& alpha,
            double monotone_from, bool no_smooth, double p1, double p2,
            const std::string& out_prefix) {
    const auto fi =
        fit_multilevel(input, hierarchy, alpha, monotone_from, !no_smooth, p1, p2);
    const auto& dec = fi.dec;
    const auto& grid = dec.grid;

    write_atomic(out_prefix + "_mean.csv", [&](std::ostream& os) {
        os << "age,mu\n";
        for (Eigen::Index i = 0; i < dec.mu.size(); ++i)
            os << age_token(grid, static_cast<std::size_t>(i)) << ',' << fmt(dec.mu[i]) << '\n';
    });
    write_atomic(out_prefix + "_eta.csv", [&](std::ostream& os) {
        os << "population,age,eta\n";
        for (const auto& [key, eta] : dec.eta)
            for (Eigen::Index i = 0; i < eta.size(); ++i)
                os << key << ',' << age_token(grid, static_cast<std::size_t>(i)) << ','
                   << fmt(eta[i]) << '\n';
    });
    auto write_system = [&](std::ostream& os, const std::string& level, const EigenSystem& sys,
                            int first_year) {
        for (int k = 0; k < sys.order(); ++k)
            for (Eigen::Index i = 0; i < sys.eigenfunctions.cols(); ++i)
                os << "eigenfunction," << level << ',' << k + 1 << ','
                   << age_token(grid, static_cast<std::size_t>(i)) << ','
                   << fmt(sys.eigenfunctions(k, i)) << '\n';
        for (int k = 0; k < sys.order(); ++k)
            for (Eigen::Index t = 0; t < sys.scores.rows(); ++t)
                os << "score," << level << ',' << k + 1 << ',' << first_year + t << ','
                   << fmt(sys.scores(t, k)) << '\n';
        for (int k = 0; k < sys.order(); ++k)
            os << "eigenvalue," << level << ',' << k + 1 << ",," << fmt(sys.eigenvalues[k])
               << '\n';
    };
    write_atomic(out_prefix + "_components.csv", [&](std::ostream& os) {
        os << "kind,level,index,age_or_year,value\n";
        write_system(os, "common", dec.common, dec.first_year);
        for (const auto& [key, sys] : dec.specific) write_system(os, key, sys, dec.first_year);
    });
    write_atomic(out_prefix + "_sigma2.csv", [&](std::ostream& os) {
        os << "population,sigma2,within_cluster_variability,L\n";
        for (const auto& [key, s2] : dec.sigma2) {
            const double wcv = within_cluster_variability(dec.common.lambda_total,
                                                          dec.specific.at(key).lambda_total);
            os << key << ',' << fmt(s2) << ',' << fmt(wcv) << ',' << dec.L(key) << '\n';
        }
    });
    std::cout << "fit: K=" << dec.K() << " common components";
    for (const auto& key : dec.population_keys) std::cout << ", L(" << key << ")=" << dec.L(key);
    std::cout << '\n';
    return 0;
}

int cmd_forecast(const std::string& input, const std::string& hierarchy, const std::string& method,
                 const std::string& score_model, int horizon, const std::string& alpha,
                 double monotone_from, bool no_smooth, const std::string& out) {
    const auto ds = load_csv_dataset_file(input, hierarchy);
    const auto surfaces = smooth_all(ds, !no_smooth, smooth_options(alpha, monotone_from));
    methods::MethodSpec spec;
    spec.kind = methods::method_from_string(method);
    spec.score_model = score_model_from(score_model);
    spec.horizon = horizon;
    const auto fcs = run_method(ds, surfaces, spec, horizon);
    const auto label = methods::method_row_label(spec.kind, spec.score_model);
    write_atomic(out, [&](std::ostream& os) { write_forecast_csv(os, ds.grid, fcs, label); });
    std::cout << "wrote " << out << " (" << fcs.size() << " populations, horizon " << horizon
              << ")\n";
    return 0;
}

int cmd_simulate(const std::string& input, const std::string& hierarchy, const std::string& alpha,
                 double monotone_from, bool no_smooth, double p1, double p2, int draws, int burn,
                 int thin, int chains, std::uint64_t seed, int horizon,
                 const std::string& score_model, const std::string& out_prefix) {
    const auto fi = fit_multilevel(input, hierarchy, alpha, monotone_from, !no_smooth, p1, p2);

    bayes::GibbsConfig cfg;
    cfg.total_draws = draws;
    cfg.burn_in = burn;
    cfg.thin = thin;
    cfg.chains = chains;
    cfg.seed = seed;
    std::vector<std::pair<std::string, const SmoothedSurface*>> pops;
    for (const auto& key : fi.pop_keys) pops.push_back({key, &fi.surfaces.at(key)});
    const auto post = bayes::run_gibbs(fi.dec, pops, cfg);

    bayes::SimulateOptions sim;
    sim.horizon = horizon;
    sim.score_model = score_model_from(score_model);
    sim.seed = seed;
    const auto paths = bayes::simulate_paths(fi.dec, post, sim);

    write_atomic(out_prefix + "_summary.csv", [&](std::ostream& os) {
        os << "draw,population,sigma2,v_omega\n";
        for (std::size_t b = 0; b < post.draws.size(); ++b)
            for (const auto& key : fi.pop_keys)
                os << b << ',' << key << ',' << fmt(post.draws[b].sigma2) << ','
                   << fmt(post.draws[b].v_omega.at(key)) << '\n';
    });
    write_atomic(out_prefix + "_intervals.csv", [&](std::ostream& os) {
        os << "population,horizon,age,lo80,hi80,lo95,hi95\n";
        for (const auto& key : fi.pop_keys) {
            const auto i80 = bayes::prediction_interval(paths.paths.at(key), 0.2);
            const auto i95 = bayes::prediction_interval(paths.paths.at(key), 0.05);
            for (int h = 0; h < horizon; ++h)
                for (Eigen::Index i = 0; i < fi.dec.mu.size(); ++i)
                    os << key << ',' << h + 1 << ','
                       << age_token(fi.dec.grid, static_cast<std::size_t>(i)) << ','
                       << fmt(std::exp(i80.lower(h, i))) << ',' << fmt(std::exp(i80.upper(h, i)))
                       << ',' << fmt(std::exp(i95.lower(h, i))) << ','
                       << fmt(std::exp(i95.upper(h, i))) << '\n';
        }
    });
    write_atomic(out_prefix + "_paths.csv", [&](std::ostream& os) {
        os << "population,draw,horizon,age,log_rate\n";
        for (const auto& key : fi.pop_keys) {
            const auto& ps = paths.paths.at(key);
            for (std::size_t b = 0; b < ps.size(); ++b)
                for (int h = 0; h < horizon; ++h)
                    for (Eigen::Index i = 0; i < fi.dec.mu.size(); ++i)
                        os << key << ',' << b << ',' << h + 1 << ','
                           << age_token(fi.dec.grid, static_cast<std::size_t>(i)) << ','
                           << fmt(ps[b](h, i)) << '\n';
        }
    });
    std::cout << "simulate: retained " << post.draws.size() << " draws";
    for (const auto& [key, acc] : post.v_omega_acceptance)
        std::cout << ", v_omega acceptance(" << key << ")=" << fmt(acc);
    std::cout << '\n';
    return 0;
}

int cmd_e0(const std::string& input, const std::string& paths_file, const std::string& out) {
    // Forecast CSV: method,population,horizon,age,log_rate_forecast
    std::ifstream in(input);
    if (!in) throw DataError("cannot open " + input);
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty forecast file");
    struct Key {
        std::string pop;
        int horizon;
        bool operator<(const Key& o) const {
            return pop < o.pop || (pop == o.pop && horizon < o.horizon);
        }
    };
    std::map<Key, std::vector<std::pair<double, double>>> rows; // (age, log rate)
    std::set<double> age_set;
    bool open_last = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::string cur;
        for (char c : line) {
            if (c == ',') {
                f.push_back(cur);
                cur.clear();
            } else if (c != '\r') cur += c;
        }
        f.push_back(cur);
        if (f.size() != 5) throw DataError("forecast file: expected 5 columns");
        std::string age_tok = f[3];
        bool open = false;
        if (!age_tok.empty() && age_tok.back() == '+') {
            open = true;
            age_tok.pop_back();
        }
        const double age = std::stod(age_tok);
        age_set.insert(age);
        if (open) open_last = true;
        rows[{f[1], std::stoi(f[2])}].push_back({age, std::stod(f[4])});
    }
    const std::vector<double> ages(age_set.begin(), age_set.end());
    const AgeGrid grid(ages, open_last);

    // Optional sample paths for percentile intervals.
    std::map<std::string, std::map<int, std::map<int, Vector>>> path_rows; // pop -> draw -> h -> p
    if (!paths_file.empty()) {
        std::ifstream pin(paths_file);
        if (!pin) throw DataError("cannot open " + paths_file);
        std::getline(pin, line);
        while (std::getline(pin, line)) {
            if (line.empty()) continue;
            std::vector<std::string> f;
            std::string cur;
            for (char c : line) {
                if (c == ',') {
                    f.push_back(cur);
                    cur.clear();
                } else if (c != '\r') cur += c;
            }
            f.push_back(cur);
            if (f.size() != 5) throw DataError("paths file: expected 5 columns");
            std::string age_tok = f[3];
            if (!age_tok.empty() && age_tok.back() == '+') age_tok.pop_back();
            const double age = std::stod(age_tok);
            const auto ai = static_cast<Eigen::Index>(
                std::lower_bound(ages.begin(), ages.end(), age) - ages.begin());
            auto& v = path_rows[f[0]][std::stoi(f[1])][std::stoi(f[2])];
            if (v.size() == 0) v = Vector::Zero(static_cast<Eigen::Index>(ages.size()));
            v[ai] = std::stod(f[4]);
        }
    }

    write_atomic(out, [&](std::ostream& os) {
        os << "population,horizon,e0,lo80,hi80,lo95,hi95\n";
        for (const auto& [key, cells] : rows) {
            Vector lr(static_cast<Eigen::Index>(ages.size()));
            for (const auto& [age, v] : cells) {
                const auto ai = static_cast<Eigen::Index>(
                    std::lower_bound(ages.begin(), ages.end(), age) - ages.begin());
                lr[ai] = v;
            }
            const double point = lt::e0(lr.array().exp().matrix(), grid);
            double lo80 = point, hi80 = point, lo95 = point, hi95 = point;
            auto pit = path_rows.find(key.pop);
            if (pit != path_rows.end()) {
                std::vector<double> samples;
                for (const auto& [draw, by_h] : pit->second) {
                    auto hit = by_h.find(key.horizon);
                    if (hit == by_h.end()) continue;
                    samples.push_back(lt::e0(hit->second.array().exp().matrix(), grid));
                }
                if (samples.size() >= 20) {
                    lo80 = quantile(samples, 0.10);
                    hi80 = quantile(samples, 0.90);
                    lo95 = quantile(samples, 0.025);
                    hi95 = quantile(samples, 0.975);
                }
            }
            os << key.pop << ',' << key.horizon << ',' << fmt(point) << ',' << fmt(lo80) << ','
               << fmt(hi80) << ',' << fmt(lo95) << ',' << fmt(hi95) << '\n';
        }
    });
    std::cout << "wrote " << out << '\n';
    return 0;
}

int cmd_evaluate(const std::string& plan_path, const std::string& out) {
    std::ifstream in(plan_path);
    if (!in) throw DataError("cannot open plan " + plan_path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("plan: invalid JSON: ") + e.what());
    }
    const auto pf = parse_plan(j);
    const auto ds = load_csv_dataset_file(pf.dataset, pf.hierarchy);
    const auto report = eval::evaluate(ds, pf.plan);
    write_atomic(out, [&](std::ostream& os) { eval::write_report_csv(os, report); });
    std::cout << "wrote " << out << " (" << report.rows.size() << " rows)\n";
    return 0;
}

int cmd_demo(std::uint64_t seed, const std::string& out_dir, int years, int ages, int horizon) {
    synthetic::TwoSexConfig cfg;
    cfg.seed = seed;
    cfg.n_years = years;
    cfg.p_ages = ages;
    const auto ds = synthetic::two_sex_dataset(cfg);
    fs::create_directories(out_dir);
    const auto path = [&](const std::string& f) { return (fs::path(out_dir) / f).string(); };

    write_atomic(path("data.csv"), [&](std::ostream& os) { write_csv_dataset(os, ds); });
    std::cout << "demo: dataset " << path("data.csv") << '\n';

    // Smoothed surfaces (fixed alpha keeps the demo quick and deterministic).
    SmoothOptions sopts;
    sopts.alpha = AlphaPolicy::fixed_value(1.0);
    const auto surfaces = smooth_all(ds, true, sopts);
    write_atomic(path("smoothed.csv"), [&](std::ostream& os) {
        os << "population,year,age,f,delta2\n";
        for (const auto& [key, s] : surfaces.by_key)
            for (Eigen::Index t = 0; t < s.f.rows(); ++t)
                for (Eigen::Index i = 0; i < s.f.cols(); ++i)
                    os << key << ',' << s.first_year + t << ','
                       << age_token(s.grid, static_cast<std::size_t>(i)) << ',' << fmt(s.f(t, i))
                       << ',' << fmt(s.delta2(t, i)) << '\n';
    });

    // Decomposition artifacts.
    std::vector<std::pair<std::string, const SmoothedSurface*>> pops{
        {"demo/female", &surfaces.at("demo/female")}, {"demo/male", &surfaces.at("demo/male")}};
    const auto dec = multilevel_decompose(surfaces.at("demo/total"), pops, 0.9, 0.9);
    write_atomic(path("fit_sigma2.csv"), [&](std::ostream& os) {
        os << "population,sigma2,within_cluster_variability,L\n";
        for (const auto& [key, s2] : dec.sigma2)
            os << key << ',' << fmt(s2) << ','
               << fmt(within_cluster_variability(dec.common.lambda_total,
                                                 dec.specific.at(key).lambda_total))
               << ',' << dec.L(key) << '\n';
    });

    // Point forecasts from all six method rows.
    const std::vector<std::pair<methods::MethodSpec, std::string>> specs = [] {
        std::vector<std::pair<methods::MethodSpec, std::string>> v;
        methods::MethodSpec s;
        s.kind = methods::MethodKind::lee_carter;
        v.push_back({s, methods::method_row_label(s.kind, s.score_model)});
        s.kind = methods::MethodKind::li_lee;
        v.push_back({s, methods::method_row_label(s.kind, s.score_model)});
        s.kind = methods::MethodKind::independent_fdm;
        v.push_back({s, methods::method_row_label(s.kind, s.score_model)});
        s.kind = methods::MethodKind::product_ratio;
        v.push_back({s, methods::method_row_label(s.kind, s.score_model)});
        s.kind = methods::MethodKind::multilevel_fdm;
        s.score_model = methods::ScoreModel::auto_arima;
        v.push_back({s, methods::method_row_label(s.kind, s.score_model)});
        s.score_model = methods::ScoreModel::rwd;
        v.push_back({s, methods::method_row_label(s.kind, s.score_model)});
        return v;
    }();
    write_atomic(path("forecast.csv"), [&](std::ostream& os) {
        os << "method,population,horizon,age,log_rate_forecast\n";
        for (const auto& [spec, label] : specs) {
            const auto fcs = run_method(ds, surfaces, spec, horizon);
            for (const auto& [key, fs] : fcs)
                for (Eigen::Index h = 0; h < fs.log_rates.rows(); ++h)
                    for (Eigen::Index i = 0; i < fs.log_rates.cols(); ++i)
                        os << label << ',' << key << ',' << h + 1 << ','
                           << age_token(ds.grid, static_cast<std::size_t>(i)) << ','
                           << fmt(fs.log_rates(h, i)) << '\n';
        }
    });
    std::cout << "demo: forecasts " << path("forecast.csv") << '\n';

    // Bayesian intervals (small chain, demo scale).
    bayes::GibbsConfig gcfg;
    gcfg.total_draws = 1200;
    gcfg.burn_in = 600;
    gcfg.thin = 6;
    gcfg.seed = seed;
    const auto post = bayes::run_gibbs(dec, pops, gcfg);
    bayes::SimulateOptions sim;
    sim.horizon = horizon;
    sim.score_model = methods::ScoreModel::rwd;
    sim.seed = seed;
    const auto paths = bayes::simulate_paths(dec, post, sim);
    write_atomic(path("intervals.csv"), [&](std::ostream& os) {
        os << "population,horizon,age,lo80,hi80,lo95,hi95\n";
        for (const auto& key : dec.population_keys) {
            const auto i80 = bayes::prediction_interval(paths.paths.at(key), 0.2);
            const auto i95 = bayes::prediction_interval(paths.paths.at(key), 0.05);
            for (int h = 0; h < horizon; ++h)
                for (Eigen::Index i = 0; i < dec.mu.size(); ++i)
                    os << key << ',' << h + 1 << ','
                       << age_token(dec.grid, static_cast<std::size_t>(i)) << ','
                       << fmt(std::exp(i80.lower(h, i))) << ',' << fmt(std::exp(i80.upper(h, i)))
                       << ',' << fmt(std::exp(i95.lower(h, i))) << ','
                       << fmt(std::exp(i95.upper(h, i))) << '\n';
        }
    });

    // Life expectancy with percentile intervals from the sample paths.
    write_atomic(path("e0.csv"), [&](std::ostream& os) {
        os << "population,horizon,e0,lo80,hi80,lo95,hi95\n";
        const auto fcs = run_method(ds, surfaces, specs[4].first, horizon); // multilevel (arima)
        for (const auto& key : dec.population_keys) {
            const auto dist = lt::e0_distribution(paths.paths.at(key), ds.grid);
            const auto& fs = fcs.at(key);
            for (int h = 0; h < horizon; ++h) {
                const double point =
                    lt::e0(fs.log_rates.row(h).array().exp().matrix().transpose(), ds.grid);
                os << key << ',' << h + 1 << ',' << fmt(point) << ','
                   << fmt(dist.intervals(h, 0)) << ',' << fmt(dist.intervals(h, 1)) << ','
                   << fmt(dist.intervals(h, 2)) << ',' << fmt(dist.intervals(h, 3)) << '\n';
            }
        }
    });
    std::cout << "demo: life expectancy " << path("e0.csv") << '\n';

    // Rolling-origin evaluation over all six method rows.
    eval::BacktestPlan plan;
    plan.holdout = std::min(10, years / 3);
    plan.smoothing = eval::SmoothingChoice::none;
    for (const auto& [spec, label] : specs) plan.methods.push_back(spec);
    const auto report = eval::evaluate(ds, plan);
    write_atomic(path("report.csv"), [&](std::ostream& os) { eval::write_report_csv(os, report); });
    std::cout << "demo: report " << path("report.csv") << " (" << report.rows.size() << " rows)\n";

    // Plot-ready long-format sex-ratio paths (observed and forecast).
    write_atomic(path("sex_ratio.csv"), [&](std::ostream& os) {
        os << "source,year,age,log_ratio\n";
        const auto& f = surfaces.at("demo/female");
        const auto& m = surfaces.at("demo/male");
        for (Eigen::Index t = 0; t < f.f.rows(); ++t)
            for (Eigen::Index i = 0; i < f.f.cols(); ++i)
                os << "observed," << f.first_year + t << ','
                   << age_token(ds.grid, static_cast<std::size_t>(i)) << ','
                   << fmt(m.f(t, i) - f.f(t, i)) << '\n';
        const auto fcs = run_method(ds, surfaces, specs[4].first, horizon);
        const auto& ff = fcs.at("demo/female");
        const auto& mf = fcs.at("demo/male");
        for (int h = 0; h < horizon; ++h)
            for (Eigen::Index i = 0; i < ds.grid.size(); ++i)
                os << "forecast," << ff.first_forecast_year + h << ','
                   << age_token(ds.grid, static_cast<std::size_t>(i)) << ','
                   << fmt(mf.log_rates(h, i) - ff.log_rates(h, i)) << '\n';
    });
    std::cout << "demo: done, artifacts in " << out_dir << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"popmort: coherent mortality and life-expectancy forecasting"};
    app.require_subcommand(1);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Parse HMD-style tables into the canonical CSV");
    std::vector<std::string> in_rates, in_expo, in_names;
    std::string in_hier, in_out = "data.csv";
    double in_cap = 95.0;
    ingest->add_option("--rates", in_rates, "rate table file(s)")->required();
    ingest->add_option("--exposures", in_expo, "exposure table file(s)")->required();
    ingest->add_option("--name", in_names, "group name per file pair");
    ingest->add_option("--hierarchy", in_hier, "hierarchy spec JSON");
    ingest->add_option("--age-cap", in_cap, "open-ended group lower bound");
    ingest->add_option("--out", in_out, "output CSV");

    // smooth
    auto* smooth = app.add_subcommand("smooth", "Penalized smoothing of log mortality");
    std::string sm_in, sm_hier, sm_alpha = "auto", sm_out = "smoothed.csv";
    double sm_mono = 65.0;
    smooth->add_option("--input", sm_in, "canonical CSV")->required();
    smooth->add_option("--hierarchy", sm_hier, "hierarchy spec JSON");
    smooth->add_option("--alpha", sm_alpha, "auto or a fixed value");
    smooth->add_option("--monotone-from", sm_mono, "monotonicity from this age");
    smooth->add_option("--out", sm_out, "output CSV");

    // fit
    auto* fit = app.add_subcommand("fit", "Multilevel functional decomposition");
    std::string ft_in, ft_hier, ft_alpha = "auto", ft_prefix = "fit", ft_method = "multilevel";
    double ft_mono = 65.0, ft_p1 = 0.9, ft_p2 = 0.9;
    bool ft_nosmooth = false;
    fit->add_option("--input", ft_in, "canonical CSV")->required();
    fit->add_option("--hierarchy", ft_hier, "hierarchy spec JSON");
    fit->add_option("--method", ft_method, "decomposition method (multilevel)");
    fit->add_option("--alpha", ft_alpha, "auto or fixed smoothing value");
    fit->add_option("--monotone-from", ft_mono, "monotonicity from this age");
    fit->add_flag("--no-smooth", ft_nosmooth, "use raw log rates");
    fit->add_option("--p1", ft_p1, "common-trend variance threshold");
    fit->add_option("--p2", ft_p2, "residual-trend variance threshold");
    fit->add_option("--out-prefix", ft_prefix, "output file prefix");

    // forecast
    auto* fc = app.add_subcommand("forecast", "Point forecasts of log mortality");
    std::string fc_in, fc_hier, fc_method = "multilevel_fdm", fc_sm = "arima",
                fc_alpha = "auto", fc_out = "forecast.csv";
    double fc_mono = 65.0;
    bool fc_nosmooth = false;
    int fc_h = 30;
    fc->add_option("--input", fc_in, "canonical CSV")->required();
    fc->add_option("--hierarchy", fc_hier, "hierarchy spec JSON");
    fc->add_option("--method", fc_method,
                   "lee_carter|li_lee|independent_fdm|product_ratio|multilevel_fdm");
    fc->add_option("--score-model", fc_sm, "arima|rwf");
    fc->add_option("--horizon", fc_h, "forecast horizon");
    fc->add_option("--alpha", fc_alpha, "auto or fixed smoothing value");
    fc->add_option("--monotone-from", fc_mono, "monotonicity from this age");
    fc->add_flag("--no-smooth", fc_nosmooth, "use raw log rates");
    fc->add_option("--out", fc_out, "output CSV");

    // simulate
    auto* sim = app.add_subcommand("simulate", "Gibbs sampler and predictive sample paths");
    std::string si_in, si_hier, si_alpha = "auto", si_sm = "rwf", si_prefix = "sim";
    double si_mono = 65.0, si_p1 = 0.9, si_p2 = 0.9;
    bool si_nosmooth = false;
    int si_draws = 20000, si_burn = 10000, si_thin = 10, si_chains = 1, si_h = 30;
    std::uint64_t si_seed = 1;
    sim->add_option("--input", si_in, "canonical CSV")->required();
    sim->add_option("--hierarchy", si_hier, "hierarchy spec JSON");
    sim->add_option("--draws", si_draws, "total MCMC draws");
    sim->add_option("--burn", si_burn, "burn-in draws");
    sim->add_option("--thin", si_thin, "keep every thin-th draw");
    sim->add_option("--chains", si_chains, "independent chains");
    sim->add_option("--seed", si_seed, "RNG seed");
    sim->add_option("--horizon", si_h, "forecast horizon");
    sim->add_option("--score-model", si_sm, "arima|rwf");
    sim->add_option("--alpha", si_alpha, "auto or fixed smoothing value");
    sim->add_option("--monotone-from", si_mono, "monotonicity from this age");
    sim->add_flag("--no-smooth", si_nosmooth, "use raw log rates");
    sim->add_option("--p1", si_p1, "common-trend variance threshold");
    sim->add_option("--p2", si_p2, "residual-trend variance threshold");
    sim->add_option("--out-prefix", si_prefix, "output file prefix");

    // e0
    auto* e0cmd = app.add_subcommand("e0", "Life expectancy from forecast rates");
    std::string e0_in, e0_paths, e0_out = "e0.csv";
    e0cmd->add_option("--input", e0_in, "forecast CSV")->required();
    e0cmd->add_option("--paths", e0_paths, "sample-paths CSV for percentile intervals");
    e0cmd->add_option("--out", e0_out, "output CSV");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "Rolling-origin backtest report");
    std::string ev_plan, ev_out = "report.csv";
    ev->add_option("--plan", ev_plan, "plan JSON")->required();
    ev->add_option("--out", ev_out, "report CSV");

    // demo
    auto* demo = app.add_subcommand("demo", "Synthetic two-sex dataset through the full pipeline");
    std::uint64_t dm_seed = 7;
    std::string dm_out = "out";
    int dm_years = 40, dm_ages = 60, dm_h = 20;
    demo->add_option("--seed", dm_seed, "RNG seed");
    demo->add_option("--out", dm_out, "output directory");
    demo->add_option("--years", dm_years, "sample length");
    demo->add_option("--ages", dm_ages, "number of single-year ages");
    demo->add_option("--horizon", dm_h, "forecast horizon");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        std::cerr << R"({"error":{"code":2,"kind":"config","message":")" << e.what()
                  << "\"}}\n";
        app.exit(e);
        return 2;
    }

    try {
        if (*ingest) return cmd_ingest(in_rates, in_expo, in_names, in_hier, in_cap, in_out);
        if (*smooth) return cmd_smooth(sm_in, sm_hier, sm_alpha, sm_mono, sm_out);
        if (*fit) return cmd_fit(ft_in, ft_hier, ft_alpha, ft_mono, ft_nosmooth, ft_p1, ft_p2,
                                 ft_prefix);
        if (*fc) return cmd_forecast(fc_in, fc_hier, fc_method, fc_sm, fc_h, fc_alpha, fc_mono,
                                     fc_nosmooth, fc_out);
        if (*sim) return cmd_simulate(si_in, si_hier, si_alpha, si_mono, si_nosmooth, si_p1, si_p2,
                                      si_draws, si_burn, si_thin, si_chains, si_seed, si_h, si_sm,
                                      si_prefix);
        if (*e0cmd) return cmd_e0(e0_in, e0_paths, e0_out);
        if (*ev) return cmd_evaluate(ev_plan, ev_out);
        if (*demo) return cmd_demo(dm_seed, dm_out, dm_years, dm_ages, dm_h);
    } catch (const ConfigError& e) {
        std::cerr << R"({"error":{"code":2,"kind":"config","message":")" << e.what() << "\"}}\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << R"({"error":{"code":3,"kind":"data","message":")" << e.what() << "\"}}\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << R"({"error":{"code":4,"kind":"numeric","message":")" << e.what() << "\"}}\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << R"({"error":{"code":4,"kind":"internal","message":")" << e.what() << "\"}}\n";
        return 4;
    }
    return 0;
}
