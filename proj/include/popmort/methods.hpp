#pragma once

#include "popmort/fpca.hpp"
#include "popmort/smooth.hpp"
#include "popmort/tsmodels.hpp"

#include <map>

namespace popmort::methods {

enum class MethodKind { lee_carter, li_lee, independent_fdm, product_ratio, multilevel_fdm };
enum class ScoreModel { auto_arima, rwd };

MethodKind method_from_string(const std::string& s);
std::string to_string(MethodKind m);

/// Table-style row label, e.g. "Multilevel FDM (rwf)".
std::string method_row_label(MethodKind m, ScoreModel s);

struct MethodSpec {
    MethodKind kind = MethodKind::multilevel_fdm;
    ScoreModel score_model = ScoreModel::auto_arima;
    double p1 = 0.9, p2 = 0.9;
    int horizon = 30;
};

/// Point forecasts of log mortality for one population, h = 1..H.
struct ForecastSurface {
    std::string population;
    std::string method;
    int first_forecast_year = 0;
    Matrix log_rates; // H x p
    Matrix se;        // H x p normal-approximation standard errors
};

ts::ScoreForecast score_forecast(const Vector& series, ScoreModel model, int horizon);

struct LeeCarterFit {
    Vector ax, bx, kt;
    Vector resid_var; // per-age mean squared residual of the rank-one fit
};

/// a_x row means; (b_x, k_t) first singular pair of the centered matrix with
/// sum(b) = 1, sum(k) = 0. A zero-variance matrix yields k = 0 and uniform b.
LeeCarterFit fit_lee_carter(const Matrix& log_rates);

ForecastSurface forecast_lee_carter(const SmoothedSurface& surf, const std::string& pop_key,
                                    int horizon);

/// Augmented common factor: Lee-Carter on the total (rwd on the common index),
/// one residual principal pair per population with AR(1) scores.
std::map<std::string, ForecastSurface> fit_li_lee(
    const SmoothedSurface& total,
    const std::vector<std::pair<std::string, const SmoothedSurface*>>& populations, int horizon);

ForecastSurface fit_independent_fdm(const SmoothedSurface& surf, const std::string& pop_key,
                                    int horizon, double threshold = 0.9,
                                    ScoreModel score_model = ScoreModel::auto_arima);

/// Product-ratio on the log scale: half-sum and half-difference, independent
/// FDM on each, ARFIMA for the ratio scores; female = p + r, male = p - r.
std::pair<ForecastSurface, ForecastSurface> fit_product_ratio(const SmoothedSurface& female,
                                                              const SmoothedSurface& male,
                                                              const std::string& female_key,
                                                              const std::string& male_key,
                                                              int horizon);

std::map<std::string, ForecastSurface> multilevel_point_forecast(
    const MultilevelDecomposition& dec, ScoreModel score_model, int horizon);

/// Two-level hierarchy (state x sex). Decomposition 1 shares a trend across
/// sexes within each state; decomposition 2 shares a trend across states
/// within each sex; the forecasts combine with half weights.
struct HierarchicalInput {
    std::vector<std::string> states;
    std::vector<std::string> sexes;
    // leaf surfaces keyed by (state, sex)
    std::map<std::pair<std::string, std::string>, const SmoothedSurface*> leaves;
    // optional state-total surfaces; missing states use the average of leaves
    std::map<std::string, const SmoothedSurface*> state_totals;
    double p1 = 0.9, p2 = 0.9;
};

std::map<std::string, ForecastSurface> hierarchical_multilevel(const HierarchicalInput& input,
                                                               ScoreModel score_model, int horizon);

} // namespace popmort::methods
