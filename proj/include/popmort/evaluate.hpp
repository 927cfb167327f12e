#pragma once

#include "popmort/dataset.hpp"
#include "popmort/methods.hpp"
#include "popmort/smooth.hpp"

#include <iosfwd>
#include <map>

namespace popmort::eval {

enum class SmoothingChoice {
    none,      // use log observed rates directly (delta2 from the Poisson formula)
    penalized, // weighted penalized L1 fit with a fixed alpha
};

struct BacktestPlan {
    int holdout = 30;
    double alpha = 0.2; // interval level
    std::vector<methods::MethodSpec> methods;
    SmoothingChoice smoothing = SmoothingChoice::none;
    double smooth_alpha = 1.0;
    double monotone_from_age = 65.0;
    bool intervals = true; // emit interval-score metrics (normal approximation)

    void validate(int n_years) const;
};

struct OriginForecast {
    int origin_year = 0; // last training year
    int horizon = 0;     // 1-based
    Vector forecast;     // rate scale
    Vector actual;       // rate scale
    Vector lower, upper; // rate-scale interval bounds (empty if disabled)
};

struct MethodBacktest {
    std::string method_label;
    std::map<std::string, std::vector<OriginForecast>> per_population;
    std::map<std::string, int> failed_origins;
};

/// Expanding-origin backtest of one method over the plan's holdout.
MethodBacktest rolling_origin(const MortalityDataset& ds, const BacktestPlan& plan,
                              const methods::MethodSpec& method);

struct PointMetrics {
    double rmsfe = 0.0, mafe = 0.0, mfe = 0.0;
    double max_afe = 0.0, max_rsfe = 0.0;
    int n = 0; // pooled cells
};

/// Errors pooled over rows (forecast occasions) and columns (ages).
PointMetrics point_metrics(const Matrix& forecast, const Matrix& actual);

/// (u - l) + (2/alpha)(l - y) 1{y < l} + (2/alpha)(y - u) 1{y > u}.
double interval_score(double lower, double upper, double observed, double alpha);

struct ScoreMetrics {
    double mean_score = 0.0;
    double max_score = 0.0;
    int n = 0;
};

ScoreMetrics score_metrics(const Matrix& lower, const Matrix& upper, const Matrix& actual,
                           double alpha);

struct ReportRow {
    std::string method;
    std::string population; // population key or "all"
    std::string horizon;    // "1".."H", "all" (unweighted), "all_weighted"
    std::string metric;
    double value = 0.0;
    int n_forecasts = 0;
};

struct EvaluationReport {
    std::vector<ReportRow> rows;
};

EvaluationReport evaluate(const MortalityDataset& ds, const BacktestPlan& plan);

void write_report_csv(std::ostream& out, const EvaluationReport& report);

/// Build the training-window surface per the plan's smoothing choice.
SmoothedSurface training_surface(const MortalityDataset& ds, const PopulationLabel& label,
                                 int n_train, const BacktestPlan& plan);

} // namespace popmort::eval
