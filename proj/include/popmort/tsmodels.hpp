#pragma once

#include "popmort/types.hpp"

#include <limits>

namespace popmort::ts {

struct KpssResult {
    double statistic = 0.0;
    bool reject_at_5pct = false;
    int lags = 0;
};

enum class KpssLags {
    bartlett_short, // floor(4 (n/100)^{1/4})
    bartlett_long,  // floor(12 (n/100)^{1/4})
};

/// KPSS level-stationarity statistic with Bartlett-kernel long-run variance.
/// 5% critical value 0.463. A constant series scores 0.
KpssResult kpss_statistic(const Vector& series, KpssLags lags = KpssLags::bartlett_short);

/// Smallest d <= max_d whose d-th difference no longer rejects KPSS at 5%.
/// A rejection must be confirmed by both the short and long Bartlett
/// truncations: the short one alone over-rejects on persistent stationary
/// series, which turns into spurious differencing of AR scores.
int select_d(const Vector& series, int max_d = 2);

Vector difference(const Vector& series, int d);

enum class ModelKind { arima, rwd, ar1, arfima };

struct FittedTsModel {
    ModelKind kind = ModelKind::arima;
    int p = 0, d = 0, q = 0;
    double d_frac = 0.0; // arfima: fractional d after integer differencing
    bool constant = false;
    Vector ar, ma;
    double mean = 0.0;   // mean of the d-differenced series (drift when d = 1)
    double drift = 0.0;  // rwd drift
    double sigma2 = 0.0; // innovation variance
    double loglik = 0.0;
    double aicc = std::numeric_limits<double>::infinity();
    int n = 0;
    bool flagged = false; // fallback or clamped parameter
    Vector series;        // training data, kept for forecasting
};

struct ScoreForecast {
    int horizon = 0;
    Vector mean;
    Vector se;
    FittedTsModel model;
};

/// Exact Gaussian ARMA likelihood via the Kalman filter on the Harvey
/// state-space form, maximized by Nelder-Mead over partial-autocorrelation
/// transformed coefficients (stationary and invertible by construction).
FittedTsModel fit_arima(const Vector& series, int p, int d, int q, bool constant);

/// Hyndman-Khandakar stepwise order search minimizing AICc; d comes from the
/// KPSS cascade, (p, q) <= (5, 5), constant allowed when d <= 1. Falls back to
/// rwd (flagged) if nothing converges or the series is too short.
FittedTsModel auto_arima(const Vector& series);

/// Random walk with drift; drift = (y_n - y_1) / (n - 1).
FittedTsModel fit_rwd(const Vector& series);

/// AR(1) with intercept by conditional least squares; |phi| >= 1 is projected
/// into (-0.999, 0.999) and flagged.
FittedTsModel fit_ar1(const Vector& series);

/// Fractional d by Geweke-Porter-Hudak log-periodogram regression on the
/// lowest floor(sqrt(n)) frequencies, after KPSS integer differencing; ARMA on
/// the fractionally differenced series by the stepwise search.
FittedTsModel fit_arfima(const Vector& series);

ScoreForecast forecast(const FittedTsModel& model, int horizon);

} // namespace popmort::ts
