#pragma once

#include "popmort/fpca.hpp"
#include "popmort/methods.hpp"
#include "popmort/rng.hpp"
#include "popmort/smooth.hpp"

#include <map>

namespace popmort::bayes {

struct GibbsConfig {
    int total_draws = 20000;
    int burn_in = 10000;
    int thin = 10;
    int chains = 1;
    std::uint64_t seed = 1;
    double alpha1 = 1e-3; // error-precision Gamma(alpha1, alpha2): mean 1, variance 1000
    double alpha2 = 1e-3;
    double v_omega_init = 2.0; // hyperprior scale for the per-age precision layer

    void validate() const {
        if (burn_in >= total_draws) throw ConfigError("gibbs: burn_in must be < total_draws");
        if (thin < 1) throw ConfigError("gibbs: thin must be >= 1");
        if (chains < 1) throw ConfigError("gibbs: chains must be >= 1");
    }
    int retained_per_chain() const { return (total_draws - burn_in) / thin; }
};

struct GibbsDraw {
    Matrix beta;                         // n x K common scores
    std::map<std::string, Matrix> gamma; // population -> n x L scores
    double sigma2 = 0.0;                 // pooled model-error variance
    std::map<std::string, Vector> omega; // population -> per-age precisions
    std::map<std::string, double> v_omega;
};

struct PosteriorDraws {
    std::vector<GibbsDraw> draws;
    GibbsConfig config;
    std::map<std::string, double> v_omega_acceptance;
};

// --- single-site conditionals (exposed so their distributions can be tested) ---

/// Inverse error variance: 1/sigma2 ~ Gamma(alpha1 + Jnp/2, rate alpha2 + ssq/2).
double draw_sigma2(double alpha1, double alpha2, double resid_ssq, double j_n_p, RngStream& rng);

struct NormalParams {
    double mean = 0.0;
    double var = 0.0;
};

/// Common-score conditional. `cross` is sum_j sum_i phi(x_i) * partial residual
/// (the residual with this score's own contribution added back).
NormalParams beta_conditional(double lambda, double sigma2, int j_populations, double sum_phi2,
                              double cross);

/// Population-score conditional (the J = 1 case with psi in place of phi).
NormalParams gamma_conditional(double lambda, double sigma2, double sum_psi2, double cross);

/// Per-age precision, Gamma in the (mean, dof) parametrization:
/// omega ~ f_G((v+1) / (ssr + v), v + 1) with ssr = sum_t [y_t(x_i) - f_t(x_i)]^2.
double draw_omega(double ssr, double v_omega, RngStream& rng);

/// log pi(v | omega) up to a constant: (pv/2) ln(v/2) - p lnGamma(v/2) - eta v.
double v_omega_log_target(double v, double eta, int p);
double v_omega_eta(const Vector& omega, double v0);

/// Gibbs over Supplement-style full conditionals with eigenfunctions fixed at
/// their empirical estimates. Surfaces must be the ones the decomposition was
/// fitted on (their y - f residuals drive the precision layer).
PosteriorDraws run_gibbs(const MultilevelDecomposition& dec,
                         const std::vector<std::pair<std::string, const SmoothedSurface*>>& surfaces,
                         const GibbsConfig& cfg);

// --- sample paths and intervals ---

struct SimulateOptions {
    int horizon = 30;
    methods::ScoreModel score_model = methods::ScoreModel::rwd;
    /// Refit the score model on each drawn score history (default). When
    /// false, the model is fitted once to the empirical scores and its
    /// coefficients are re-applied to each drawn history.
    bool refit_per_draw = true;
    std::uint64_t seed = 1;
};

struct SamplePaths {
    std::map<std::string, std::vector<Matrix>> paths; // population -> B matrices, H x p log rates
    int first_forecast_year = 0;
    int horizon = 0;
    bool small_sample_warning = false; // fewer than 100 draws
};

SamplePaths simulate_paths(const MultilevelDecomposition& dec, const PosteriorDraws& draws,
                           const SimulateOptions& opts);

struct IntervalSurface {
    Matrix lower, upper; // H x p
};

/// Empirical alpha/2 and 1-alpha/2 percentiles per (horizon, age). Needs at
/// least 100 paths.
IntervalSurface prediction_interval(const std::vector<Matrix>& paths, double alpha = 0.2);

} // namespace popmort::bayes
