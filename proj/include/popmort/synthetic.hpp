#pragma once

#include "popmort/dataset.hpp"
#include "popmort/types.hpp"

namespace popmort::synthetic {

/// Two-sex generator: a shared random-walk-with-drift trend loading on a
/// smooth age pattern, stationary AR(1) sex-specific residual processes, and
/// Poisson-consistent observation noise on the rates.
struct TwoSexConfig {
    int n_years = 60;
    int p_ages = 96; // single years 0..94 plus an open 95+ group when 96
    int first_year = 1950;
    std::uint64_t seed = 7;

    double common_drift = -1.6; // per-year drift of the shared trend score
    double common_sd = 1.0;     // random-walk innovation sd
    double resid_phi = 0.9;     // AR(1) of the sex residual scores
    double resid_sd = 1.0;      // AR(1) innovation sd
    double resid_scale = 0.25;  // amplitude of the sex residual age pattern

    double noise_scale = 1.0; // multiplies the Poisson observation noise; 0 = none
    double exposure_base = 4e5;
};

struct TwoSexSurfaces {
    AgeGrid grid;
    int first_year = 0;
    Matrix female, male, total; // smooth log rates, n x p; total = log-scale average
};

/// Noise-free model surfaces (the smooth f in the observation model).
TwoSexSurfaces two_sex_surfaces(const TwoSexConfig& cfg);

/// Full dataset with observed rates and exposures (total = arithmetic
/// aggregation of the sexes, like real vital registration data).
MortalityDataset two_sex_dataset(const TwoSexConfig& cfg);

} // namespace popmort::synthetic
