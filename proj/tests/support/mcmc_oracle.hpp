#pragma once

// Metropolis-within-Gibbs sampler for the mortality model, used as a
// reference posterior. Dense linear algebra throughout; nothing here touches
// the sparse Cholesky or the Laplace engine.
//
// Each iteration performs
//   1. a joint block update of every latent entry that enters the fit rows,
//      proposed from a one-step IWLS Gaussian around the current state and
//      conditioned on the sum-to-zero constraints (Gamerman), and
//   2. slice-sampling updates of each hyperparameter given the latent field,
//   3. a joint random-walk move on the hyperparameters with the latent field
//      redrawn from its Gaussian approximation at the proposed point.
// Week effects of weeks without observations are marginalized out.

#include "exmort/laplace.hpp"
#include "exmort/mortality_model.hpp"

#include <cstdint>

#include <Eigen/Dense>

namespace exmort::testing {

struct McmcSettings {
    int burn_in = 20000;
    int iterations = 200000;
    std::uint64_t seed = 1;
};

struct McmcSummary {
    Eigen::VectorXd eta_mean; // per fit row
    Eigen::VectorXd eta_sd;
    Eigen::VectorXd theta_mean;
    double latent_acceptance = 0;
    double joint_acceptance = 0;
    long indefinite_proposals = 0;
    int iterations = 0;
};

McmcSummary run_mcmc_oracle(const MortalityModel &model, const McmcSettings &settings);

/// Laplace mixture moments of the linear predictor on the fit rows.
LinearPredictorMoments laplace_fit_moments(const MortalityModel &model, HyperGrid *grid = nullptr);

struct AgreementSummary {
    double fraction = 0;    // entries whose mean and sd both lie within `tolerance` MCMC sds
    double max_mean_gap = 0; // in MCMC sd units
    double max_sd_gap = 0;
};

AgreementSummary compare_moments(const LinearPredictorMoments &laplace, const McmcSummary &mcmc, double tolerance);

} // namespace exmort::testing
