#pragma once

#include "exmort/gmrf.hpp"
#include "exmort/ingest.hpp"
#include "exmort/laplace.hpp"
#include "exmort/pc_priors.hpp"
#include "exmort/spatial_graph.hpp"

#include <cstdint>
#include <memory>
#include <vector>

#include <json.hpp>

namespace exmort {

struct ModelSettings {
    int n_bins = 100;
    bool scale_random_walks = true;
    PriorSettings priors;
    HyperOptions hyper;
    NewtonOptions newton;
};

/// Starting hyperparameters of the mode search (internal scale).
Eigen::VectorXd default_initial_hyper();

/// Sum of the four PC precision log-densities and the PC log-density of logit(phi).
double mortality_log_hyper_prior(const Eigen::VectorXd &theta, const PriorSettings &priors,
                                 const PCPhiPrior &phi_prior);

/// Per-stratum Poisson model of the weekly death counts.
class MortalityModel {
  public:
    /// The graph labels must equal the frame areas, in order.
    MortalityModel(ModelFrame frame, const Graph &graph, ModelSettings settings);

    const ModelFrame &frame() const { return frame_; }
    const LatentLayout &layout() const { return layout_; }
    const TemperatureBins &bins() const { return bins_; }
    const ModelStructures &structures() const { return structures_; }
    const PCPhiPrior &phi_prior() const { return *phi_prior_; }
    const LaplaceEngine &engine() const { return *engine_; }
    const ModelSettings &settings() const { return settings_; }

    const std::vector<std::size_t> &fit_rows() const { return fit_rows_; }
    const std::vector<std::size_t> &prediction_rows() const { return prediction_rows_; }

    HyperGrid fit() const { return engine_->explore(settings_.hyper); }

    /// Linear-predictor draws on the prediction rows (rows x n_samples).
    Eigen::MatrixXd sample_prediction_eta(const HyperGrid &grid, int n_samples, std::uint64_t seed) const;

  private:
    ModelFrame frame_;
    ModelSettings settings_;
    LatentLayout layout_;
    TemperatureBins bins_;
    ModelStructures structures_;
    std::shared_ptr<const PCPhiPrior> phi_prior_;
    std::vector<std::size_t> fit_rows_;
    std::vector<std::size_t> prediction_rows_;
    std::unique_ptr<LaplaceEngine> engine_;
};

/// Hyperparameter grid with per-point latent modes, for persistence.
nlohmann::json grid_to_json(const HyperGrid &grid);
/// Rebuilds the Gaussian approximations at the stored modes.
HyperGrid grid_from_json(const nlohmann::json &doc, const LaplaceEngine &engine);

/// Per-point diagnostics: theta, log-density, weight, Newton iterations.
std::string grid_diagnostics_csv(const HyperGrid &grid);

} // namespace exmort
