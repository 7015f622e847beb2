#pragma once

#include "exmort/sparse_cholesky.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace exmort {

enum class Likelihood { poisson, gaussian };

/// Latent Gaussian model y | x ~ prod p(y_i | eta_i), eta = A x + offset,
/// x | theta ~ N(0, Q(theta)^{-1}) restricted to C x = 0.
struct LatentGaussianModel {
    Eigen::Index n_latent = 0;

    SparseMatrix fit_design;
    Eigen::VectorXd fit_offset;
    Eigen::VectorXd observations;
    Likelihood likelihood = Likelihood::poisson;
    /// Per-observation precision for the Gaussian likelihood.
    Eigen::VectorXd gaussian_precision;

    /// Rows emitted by sampling and moment queries.
    SparseMatrix output_design;
    Eigen::VectorXd output_offset;

    /// Linear constraints, one per row (k x n_latent, k may be 0).
    Eigen::MatrixXd constraints;

    int n_hyper = 0;
    std::function<SparseMatrix(const Eigen::VectorXd &)> prior_precision;
    std::function<double(const Eigen::VectorXd &)> log_hyper_prior;
    /// Optional closed form of log|Q| + log|C Q^-1 C'|; replaces factorizing the prior.
    std::function<double(const Eigen::VectorXd &)> prior_log_determinant;
    Eigen::VectorXd initial_hyper;

    /// Latent entry started at log(sum y / sum exp(offset)) for Poisson data; -1 for none.
    Eigen::Index intercept_index = -1;

    void validate() const;
};

struct NewtonOptions {
    int max_iterations = 50;
    double tolerance = 1e-6;
    int max_halvings = 40;
};

/// Gaussian approximation of p(x | y, theta) at the constrained mode.
struct GaussianApprox {
    Eigen::VectorXd theta;
    Eigen::VectorXd mode;
    SparseCholesky chol; // Q* = Q + A' diag(c) A
    Eigen::MatrixXd constraints;
    Eigen::MatrixXd kriging_w;           // Q*^{-1} C'
    Eigen::LLT<Eigen::MatrixXd> kriging_s; // C Q*^{-1} C'
    double log_laplace = 0;
    double log_likelihood = 0;
    int iterations = 0;
    std::vector<double> objective_trace;

    /// x - W S^{-1} C x.
    Eigen::VectorXd condition(const Eigen::VectorXd &x) const;
    /// Covariance of the constrained approximation times B: (Q*^{-1} - W S^{-1} W') B.
    Eigen::MatrixXd covariance_times(const Eigen::MatrixXd &b) const;
};

struct GridPoint {
    Eigen::VectorXd theta;
    Eigen::VectorXd z;
    double log_density = 0; // unnormalized log p(theta | y)
    double design_weight = 1;
    double weight = 0;      // normalized
    int newton_iterations = 0;
    std::optional<GaussianApprox> approx;
};

enum class IntegrationStrategy { automatic, grid, ccd };

struct HyperOptions {
    int max_evaluations = 500;
    double mode_tolerance = 1e-6;
    double initial_step = 1.0;
    double hessian_step = 0.05;
    double grid_step = 0.5;
    double grid_log_drop = 6.0;
    double ccd_f0 = 1.1;
    double min_curvature = 1e-4;
    IntegrationStrategy strategy = IntegrationStrategy::automatic;
};

struct HyperGrid {
    Eigen::VectorXd mode;
    double mode_log_density = 0;
    Eigen::MatrixXd hessian; // negative Hessian of log p(theta | y) at the mode
    std::vector<GridPoint> points;
    int evaluations = 0;
    std::string strategy;

    std::vector<double> weights() const;
};

struct LinearPredictorMoments {
    Eigen::VectorXd mean;
    Eigen::VectorXd variance;
};

class LaplaceEngine {
  public:
    explicit LaplaceEngine(LatentGaussianModel model, NewtonOptions newton = {});

    const LatentGaussianModel &model() const { return model_; }
    const Permutation &ordering() const { return ordering_; }

    /// Constrained Newton to the mode of p(x | y, theta). Throws NumericalError
    /// on non-finite likelihood or non-convergence.
    GaussianApprox approximate(const Eigen::VectorXd &theta, const Eigen::VectorXd *start = nullptr) const;

    /// Builds the approximation at a given latent mode without iterating.
    GaussianApprox approximate_at(const Eigen::VectorXd &theta, const Eigen::VectorXd &mode) const;

    /// Mode search, Hessian and grid or CCD integration over theta.
    HyperGrid explore(const HyperOptions &options = {}) const;

    /// Grid from externally supplied points (theta, weight, mode).
    HyperGrid rebuild(const std::vector<Eigen::VectorXd> &thetas, const std::vector<double> &weights,
                      const std::vector<Eigen::VectorXd> &modes) const;

    /// Latent draws (n_latent x n); sample m uses substream (seed, m).
    Eigen::MatrixXd sample_latent(const HyperGrid &grid, int n_samples, std::uint64_t seed) const;

    /// output_design * x + output_offset for each latent draw (rows x n).
    Eigen::MatrixXd sample_linear_predictor(const HyperGrid &grid, int n_samples, std::uint64_t seed) const;

    /// Exact mixture moments of the output linear predictor.
    LinearPredictorMoments linear_predictor_moments(const HyperGrid &grid) const;

  private:
    double objective(const Eigen::VectorXd &x, const SparseMatrix &q, const Eigen::VectorXd &eta) const;
    Eigen::VectorXd curvature(const Eigen::VectorXd &eta) const;
    Eigen::VectorXd score(const Eigen::VectorXd &eta) const;
    double log_likelihood(const Eigen::VectorXd &eta) const;
    GaussianApprox finish(const Eigen::VectorXd &theta, const SparseMatrix &q, Eigen::VectorXd mode) const;
    double prior_log_determinant(const Eigen::VectorXd &theta, const SparseMatrix &q) const;
    Eigen::VectorXd project(const Eigen::VectorXd &g) const;
    Eigen::VectorXd initial_latent() const;

    LatentGaussianModel model_;
    NewtonOptions newton_;
    Permutation ordering_;
    SparseMatrix ata_; // pattern and values of A'A
    Eigen::LLT<Eigen::MatrixXd> cct_;
    // C'C. Added before every factorization: it leaves the
    // constrained Gaussian unchanged and lifts the near-null constrained directions.
    SparseMatrix ctc_;
};

/// Nelder-Mead minimizer with a deterministic axis-aligned initial simplex.
struct NelderMeadResult {
    Eigen::VectorXd x;
    double value = 0;
    int evaluations = 0;
    bool converged = false;
};

NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd &)> &f, const Eigen::VectorXd &start,
                             double step, double tolerance, int max_evaluations);

/// Central-composite design in standardized coordinates (center first).
/// Full factorial for d <= 4, half fraction x_d = prod(x_1..x_{d-1}) above.
std::vector<Eigen::VectorXd> ccd_design(int dimension, double f0);

/// Integration weight of non-center CCD points relative to the center.
double ccd_design_weight(int dimension, int n_points, double f0);

} // namespace exmort
