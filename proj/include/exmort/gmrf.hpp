#pragma once

#include "exmort/calendar.hpp"
#include "exmort/ingest.hpp"
#include "exmort/spatial_graph.hpp"

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace exmort {

/// First-order random walk structure. Non-cyclic: tridiagonal with diagonal
/// (1, 2, ..., 2, 1); cyclic: circulant with wrap-around. Requires n >= 3.
StructureMatrix rw1_structure(int n, bool cyclic);

/// Second-order random walk structure D'D with D the second-difference
/// operator; null space spanned by constant and linear vectors. Requires n >= 5.
StructureMatrix rw2_structure(int n);

/// Joint precision of (b, u*) in the augmented BYM2 parameterization:
///   [ tau/(1-phi) I              -sqrt(phi tau)/(1-phi) I ]
///   [ -sqrt(phi tau)/(1-phi) I   phi/(1-phi) I + R_scaled ]
/// Marginalizing u* under its constraint gives
/// Var(b) = ((1-phi) I + phi Gamma) / tau.
SparseMatrix bym2_joint_precision(double tau_b, double phi, const SparseMatrix &r_scaled);

/// Hyperparameters in internal scale.
struct HyperPoint {
    double log_tau_eps = 0;
    double log_tau_z = 0;
    double log_tau_w = 0;
    double log_tau_b = 0;
    double phi_internal = 0; // logit(phi)
    double log_weight = 0;

    static constexpr int kDimension = 5;
    static constexpr double kPhiClamp = 1e-6;

    /// logistic(phi_internal) clamped to [1e-6, 1 - 1e-6].
    double phi() const;
    Eigen::VectorXd to_vector() const;
    static HyperPoint from_vector(const Eigen::VectorXd &theta, double log_weight = 0);
};

/// Equal-width bins over [min, max] of the supplied temperatures.
struct TemperatureBins {
    double lower = 0;
    double width = 1;
    int n_bins = 0;

    /// Zero-based bin; the maximum value maps to the top bin.
    int bin_of(double temp) const;
    std::vector<double> midpoints() const;
};

/// Requires n_bins >= 5, finite values and max > min.
TemperatureBins bin_temperature(std::span<const double> temps, int n_bins);

/// Index map of the latent vector
/// [beta0, beta_holiday, beta_year | eps | temperature RW2 | seasonal RW1 | b | u*].
struct LatentLayout {
    static constexpr int kFixed = 3;
    static constexpr int kSeason = 52;

    std::vector<IsoWeek> eps_levels; // every (year, week) of the frame
    int n_bins = 0;
    int n_areas = 0;
    std::vector<std::vector<int>> spatial_components; // constrained u* groups

    Eigen::Index eps_offset() const { return kFixed; }
    Eigen::Index temp_offset() const { return eps_offset() + n_eps(); }
    Eigen::Index season_offset() const { return temp_offset() + n_bins; }
    Eigen::Index b_offset() const { return season_offset() + kSeason; }
    Eigen::Index u_offset() const { return b_offset() + n_areas; }
    Eigen::Index n_eps() const { return static_cast<Eigen::Index>(eps_levels.size()); }
    Eigen::Index size() const { return u_offset() + n_areas; }

    /// Position of a week in eps_levels; throws DataError for unseen weeks.
    Eigen::Index eps_index(IsoWeek week) const;

    /// Sum-to-zero rows for the temperature RW2, the seasonal RW1 and each
    /// constrained spatial component of u*.
    Eigen::MatrixXd constraints() const;
};

LatentLayout make_layout(const ModelFrame &frame, int n_bins, const StructureMatrix &icar_scaled);

/// Structure matrices shared by all strata.
struct ModelStructures {
    StructureMatrix temperature; // RW2 over bins
    StructureMatrix season;      // cyclic RW1 over 52 weeks
    StructureMatrix spatial;     // scaled ICAR
};

/// RW structures are scaled to unit geometric-mean generalized variance when
/// `scale_random_walks` is set; the ICAR structure is always scaled.
ModelStructures make_structures(const Graph &graph, int n_bins, bool scale_random_walks = true);

inline constexpr double kFixedEffectPrecision = 0.001;
inline constexpr double kJitter = 1e-6;

/// Block-diagonal prior precision: 0.001 on fixed effects, tau_eps I,
/// tau_z R_rw2 + jitter, tau_w R_rw1 + jitter, BYM2 block with jitter on u*.
SparseMatrix assemble_prior_precision(const HyperPoint &theta, const LatentLayout &layout,
                                      const ModelStructures &structures);

/// Closed form of log|Q| + log|C Q^-1 C'| for the assembled prior precision
/// Q and the layout's constraints C, equal to log|N'QN| + log|CC'| with N an
/// orthonormal basis of null(C). Per-block eigenvalues are computed once, so
/// evaluation stays accurate where Q itself is nearly singular.
class PriorLogDeterminant {
  public:
    PriorLogDeterminant(const LatentLayout &layout, const ModelStructures &structures);
    double operator()(const HyperPoint &theta) const;

  private:
    Eigen::VectorXd temp_eigen_;   // of N'RN over the temperature block
    Eigen::VectorXd season_eigen_; // of N'RN over the seasonal block
    Eigen::Index n_eps_ = 0;
    Eigen::Index n_areas_ = 0;
    double constant_ = 0;
};

struct DesignMatrix {
    SparseMatrix A;         // rows x latent
    Eigen::VectorXd offset; // log(population)
};

/// Linear-predictor map for the given frame rows (all rows when `rows` is empty).
DesignMatrix design_matrix(const ModelFrame &frame, const LatentLayout &layout,
                           const TemperatureBins &bins, std::span<const std::size_t> rows = {});

} // namespace exmort
