#include "exmort/gmrf.hpp"

#include "exmort/errors.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace exmort {

using Triplet = Eigen::Triplet<double>;

StructureMatrix rw1_structure(int n, bool cyclic) {
    if (n < 3) {
        throw DataError("rw1_structure: n must be at least 3, got " + std::to_string(n));
    }
    std::vector<Triplet> trip;
    auto add_edge = [&](int i, int j) {
        trip.emplace_back(i, i, 1.0);
        trip.emplace_back(j, j, 1.0);
        trip.emplace_back(i, j, -1.0);
        trip.emplace_back(j, i, -1.0);
    };
    for (int i = 1; i < n; ++i) {
        add_edge(i - 1, i);
    }
    if (cyclic) {
        add_edge(n - 1, 0);
    }
    StructureMatrix out;
    out.R.resize(n, n);
    out.R.setFromTriplets(trip.begin(), trip.end());
    out.rank_deficiency = 1;
    out.components.emplace_back(n);
    for (int i = 0; i < n; ++i) {
        out.components.front()[i] = i;
    }
    out.scaling_factors = {1.0};
    return out;
}

StructureMatrix rw2_structure(int n) {
    if (n < 5) {
        throw DataError("rw2_structure: n must be at least 5, got " + std::to_string(n));
    }
    std::vector<Triplet> trip;
    // Each second difference x[k] - 2x[k+1] + x[k+2] contributes d d'.
    const double d[3] = {1.0, -2.0, 1.0};
    for (int k = 0; k + 2 < n; ++k) {
        for (int a = 0; a < 3; ++a) {
            for (int b = 0; b < 3; ++b) {
                trip.emplace_back(k + a, k + b, d[a] * d[b]);
            }
        }
    }
    StructureMatrix out;
    out.R.resize(n, n);
    out.R.setFromTriplets(trip.begin(), trip.end());
    out.rank_deficiency = 2;
    out.components.emplace_back(n);
    for (int i = 0; i < n; ++i) {
        out.components.front()[i] = i;
    }
    out.scaling_factors = {1.0};
    return out;
}

SparseMatrix bym2_joint_precision(double tau_b, double phi, const SparseMatrix &r_scaled) {
    if (!(tau_b > 0) || !std::isfinite(tau_b)) {
        throw NumericalError("bym2_joint_precision: tau_b must be positive and finite");
    }
    if (!(phi > 0 && phi < 1)) {
        throw NumericalError("bym2_joint_precision: phi must lie strictly inside (0, 1)");
    }
    const auto s = r_scaled.rows();
    const double bb = tau_b / (1 - phi);
    const double bu = -std::sqrt(phi * tau_b) / (1 - phi);
    const double uu = phi / (1 - phi);
    std::vector<Triplet> trip;
    for (Eigen::Index i = 0; i < s; ++i) {
        trip.emplace_back(i, i, bb);
        trip.emplace_back(i, s + i, bu);
        trip.emplace_back(s + i, i, bu);
        trip.emplace_back(s + i, s + i, uu);
    }
    for (int k = 0; k < r_scaled.outerSize(); ++k) {
        for (SparseMatrix::InnerIterator it(r_scaled, k); it; ++it) {
            trip.emplace_back(s + it.row(), s + it.col(), it.value());
        }
    }
    SparseMatrix out(2 * s, 2 * s);
    out.setFromTriplets(trip.begin(), trip.end());
    return out;
}

double HyperPoint::phi() const {
    const double p = 1.0 / (1.0 + std::exp(-phi_internal));
    return std::clamp(p, kPhiClamp, 1.0 - kPhiClamp);
}

Eigen::VectorXd HyperPoint::to_vector() const {
    Eigen::VectorXd v(kDimension);
    v << log_tau_eps, log_tau_z, log_tau_w, log_tau_b, phi_internal;
    return v;
}

HyperPoint HyperPoint::from_vector(const Eigen::VectorXd &theta, double log_weight) {
    if (theta.size() != kDimension) {
        throw NumericalError("HyperPoint: expected 5 hyperparameters");
    }
    return {theta(0), theta(1), theta(2), theta(3), theta(4), log_weight};
}

int TemperatureBins::bin_of(double temp) const {
    const int b = static_cast<int>(std::floor((temp - lower) / width));
    return std::clamp(b, 0, n_bins - 1);
}

std::vector<double> TemperatureBins::midpoints() const {
    std::vector<double> out(static_cast<std::size_t>(n_bins));
    for (int i = 0; i < n_bins; ++i) {
        out[i] = lower + (i + 0.5) * width;
    }
    return out;
}

TemperatureBins bin_temperature(std::span<const double> temps, int n_bins) {
    if (n_bins < 5) {
        throw DataError("bin_temperature: n_bins must be at least 5");
    }
    if (temps.empty()) {
        throw DataError("bin_temperature: no temperatures");
    }
    double lo = temps.front();
    double hi = temps.front();
    for (double t : temps) {
        if (!std::isfinite(t)) {
            throw DataError("bin_temperature: non-finite temperature");
        }
        lo = std::min(lo, t);
        hi = std::max(hi, t);
    }
    if (!(hi > lo)) {
        throw DataError("bin_temperature: degenerate temperature range collapses to a single bin");
    }
    return {lo, (hi - lo) / n_bins, n_bins};
}

Eigen::Index LatentLayout::eps_index(IsoWeek week) const {
    auto it = std::lower_bound(eps_levels.begin(), eps_levels.end(), week);
    if (it == eps_levels.end() || *it != week) {
        throw DataError("unseen week level " + euro_label(week));
    }
    return it - eps_levels.begin();
}

Eigen::MatrixXd LatentLayout::constraints() const {
    const auto k = static_cast<Eigen::Index>(2 + spatial_components.size());
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(k, size());
    c.block(0, temp_offset(), 1, n_bins).setOnes();
    c.block(1, season_offset(), 1, kSeason).setOnes();
    for (std::size_t i = 0; i < spatial_components.size(); ++i) {
        for (int node : spatial_components[i]) {
            c(2 + static_cast<Eigen::Index>(i), u_offset() + node) = 1.0;
        }
    }
    return c;
}

LatentLayout make_layout(const ModelFrame &frame, int n_bins, const StructureMatrix &icar_scaled) {
    LatentLayout layout;
    std::set<IsoWeek> weeks;
    for (const auto &row : frame.rows) {
        weeks.insert(row.week);
    }
    layout.eps_levels.assign(weeks.begin(), weeks.end());
    layout.n_bins = n_bins;
    layout.n_areas = static_cast<int>(frame.areas.size());
    if (icar_scaled.R.rows() != layout.n_areas) {
        throw DataError("spatial structure has " + std::to_string(icar_scaled.R.rows()) +
                        " nodes but the frame has " + std::to_string(layout.n_areas) + " areas");
    }
    layout.spatial_components = icar_scaled.constrained_components();
    return layout;
}

ModelStructures make_structures(const Graph &graph, int n_bins, bool scale_random_walks) {
    ModelStructures s;
    s.temperature = rw2_structure(n_bins);
    s.season = rw1_structure(LatentLayout::kSeason, true);
    if (scale_random_walks) {
        s.temperature = scale_structure(s.temperature);
        s.season = scale_structure(s.season);
    }
    s.spatial = scale_structure(icar_structure(graph));
    return s;
}

SparseMatrix assemble_prior_precision(const HyperPoint &theta, const LatentLayout &layout,
                                      const ModelStructures &structures) {
    const auto n = layout.size();
    std::vector<Triplet> trip;
    trip.reserve(static_cast<std::size_t>(n) * 4);
    for (int i = 0; i < LatentLayout::kFixed; ++i) {
        trip.emplace_back(i, i, kFixedEffectPrecision);
    }
    const double tau_eps = std::exp(theta.log_tau_eps);
    for (Eigen::Index i = 0; i < layout.n_eps(); ++i) {
        trip.emplace_back(layout.eps_offset() + i, layout.eps_offset() + i, tau_eps);
    }
    auto add_block = [&](const SparseMatrix &m, Eigen::Index offset, double scale) {
        for (int k = 0; k < m.outerSize(); ++k) {
            for (SparseMatrix::InnerIterator it(m, k); it; ++it) {
                trip.emplace_back(offset + it.row(), offset + it.col(), scale * it.value());
            }
        }
    };
    auto add_jitter = [&](Eigen::Index offset, Eigen::Index count) {
        for (Eigen::Index i = 0; i < count; ++i) {
            trip.emplace_back(offset + i, offset + i, kJitter);
        }
    };
    if (structures.temperature.R.rows() != layout.n_bins ||
        structures.season.R.rows() != LatentLayout::kSeason ||
        structures.spatial.R.rows() != layout.n_areas) {
        throw DataError("assemble_prior_precision: structures do not match the layout");
    }
    add_block(structures.temperature.R, layout.temp_offset(), std::exp(theta.log_tau_z));
    add_jitter(layout.temp_offset(), layout.n_bins);
    add_block(structures.season.R, layout.season_offset(), std::exp(theta.log_tau_w));
    add_jitter(layout.season_offset(), LatentLayout::kSeason);
    add_block(bym2_joint_precision(std::exp(theta.log_tau_b), theta.phi(), structures.spatial.R),
              layout.b_offset(), 1.0);
    add_jitter(layout.u_offset(), layout.n_areas);

    SparseMatrix q(n, n);
    q.setFromTriplets(trip.begin(), trip.end());
    return q;
}

namespace {

/// Eigenvalues of R restricted to the orthogonal complement of the rows of `k`.
Eigen::VectorXd restricted_eigenvalues(const SparseMatrix &r, const Eigen::MatrixXd &k) {
    const Eigen::MatrixXd dense = Eigen::MatrixXd(r);
    const auto m = dense.rows();
    Eigen::MatrixXd basis = Eigen::MatrixXd::Identity(m, m);
    if (k.rows() > 0) {
        const Eigen::HouseholderQR<Eigen::MatrixXd> qr(k.transpose());
        basis = Eigen::MatrixXd(qr.householderQ()).rightCols(m - k.rows());
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(basis.transpose() * dense * basis,
                                                            Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseMax(0.0);
}

Eigen::MatrixXd indicator_rows(const std::vector<std::vector<int>> &groups, Eigen::Index width) {
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(groups.size()), width);
    for (std::size_t g = 0; g < groups.size(); ++g) {
        for (int node : groups[g]) {
            k(static_cast<Eigen::Index>(g), node) = 1.0;
        }
    }
    return k;
}

} // namespace

PriorLogDeterminant::PriorLogDeterminant(const LatentLayout &layout, const ModelStructures &structures)
    : n_eps_{layout.n_eps()}, n_areas_{layout.n_areas} {
    if (structures.temperature.R.rows() != layout.n_bins ||
        structures.season.R.rows() != LatentLayout::kSeason ||
        structures.spatial.R.rows() != layout.n_areas) {
        throw DataError("PriorLogDeterminant: structures do not match the layout");
    }
    temp_eigen_ = restricted_eigenvalues(structures.temperature.R, Eigen::MatrixXd::Ones(1, layout.n_bins));
    season_eigen_ = restricted_eigenvalues(structures.season.R, Eigen::MatrixXd::Ones(1, LatentLayout::kSeason));
    // u* given b: the BYM2 Schur complement is R_scaled + jitter, free of the hyperparameters.
    const Eigen::VectorXd spatial =
        restricted_eigenvalues(structures.spatial.R, indicator_rows(layout.spatial_components, layout.n_areas));
    constant_ = LatentLayout::kFixed * std::log(kFixedEffectPrecision);
    constant_ += (spatial.array() + kJitter).log().sum();
    constant_ += std::log(static_cast<double>(layout.n_bins)) + std::log(static_cast<double>(LatentLayout::kSeason));
    for (const auto &comp : layout.spatial_components) {
        constant_ += std::log(static_cast<double>(comp.size()));
    }
}

double PriorLogDeterminant::operator()(const HyperPoint &theta) const {
    const double tau_z = std::exp(theta.log_tau_z);
    const double tau_w = std::exp(theta.log_tau_w);
    const double phi = theta.phi();
    return constant_ + static_cast<double>(n_eps_) * theta.log_tau_eps +
           (tau_z * temp_eigen_.array() + kJitter).log().sum() + (tau_w * season_eigen_.array() + kJitter).log().sum() +
           static_cast<double>(n_areas_) * (theta.log_tau_b - std::log1p(-phi));
}

DesignMatrix design_matrix(const ModelFrame &frame, const LatentLayout &layout,
                           const TemperatureBins &bins, std::span<const std::size_t> rows) {
    std::vector<std::size_t> all;
    if (rows.empty()) {
        all.resize(frame.rows.size());
        for (std::size_t i = 0; i < all.size(); ++i) {
            all[i] = i;
        }
        rows = all;
    }
    if (bins.n_bins != layout.n_bins) {
        throw DataError("design_matrix: bin count differs from the layout");
    }
    DesignMatrix out;
    const auto m = static_cast<Eigen::Index>(rows.size());
    out.offset.resize(m);
    std::vector<Triplet> trip;
    trip.reserve(rows.size() * 7);
    for (Eigen::Index r = 0; r < m; ++r) {
        const FrameRow &row = frame.rows.at(rows[r]);
        if (row.area < 0 || row.area >= layout.n_areas) {
            throw DataError("design_matrix: unseen area index " + std::to_string(row.area));
        }
        trip.emplace_back(r, 0, 1.0);
        if (row.holiday != 0) {
            trip.emplace_back(r, 1, static_cast<double>(row.holiday));
        }
        if (row.year_index != 0) {
            trip.emplace_back(r, 2, static_cast<double>(row.year_index));
        }
        trip.emplace_back(r, layout.eps_offset() + layout.eps_index(row.week), 1.0);
        trip.emplace_back(r, layout.temp_offset() + bins.bin_of(row.temp_c), 1.0);
        trip.emplace_back(r, layout.season_offset() + seasonal_index(row.week) - 1, 1.0);
        trip.emplace_back(r, layout.b_offset() + row.area, 1.0);
        out.offset(r) = std::log(row.population);
    }
    out.A.resize(m, layout.size());
    out.A.setFromTriplets(trip.begin(), trip.end());
    return out;
}

} // namespace exmort
