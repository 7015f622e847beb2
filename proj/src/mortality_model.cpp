#include "exmort/mortality_model.hpp"

#include "exmort/csv.hpp"
#include "exmort/errors.hpp"

#include <sstream>

namespace exmort {

Eigen::VectorXd default_initial_hyper() {
    Eigen::VectorXd t(HyperPoint::kDimension);
    t << 3.0, 3.0, 3.0, 3.0, 0.0;
    return t;
}

double mortality_log_hyper_prior(const Eigen::VectorXd &theta, const PriorSettings &priors,
                                 const PCPhiPrior &phi_prior) {
    return pc_prec_log_density(theta(0), priors.eps) + pc_prec_log_density(theta(1), priors.temperature) +
           pc_prec_log_density(theta(2), priors.season) + pc_prec_log_density(theta(3), priors.spatial) +
           phi_prior.log_density(theta(4));
}

MortalityModel::MortalityModel(ModelFrame frame, const Graph &graph, ModelSettings settings)
    : frame_{std::move(frame)}, settings_{std::move(settings)} {
    if (graph.labels() != frame_.areas) {
        throw DataError("graph nodes do not match the frame areas of stratum " + stratum_label(frame_.stratum));
    }
    for (const PCPrecSpec *spec : {&settings_.priors.eps, &settings_.priors.temperature, &settings_.priors.season,
                                   &settings_.priors.spatial}) {
        spec->validate();
    }
    structures_ = make_structures(graph, settings_.n_bins, settings_.scale_random_walks);
    layout_ = make_layout(frame_, settings_.n_bins, structures_.spatial);

    std::vector<double> temps;
    temps.reserve(frame_.rows.size());
    for (std::size_t i = 0; i < frame_.rows.size(); ++i) {
        const FrameRow &row = frame_.rows[i];
        temps.push_back(row.temp_c);
        if (row.is_prediction) {
            prediction_rows_.push_back(i);
        } else {
            if (!row.deaths) {
                throw DataError("fit row without deaths in stratum " + stratum_label(frame_.stratum));
            }
            fit_rows_.push_back(i);
        }
        if (!(row.population > 0)) {
            throw DataError("non-positive population for area " + frame_.areas.at(row.area) + " in week " +
                            euro_label(row.week));
        }
    }
    if (fit_rows_.empty()) {
        throw DataError("stratum " + stratum_label(frame_.stratum) + " has no fit rows");
    }
    bins_ = bin_temperature(temps, settings_.n_bins);

    const Eigen::MatrixXd gamma = constrained_generalized_inverse(structures_.spatial);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gamma, Eigen::EigenvaluesOnly);
    PCPhiSpec phi_spec{settings_.priors.phi_u, settings_.priors.phi_alpha,
                       std::vector<double>(eig.eigenvalues().data(), eig.eigenvalues().data() + gamma.rows())};
    phi_prior_ = std::make_shared<const PCPhiPrior>(std::move(phi_spec));

    LatentGaussianModel m;
    m.n_latent = layout_.size();
    const DesignMatrix fit = design_matrix(frame_, layout_, bins_, fit_rows_);
    const DesignMatrix all = design_matrix(frame_, layout_, bins_);
    m.fit_design = fit.A;
    m.fit_offset = fit.offset;
    m.observations.resize(static_cast<Eigen::Index>(fit_rows_.size()));
    for (std::size_t i = 0; i < fit_rows_.size(); ++i) {
        m.observations(static_cast<Eigen::Index>(i)) = *frame_.rows[fit_rows_[i]].deaths;
    }
    m.output_design = all.A;
    m.output_offset = all.offset;
    m.constraints = layout_.constraints();
    m.n_hyper = HyperPoint::kDimension;
    m.intercept_index = 0;
    m.initial_hyper = default_initial_hyper();
    const LatentLayout layout = layout_;
    const ModelStructures structures = structures_;
    m.prior_precision = [layout, structures](const Eigen::VectorXd &theta) {
        return assemble_prior_precision(HyperPoint::from_vector(theta), layout, structures);
    };
    const PriorSettings priors = settings_.priors;
    const auto phi_prior = phi_prior_;
    m.prior_log_determinant = [det = PriorLogDeterminant(layout, structures)](const Eigen::VectorXd &theta) {
        return det(HyperPoint::from_vector(theta));
    };
    m.log_hyper_prior = [priors, phi_prior](const Eigen::VectorXd &theta) {
        return mortality_log_hyper_prior(theta, priors, *phi_prior);
    };
    engine_ = std::make_unique<LaplaceEngine>(std::move(m), settings_.newton);
}

Eigen::MatrixXd MortalityModel::sample_prediction_eta(const HyperGrid &grid, int n_samples,
                                                      std::uint64_t seed) const {
    if (prediction_rows_.empty()) {
        throw DataError("stratum " + stratum_label(frame_.stratum) + " has no prediction rows");
    }
    const Eigen::MatrixXd x = engine_->sample_latent(grid, n_samples, seed);
    const DesignMatrix pred = design_matrix(frame_, layout_, bins_, prediction_rows_);
    Eigen::MatrixXd eta = pred.A * x;
    eta.colwise() += pred.offset;
    return eta;
}

namespace {

nlohmann::json vector_json(const Eigen::VectorXd &v) {
    return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd json_vector(const nlohmann::json &j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

} // namespace

nlohmann::json grid_to_json(const HyperGrid &grid) {
    nlohmann::json doc;
    doc["strategy"] = grid.strategy;
    doc["mode"] = vector_json(grid.mode);
    doc["mode_log_density"] = grid.mode_log_density;
    doc["evaluations"] = grid.evaluations;
    nlohmann::json hess = nlohmann::json::array();
    for (Eigen::Index i = 0; i < grid.hessian.rows(); ++i) {
        hess.push_back(vector_json(grid.hessian.row(i).transpose()));
    }
    doc["hessian"] = hess;
    nlohmann::json pts = nlohmann::json::array();
    for (const auto &p : grid.points) {
        nlohmann::json jp;
        jp["theta"] = vector_json(p.theta);
        jp["weight"] = p.weight;
        jp["log_density"] = std::isfinite(p.log_density) ? nlohmann::json(p.log_density) : nlohmann::json(nullptr);
        jp["newton_iterations"] = p.newton_iterations;
        jp["mode"] = p.approx ? vector_json(p.approx->mode) : nlohmann::json(nullptr);
        pts.push_back(std::move(jp));
    }
    doc["points"] = std::move(pts);
    return doc;
}

HyperGrid grid_from_json(const nlohmann::json &doc, const LaplaceEngine &engine) {
    std::vector<Eigen::VectorXd> thetas;
    std::vector<double> weights;
    std::vector<Eigen::VectorXd> modes;
    try {
        for (const auto &jp : doc.at("points")) {
            thetas.push_back(json_vector(jp.at("theta")));
            weights.push_back(jp.at("weight").get<double>());
            modes.push_back(jp.at("mode").is_null() ? Eigen::VectorXd::Zero(engine.model().n_latent)
                                                    : json_vector(jp.at("mode")));
            if (jp.at("mode").is_null() && weights.back() > 0) {
                throw DataError("stored grid point with weight but without a latent mode");
            }
        }
    } catch (const nlohmann::json::exception &e) {
        throw DataError(std::string("malformed fit artifact: ") + e.what());
    }
    HyperGrid grid = engine.rebuild(thetas, weights, modes);
    grid.strategy = doc.value("strategy", std::string("stored"));
    grid.evaluations = doc.value("evaluations", 0);
    if (doc.contains("mode")) {
        grid.mode = json_vector(doc.at("mode"));
    }
    for (std::size_t k = 0; k < grid.points.size(); ++k) {
        grid.points[k].newton_iterations = doc.at("points")[k].value("newton_iterations", 0);
    }
    return grid;
}

std::string grid_diagnostics_csv(const HyperGrid &grid) {
    std::ostringstream out;
    out << "point";
    const auto d = grid.points.empty() ? 0 : grid.points.front().theta.size();
    for (Eigen::Index i = 0; i < d; ++i) {
        out << ",theta" << (i + 1);
    }
    out << ",log_density,log_weight,newton_iterations\n";
    for (std::size_t k = 0; k < grid.points.size(); ++k) {
        const auto &p = grid.points[k];
        out << k;
        for (Eigen::Index i = 0; i < d; ++i) {
            out << ',' << csv::format_double(p.theta(i));
        }
        out << ',' << csv::format_double(std::isfinite(p.log_density) ? p.log_density : std::nan(""));
        out << ',' << csv::format_double(p.weight > 0 ? std::log(p.weight) : std::nan(""));
        out << ',' << p.newton_iterations << '\n';
    }
    return out.str();
}

} // namespace exmort
