#include "exmort/errors.hpp"
#include "exmort/excess.hpp"
#include "exmort/gmrf.hpp"
#include "exmort/mortality_model.hpp"
#include "exmort/pc_priors.hpp"
#include "exmort/pipeline.hpp"
#include "exmort/predictive.hpp"
#include "exmort/simulate.hpp"
#include "exmort/spatial_graph.hpp"
#include "exmort/stats.hpp"
#include "exmort/validation.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <optional>

namespace py = pybind11;
using namespace exmort;

namespace {

Graph graph_from_lists(const std::vector<std::vector<int>> &neighbors, std::vector<std::string> labels) {
    if (labels.empty()) {
        for (std::size_t i = 0; i < neighbors.size(); ++i) labels.push_back(std::to_string(i + 1));
    }
    return Graph(std::move(labels), neighbors);
}

py::dict structure_dict(const StructureMatrix &s) {
    py::dict d;
    d["R"] = Eigen::MatrixXd(s.R);
    d["rank_deficiency"] = s.rank_deficiency;
    d["components"] = s.components;
    d["scaling_factors"] = s.scaling_factors;
    return d;
}

py::dict summary_dict(const SampleSummary &s) {
    py::dict d;
    d["mean"] = s.mean;
    d["median"] = s.median;
    d["sd"] = s.sd;
    d["LL"] = s.ll;
    d["UL"] = s.ul;
    return d;
}

RunConfig config_with(const std::string &path, std::optional<std::uint64_t> seed, std::optional<std::string> out,
                      std::optional<int> jobs) {
    RunConfig c = load_config(path);
    if (seed) c.seed = *seed;
    if (out) c.output_dir = *out;
    if (jobs) c.jobs = *jobs;
    c.validate();
    return c;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Bayesian spatio-temporal excess mortality";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

    m.def("version", &library_version);

    // pipeline
    m.def("write_demo_dataset", [](const std::string &dir, std::uint64_t seed) { write_demo_dataset(dir, seed); },
          py::arg("dir"), py::arg("seed") = 1);
    m.def(
        "load_config",
        [](const std::string &path) {
            const RunConfig c = load_config(path);
            return py::module_::import("json").attr("loads")(c.to_json().dump());
        },
        py::arg("path"), "Resolved configuration as a dict.");
    m.def(
        "run",
        [](const std::string &command, const std::string &config, std::optional<std::uint64_t> seed,
           std::optional<std::string> out, std::optional<int> jobs) {
            const RunConfig c = config_with(config, seed, out, jobs);
            py::gil_scoped_release release;
            if (command == "all") run_all(c);
            else run_command(command, c);
        },
        py::arg("command"), py::arg("config"), py::arg("seed") = py::none(), py::arg("out") = py::none(),
        py::arg("jobs") = py::none(),
        "Runs prepare | fit | predict | excess | validate | export-bundle | all.");

    // structure matrices
    m.def(
        "icar_structure",
        [](const std::vector<std::vector<int>> &neighbors, bool scaled) {
            const auto s = icar_structure(graph_from_lists(neighbors, {}));
            return structure_dict(scaled ? scale_structure(s) : s);
        },
        py::arg("neighbors"), py::arg("scaled") = false, "Neighbour lists use 0-based indices.");
    m.def(
        "rw1_structure", [](int n, bool cyclic) { return structure_dict(rw1_structure(n, cyclic)); }, py::arg("n"),
        py::arg("cyclic") = false);
    m.def("rw2_structure", [](int n) { return structure_dict(rw2_structure(n)); }, py::arg("n"));
    m.def(
        "constrained_generalized_inverse",
        [](const std::vector<std::vector<int>> &neighbors) {
            return constrained_generalized_inverse(scale_structure(icar_structure(graph_from_lists(neighbors, {}))));
        },
        py::arg("neighbors"), "Gamma of the scaled ICAR structure.");
    m.def(
        "bym2_joint_precision",
        [](double tau, double phi, const Eigen::MatrixXd &r_scaled) {
            return Eigen::MatrixXd(bym2_joint_precision(tau, phi, r_scaled.sparseView()));
        },
        py::arg("tau"), py::arg("phi"), py::arg("r_scaled"));

    // priors
    m.def(
        "pc_prec_sd_tail", [](double s, double u, double alpha) { return pc_prec_sd_tail(s, {u, alpha}); },
        py::arg("s"), py::arg("u") = 1.0, py::arg("alpha") = 0.01);
    m.def(
        "pc_prec_log_density",
        [](double log_tau, double u, double alpha) { return pc_prec_log_density(log_tau, {u, alpha}); },
        py::arg("log_tau"), py::arg("u") = 1.0, py::arg("alpha") = 0.01);
    py::class_<PCPhiPrior>(m, "PCPhiPrior")
        .def(py::init([](std::vector<double> eigenvalues, double u, double alpha) {
                 return PCPhiPrior({u, alpha, std::move(eigenvalues)});
             }),
             py::arg("eigenvalues"), py::arg("u") = 0.5, py::arg("alpha") = 0.5)
        .def_property_readonly("rate", &PCPhiPrior::rate)
        .def("cdf", &PCPhiPrior::cdf)
        .def("distance", &PCPhiPrior::distance)
        .def("log_density_phi", py::overload_cast<double>(&PCPhiPrior::log_density_phi, py::const_))
        .def("log_density", &PCPhiPrior::log_density);

    // model fitting on simulated data
    m.def(
        "fit_simulated",
        [](int rows, int cols, std::vector<int> fit_years, int predict_year, int n_bins, int n_samples,
           std::uint64_t seed) {
            SimulationSpec spec;
            spec.grid_rows = rows;
            spec.grid_cols = cols;
            spec.death_years = fit_years;
            spec.death_years.push_back(predict_year);
            spec.strata = {{AgeGroup::over80, Sex::female}};
            spec.seed = seed;
            const auto st = simulate_study(spec);
            ModelSettings ms;
            ms.n_bins = n_bins;
            const ModelFrame frame = assemble_model_frame(st.sources, spec.strata[0], fit_years, predict_year);
            const MortalityModel model(frame, st.graph, ms);
            py::dict out;
            HyperGrid grid;
            Eigen::MatrixXd eta;
            {
                py::gil_scoped_release release;
                grid = model.fit();
                eta = model.sample_prediction_eta(grid, n_samples, seed);
            }
            const auto pred = posterior_predictive(eta, prediction_rows(frame), seed + 1);
            std::vector<double> observed;
            for (const auto &r : pred.rows) observed.push_back(r.observed ? *r.observed : std::nan(""));
            out["theta_mode"] = grid.mode;
            out["weights"] = grid.weights();
            out["strategy"] = grid.strategy;
            out["eta"] = eta;
            out["counts"] = Eigen::MatrixXd(pred.counts.cast<double>());
            out["observed"] = observed;
            return out;
        },
        py::arg("rows") = 2, py::arg("cols") = 2, py::arg("fit_years") = std::vector<int>{2018, 2019},
        py::arg("predict_year") = 2020, py::arg("n_bins") = 10, py::arg("n_samples") = 200, py::arg("seed") = 1,
        "Simulates one stratum on a lattice, fits it and draws predictive counts.");

    // excess and validation
    m.def(
        "excess_summary",
        [](double observed, const std::vector<double> &predicted) {
            const auto s = excess_samples(observed, predicted);
            CellSamples cell{{"cell", "all", std::nullopt}, static_cast<long long>(observed), 0, s};
            const auto sum = summarize_cell(cell, CategoryScheme{});
            py::dict d;
            d["NED"] = summary_dict(sum.ned);
            d["REM"] = summary_dict(sum.rem);
            d["pred"] = summary_dict(sum.pred);
            d["exceedance_NED"] = sum.exceedance_ned;
            d["exceedance_REM"] = sum.exceedance_rem;
            d["median_NED_cat"] = sum.median_ned_cat;
            d["median_REM_cat"] = sum.median_rem_cat;
            return d;
        },
        py::arg("observed"), py::arg("predicted"));
    m.def(
        "quantile", [](const std::vector<double> &x, double p) { return quantile(x, p); }, py::arg("values"),
        py::arg("p"));
    m.def(
        "score_predictions",
        [](const std::vector<double> &observed, const Eigen::MatrixXd &predicted, const std::string &method) {
            const auto s = score_predictions(observed, predicted,
                                             method == "spearman" ? CorrelationMethod::spearman
                                                                  : CorrelationMethod::pearson);
            py::dict d;
            d["correlation_median"] = s.correlation_median;
            d["correlation_LL"] = s.correlation_ll;
            d["correlation_UL"] = s.correlation_ul;
            d["coverage"] = s.coverage;
            return d;
        },
        py::arg("observed"), py::arg("predicted"), py::arg("method") = "pearson");
}
