#include "exmort/errors.hpp"
#include "exmort/gmrf.hpp"
#include "exmort/laplace.hpp"
#include "exmort/mortality_model.hpp"
#include "exmort/pc_priors.hpp"
#include "exmort/simulate.hpp"

#include "../support/mcmc_oracle.hpp"
#include "../support/oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

using namespace exmort;

namespace {

constexpr int kGroups = 5;

// Intercept plus a sum-to-zero RW1 over five groups; one hyperparameter.
LatentGaussianModel toy_model(Likelihood lik, std::uint64_t seed, int rows = 20) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z;
    const Eigen::VectorXd truth = (Eigen::VectorXd(kGroups) << -0.3, -0.1, 0.0, 0.15, 0.25).finished();

    LatentGaussianModel m;
    m.n_latent = 1 + kGroups;
    m.likelihood = lik;
    std::vector<Eigen::Triplet<double>> trip;
    m.fit_offset.resize(rows);
    m.observations.resize(rows);
    for (int i = 0; i < rows; ++i) {
        const int g = i % kGroups;
        trip.emplace_back(i, 0, 1.0);
        trip.emplace_back(i, 1 + g, 1.0);
        if (lik == Likelihood::poisson) {
            m.fit_offset(i) = std::log(50.0);
            std::poisson_distribution<int> pois(50.0 * std::exp(0.2 + truth(g)));
            m.observations(i) = pois(rng);
        } else {
            m.fit_offset(i) = 0;
            m.observations(i) = 1.0 + truth(g) + 0.5 * z(rng);
        }
    }
    m.fit_design.resize(rows, m.n_latent);
    m.fit_design.setFromTriplets(trip.begin(), trip.end());
    m.output_design = m.fit_design;
    m.output_offset = m.fit_offset;
    if (lik == Likelihood::gaussian) m.gaussian_precision = Eigen::VectorXd::Constant(rows, 4.0);
    m.constraints = Eigen::MatrixXd::Zero(1, m.n_latent);
    m.constraints.rightCols(kGroups).setOnes();
    const SparseMatrix r = rw1_structure(kGroups, false).R;
    m.n_hyper = 1;
    m.prior_precision = [r](const Eigen::VectorXd &theta) {
        SparseMatrix q(1 + kGroups, 1 + kGroups);
        std::vector<Eigen::Triplet<double>> t{{0, 0, kFixedEffectPrecision}};
        for (int k = 0; k < r.outerSize(); ++k)
            for (SparseMatrix::InnerIterator it(r, k); it; ++it)
                t.emplace_back(1 + it.row(), 1 + it.col(), std::exp(theta(0)) * it.value());
        q.setFromTriplets(t.begin(), t.end());
        return q;
    };
    m.log_hyper_prior = [](const Eigen::VectorXd &theta) { return pc_prec_log_density(theta(0), PCPrecSpec{1.0, 0.01}); };
    m.initial_hyper = Eigen::VectorXd::Constant(1, 2.0);
    m.intercept_index = 0;
    return m;
}

// Dense Gaussian-model quantities at theta: exact log p(y | theta) and the
// conditional moments of eta.
struct DenseGaussian {
    double log_marginal = 0;
    Eigen::VectorXd eta_mean;
    Eigen::VectorXd eta_var;
};

DenseGaussian dense_gaussian(const LatentGaussianModel &m, double theta) {
    const Eigen::MatrixXd q = Eigen::MatrixXd(m.prior_precision(Eigen::VectorXd::Constant(1, theta)));
    const Eigen::MatrixXd nb = testing::null_basis(m.constraints, m.n_latent);
    const Eigen::MatrixXd prior_cov = nb * (nb.transpose() * q * nb).inverse() * nb.transpose();
    const Eigen::MatrixXd a(m.fit_design);
    const Eigen::MatrixXd noise = m.gaussian_precision.cwiseInverse().asDiagonal();
    const Eigen::MatrixXd marg = a * prior_cov * a.transpose() + noise;
    const Eigen::LLT<Eigen::MatrixXd> llt(marg);
    const Eigen::VectorXd r = m.observations - m.fit_offset;
    DenseGaussian out;
    out.log_marginal = -0.5 * r.dot(llt.solve(r)) - llt.matrixLLT().diagonal().array().log().sum() -
                       0.5 * static_cast<double>(r.size()) * std::log(2 * M_PI);
    // eta | y: Gaussian conditioning of the joint (eta, y).
    const Eigen::MatrixXd k = a * prior_cov * a.transpose();
    out.eta_mean = m.fit_offset + k * llt.solve(r);
    out.eta_var = (k - k * llt.solve(k)).diagonal();
    return out;
}

Eigen::Index intercept_of(const LatentGaussianModel &m) { return m.intercept_index; }

} // namespace

TEST_SUITE("laplace") {

TEST_CASE("single observation mode is the log count") {
    LatentGaussianModel m;
    m.n_latent = 1;
    m.fit_design.resize(1, 1);
    m.fit_design.insert(0, 0) = 1.0;
    m.fit_offset = Eigen::VectorXd::Zero(1);
    m.observations = Eigen::VectorXd::Constant(1, 5.0);
    m.output_design = m.fit_design;
    m.output_offset = m.fit_offset;
    m.n_hyper = 1;
    m.prior_precision = [](const Eigen::VectorXd &) {
        SparseMatrix q(1, 1);
        q.insert(0, 0) = 1e-10;
        return q;
    };
    m.log_hyper_prior = [](const Eigen::VectorXd &t) { return -0.5 * t.squaredNorm(); };
    m.initial_hyper = Eigen::VectorXd::Zero(1);
    const LaplaceEngine engine(m);
    const GaussianApprox ga = engine.approximate(m.initial_hyper);
    CHECK(ga.mode(0) == doctest::Approx(std::log(5.0)).epsilon(1e-8));
}

TEST_CASE("without observations the mode is the prior mean") {
    LatentGaussianModel m = toy_model(Likelihood::poisson, 1, 0);
    m.intercept_index = -1;
    const LaplaceEngine engine(m);
    const GaussianApprox ga = engine.approximate(m.initial_hyper);
    CHECK(ga.mode.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("Newton objective never decreases") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        LatentGaussianModel m = toy_model(Likelihood::poisson, seed);
        m.intercept_index = -1; // start far from the mode
        const LaplaceEngine engine(m);
        const GaussianApprox ga = engine.approximate(Eigen::VectorXd::Constant(1, 0.5));
        REQUIRE(ga.objective_trace.size() >= 2);
        for (std::size_t i = 1; i < ga.objective_trace.size(); ++i) {
            CHECK(ga.objective_trace[i] >= ga.objective_trace[i - 1]);
        }
        CHECK(std::abs((m.constraints * ga.mode)(0)) < 1e-10);
    }
}

TEST_CASE("result does not depend on the latent ordering") {
    const LatentGaussianModel m = toy_model(Likelihood::poisson, 7);
    std::vector<int> order(static_cast<std::size_t>(m.n_latent));
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(3);
    std::shuffle(order.begin(), order.end(), rng);
    Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> perm(m.n_latent);
    for (Eigen::Index i = 0; i < m.n_latent; ++i) perm.indices()(i) = order[static_cast<std::size_t>(i)];

    LatentGaussianModel p = m;
    const Eigen::MatrixXd pt = Eigen::MatrixXd(perm.transpose());
    p.fit_design = (Eigen::MatrixXd(m.fit_design) * pt).sparseView();
    p.output_design = p.fit_design;
    p.constraints = m.constraints * pt;
    p.intercept_index = perm.indices()(intercept_of(m));
    p.prior_precision = [m, perm](const Eigen::VectorXd &t) {
        const Eigen::MatrixXd q(m.prior_precision(t));
        return SparseMatrix((Eigen::MatrixXd(perm) * q * Eigen::MatrixXd(perm.transpose())).sparseView());
    };
    const Eigen::VectorXd theta = Eigen::VectorXd::Constant(1, 1.3);
    const GaussianApprox a = LaplaceEngine(m).approximate(theta);
    const GaussianApprox b = LaplaceEngine(p).approximate(theta);
    CHECK((perm * a.mode - b.mode).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(a.log_laplace == doctest::Approx(b.log_laplace).epsilon(1e-10));
}

TEST_CASE("Gaussian likelihood is handled exactly") {
    const LatentGaussianModel m = toy_model(Likelihood::gaussian, 4);
    const LaplaceEngine engine(m);
    const double t1 = 0.3, t2 = 2.1;
    const GaussianApprox g1 = engine.approximate(Eigen::VectorXd::Constant(1, t1));
    const GaussianApprox g2 = engine.approximate(Eigen::VectorXd::Constant(1, t2));
    const DenseGaussian d1 = dense_gaussian(m, t1);
    const DenseGaussian d2 = dense_gaussian(m, t2);
    const double prior_gap = m.log_hyper_prior(Eigen::VectorXd::Constant(1, t1)) -
                             m.log_hyper_prior(Eigen::VectorXd::Constant(1, t2));
    CHECK((g1.log_laplace - g2.log_laplace) == doctest::Approx(d1.log_marginal - d2.log_marginal + prior_gap).epsilon(1e-8));

    const Eigen::VectorXd eta = Eigen::MatrixXd(m.fit_design) * g1.mode + m.fit_offset;
    CHECK((eta - d1.eta_mean).cwiseAbs().maxCoeff() < 1e-8);
    const Eigen::MatrixXd at = Eigen::MatrixXd(m.fit_design).transpose();
    const Eigen::VectorXd var = (at.transpose().array() * g1.covariance_times(at).transpose().array()).rowwise().sum();
    CHECK((var - d1.eta_var).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("hyperparameter integration against brute-force quadrature") {
    const LatentGaussianModel m = toy_model(Likelihood::gaussian, 9, 15);
    const LaplaceEngine engine(m);
    HyperOptions opt;
    opt.strategy = IntegrationStrategy::grid;
    const HyperGrid grid = engine.explore(opt);
    CHECK(grid.strategy == "grid");
    const LinearPredictorMoments lm = engine.linear_predictor_moments(grid);

    // Trapezoid rule over a wide, fine theta grid.
    const int n = 3001;
    const double lo = grid.mode(0) - 12, hi = grid.mode(0) + 12;
    std::vector<double> logw(n);
    std::vector<DenseGaussian> cond;
    for (int i = 0; i < n; ++i) {
        const double t = lo + (hi - lo) * i / (n - 1);
        cond.push_back(dense_gaussian(m, t));
        logw[static_cast<std::size_t>(i)] = cond.back().log_marginal + m.log_hyper_prior(Eigen::VectorXd::Constant(1, t));
    }
    const double top = *std::max_element(logw.begin(), logw.end());
    const auto rows = m.fit_design.rows();
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(rows), second = Eigen::VectorXd::Zero(rows);
    double total = 0;
    for (int i = 0; i < n; ++i) {
        const double w = std::exp(logw[static_cast<std::size_t>(i)] - top) * ((i == 0 || i == n - 1) ? 0.5 : 1.0);
        total += w;
        mean += w * cond[static_cast<std::size_t>(i)].eta_mean;
        second += w * (cond[static_cast<std::size_t>(i)].eta_var + cond[static_cast<std::size_t>(i)].eta_mean.cwiseAbs2());
    }
    mean /= total;
    const Eigen::VectorXd sd = (second / total - mean.cwiseAbs2()).cwiseSqrt();
    for (Eigen::Index i = 0; i < rows; ++i) {
        CHECK(std::abs(lm.mean(i) - mean(i)) / sd(i) < 0.02);
        CHECK(std::abs(std::sqrt(lm.variance(i)) / sd(i) - 1) < 0.02);
    }
}

TEST_CASE("grid weights, determinism and sampling") {
    const LatentGaussianModel m = toy_model(Likelihood::poisson, 2);
    const LaplaceEngine engine(m);
    const HyperGrid a = engine.explore();
    const HyperGrid b = engine.explore();
    double total = 0;
    for (double w : a.weights()) total += w;
    CHECK(std::abs(total - 1) < 1e-12);
    REQUIRE(a.points.size() == b.points.size());
    for (std::size_t i = 0; i < a.points.size(); ++i) {
        CHECK(a.points[i].weight == b.points[i].weight);
        CHECK(a.points[i].theta == b.points[i].theta);
    }

    const Eigen::MatrixXd x1 = engine.sample_latent(a, 4000, 77);
    const Eigen::MatrixXd x2 = engine.sample_latent(b, 4000, 77);
    CHECK(x1 == x2);
    CHECK((m.constraints * x1).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(engine.sample_latent(a, 10, 78) != x1.leftCols(10));

    const Eigen::MatrixXd eta = engine.sample_linear_predictor(a, 4000, 77);
    const LinearPredictorMoments lm = engine.linear_predictor_moments(a);
    for (Eigen::Index i = 0; i < eta.rows(); ++i) {
        const double sd = std::sqrt(lm.variance(i));
        CHECK(std::abs(eta.row(i).mean() - lm.mean(i)) < 5 * sd / std::sqrt(4000.0));
        const double var = (eta.row(i).array() - eta.row(i).mean()).square().sum() / 3999.0;
        CHECK(std::sqrt(var) == doctest::Approx(sd).epsilon(0.08));
    }
}

TEST_CASE("Nelder-Mead and the central composite design") {
    const auto f = [](const Eigen::VectorXd &x) { return (x(0) - 1) * (x(0) - 1) + 10 * (x(1) + 2) * (x(1) + 2); };
    const NelderMeadResult r = nelder_mead(f, Eigen::VectorXd::Zero(2), 1.0, 1e-10, 500);
    CHECK(r.converged);
    CHECK(std::abs(r.x(0) - 1) < 1e-3);
    CHECK(std::abs(r.x(1) + 2) < 1e-3);
    CHECK_FALSE(nelder_mead(f, Eigen::VectorXd::Zero(2), 1.0, 1e-10, 12).converged);

    for (int d : {2, 3, 5}) {
        const auto design = ccd_design(d, 1.1);
        const double delta = ccd_design_weight(d, static_cast<int>(design.size()), 1.1);
        // Weighted against the standard normal, the design reproduces unit variance.
        Eigen::VectorXd second = Eigen::VectorXd::Zero(d);
        double total = 0;
        for (std::size_t k = 0; k < design.size(); ++k) {
            const double w = (k == 0 ? 1.0 : delta) * std::exp(-0.5 * design[k].squaredNorm());
            total += w;
            second += w * design[k].cwiseAbs2();
        }
        CHECK((second / total - Eigen::VectorXd::Ones(d)).cwiseAbs().maxCoeff() < 1e-12);
    }
    CHECK(ccd_design(5, 1.1).size() == 27);
    CHECK_THROWS_AS(ccd_design_weight(3, 15, 1.0), ConfigError);
}

TEST_CASE("mortality model against a reference sampler") {
    SimulationSpec spec;
    spec.grid_rows = 1;
    spec.grid_cols = 3;
    spec.death_years = {2019, 2020};
    spec.strata = {{AgeGroup::from60to69, Sex::female}};
    spec.seed = 5;
    const auto st = simulate_study(spec);
    const std::vector<int> fit{2019};
    ModelFrame frame = assemble_model_frame(st.sources, spec.strata[0], fit, 2020);
    // Keep the first twenty weeks and no prediction rows.
    std::erase_if(frame.rows, [](const FrameRow &r) { return r.is_prediction || r.week.week > 20; });
    ModelSettings settings;
    settings.n_bins = 5;
    const MortalityModel model(frame, st.graph, settings);
    const LinearPredictorMoments lm = testing::laplace_fit_moments(model);
    testing::McmcSettings mc;
    mc.burn_in = 5000;
    mc.iterations = 40000;
    mc.seed = 21;
    const testing::McmcSummary ref = testing::run_mcmc_oracle(model, mc);
    CHECK(ref.latent_acceptance > 0.3);
    const auto agree = testing::compare_moments(lm, ref, 0.5);
    CAPTURE(agree.max_mean_gap);
    CAPTURE(agree.max_sd_gap);
    CHECK(agree.fraction >= 0.95);
    CHECK((lm.mean - ref.eta_mean).cwiseAbs().maxCoeff() < 0.05);
}

} // TEST_SUITE
