#include "exmort/errors.hpp"
#include "exmort/pc_priors.hpp"
#include "exmort/spatial_graph.hpp"

#include "../support/oracles.hpp"

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <doctest.h>

#include <cmath>
#include <random>

using namespace exmort;

namespace {

std::vector<double> spectrum(const Graph &g) {
    const Eigen::MatrixXd gamma = constrained_generalized_inverse(scale_structure(icar_structure(g)));
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gamma);
    return {es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size()};
}

// KLD of N(0, (1-phi) I + phi Gamma) from N(0, I), computed densely.
double dense_kld(const Eigen::MatrixXd &gamma, double phi) {
    const auto n = gamma.rows();
    const Eigen::MatrixXd sigma = (1 - phi) * Eigen::MatrixXd::Identity(n, n) + phi * gamma;
    const double logdet = Eigen::LLT<Eigen::MatrixXd>(sigma).matrixLLT().diagonal().array().log().sum() * 2;
    return 0.5 * (sigma.trace() - static_cast<double>(n) - logdet);
}

} // namespace

TEST_SUITE("pc_priors") {

TEST_CASE("precision prior") {
    const PCPrecSpec spec{1.0, 0.01};
    CHECK(spec.rate() == doctest::Approx(4.605170185988091).epsilon(1e-12));
    CHECK(std::abs(pc_prec_sd_tail(1.0, spec) - 0.01) < 1e-6);

    SUBCASE("tail matches its spec for random settings") {
        std::mt19937_64 rng(44);
        std::uniform_real_distribution<double> uu(0.05, 5.0), aa(0.001, 0.5);
        for (int rep = 0; rep < 10; ++rep) {
            const PCPrecSpec s{uu(rng), aa(rng)};
            CHECK(std::abs(pc_prec_sd_tail(s.u, s) - s.alpha) < 1e-6);
        }
    }
    SUBCASE("log-tau density integrates to one") {
        boost::math::quadrature::tanh_sinh<double> q;
        const double total = q.integrate([&](double t) { return std::exp(pc_prec_log_density(t, spec)); },
                                         -std::numeric_limits<double>::infinity(),
                                         std::numeric_limits<double>::infinity());
        CHECK(std::abs(total - 1.0) < 1e-4);
    }
    SUBCASE("monte carlo of the implied sigma tail") {
        std::mt19937_64 rng(9);
        std::exponential_distribution<double> e(spec.rate());
        int above = 0;
        const int n = 200000;
        for (int i = 0; i < n; ++i) above += e(rng) > 0.5;
        CHECK(static_cast<double>(above) / n == doctest::Approx(pc_prec_sd_tail(0.5, spec)).epsilon(0.02));
    }
    SUBCASE("invalid specs") {
        CHECK_THROWS_AS((PCPrecSpec{0.0, 0.01}.validate()), ConfigError);
        CHECK_THROWS_AS((PCPrecSpec{1.0, 1.0}.validate()), ConfigError);
    }
}

TEST_CASE("mixing prior") {
    std::mt19937_64 rng(12);
    const std::vector<Graph> graphs{testing::path_graph(3), testing::path_graph(10),
                                    testing::random_connected_graph(12, 0.15, rng),
                                    Graph({"a", "b", "c", "d", "e"}, {{1}, {0, 2}, {1}, {4}, {3}})};
    for (const Graph &g : graphs) {
        CAPTURE(g.size());
        const PCPhiPrior prior(PCPhiSpec{0.5, 0.5, spectrum(g)});
        CHECK(std::abs(prior.cdf(0.5) - 0.5) < 1e-3);
        CHECK(prior.distance(0.0) == 0.0);

        boost::math::quadrature::tanh_sinh<double> q;
        boost::math::quadrature::exp_sinh<double> tail;
        // Over phi in (0, 1) with 1 - phi = exp(-s), which reaches the heavy tail at phi -> 1.
        const double total = tail.integrate(
            [&](double s) { return std::exp(prior.log_density_phi(-std::expm1(-s), std::exp(-s)) - s); });
        CHECK(std::abs(total - 1.0) < 1e-4);
        const double internal = q.integrate([&](double t) { return std::exp(prior.log_density(t)); },
                                            -std::numeric_limits<double>::infinity(),
                                            std::numeric_limits<double>::infinity());
        CHECK(std::abs(internal - 1.0) < 1e-4);

        const double mid = q.integrate([&](double p) { return std::exp(prior.log_density_phi(p)); }, 0.0, 0.3);
        CHECK(mid == doctest::Approx(prior.cdf(0.3)).epsilon(1e-6));
    }

    SUBCASE("distance agrees with a dense KLD and increases") {
        const Graph g = testing::path_graph(3);
        const Eigen::MatrixXd gamma = constrained_generalized_inverse(scale_structure(icar_structure(g)));
        const PCPhiPrior prior(PCPhiSpec{0.5, 0.5, spectrum(g)});
        double last = 0;
        for (double phi = 0.05; phi < 1.0; phi += 0.05) {
            CHECK(prior.kld(phi) == doctest::Approx(dense_kld(gamma, phi)).epsilon(1e-9));
            CHECK(prior.distance(phi) > last);
            last = prior.distance(phi);
        }
    }
    SUBCASE("invalid specs") {
        CHECK_THROWS_AS(PCPhiPrior(PCPhiSpec{1.0, 0.5, {0.0, 1.0, 2.0}}), ConfigError);
        CHECK_THROWS_AS(PCPhiPrior(PCPhiSpec{0.5, 0.5, {}}), ConfigError);
        CHECK_THROWS_AS(PCPhiPrior(PCPhiSpec{0.5, 0.5, {1.0, 1.0}}), NumericalError);
    }
}

} // TEST_SUITE
