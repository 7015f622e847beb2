#include "exmort/errors.hpp"
#include "exmort/gmrf.hpp"
#include "exmort/simulate.hpp"
#include "exmort/spatial_graph.hpp"

#include "../support/oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

using namespace exmort;
using exmort::testing::component_indicators;
using exmort::testing::constrained_covariance;

namespace {

Eigen::MatrixXd dense(const SparseMatrix &m) { return Eigen::MatrixXd(m); }

double geometric_mean_diag(const Eigen::MatrixXd &cov, const std::vector<int> &nodes) {
    double s = 0;
    for (int i : nodes) s += std::log(cov(i, i));
    return std::exp(s / static_cast<double>(nodes.size()));
}

} // namespace

TEST_SUITE("spatial_graph") {

TEST_CASE("adjacency parsing") {
    SUBCASE("3-node path") {
        std::istringstream in("3\n1 1 2\n2 2 1 3\n3 1 2\n");
        const Graph g = parse_adjacency(in);
        CHECK(g.neighbors(1) == std::vector<int>{0, 2});
        CHECK(g.label(0) == "1");
    }
    SUBCASE("asymmetric pair is named") {
        std::istringstream in("3\n1 1 2\n2 0\n3 0\n");
        CHECK_THROWS_WITH_AS(parse_adjacency(in), doctest::Contains("(1,2)"), DataError);
    }
    SUBCASE("self loop and out-of-range id") {
        std::istringstream loop("2\n1 1 1\n2 0\n");
        CHECK_THROWS_AS(parse_adjacency(loop), DataError);
        std::istringstream range("2\n1 1 5\n2 0\n");
        CHECK_THROWS_AS(parse_adjacency(range), DataError);
    }
    SUBCASE("comment lines are skipped") {
        std::istringstream in("# written by a test\n2\n1 1 2\n2 1 1\n");
        CHECK(parse_adjacency(in).size() == 2);
    }
    SUBCASE("107-node round trip") {
        std::mt19937_64 rng(107);
        const Graph g = testing::random_graph(107, 0.04, rng);
        std::stringstream io;
        write_adjacency(g, io);
        const Graph back = parse_adjacency(io, g.labels());
        CHECK(back == g);
    }
}

TEST_CASE("queen contiguity on a lattice") {
    const auto regions = rectangle_regions(2, 3);
    const Graph g = queen_contiguity(regions);
    // Corner touches its two edge neighbours and the diagonal.
    CHECK(g.neighbors(0) == std::vector<int>{1, 3, 4});
    CHECK(g.neighbors(1).size() == 5);
}

TEST_CASE("ICAR structure") {
    SUBCASE("path 1-2-3") {
        const auto s = icar_structure(testing::path_graph(3));
        Eigen::MatrixXd want(3, 3);
        want << 1, -1, 0, -1, 2, -1, 0, -1, 1;
        CHECK((dense(s.R) - want).norm() == 0.0);
        CHECK((s.R * Eigen::VectorXd::Ones(3)).norm() < 1e-12);
    }
    SUBCASE("zero eigenvalues equal the component count") {
        std::mt19937_64 rng(8);
        for (int rep = 0; rep < 10; ++rep) {
            const Graph g = testing::random_graph(8, 0.2, rng);
            const auto s = icar_structure(g);
            const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense(s.R));
            int zeros = 0;
            for (double ev : es.eigenvalues()) zeros += std::abs(ev) < 1e-9;
            CHECK(zeros == static_cast<int>(g.connected_components().size()));
            CHECK(s.rank_deficiency == zeros);
        }
    }
    SUBCASE("relabeling conjugates R by the permutation") {
        std::mt19937_64 rng(21);
        const Graph g = testing::random_connected_graph(9, 0.2, rng);
        std::vector<int> perm(9);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<std::vector<int>> nb(9);
        std::vector<std::string> labels(9);
        for (int i = 0; i < 9; ++i) {
            labels[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = g.label(i);
            for (int j : g.neighbors(i)) nb[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])].push_back(perm[static_cast<std::size_t>(j)]);
        }
        for (auto &l : nb) std::sort(l.begin(), l.end());
        const Graph h(labels, nb);
        const Eigen::MatrixXd a = dense(icar_structure(g).R);
        const Eigen::MatrixXd b = dense(icar_structure(h).R);
        for (int i = 0; i < 9; ++i)
            for (int j = 0; j < 9; ++j)
                CHECK(b(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]) == a(i, j));
    }
}

TEST_CASE("scaling") {
    SUBCASE("path of 3 against a dense constrained inverse") {
        const auto s = scale_structure(icar_structure(testing::path_graph(3)));
        const Eigen::MatrixXd cov = constrained_covariance(dense(s.R), Eigen::MatrixXd::Ones(1, 3));
        CHECK(geometric_mean_diag(cov, {0, 1, 2}) == doctest::Approx(1.0).epsilon(1e-10));
    }
    SUBCASE("singletons behave as unit-variance iid") {
        const Graph g({"a", "b", "c"}, {{1}, {0}, {}});
        const auto s = scale_structure(icar_structure(g));
        CHECK(dense(s.R)(2, 2) == doctest::Approx(1.0));
        CHECK(s.constrained_components().size() == 1);
    }
    SUBCASE("idempotent, sparsity and null space preserved") {
        std::mt19937_64 rng(5);
        const Graph g = testing::random_graph(12, 0.25, rng);
        const auto raw = icar_structure(g);
        const auto once = scale_structure(raw);
        const auto twice = scale_structure(once);
        CHECK((dense(once.R) - dense(twice.R)).norm() < 1e-10);
        CHECK(once.R.nonZeros() <= raw.R.nonZeros() + g.size());
        const Eigen::MatrixXd k = component_indicators(g);
        CHECK((dense(once.R) * k.transpose()).norm() < 1e-10);
    }
    SUBCASE("random walks scale to unit geometric variance") {
        const auto rw2 = scale_structure(rw2_structure(30));
        const Eigen::MatrixXd pinv = constrained_generalized_inverse(rw2);
        std::vector<int> all(30);
        std::iota(all.begin(), all.end(), 0);
        CHECK(geometric_mean_diag(pinv, all) == doctest::Approx(1.0).epsilon(1e-8));
    }
}

} // TEST_SUITE

TEST_SUITE("gmrf") {

TEST_CASE("random walk structures") {
    SUBCASE("cyclic RW1 of 4") {
        Eigen::MatrixXd want(4, 4);
        want << 2, -1, 0, -1, -1, 2, -1, 0, 0, -1, 2, -1, -1, 0, -1, 2;
        CHECK((dense(rw1_structure(4, true).R) - want).norm() == 0.0);
    }
    SUBCASE("RW1 diagonal") {
        const Eigen::MatrixXd r = dense(rw1_structure(5, false).R);
        CHECK(r.diagonal().transpose() == Eigen::RowVectorXd((Eigen::RowVectorXd(5) << 1, 2, 2, 2, 1).finished()));
    }
    SUBCASE("RW2 interior row and null space") {
        const Eigen::MatrixXd r = dense(rw2_structure(9).R);
        CHECK(r.row(4).segment(2, 5) == Eigen::RowVectorXd((Eigen::RowVectorXd(5) << 1, -4, 6, -4, 1).finished()));
        const Eigen::VectorXd lin = Eigen::VectorXd::LinSpaced(9, 1, 9);
        CHECK(std::abs(lin.dot(r * lin)) < 1e-10);
    }
    SUBCASE("size errors") {
        CHECK_THROWS_AS(rw1_structure(2, false), DataError);
        CHECK_THROWS_AS(rw2_structure(4), DataError);
    }
    SUBCASE("direct-sum oracles on random vectors") {
        std::mt19937_64 rng(3);
        std::normal_distribution<double> z;
        for (int rep = 0; rep < 100; ++rep) {
            Eigen::VectorXd x(11);
            for (auto &v : x) v = z(rng);
            CHECK(x.dot(rw1_structure(11, true).R * x) == doctest::Approx(testing::rw1_direct_sum(x, true)));
            CHECK(x.dot(rw1_structure(11, false).R * x) == doctest::Approx(testing::rw1_direct_sum(x, false)));
            CHECK(x.dot(rw2_structure(11).R * x) == doctest::Approx(testing::rw2_direct_sum(x)));
        }
    }
}

TEST_CASE("BYM2 joint precision") {
    const auto path = scale_structure(icar_structure(testing::path_graph(3)));
    auto marginal_b = [](const StructureMatrix &s, double tau, double phi) {
        const Eigen::MatrixXd q = dense(bym2_joint_precision(tau, phi, s.R));
        const auto n = s.R.rows();
        const auto comps = s.constrained_components();
        Eigen::MatrixXd ku = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(comps.size()), n);
        for (std::size_t c = 0; c < comps.size(); ++c)
            for (int i : comps[c]) ku(static_cast<Eigen::Index>(c), i) = 1;
        Eigen::MatrixXd k = Eigen::MatrixXd::Zero(ku.rows(), 2 * n);
        k.rightCols(n) = ku;
        return Eigen::MatrixXd(constrained_covariance(q, k).topLeftCorner(n, n));
    };
    SUBCASE("path of 3, tau 1, phi 0.4") {
        const Eigen::MatrixXd gamma = constrained_covariance(dense(path.R), Eigen::MatrixXd::Ones(1, 3));
        const Eigen::MatrixXd want = 0.6 * Eigen::MatrixXd::Identity(3, 3) + 0.4 * gamma;
        CHECK((marginal_b(path, 1.0, 0.4) - want).cwiseAbs().maxCoeff() < 1e-8);
    }
    SUBCASE("pure iid limit") {
        CHECK((marginal_b(path, 2.0, 1e-8) - 0.5 * Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-6);
    }
    SUBCASE("doubling tau halves the marginal covariance") {
        CHECK((marginal_b(path, 2.0, 0.3) - 0.5 * marginal_b(path, 1.0, 0.3)).cwiseAbs().maxCoeff() < 1e-10);
    }
    SUBCASE("degenerate phi") {
        CHECK_THROWS_AS(bym2_joint_precision(1.0, 0.0, path.R), NumericalError);
        CHECK_THROWS_AS(bym2_joint_precision(1.0, 1.0, path.R), NumericalError);
    }
}

TEST_CASE("layout, prior precision and design") {
    SimulationSpec spec;
    spec.grid_rows = 1;
    spec.grid_cols = 3;
    spec.death_years = {2019, 2020};
    spec.strata = {{AgeGroup::over80, Sex::female}};
    const auto st = simulate_study(spec);
    const std::vector<int> fit{2019};
    const auto frame = assemble_model_frame(st.sources, spec.strata[0], fit, 2020);
    const int n_bins = 6;
    const auto structures = make_structures(st.graph, n_bins, false);
    const auto layout = make_layout(frame, n_bins, structures.spatial);

    SUBCASE("dimension and constraint rows") {
        CHECK(layout.size() == 3 + (52 + 53) + n_bins + 52 + 2 * 3);
        const Eigen::MatrixXd c = layout.constraints();
        CHECK(c.rows() == 3);
        CHECK(c.row(0).sum() == n_bins);
        CHECK(c.row(1).sum() == 52);
        CHECK(c.row(2).sum() == 3);
    }
    SUBCASE("hand-assembled dense prior at unit precisions and phi 0.5") {
        HyperPoint h;
        h.phi_internal = 0.0;
        const Eigen::MatrixXd q = dense(assemble_prior_precision(h, layout, structures));
        const auto n = layout.size();
        Eigen::MatrixXd want = Eigen::MatrixXd::Zero(n, n);
        want.topLeftCorner(3, 3) = 0.001 * Eigen::MatrixXd::Identity(3, 3);
        want.block(layout.eps_offset(), layout.eps_offset(), layout.n_eps(), layout.n_eps()).setIdentity();
        want.block(layout.temp_offset(), layout.temp_offset(), n_bins, n_bins) =
            dense(rw2_structure(n_bins).R) + kJitter * Eigen::MatrixXd::Identity(n_bins, n_bins);
        want.block(layout.season_offset(), layout.season_offset(), 52, 52) =
            dense(rw1_structure(52, true).R) + kJitter * Eigen::MatrixXd::Identity(52, 52);
        const Eigen::MatrixXd r = dense(structures.spatial.R);
        const auto b = layout.b_offset();
        const auto u = layout.u_offset();
        for (int i = 0; i < 3; ++i) {
            want(b + i, b + i) = 2.0;
            want(b + i, u + i) = want(u + i, b + i) = -std::sqrt(0.5) / 0.5;
        }
        want.block(u, u, 3, 3) = Eigen::MatrixXd::Identity(3, 3) + r + kJitter * Eigen::MatrixXd::Identity(3, 3);
        CHECK((q - want).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((q - q.transpose()).norm() == 0.0);
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(q);
        CHECK(es.eigenvalues().minCoeff() >= -1e-10);
    }
    SUBCASE("closed-form constrained log-determinant matches a dense computation") {
        const PriorLogDeterminant logdet(layout, structures);
        for (double t : {-1.0, 0.5, 2.0}) {
            HyperPoint h;
            h.log_tau_eps = t;
            h.log_tau_z = 0.5 * t;
            h.log_tau_w = -t;
            h.log_tau_b = 1 + t;
            h.phi_internal = t;
            const Eigen::MatrixXd q = dense(assemble_prior_precision(h, layout, structures));
            const Eigen::MatrixXd c = layout.constraints();
            const Eigen::MatrixXd nb = testing::null_basis(c, q.rows());
            const double want = Eigen::LDLT<Eigen::MatrixXd>(nb.transpose() * q * nb).vectorD().array().log().sum() +
                                std::log((c * c.transpose()).determinant());
            CHECK(logdet(h) == doctest::Approx(want).epsilon(1e-7));
        }
    }
    SUBCASE("design matrix") {
        const auto bins = bin_temperature(std::vector<double>{0.0, 30.0}, n_bins);
        const auto d = design_matrix(frame, layout, bins);
        CHECK(d.A.rows() == static_cast<Eigen::Index>(frame.rows.size()));
        for (std::size_t i = 0; i < frame.rows.size(); ++i) {
            const auto &row = frame.rows[i];
            const Eigen::Index nnz = Eigen::SparseVector<double>(d.A.row(static_cast<Eigen::Index>(i)).transpose()).nonZeros();
            CHECK(nnz == 5 + (row.holiday != 0) + (row.year_index != 0));
            CHECK(d.offset(static_cast<Eigen::Index>(i)) == doctest::Approx(std::log(row.population)));
        }
        std::mt19937_64 rng(2);
        std::normal_distribution<double> z;
        Eigen::VectorXd x(layout.size());
        for (auto &v : x) v = z(rng);
        const Eigen::VectorXd sparse_eta = d.A * x;
        const Eigen::VectorXd dense_eta = Eigen::MatrixXd(d.A) * x;
        CHECK((sparse_eta - dense_eta).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("temperature bins") {
    std::vector<double> t;
    for (int i = 0; i <= 1000; ++i) t.push_back(i * 0.01);
    const auto b = bin_temperature(t, 10);
    CHECK(b.width == doctest::Approx(1.0));
    CHECK(b.bin_of(9.99) == 9);
    CHECK(b.bin_of(10.0) == 9);
    CHECK(b.bin_of(0.0) == 0);
    std::vector<int> counts(10, 0), brute(10, 0);
    for (double v : t) {
        ++counts[static_cast<std::size_t>(b.bin_of(v))];
        ++brute[static_cast<std::size_t>(std::min(9, static_cast<int>(std::floor(v / 1.0))))];
    }
    CHECK(counts == brute);
    CHECK_THROWS_AS(bin_temperature(std::vector<double>{3.0, 3.0}, 10), DataError);
    CHECK_THROWS_AS(bin_temperature(t, 4), DataError);
}

} // TEST_SUITE
