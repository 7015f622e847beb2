#include "exmort/errors.hpp"
#include "exmort/predictive.hpp"

#include "../support/scratch.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace exmort;

namespace {

std::vector<PredictiveRow> rows_for(int n) {
    std::vector<PredictiveRow> rows;
    for (int i = 0; i < n; ++i) {
        rows.push_back({"A" + std::to_string(i + 1), IsoWeek{2020, 1 + i % 53}, {AgeGroup::over80, Sex::male},
                        1000.0 + i, i % 2 ? std::optional<int>(40 + i) : std::nullopt});
    }
    return rows;
}

} // namespace

TEST_SUITE("predictive") {

TEST_CASE("vanishing rate gives zero counts") {
    const Eigen::MatrixXd eta = Eigen::MatrixXd::Constant(3, 50, -800.0);
    const auto s = posterior_predictive(eta, rows_for(3), 1);
    CHECK(s.counts.cwiseAbs().maxCoeff() == 0);
}

TEST_CASE("shape and moments") {
    const int n = 20000;
    const Eigen::MatrixXd eta = Eigen::MatrixXd::Constant(2, n, std::log(10.0));
    const auto s = posterior_predictive(eta, rows_for(2), 9);
    CHECK(s.counts.rows() == 2);
    CHECK(s.n_samples() == n);
    const double mean = s.counts.row(0).cast<double>().mean();
    CHECK(std::abs(mean - 10.0) < 4 * std::sqrt(10.0 / n));
}

TEST_CASE("law of total variance with random eta") {
    // eta ~ N(mu, s^2): Var(y) = E[exp(eta)] + Var(exp(eta)).
    const int n = 200000;
    const double mu = std::log(20.0), sd = 0.3;
    std::mt19937_64 rng(4);
    std::normal_distribution<double> z(mu, sd);
    Eigen::MatrixXd eta(1, n);
    for (Eigen::Index m = 0; m < n; ++m) eta(0, m) = z(rng);
    const auto s = posterior_predictive(eta, rows_for(1), 2);
    const Eigen::ArrayXd y = s.counts.row(0).cast<double>().transpose().array();
    const double mean_rate = std::exp(mu + 0.5 * sd * sd);
    const double var_rate = (std::exp(sd * sd) - 1) * std::exp(2 * mu + sd * sd);
    CHECK(y.mean() == doctest::Approx(mean_rate).epsilon(0.01));
    const double var = (y - y.mean()).square().sum() / (n - 1);
    CHECK(var == doctest::Approx(mean_rate + var_rate).epsilon(0.03));
}

TEST_CASE("deterministic per row and seed") {
    const Eigen::MatrixXd eta = Eigen::MatrixXd::Constant(4, 100, 2.0);
    const auto a = posterior_predictive(eta, rows_for(4), 5);
    const auto b = posterior_predictive(eta, rows_for(4), 5);
    const auto c = posterior_predictive(eta, rows_for(4), 6);
    CHECK(a.counts == b.counts);
    CHECK(a.counts != c.counts);
    // Row i uses its own substream, so the first rows do not depend on later ones.
    const auto head = posterior_predictive(eta.topRows(2), rows_for(2), 5);
    CHECK(head.counts == a.counts.topRows(2));
}

TEST_CASE("overflow names the row") {
    Eigen::MatrixXd eta = Eigen::MatrixXd::Constant(3, 5, 1.0);
    eta(2, 3) = 40.0;
    CHECK_THROWS_WITH_AS(posterior_predictive(eta, rows_for(3), 1), doctest::Contains("row 2"), NumericalError);
    CHECK_THROWS_AS(posterior_predictive(eta, rows_for(2), 1), DataError);
}

TEST_CASE("binary and CSV output") {
    testing::ScratchDir dir;
    const Eigen::MatrixXd eta = Eigen::MatrixXd::Constant(3, 7, 3.0);
    auto s = posterior_predictive(eta, rows_for(3), 12);
    s.provenance = {{"seed", 12}};
    write_samples(s, dir / "s.bin");
    const auto back = read_samples(dir / "s.bin");
    CHECK(back.counts == s.counts);
    CHECK(back.seed == 12);
    CHECK(back.provenance == s.provenance);
    REQUIRE(back.rows.size() == 3);
    CHECK(back.rows[1].area_id == "A2");
    CHECK(back.rows[1].observed == 41);
    CHECK_FALSE(back.rows[0].observed.has_value());
    CHECK(back.rows[2].week == IsoWeek{2020, 3});

    std::ostringstream csv;
    write_samples_csv(s, csv);
    std::istringstream in(csv.str());
    std::string header, first;
    std::getline(in, header);
    std::getline(in, first);
    CHECK(header == "V1,V2,V3,V4,V5,V6,V7,EURO_LABEL,ID_space,year");
    CHECK(first.find(",2020-W01,A1,2020") != std::string::npos);

    dir.write("junk.bin", "not samples");
    CHECK_THROWS_AS(read_samples(dir / "junk.bin"), DataError);
    CHECK_THROWS_AS(read_samples(dir / "absent.bin"), DataError);
}

} // TEST_SUITE
