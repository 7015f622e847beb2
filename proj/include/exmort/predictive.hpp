#pragma once

#include "exmort/calendar.hpp"
#include "exmort/ingest.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace exmort {

struct PredictiveRow {
    std::string area_id;
    IsoWeek week;
    StratumKey stratum;
    double population = 0;
    std::optional<int> observed;
};

using CountMatrix = Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Posterior-predictive death counts: one row per prediction cell, one
/// column per sample.
struct PredictiveSamples {
    std::vector<PredictiveRow> rows;
    CountMatrix counts;
    std::uint64_t seed = 0;
    nlohmann::json provenance = nlohmann::json::object();

    int n_samples() const { return static_cast<int>(counts.cols()); }
};

/// Largest Poisson rate accepted before a row is reported as overflowing.
inline constexpr double kMaxPoissonRate = 1e9;

/// Entry (i, m) ~ Poisson(exp(eta(i, m))); row i draws from substream (seed, i).
/// Throws NumericalError naming the row when exp(eta) is not finite or
/// exceeds kMaxPoissonRate.
PredictiveSamples posterior_predictive(const Eigen::MatrixXd &eta, std::vector<PredictiveRow> rows,
                                       std::uint64_t seed);

/// Prediction rows of a frame in frame order.
std::vector<PredictiveRow> prediction_rows(const ModelFrame &frame);

/// Binary layout: "EXMS1\n", little-endian uint64 header length, JSON header
/// (rows, n_samples, seed, provenance), then int32 counts row-major.
void write_samples(const PredictiveSamples &samples, const std::filesystem::path &path);
PredictiveSamples read_samples(const std::filesystem::path &path);

/// CSV with V1..Vn, EURO_LABEL, ID_space, year columns.
void write_samples_csv(const PredictiveSamples &samples, std::ostream &out);

} // namespace exmort
