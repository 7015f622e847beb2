#pragma once

#include "exmort/ingest.hpp"
#include "exmort/mortality_model.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace exmort {

enum class CorrelationMethod { pearson, spearman };

/// Held-out predictions of one fold: observed counts per cell and predictive
/// draws (cells x samples).
struct FoldPrediction {
    int year = 0;
    std::vector<double> observed;
    Eigen::MatrixXd predicted;
    bool failed = false;
    std::string error;
};

struct CVScore {
    double correlation_median = 0;
    double correlation_ll = 0;
    double correlation_ul = 0;
    double coverage = 0;
    std::size_t cells = 0;
};

struct YearScore {
    int year = 0;
    bool failed = false;
    std::string error;
    CVScore score;
};

struct StratumCV {
    StratumKey stratum;
    CVScore pooled;
    std::vector<YearScore> by_year;
};

/// Per-sample correlation between observed and predicted vectors, and the
/// fraction of cells whose observation lies in the 2.5%-97.5% predictive interval.
CVScore score_predictions(std::span<const double> observed, const Eigen::MatrixXd &predicted,
                          CorrelationMethod method);

/// Pools all successful folds (cells concatenated) and scores each year.
StratumCV score_folds(StratumKey stratum, std::span<const FoldPrediction> folds, CorrelationMethod method);

using FoldRunner = std::function<FoldPrediction(StratumKey stratum, int held_out_year)>;

/// Leave-one-year-out over `years` (at least three). A throwing fold is
/// recorded as failed and the others continue.
std::vector<StratumCV> loyo_cv(std::span<const StratumKey> strata, std::span<const int> years,
                               const FoldRunner &runner, CorrelationMethod method);

/// Refits the model on the remaining years and predicts the held-out one.
FoldRunner model_fold_runner(const FrameSources &sources, const Graph &graph, ModelSettings settings,
                             std::vector<int> years, int n_samples, std::uint64_t seed);

void write_cv_report(std::span<const StratumCV> report, std::ostream &out, const std::string &provenance_line);
void write_cv_report_by_year(std::span<const StratumCV> report, std::ostream &out,
                             const std::string &provenance_line);
/// One line per stratum: "less40F 0.39 (0.37, 0.40) 0.92".
void write_cv_table(std::span<const StratumCV> report, std::ostream &out);

} // namespace exmort
