#include "exmort/validation.hpp"

#include "exmort/csv.hpp"
#include "exmort/errors.hpp"
#include "exmort/predictive.hpp"
#include "exmort/rng.hpp"
#include "exmort/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace exmort {

CVScore score_predictions(std::span<const double> observed, const Eigen::MatrixXd &predicted,
                          CorrelationMethod method) {
    const auto cells = static_cast<Eigen::Index>(observed.size());
    if (predicted.rows() != cells || cells < 2 || predicted.cols() < 2) {
        throw DataError("cross-validation: prediction matrix does not match the held-out cells");
    }
    CVScore s;
    s.cells = observed.size();
    std::vector<double> corr;
    corr.reserve(static_cast<std::size_t>(predicted.cols()));
    std::vector<double> col(observed.size());
    for (Eigen::Index m = 0; m < predicted.cols(); ++m) {
        for (Eigen::Index i = 0; i < cells; ++i) {
            col[static_cast<std::size_t>(i)] = predicted(i, m);
        }
        const double r = method == CorrelationMethod::pearson ? pearson(observed, col) : spearman(observed, col);
        if (!std::isnan(r)) {
            corr.push_back(r);
        }
    }
    if (corr.empty()) {
        s.correlation_median = s.correlation_ll = s.correlation_ul = std::nan("");
    } else {
        std::sort(corr.begin(), corr.end());
        s.correlation_median = quantile_sorted(corr, 0.5);
        s.correlation_ll = quantile_sorted(corr, 0.025);
        s.correlation_ul = quantile_sorted(corr, 0.975);
    }
    std::size_t inside = 0;
    std::vector<double> row(static_cast<std::size_t>(predicted.cols()));
    for (Eigen::Index i = 0; i < cells; ++i) {
        for (Eigen::Index m = 0; m < predicted.cols(); ++m) {
            row[static_cast<std::size_t>(m)] = predicted(i, m);
        }
        std::sort(row.begin(), row.end());
        const double y = observed[static_cast<std::size_t>(i)];
        if (y >= quantile_sorted(row, 0.025) && y <= quantile_sorted(row, 0.975)) {
            ++inside;
        }
    }
    s.coverage = static_cast<double>(inside) / static_cast<double>(cells);
    return s;
}

StratumCV score_folds(StratumKey stratum, std::span<const FoldPrediction> folds, CorrelationMethod method) {
    StratumCV out;
    out.stratum = stratum;
    std::vector<double> observed;
    std::vector<const FoldPrediction *> ok;
    for (const auto &f : folds) {
        YearScore ys;
        ys.year = f.year;
        ys.failed = f.failed;
        ys.error = f.error;
        if (!f.failed) {
            ys.score = score_predictions(f.observed, f.predicted, method);
            ok.push_back(&f);
            observed.insert(observed.end(), f.observed.begin(), f.observed.end());
        } else {
            const double na = std::nan("");
            ys.score = {na, na, na, na, 0};
        }
        out.by_year.push_back(std::move(ys));
    }
    if (ok.empty()) {
        const double na = std::nan("");
        out.pooled = {na, na, na, na, 0};
        return out;
    }
    const auto n = ok.front()->predicted.cols();
    Eigen::MatrixXd pooled(static_cast<Eigen::Index>(observed.size()), n);
    Eigen::Index r = 0;
    for (const auto *f : ok) {
        if (f->predicted.cols() != n) {
            throw DataError("cross-validation: folds carry different sample counts");
        }
        pooled.middleRows(r, f->predicted.rows()) = f->predicted;
        r += f->predicted.rows();
    }
    out.pooled = score_predictions(observed, pooled, method);
    return out;
}

std::vector<StratumCV> loyo_cv(std::span<const StratumKey> strata, std::span<const int> years,
                               const FoldRunner &runner, CorrelationMethod method) {
    if (years.size() < 3) {
        throw ConfigError("cross-validation needs at least three fit years");
    }
    std::vector<StratumCV> out;
    for (StratumKey k : strata) {
        std::vector<FoldPrediction> folds;
        for (int year : years) {
            FoldPrediction f;
            try {
                f = runner(k, year);
                f.year = year;
            } catch (const std::exception &e) {
                f = FoldPrediction{};
                f.year = year;
                f.failed = true;
                f.error = e.what();
            }
            folds.push_back(std::move(f));
        }
        out.push_back(score_folds(k, folds, method));
    }
    return out;
}

FoldRunner model_fold_runner(const FrameSources &sources, const Graph &graph, ModelSettings settings,
                             std::vector<int> years, int n_samples, std::uint64_t seed) {
    return [&sources, &graph, settings = std::move(settings), years = std::move(years), n_samples,
            seed](StratumKey stratum, int held_out) {
        std::vector<int> fit;
        for (int y : years) {
            if (y != held_out) {
                fit.push_back(y);
            }
        }
        const ModelFrame frame = assemble_model_frame(sources, stratum, fit, held_out);
        const MortalityModel model(frame, graph, settings);
        const HyperGrid grid = model.fit();
        const auto fold_seed = substream_seed(seed, static_cast<std::uint64_t>(stratum_index(stratum)),
                                              static_cast<std::uint64_t>(held_out));
        const Eigen::MatrixXd eta = model.sample_prediction_eta(grid, n_samples, fold_seed);
        auto rows = prediction_rows(frame);
        const PredictiveSamples pred = posterior_predictive(eta, rows, substream_seed(fold_seed, 1));
        FoldPrediction f;
        f.year = held_out;
        for (const auto &r : pred.rows) {
            if (!r.observed) {
                throw DataError("held-out year " + std::to_string(held_out) + " lacks observed deaths for area " +
                                r.area_id);
            }
            f.observed.push_back(*r.observed);
        }
        f.predicted = pred.counts.cast<double>();
        return f;
    };
}

namespace {

std::string two_dp(double x) {
    if (std::isnan(x)) return "NA";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", x);
    return buf;
}

} // namespace

void write_cv_report(std::span<const StratumCV> report, std::ostream &out, const std::string &provenance_line) {
    out << "# " << provenance_line << '\n';
    out << "stratum,correlation_median,correlation_LL,correlation_UL,coverage\n";
    for (const auto &s : report) {
        out << stratum_cv_label(s.stratum) << ',' << csv::format_double(s.pooled.correlation_median) << ','
            << csv::format_double(s.pooled.correlation_ll) << ',' << csv::format_double(s.pooled.correlation_ul)
            << ',' << csv::format_double(s.pooled.coverage) << '\n';
    }
}

void write_cv_report_by_year(std::span<const StratumCV> report, std::ostream &out,
                             const std::string &provenance_line) {
    out << "# " << provenance_line << '\n';
    out << "stratum,year,correlation_median,correlation_LL,correlation_UL,coverage,cells,status\n";
    for (const auto &s : report) {
        for (const auto &y : s.by_year) {
            out << stratum_cv_label(s.stratum) << ',' << y.year << ',' << csv::format_double(y.score.correlation_median)
                << ',' << csv::format_double(y.score.correlation_ll) << ','
                << csv::format_double(y.score.correlation_ul) << ',' << csv::format_double(y.score.coverage) << ','
                << y.score.cells << ',' << (y.failed ? csv::escape("failed: " + y.error) : std::string("ok"))
                << '\n';
        }
    }
}

void write_cv_table(std::span<const StratumCV> report, std::ostream &out) {
    for (const auto &s : report) {
        out << stratum_cv_label(s.stratum) << ' ' << two_dp(s.pooled.correlation_median) << " ("
            << two_dp(s.pooled.correlation_ll) << ", " << two_dp(s.pooled.correlation_ul) << ") "
            << two_dp(s.pooled.coverage) << '\n';
    }
}

} // namespace exmort
