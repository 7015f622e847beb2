#pragma once

#include <span>
#include <vector>

namespace exmort {

/// Sample quantile by linear interpolation of order statistics (type 7):
/// h = (n - 1) p, q = x[floor h] + (h - floor h)(x[floor h + 1] - x[floor h]).
/// `sorted` must be ascending and nonempty.
double quantile_sorted(std::span<const double> sorted, double p);

/// Same rule on unsorted data (copies and sorts).
double quantile(std::span<const double> values, double p);

struct SampleSummary {
    double mean = 0;
    double median = 0;
    double sd = 0; // n - 1 denominator
    double ll = 0; // 2.5%
    double ul = 0; // 97.5%
};

/// Requires at least two values.
SampleSummary summarize(std::span<const double> values);

/// Fraction of values strictly greater than zero.
double exceedance(std::span<const double> values);

double pearson(std::span<const double> x, std::span<const double> y);

/// Pearson correlation of mid-ranks.
double spearman(std::span<const double> x, std::span<const double> y);

std::vector<double> mid_ranks(std::span<const double> x);

} // namespace exmort
