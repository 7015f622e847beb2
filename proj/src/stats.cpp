#include "exmort/stats.hpp"

#include "exmort/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace exmort {

double quantile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty()) {
        throw DataError("quantile of an empty sample");
    }
    const double h = static_cast<double>(sorted.size() - 1) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= sorted.size()) {
        return sorted.back();
    }
    const double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

double quantile(std::span<const double> values, double p) {
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    return quantile_sorted(v, p);
}

SampleSummary summarize(std::span<const double> values) {
    if (values.size() < 2) {
        throw DataError("summaries need at least two samples");
    }
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    SampleSummary s;
    const double n = static_cast<double>(v.size());
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0;
    for (double x : v) {
        ss += (x - s.mean) * (x - s.mean);
    }
    s.sd = std::sqrt(ss / (n - 1));
    s.median = quantile_sorted(v, 0.5);
    s.ll = quantile_sorted(v, 0.025);
    s.ul = quantile_sorted(v, 0.975);
    return s;
}

double exceedance(std::span<const double> values) {
    if (values.empty()) {
        return std::nan("");
    }
    const auto k = std::count_if(values.begin(), values.end(), [](double x) { return x > 0; });
    return static_cast<double>(k) / static_cast<double>(values.size());
}

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw DataError("correlation needs two vectors of equal length >= 2");
    }
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0 || syy == 0) {
        return std::nan("");
    }
    return sxy / std::sqrt(sxx * syy);
}

std::vector<double> mid_ranks(std::span<const double> x) {
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return x[a] < x[b]; });
    std::vector<double> r(x.size());
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) {
            ++j;
        }
        const double rank = 0.5 * static_cast<double>(i + j) + 1;
        for (std::size_t k = i; k <= j; ++k) {
            r[idx[k]] = rank;
        }
        i = j + 1;
    }
    return r;
}

double spearman(std::span<const double> x, std::span<const double> y) {
    const auto rx = mid_ranks(x);
    const auto ry = mid_ranks(y);
    return pearson(rx, ry);
}

} // namespace exmort
