#include "exmort/pc_priors.hpp"

#include "exmort/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include <boost/math/tools/roots.hpp>

namespace exmort {

void PCPrecSpec::validate() const {
    if (!(u > 0) || !(alpha > 0 && alpha < 1)) {
        throw ConfigError("PC prior for a precision needs u > 0 and 0 < alpha < 1");
    }
}

double PCPrecSpec::rate() const { return -std::log(alpha) / u; }

double pc_prec_log_density(double log_tau, const PCPrecSpec &spec) {
    const double lambda = spec.rate();
    const double sigma = std::exp(-0.5 * log_tau);
    return std::log(lambda / 2) - lambda * sigma - 0.5 * log_tau;
}

double pc_prec_sd_tail(double s, const PCPrecSpec &spec) { return std::exp(-spec.rate() * s); }

namespace {

// x - log1p(x), accurate for small |x|.
double x_minus_log1p(double x) {
    if (std::abs(x) < 1e-3) {
        const double x2 = x * x;
        return x2 / 2 - x2 * x / 3 + x2 * x2 / 4 - x2 * x2 * x / 5;
    }
    return x - std::log1p(x);
}

} // namespace

PCPhiPrior::PCPhiPrior(PCPhiSpec spec) : spec_{std::move(spec)} {
    if (!(spec_.u > 0 && spec_.u < 1) || !(spec_.alpha > 0 && spec_.alpha < 1)) {
        throw ConfigError("PC prior for phi needs 0 < u < 1 and 0 < alpha < 1");
    }
    if (spec_.eigenvalues.empty()) {
        throw ConfigError("PC prior for phi needs the structure spectrum");
    }
    bool has_zero = false;
    double sum_sq = 0;
    for (double &g : spec_.eigenvalues) {
        if (std::abs(g) < 1e-10) {
            g = 0;
            has_zero = true;
        }
        sum_sq += (g - 1) * (g - 1);
    }
    if (sum_sq < 1e-20) {
        throw NumericalError("PC prior for phi is degenerate: the structure equals the iid base");
    }
    max_distance_ = has_zero ? std::numeric_limits<double>::infinity() : distance(1.0);

    const double du = distance(spec_.u);
    if (std::isinf(max_distance_)) {
        rate_ = -std::log1p(-spec_.alpha) / du;
        log_normalizer_ = 0;
        return;
    }
    // Truncated exponential on [0, d_max]: solve CDF(u) = alpha for the rate.
    auto cdf_gap = [&](double log_rate) {
        const double r = std::exp(log_rate);
        return -std::expm1(-r * du) / -std::expm1(-r * max_distance_) - spec_.alpha;
    };
    double lo = -20;
    double hi = 20;
    if (cdf_gap(lo) * cdf_gap(hi) > 0) {
        throw NumericalError("PC prior for phi: rate solve fails to bracket (alpha too small for u)");
    }
    std::uintmax_t iters = 200;
    auto root = boost::math::tools::toms748_solve(
        cdf_gap, lo, hi, boost::math::tools::eps_tolerance<double>(50), iters);
    rate_ = std::exp(0.5 * (root.first + root.second));
    log_normalizer_ = std::log(-std::expm1(-rate_ * max_distance_));
}

double PCPhiPrior::kld_split(double phi, double one_minus_phi) const {
    double sum = 0;
    for (double g : spec_.eigenvalues) {
        const double x = phi * (g - 1);
        if (x > -0.5) {
            sum += x_minus_log1p(x);
        } else {
            // 1 + x = (1 - phi) + phi g, evaluated without cancellation
            sum += x - std::log(one_minus_phi + phi * g);
        }
    }
    return 0.5 * sum;
}

double PCPhiPrior::log_kld_derivative(double phi, double one_minus_phi) const {
    // Log-sum-exp: 1 / (1 - phi) overflows when 1 - phi is subnormal.
    std::vector<double> terms;
    terms.reserve(spec_.eigenvalues.size());
    for (double g : spec_.eigenvalues) {
        if (g == 1) continue;
        terms.push_back(std::log(phi) + 2 * std::log(std::abs(g - 1)) - std::log(one_minus_phi + phi * g));
    }
    const double top = *std::max_element(terms.begin(), terms.end());
    double sum = 0;
    for (double t : terms) sum += std::exp(t - top);
    return top + std::log(0.5 * sum);
}

double PCPhiPrior::kld(double phi) const { return kld_split(phi, 1 - phi); }

double PCPhiPrior::distance(double phi) const { return std::sqrt(2 * kld(phi)); }

double PCPhiPrior::cdf(double phi) const {
    if (phi <= 0) return 0;
    if (phi >= 1) return 1;
    return -std::expm1(-rate_ * distance(phi)) / std::exp(log_normalizer_);
}

double PCPhiPrior::log_density_split(double phi, double one_minus_phi) const {
    const double k = kld_split(phi, one_minus_phi);
    const double d = std::sqrt(2 * k);
    if (!std::isfinite(d)) {
        return -std::numeric_limits<double>::infinity();
    }
    double log_dd; // log d'(phi)
    if (d < 1e-12) {
        double sum_sq = 0;
        for (double g : spec_.eigenvalues) {
            sum_sq += (g - 1) * (g - 1);
        }
        log_dd = 0.5 * std::log(0.5 * sum_sq);
    } else {
        log_dd = log_kld_derivative(phi, one_minus_phi) - std::log(d);
    }
    return std::log(rate_) - rate_ * d + log_dd - log_normalizer_;
}

double PCPhiPrior::log_density_phi(double phi) const {
    if (!(phi > 0 && phi < 1)) {
        return -std::numeric_limits<double>::infinity();
    }
    return log_density_split(phi, 1 - phi);
}

double PCPhiPrior::log_density_phi(double phi, double one_minus_phi) const {
    if (!(phi > 0 && one_minus_phi > 0)) {
        return -std::numeric_limits<double>::infinity();
    }
    return log_density_split(phi, one_minus_phi);
}

double PCPhiPrior::log_density(double phi_internal) const {
    // phi = logistic(t), 1 - phi = logistic(-t)
    auto softplus = [](double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); };
    const double log_phi = -softplus(-phi_internal);
    const double log_one_minus = -softplus(phi_internal);
    const double phi = std::exp(log_phi);
    const double one_minus = std::exp(log_one_minus);
    return log_density_split(phi, one_minus) + log_phi + log_one_minus;
}

} // namespace exmort
