#pragma once

#include <span>
#include <vector>

namespace exmort {

/// Penalised-complexity prior for a precision, stated as P(sigma > u) = alpha.
struct PCPrecSpec {
    double u = 1.0;
    double alpha = 0.01;

    /// Rate of the exponential on sigma: -ln(alpha) / u.
    double rate() const;
    void validate() const;
};

/// Log-density of log(tau) when sigma = exp(-log_tau / 2) ~ Exp(rate):
/// ln(rate / 2) - rate * sigma - log_tau / 2.
double pc_prec_log_density(double log_tau, const PCPrecSpec &spec);

/// Closed-form P(sigma > s).
double pc_prec_sd_tail(double s, const PCPrecSpec &spec);

/// PC prior for the BYM2 mixing parameter, stated as P(phi < u) = alpha.
struct PCPhiSpec {
    double u = 0.5;
    double alpha = 0.5;
    /// Spectrum of the constrained generalized inverse of the scaled structure.
    std::vector<double> eigenvalues;
};

/// Exponential prior on the distance d(phi) = sqrt(2 KLD(phi)) of the BYM2
/// field from its phi = 0 (pure iid) base model, where
/// KLD(phi) = 1/2 sum_i [phi (g_i - 1) - ln(1 + phi (g_i - 1))].
/// The rate satisfies P(phi < u) = alpha and the density is normalized over
/// (0, 1) exactly through the distance transform.
class PCPhiPrior {
  public:
    explicit PCPhiPrior(PCPhiSpec spec);

    double kld(double phi) const;
    double distance(double phi) const;
    double rate() const { return rate_; }
    /// Distance as phi -> 1; infinite when some eigenvalue is zero.
    double max_distance() const { return max_distance_; }

    double cdf(double phi) const;
    double log_density_phi(double phi) const;
    /// Same, with 1 - phi supplied separately for accuracy near phi = 1.
    double log_density_phi(double phi, double one_minus_phi) const;
    /// Log-density of logit(phi), including the logistic Jacobian.
    double log_density(double phi_internal) const;

    const PCPhiSpec &spec() const { return spec_; }

  private:
    // Work directly with (phi, 1 - phi) so that both tails stay accurate.
    double kld_split(double phi, double one_minus_phi) const;
    double log_kld_derivative(double phi, double one_minus_phi) const;
    double log_density_split(double phi, double one_minus_phi) const;

    PCPhiSpec spec_;
    double rate_ = 0;
    double max_distance_ = 0;
    double log_normalizer_ = 0; // ln(1 - exp(-rate * max_distance))
};

/// Hyperprior of the mortality model: four precisions and the mixing parameter.
struct PriorSettings {
    PCPrecSpec eps{1.0, 0.01};
    PCPrecSpec temperature{1.0, 0.01};
    PCPrecSpec season{1.0, 0.01};
    PCPrecSpec spatial{1.0, 0.01};
    double phi_u = 0.5;
    double phi_alpha = 0.5;
};

} // namespace exmort
