#include "exmort/laplace.hpp"

#include "exmort/errors.hpp"
#include "exmort/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace exmort {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_det_spd(const Eigen::LLT<Eigen::MatrixXd> &llt) {
    return 2 * llt.matrixLLT().diagonal().array().log().sum();
}

} // namespace

void LatentGaussianModel::validate() const {
    const auto m = fit_design.rows();
    if (fit_design.cols() != n_latent || output_design.cols() != n_latent) {
        throw DataError("latent model: design columns differ from the latent size");
    }
    if (fit_offset.size() != m || observations.size() != m) {
        throw DataError("latent model: fit offset or observations have the wrong length");
    }
    if (output_offset.size() != output_design.rows()) {
        throw DataError("latent model: output offset has the wrong length");
    }
    if (constraints.size() > 0 && constraints.cols() != n_latent) {
        throw DataError("latent model: constraint matrix has the wrong width");
    }
    if (likelihood == Likelihood::gaussian && gaussian_precision.size() != m) {
        throw DataError("latent model: gaussian precision has the wrong length");
    }
    if (!prior_precision || !log_hyper_prior || initial_hyper.size() != n_hyper || n_hyper < 1) {
        throw DataError("latent model: hyperparameter callbacks or start are missing");
    }
    for (Eigen::Index i = 0; i < m; ++i) {
        const double y = observations(i);
        if (!std::isfinite(y) || (likelihood == Likelihood::poisson && (y < 0 || y != std::floor(y)))) {
            throw DataError("latent model: observation " + std::to_string(i) + " is not a valid count");
        }
    }
}

Eigen::VectorXd GaussianApprox::condition(const Eigen::VectorXd &x) const {
    if (constraints.rows() == 0) {
        return x;
    }
    return x - kriging_w * kriging_s.solve(constraints * x);
}

Eigen::MatrixXd GaussianApprox::covariance_times(const Eigen::MatrixXd &b) const {
    Eigen::MatrixXd out = chol.solve(b);
    if (constraints.rows() > 0) {
        out -= kriging_w * kriging_s.solve(kriging_w.transpose() * b);
    }
    return out;
}

std::vector<double> HyperGrid::weights() const {
    std::vector<double> w;
    w.reserve(points.size());
    for (const auto &p : points) {
        w.push_back(p.weight);
    }
    return w;
}

LaplaceEngine::LaplaceEngine(LatentGaussianModel model, NewtonOptions newton)
    : model_{std::move(model)}, newton_{newton} {
    model_.validate();
    ata_ = SparseMatrix(model_.fit_design.transpose()) * model_.fit_design;
    ctc_.resize(model_.n_latent, model_.n_latent);
    if (model_.constraints.rows() > 0) {
        const SparseMatrix c = model_.constraints.sparseView();
        ctc_ = SparseMatrix(c.transpose() * c);
    }
    SparseMatrix pattern = model_.prior_precision(model_.initial_hyper) + ata_ + ctc_;
    ordering_ = fill_reducing_ordering(pattern);
    if (model_.constraints.rows() > 0) {
        cct_.compute(model_.constraints * model_.constraints.transpose());
        if (cct_.info() != Eigen::Success) {
            throw DataError("latent model: constraint rows are linearly dependent");
        }
    }
}

double LaplaceEngine::log_likelihood(const Eigen::VectorXd &eta) const {
    const auto &y = model_.observations;
    double s = 0;
    if (model_.likelihood == Likelihood::poisson) {
        for (Eigen::Index i = 0; i < eta.size(); ++i) {
            s += y(i) * eta(i) - std::exp(eta(i)) - std::lgamma(y(i) + 1);
        }
    } else {
        const auto &p = model_.gaussian_precision;
        for (Eigen::Index i = 0; i < eta.size(); ++i) {
            const double r = y(i) - eta(i);
            s += 0.5 * std::log(p(i) / (2 * M_PI)) - 0.5 * p(i) * r * r;
        }
    }
    return s;
}

double LaplaceEngine::objective(const Eigen::VectorXd &x, const SparseMatrix &q, const Eigen::VectorXd &eta) const {
    const auto &y = model_.observations;
    double s = 0;
    if (model_.likelihood == Likelihood::poisson) {
        for (Eigen::Index i = 0; i < eta.size(); ++i) {
            s += y(i) * eta(i) - std::exp(eta(i));
        }
    } else {
        const auto &p = model_.gaussian_precision;
        for (Eigen::Index i = 0; i < eta.size(); ++i) {
            const double r = y(i) - eta(i);
            s -= 0.5 * p(i) * r * r;
        }
    }
    return s - 0.5 * x.dot(q.selfadjointView<Eigen::Lower>() * x);
}

Eigen::VectorXd LaplaceEngine::score(const Eigen::VectorXd &eta) const {
    if (model_.likelihood == Likelihood::poisson) {
        return model_.observations - eta.array().exp().matrix();
    }
    return model_.gaussian_precision.cwiseProduct(model_.observations - eta);
}

Eigen::VectorXd LaplaceEngine::curvature(const Eigen::VectorXd &eta) const {
    if (model_.likelihood == Likelihood::poisson) {
        return eta.array().exp().matrix();
    }
    return model_.gaussian_precision;
}

Eigen::VectorXd LaplaceEngine::project(const Eigen::VectorXd &g) const {
    if (model_.constraints.rows() == 0) {
        return g;
    }
    const auto &c = model_.constraints;
    return g - c.transpose() * cct_.solve(c * g);
}

Eigen::VectorXd LaplaceEngine::initial_latent() const {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(model_.n_latent);
    if (model_.likelihood == Likelihood::poisson && model_.intercept_index >= 0) {
        const double total = model_.observations.sum();
        const double exposure = model_.fit_offset.array().exp().sum();
        if (total > 0 && exposure > 0) {
            x(model_.intercept_index) = std::log(total / exposure);
        }
    }
    return x;
}

GaussianApprox LaplaceEngine::approximate(const Eigen::VectorXd &theta, const Eigen::VectorXd *start) const {
    const SparseMatrix q = model_.prior_precision(theta);
    const SparseMatrix &a = model_.fit_design;
    Eigen::VectorXd x = start ? *start : initial_latent();
    if (x.size() != model_.n_latent) {
        throw NumericalError("Newton start has the wrong length");
    }
    if (model_.constraints.rows() > 0) {
        x = project(x);
    }
    Eigen::VectorXd eta = a * x + model_.fit_offset;
    double f = objective(x, q, eta);
    if (!std::isfinite(f)) {
        throw NumericalError("non-finite log-likelihood at the Newton start");
    }
    std::vector<double> trace{f};
    double pg0 = 0;
    bool converged = false;
    int it = 0;
    for (; it <= newton_.max_iterations; ++it) {
        const Eigen::VectorXd g = a.transpose() * score(eta) - q.selfadjointView<Eigen::Lower>() * x;
        const double pg = project(g).lpNorm<Eigen::Infinity>();
        if (it == 0) {
            pg0 = pg;
        }
        if (pg / (1 + pg0) < newton_.tolerance) {
            converged = true;
            break;
        }
        if (it == newton_.max_iterations) {
            break;
        }
        const Eigen::VectorXd c = curvature(eta);
        const SparseMatrix qstar = q + ctc_ + SparseMatrix(a.transpose() * c.asDiagonal()) * a;
        const SparseCholesky chol(qstar, ordering_);
        Eigen::VectorXd target = x + chol.solve(g);
        if (model_.constraints.rows() > 0) {
            const Eigen::MatrixXd w = chol.solve(Eigen::MatrixXd(model_.constraints.transpose()));
            const Eigen::LLT<Eigen::MatrixXd> s(model_.constraints * w);
            target -= w * s.solve(model_.constraints * target);
        }
        const Eigen::VectorXd d = target - x;
        // Newton decrement: predicted gain of the full step.
        if (0.5 * g.dot(d) < 1e-12 * (1 + std::abs(f))) {
            converged = true;
            break;
        }
        double step = 1;
        bool accepted = false;
        for (int h = 0; h <= newton_.max_halvings; ++h, step *= 0.5) {
            const Eigen::VectorXd xt = x + step * d;
            const Eigen::VectorXd et = a * xt + model_.fit_offset;
            const double ft = objective(xt, q, et);
            if (std::isfinite(ft) && ft >= f) {
                x = xt;
                eta = et;
                f = ft;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            // No ascent along the Newton direction: at the optimum to rounding.
            converged = true;
            break;
        }
        trace.push_back(f);
    }
    if (!converged) {
        throw NumericalError("Newton iterations did not converge within " +
                             std::to_string(newton_.max_iterations) + " iterations");
    }
    GaussianApprox out = finish(theta, q, std::move(x));
    out.iterations = it;
    out.objective_trace = std::move(trace);
    return out;
}

GaussianApprox LaplaceEngine::approximate_at(const Eigen::VectorXd &theta, const Eigen::VectorXd &mode) const {
    if (mode.size() != model_.n_latent) {
        throw DataError("stored latent mode has the wrong length");
    }
    return finish(theta, model_.prior_precision(theta), mode);
}

double LaplaceEngine::prior_log_determinant(const Eigen::VectorXd &theta, const SparseMatrix &q) const {
    if (model_.prior_log_determinant) {
        return model_.prior_log_determinant(theta);
    }
    const SparseCholesky prior(q + ctc_, ordering_);
    double out = prior.log_determinant();
    if (model_.constraints.rows() > 0) {
        const Eigen::LLT<Eigen::MatrixXd> s(model_.constraints *
                                            prior.solve(Eigen::MatrixXd(model_.constraints.transpose())));
        if (s.info() != Eigen::Success) {
            throw NumericalError("prior constraint covariance is not positive definite");
        }
        out += log_det_spd(s);
    }
    return out;
}

GaussianApprox LaplaceEngine::finish(const Eigen::VectorXd &theta, const SparseMatrix &q, Eigen::VectorXd mode) const {
    const SparseMatrix &a = model_.fit_design;
    const Eigen::VectorXd eta = a * mode + model_.fit_offset;
    GaussianApprox out;
    out.theta = theta;
    out.log_likelihood = log_likelihood(eta);
    if (!std::isfinite(out.log_likelihood)) {
        throw NumericalError("non-finite log-likelihood at the latent mode");
    }
    const Eigen::VectorXd c = curvature(eta);
    const SparseMatrix qstar = q + ctc_ + SparseMatrix(a.transpose() * c.asDiagonal()) * a;
    out.chol = SparseCholesky(qstar, ordering_);
    double log_laplace = out.log_likelihood - 0.5 * mode.dot(q.selfadjointView<Eigen::Lower>() * mode) -
                         0.5 * out.chol.log_determinant() + model_.log_hyper_prior(theta);
    out.constraints = model_.constraints;
    if (model_.constraints.rows() > 0) {
        out.kriging_w = out.chol.solve(Eigen::MatrixXd(model_.constraints.transpose()));
        out.kriging_s.compute(model_.constraints * out.kriging_w);
        if (out.kriging_s.info() != Eigen::Success) {
            throw NumericalError("constraint covariance is not positive definite");
        }
        log_laplace -= 0.5 * log_det_spd(out.kriging_s);
    }
    log_laplace += 0.5 * prior_log_determinant(theta, q);
    out.mode = std::move(mode);
    out.log_laplace = log_laplace;
    return out;
}

NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd &)> &f, const Eigen::VectorXd &start,
                             double step, double tolerance, int max_evaluations) {
    const auto n = start.size();
    std::vector<Eigen::VectorXd> simplex;
    std::vector<double> values;
    NelderMeadResult res;
    auto eval = [&](const Eigen::VectorXd &x) {
        ++res.evaluations;
        const double v = f(x);
        return std::isfinite(v) ? v : kInf;
    };
    simplex.push_back(start);
    values.push_back(eval(start));
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::VectorXd v = start;
        v(i) += step;
        simplex.push_back(v);
        values.push_back(eval(v));
    }
    std::vector<std::size_t> order(simplex.size());
    while (true) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](auto l, auto r) { return values[l] < values[r]; });
        const std::size_t best = order.front();
        const std::size_t worst = order.back();
        const std::size_t second = order[order.size() - 2];
        double size = 0;
        for (const auto &v : simplex) {
            size = std::max(size, (v - simplex[best]).lpNorm<Eigen::Infinity>());
        }
        if (std::isfinite(values[best]) && values[worst] - values[best] <= tolerance && size < 1e-3) {
            res.converged = true;
            break;
        }
        if (res.evaluations >= max_evaluations) {
            break;
        }
        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
        for (std::size_t i = 0; i < simplex.size(); ++i) {
            if (i != worst) {
                centroid += simplex[i];
            }
        }
        centroid /= static_cast<double>(n);
        const Eigen::VectorXd xr = centroid + (centroid - simplex[worst]);
        const double fr = eval(xr);
        if (fr < values[best]) {
            const Eigen::VectorXd xe = centroid + 2 * (centroid - simplex[worst]);
            const double fe = eval(xe);
            if (fe < fr) {
                simplex[worst] = xe;
                values[worst] = fe;
            } else {
                simplex[worst] = xr;
                values[worst] = fr;
            }
            continue;
        }
        if (fr < values[second]) {
            simplex[worst] = xr;
            values[worst] = fr;
            continue;
        }
        const bool outside = fr < values[worst];
        const Eigen::VectorXd xc =
            outside ? Eigen::VectorXd(centroid + 0.5 * (xr - centroid)) : Eigen::VectorXd(centroid + 0.5 * (simplex[worst] - centroid));
        const double fc = eval(xc);
        if (fc < (outside ? fr : values[worst])) {
            simplex[worst] = xc;
            values[worst] = fc;
            continue;
        }
        for (std::size_t i = 0; i < simplex.size(); ++i) {
            if (i != best) {
                simplex[i] = simplex[best] + 0.5 * (simplex[i] - simplex[best]);
                values[i] = eval(simplex[i]);
            }
        }
    }
    const auto it = std::min_element(values.begin(), values.end());
    res.x = simplex[static_cast<std::size_t>(it - values.begin())];
    res.value = *it;
    return res;
}

std::vector<Eigen::VectorXd> ccd_design(int dimension, double f0) {
    if (dimension < 1) {
        throw DataError("ccd_design: dimension must be positive");
    }
    std::vector<Eigen::VectorXd> pts;
    pts.push_back(Eigen::VectorXd::Zero(dimension));
    const int free = dimension >= 5 ? dimension - 1 : dimension;
    for (int mask = 0; mask < (1 << free); ++mask) {
        Eigen::VectorXd p(dimension);
        double prod = 1;
        for (int i = 0; i < free; ++i) {
            p(i) = (mask >> i) & 1 ? 1.0 : -1.0;
            prod *= p(i);
        }
        if (free < dimension) {
            p(dimension - 1) = prod;
        }
        pts.push_back(f0 * p);
    }
    const double r = f0 * std::sqrt(static_cast<double>(dimension));
    for (int i = 0; i < dimension; ++i) {
        for (double s : {1.0, -1.0}) {
            Eigen::VectorXd p = Eigen::VectorXd::Zero(dimension);
            p(i) = s * r;
            pts.push_back(p);
        }
    }
    return pts;
}

double ccd_design_weight(int dimension, int n_points, double f0) {
    if (!(f0 > 1)) {
        throw ConfigError("CCD scale f0 must exceed 1");
    }
    return std::exp(0.5 * dimension * f0 * f0) / ((n_points - 1) * (f0 * f0 - 1));
}

HyperGrid LaplaceEngine::explore(const HyperOptions &options) const {
    HyperGrid grid;
    const int d = model_.n_hyper;
    // Newton starts from a fixed point during the search so the objective is a
    // function of theta alone; afterwards from the latent mode at the optimum.
    Eigen::VectorXd warm = initial_latent();
    int evaluations = 0;
    auto log_post = [&](const Eigen::VectorXd &theta) -> std::optional<GaussianApprox> {
        ++evaluations;
        try {
            GaussianApprox ga = approximate(theta, &warm);
            if (!std::isfinite(ga.log_laplace)) {
                return std::nullopt;
            }
            return ga;
        } catch (const NumericalError &) {
            return std::nullopt;
        }
    };
    auto neg = [&](const Eigen::VectorXd &theta) {
        auto ga = log_post(theta);
        return ga ? -ga->log_laplace : kInf;
    };

    const NelderMeadResult nm =
        nelder_mead(neg, model_.initial_hyper, options.initial_step, options.mode_tolerance, options.max_evaluations);
    if (!nm.converged || !std::isfinite(nm.value)) {
        throw NumericalError("hyperparameter optimizer did not converge within " +
                             std::to_string(options.max_evaluations) + " evaluations");
    }
    grid.mode = nm.x;
    auto center = log_post(grid.mode);
    if (!center) {
        throw NumericalError("Laplace approximation failed at the hyperparameter mode");
    }
    grid.mode_log_density = center->log_laplace;
    warm = center->mode;

    const double h = options.hessian_step;
    const double f0 = -grid.mode_log_density;
    auto at = [&](const Eigen::VectorXd &delta) {
        Eigen::VectorXd t = grid.mode + delta;
        auto ga = log_post(t);
        if (!ga) {
            throw NumericalError("Laplace approximation failed next to the hyperparameter mode");
        }
        return -ga->log_laplace;
    };
    Eigen::MatrixXd hess(d, d);
    for (int i = 0; i < d; ++i) {
        Eigen::VectorXd ei = Eigen::VectorXd::Zero(d);
        ei(i) = h;
        hess(i, i) = (at(ei) - 2 * f0 + at(-ei)) / (h * h);
        for (int j = 0; j < i; ++j) {
            Eigen::VectorXd ej = Eigen::VectorXd::Zero(d);
            ej(j) = h;
            const double v = (at(ei + ej) - at(ei - ej) - at(-ei + ej) + at(-ei - ej)) / (4 * h * h);
            hess(i, j) = v;
            hess(j, i) = v;
        }
    }
    grid.hessian = hess;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hess);
    const Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(options.min_curvature);
    const Eigen::MatrixXd scale = eig.eigenvectors() * lam.cwiseSqrt().cwiseInverse().asDiagonal();
    auto theta_of = [&](const Eigen::VectorXd &z) { return Eigen::VectorXd(grid.mode + scale * z); };

    auto add_point = [&](const Eigen::VectorXd &z, double design_weight, std::optional<GaussianApprox> ga) {
        GridPoint p;
        p.z = z;
        p.theta = theta_of(z);
        p.design_weight = design_weight;
        if (ga) {
            p.log_density = ga->log_laplace;
            p.newton_iterations = ga->iterations;
            p.approx = std::move(ga);
        } else {
            p.log_density = -kInf;
        }
        grid.points.push_back(std::move(p));
    };

    IntegrationStrategy strategy = options.strategy;
    if (strategy == IntegrationStrategy::automatic) {
        strategy = d <= 2 ? IntegrationStrategy::grid : IntegrationStrategy::ccd;
    }
    auto eval_z = [&](const Eigen::VectorXd &z) {
        if (z.isZero()) {
            return center;
        }
        return log_post(theta_of(z));
    };
    if (strategy == IntegrationStrategy::grid) {
        if (d > 2) {
            throw ConfigError("grid integration supports at most two hyperparameters");
        }
        grid.strategy = "grid";
        constexpr int kMaxSteps = 40;
        std::vector<int> lo(d), hi(d);
        for (int i = 0; i < d; ++i) {
            for (int sign : {1, -1}) {
                int k = 1;
                for (; k <= kMaxSteps; ++k) {
                    Eigen::VectorXd z = Eigen::VectorXd::Zero(d);
                    z(i) = sign * k * options.grid_step;
                    auto ga = eval_z(z);
                    if (!ga || grid.mode_log_density - ga->log_laplace > options.grid_log_drop) {
                        break;
                    }
                }
                (sign > 0 ? hi : lo)[i] = sign * std::min(k, kMaxSteps);
            }
        }
        const int n0 = hi[0] - lo[0] + 1;
        const int n1 = d == 2 ? hi[1] - lo[1] + 1 : 1;
        for (int a = 0; a < n0; ++a) {
            for (int b = 0; b < n1; ++b) {
                Eigen::VectorXd z(d);
                z(0) = (lo[0] + a) * options.grid_step;
                if (d == 2) {
                    z(1) = (lo[1] + b) * options.grid_step;
                }
                auto ga = eval_z(z);
                if (ga && grid.mode_log_density - ga->log_laplace <= options.grid_log_drop) {
                    add_point(z, 1.0, std::move(ga));
                }
            }
        }
    } else {
        grid.strategy = "ccd";
        const auto design = ccd_design(d, options.ccd_f0);
        const double delta = ccd_design_weight(d, static_cast<int>(design.size()), options.ccd_f0);
        for (std::size_t k = 0; k < design.size(); ++k) {
            add_point(design[k], k == 0 ? 1.0 : delta, eval_z(design[k]));
        }
    }

    double top = -kInf;
    for (const auto &p : grid.points) {
        top = std::max(top, p.log_density);
    }
    double total = 0;
    for (auto &p : grid.points) {
        p.weight = std::isfinite(p.log_density) ? p.design_weight * std::exp(p.log_density - top) : 0.0;
        total += p.weight;
    }
    for (auto &p : grid.points) {
        p.weight /= total;
    }
    grid.evaluations = evaluations;
    return grid;
}

HyperGrid LaplaceEngine::rebuild(const std::vector<Eigen::VectorXd> &thetas, const std::vector<double> &weights,
                                 const std::vector<Eigen::VectorXd> &modes) const {
    if (thetas.size() != weights.size() || thetas.size() != modes.size() || thetas.empty()) {
        throw DataError("stored hyperparameter grid is inconsistent");
    }
    HyperGrid grid;
    grid.strategy = "stored";
    double total = 0;
    for (double w : weights) {
        if (!(w >= 0) || !std::isfinite(w)) {
            throw DataError("stored grid weight is negative or non-finite");
        }
        total += w;
    }
    if (!(total > 0)) {
        throw DataError("stored grid weights sum to zero");
    }
    std::size_t best = 0;
    for (std::size_t k = 0; k < thetas.size(); ++k) {
        if (thetas[k].size() != model_.n_hyper) {
            throw DataError("stored hyperparameter point has the wrong dimension");
        }
        GridPoint p;
        p.theta = thetas[k];
        p.weight = weights[k] / total;
        if (p.weight > 0) {
            p.approx = approximate_at(thetas[k], modes[k]);
            p.log_density = p.approx->log_laplace;
        } else {
            p.log_density = -kInf;
        }
        if (weights[k] > weights[best]) {
            best = k;
        }
        grid.points.push_back(std::move(p));
    }
    grid.mode = thetas[best];
    grid.mode_log_density = grid.points[best].log_density;
    return grid;
}

Eigen::MatrixXd LaplaceEngine::sample_latent(const HyperGrid &grid, int n_samples, std::uint64_t seed) const {
    if (n_samples < 1) {
        throw ConfigError("number of samples must be positive");
    }
    std::vector<double> cum;
    double acc = 0;
    for (const auto &p : grid.points) {
        acc += p.approx ? p.weight : 0.0;
        cum.push_back(acc);
    }
    if (!(acc > 0)) {
        throw NumericalError("hyperparameter grid carries no usable weight");
    }
    const auto n = model_.n_latent;
    Eigen::MatrixXd out(n, n_samples);
    for (int m = 0; m < n_samples; ++m) {
        Rng rng(substream_seed(seed, static_cast<std::uint64_t>(m)));
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        std::normal_distribution<double> normal(0.0, 1.0);
        const double u = unif(rng) * acc;
        std::size_t k = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
        k = std::min(k, cum.size() - 1);
        while (!grid.points[k].approx || grid.points[k].weight <= 0) {
            k = k == 0 ? cum.size() - 1 : k - 1;
        }
        const GaussianApprox &ga = *grid.points[k].approx;
        Eigen::VectorXd z(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            z(i) = normal(rng);
        }
        out.col(m) = ga.condition(ga.mode + ga.chol.whiten_inverse(z));
    }
    return out;
}

Eigen::MatrixXd LaplaceEngine::sample_linear_predictor(const HyperGrid &grid, int n_samples,
                                                       std::uint64_t seed) const {
    const Eigen::MatrixXd x = sample_latent(grid, n_samples, seed);
    Eigen::MatrixXd eta = model_.output_design * x;
    eta.colwise() += model_.output_offset;
    return eta;
}

LinearPredictorMoments LaplaceEngine::linear_predictor_moments(const HyperGrid &grid) const {
    const SparseMatrix &a = model_.output_design;
    const auto rows = a.rows();
    const SparseMatrix at = a.transpose();
    const Eigen::MatrixXd at_dense(at);
    LinearPredictorMoments out;
    out.mean = Eigen::VectorXd::Zero(rows);
    Eigen::VectorXd second = Eigen::VectorXd::Zero(rows);
    double total = 0;
    for (const auto &p : grid.points) {
        if (!p.approx || p.weight <= 0) {
            continue;
        }
        const Eigen::VectorXd mean = a * p.approx->mode + model_.output_offset;
        const Eigen::MatrixXd cov_at = p.approx->covariance_times(at_dense);
        Eigen::VectorXd var(rows);
        for (Eigen::Index r = 0; r < rows; ++r) {
            double v = 0;
            for (SparseMatrix::InnerIterator it(at, r); it; ++it) {
                v += it.value() * cov_at(it.row(), r);
            }
            var(r) = v;
        }
        out.mean += p.weight * mean;
        second += p.weight * (var + mean.cwiseProduct(mean));
        total += p.weight;
    }
    out.mean /= total;
    second /= total;
    out.variance = (second - out.mean.cwiseProduct(out.mean)).cwiseMax(0.0);
    return out;
}

} // namespace exmort
