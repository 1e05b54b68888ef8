#pragma once

#include "sthawkes/fit.hpp"
#include "sthawkes/likelihood.hpp"
#include "sthawkes/model.hpp"
#include "sthawkes/optimize.hpp"
#include "sthawkes/random.hpp"

#include <Eigen/Dense>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sthawkes {

/// Geometric temporal bins after each event: t_i, t_i + dt, t_i + dt(1+g), ...
struct TemporalBinning {
    double delta_t = 0.5;
    double growth = 1.0;
    int n_max = 10;

    void validate() const {
        if (!(delta_t > 0.0) || !(growth > 0.0) || n_max < 1) {
            throw std::invalid_argument("temporal binning needs delta_t > 0, growth > 0, n_max >= 1");
        }
    }
};

/// Concentric circles of radius delta_s (1+growth)^i, i < n_circles, around
/// each event; the last band reaches to infinity.
struct SpatialBanding {
    double delta_s = 0.05;
    double growth = 0.5;
    int n_circles = 10;
    int mc_points = 10000;
    std::uint64_t seed = 20240607;

    void validate() const {
        if (!(delta_s > 0.0) || !(growth > 0.0) || n_circles < 1) {
            throw std::invalid_argument("spatial banding needs delta_s > 0, growth > 0, n_circles >= 1");
        }
        if (mc_points < 1000) {
            throw std::invalid_argument("band weights need at least 1000 Monte Carlo points");
        }
    }
};

struct LogNormalPrior {
    double location = 0.0;  // mean of log(theta)
    double scale = 1.0;     // sd of log(theta)

    double log_density(double theta) const {
        if (!(theta > 0.0)) return -std::numeric_limits<double>::infinity();
        const double z = (std::log(theta) - location) / scale;
        return -std::log(theta) - std::log(scale * std::sqrt(2.0 * std::numbers::pi)) - 0.5 * z * z;
    }
};

/// Independent log-normal priors on (mu, k, temporal, spatial).
struct PriorSpec {
    std::array<LogNormalPrior, 4> priors;

    void validate() const {
        for (const auto& p : priors) {
            if (!(p.scale > 0.0) || !std::isfinite(p.location)) {
                throw std::invalid_argument("log-normal prior scale must be positive");
            }
        }
    }
    double log_density(const ParameterVector& p) const {
        const auto a = p.as_array();
        double s = 0.0;
        for (std::size_t i = 0; i < 4; ++i) s += priors[i].log_density(a[i]);
        return s;
    }
    /// Weakly informative default: centred on the log of `initial`, scale 1.
    static PriorSpec centred_on(const ParameterVector& initial, double scale = 1.0) {
        PriorSpec s;
        const auto a = initial.as_array();
        for (std::size_t i = 0; i < 4; ++i) s.priors[i] = {std::log(a[i]), scale};
        return s;
    }
};

/// Boundaries t_i, t_i + dt (1+g)^n ..., clipped below t2, then t2.
inline std::vector<double> build_temporal_bins(double ti, double t2, const TemporalBinning& b) {
    b.validate();
    if (!(ti < t2)) {
        throw std::invalid_argument("event time must precede the end of the window");
    }
    std::vector<double> out{ti};
    double width = b.delta_t;
    for (int n = 0; n <= b.n_max; ++n) {
        const double edge = ti + width;
        if (!(edge < t2)) break;
        if (edge > out.back()) out.push_back(edge);
        width *= 1.0 + b.growth;
    }
    if (t2 > out.back()) out.push_back(t2);
    return out;
}

/// Circle radii delta_s (1+growth)^i for i = 0 .. n_circles-1.
inline std::vector<double> build_spatial_bands(const SpatialBanding& b) {
    b.validate();
    std::vector<double> radii(static_cast<std::size_t>(b.n_circles));
    double r = b.delta_s;
    for (auto& v : radii) {
        v = r;
        r *= 1.0 + b.growth;
    }
    return radii;
}

/// Fraction of each band lying inside the window's spatial extent. Band 0 is
/// the disc of radius radii[0]; band p is the annulus (radii[p-1], radii[p]);
/// the final band is everything beyond radii.back(), sampled up to the
/// farthest window corner. Bands wholly inside or outside get exactly 1 or 0.
inline std::vector<double> band_weights(double cx, double cy, const std::vector<double>& radii, const Window& w,
                                        int mc_points, std::uint64_t seed) {
    if (!w.contains_space(cx, cy)) {
        throw std::invalid_argument("band centre must lie inside the window");
    }
    if (mc_points < 1) {
        throw std::invalid_argument("mc_points must be positive");
    }
    const double inner_reach = std::min({cx - w.x_min, w.x_max - cx, cy - w.y_min, w.y_max - cy});
    const double far_x = std::max(cx - w.x_min, w.x_max - cx);
    const double far_y = std::max(cy - w.y_min, w.y_max - cy);
    const double outer_reach = std::hypot(far_x, far_y);

    Rng rng(seed);
    std::vector<double> weights(radii.size() + 1, 0.0);
    for (std::size_t p = 0; p <= radii.size(); ++p) {
        const double r_in = p == 0 ? 0.0 : radii[p - 1];
        const double r_out = p < radii.size() ? radii[p] : outer_reach;
        if (r_out <= inner_reach) {
            weights[p] = 1.0;
            continue;
        }
        if (r_in >= outer_reach) {
            weights[p] = 0.0;
            continue;
        }
        const double a2 = r_in * r_in;
        const double b2 = r_out * r_out;
        int inside = 0;
        for (int i = 0; i < mc_points; ++i) {
            const double r = std::sqrt(a2 + (b2 - a2) * uniform(rng, 0.0, 1.0));
            const double th = uniform(rng, 0.0, 2.0 * std::numbers::pi);
            inside += w.contains_space(cx + r * std::cos(th), cy + r * std::sin(th));
        }
        weights[p] = static_cast<double>(inside) / mc_points;
    }
    return weights;
}

// Tail probabilities; differences of these keep far bins and bands accurate
// where 1 - cdf would cancel to zero.
inline double temporal_survival(const TemporalTrigger& g, double dt) {
    if (dt <= 0.0) return 1.0;
    if (g.kind == TemporalKind::Exponential) return std::exp(-g.param * dt);
    return std::exp((1.0 - g.param) * std::log1p(dt));
}

inline double spatial_radial_survival(const SpatialTrigger& g, double r) {
    if (r <= 0.0) return 1.0;
    if (g.kind == SpatialKind::Gaussian) return std::exp(-r * r / (2.0 * g.param * g.param));
    const double z = r / g.param;
    return (1.0 + z) * std::exp(-z);
}

/// Probability mass of the temporal density between consecutive bin edges.
inline std::vector<double> temporal_bin_masses(const TemporalTrigger& g, double ti, const std::vector<double>& bins) {
    std::vector<double> m(bins.size() - 1);
    for (std::size_t j = 0; j + 1 < bins.size(); ++j) {
        m[j] = temporal_survival(g, bins[j] - ti) - temporal_survival(g, bins[j + 1] - ti);
    }
    return m;
}

/// Radial mass of the spatial density in each band (disc, annuli, remainder).
inline std::vector<double> spatial_band_masses(const SpatialTrigger& g, const std::vector<double>& radii) {
    std::vector<double> m(radii.size() + 1);
    double prev = 1.0;
    for (std::size_t p = 0; p < radii.size(); ++p) {
        const double s = spatial_radial_survival(g, radii[p]);
        m[p] = prev - s;
        prev = s;
    }
    m.back() = prev;
    return m;
}

/// k * sum_j sum_p [temporal mass of bin j] [spatial mass of band p] w_p.
inline double binned_trigger_mass(const ParameterVector& params, TriggerKinds kinds, const Event& e,
                                  const std::vector<double>& bins, const std::vector<double>& radii,
                                  const std::vector<double>& weights) {
    if (weights.size() != radii.size() + 1) {
        throw std::invalid_argument("one weight per band is required");
    }
    if (params.k == 0.0) return 0.0;
    const auto tm = temporal_bin_masses({kinds.temporal, params.temporal}, e.t, bins);
    const auto sm = spatial_band_masses({kinds.spatial, params.spatial}, radii);
    double total = 0.0;
    for (double t : tm) {
        for (std::size_t p = 0; p < sm.size(); ++p) total += t * sm[p] * weights[p];
    }
    return params.k * total;
}

/// log(k * temporal mass of bin j * spatial mass of band p * w_p): one term of
/// the binned decomposition, the unit the linearization acts on.
inline double log_bin_band_term(const ParameterVector& params, TriggerKinds kinds, const Event& e,
                                const std::vector<double>& bins, std::size_t j, const std::vector<double>& radii,
                                std::size_t p, double weight) {
    const TemporalTrigger gt{kinds.temporal, params.temporal};
    const SpatialTrigger gs{kinds.spatial, params.spatial};
    const double tmass = temporal_survival(gt, bins.at(j) - e.t) - temporal_survival(gt, bins.at(j + 1) - e.t);
    const double inner = p == 0 ? 1.0 : spatial_radial_survival(gs, radii.at(p - 1));
    const double outer = p < radii.size() ? spatial_radial_survival(gs, radii[p]) : 0.0;
    return std::log(params.k) + std::log(tmass) + std::log(inner - outer) + std::log(weight);
}

/// Parameter-independent part of the binned likelihood: bins and band weights
/// per event, computed once and reused across evaluations.
struct BinnedDesign {
    std::vector<std::vector<double>> bins;
    std::vector<double> radii;
    std::vector<std::vector<double>> weights;
};

inline BinnedDesign build_design(const EventSequence& data, const Window& window, const TemporalBinning& binning,
                                 const SpatialBanding& banding) {
    binning.validate();
    banding.validate();
    BinnedDesign d;
    d.radii = build_spatial_bands(banding);
    d.bins.reserve(data.size());
    d.weights.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& e = data.events[i];
        if (e.t < window.t_max) {
            d.bins.push_back(build_temporal_bins(e.t, window.t_max, binning));
        } else {
            d.bins.push_back({e.t});
        }
        d.weights.push_back(band_weights(e.x, e.y, d.radii, window, banding.mc_points, derive_seed(banding.seed, i)));
    }
    return d;
}

/// -Lambda_0 - sum_i Lambda_i + sum_i log lambda_i using a prebuilt design.
inline double binned_log_likelihood(const ParameterVector& params, TriggerKinds kinds, const EventSequence& data,
                                    const Window& window, const BinnedDesign& design,
                                    const std::optional<SeparableShape>& shape = std::nullopt) {
    require_time_ordered(data);
    if (design.bins.size() != data.size()) {
        throw std::invalid_argument("binned design does not match the data");
    }
    const auto model = make_model(params, kinds, shape);
    const double s = sum_log_intensity(model, data);
    if (!std::isfinite(s)) return s;
    double lambda = params.mu * window.volume();
    if (params.k > 0.0) {
        const auto sm = spatial_band_masses(model.spatial, design.radii);
        double trig = 0.0;
        for (std::size_t i = 0; i < data.size(); ++i) {
            const auto& bins = design.bins[i];
            if (bins.size() < 2) continue;
            double t_total = 0.0;
            for (double t : temporal_bin_masses(model.temporal, data.events[i].t, bins)) t_total += t;
            double s_total = 0.0;
            for (std::size_t p = 0; p < sm.size(); ++p) s_total += sm[p] * design.weights[i][p];
            trig += t_total * s_total;
        }
        lambda += params.k * trig;
    }
    return s - lambda;
}

inline double binned_log_likelihood(const ParameterVector& params, TriggerKinds kinds, const EventSequence& data,
                                    const Window& window, const TemporalBinning& binning,
                                    const SpatialBanding& banding, const std::optional<PriorSpec>& prior = std::nullopt,
                                    const std::optional<SeparableShape>& shape = std::nullopt) {
    const auto design = build_design(data, window, binning, banding);
    double v = binned_log_likelihood(params, kinds, data, window, design, shape);
    if (prior) v += prior->log_density(params);
    return v;
}

/// Affine approximation f(theta*) + grad . (theta - theta*).
struct Linearization {
    std::array<double, 4> point{};
    double intercept = 0.0;
    std::array<double, 4> gradient{};

    double operator()(const std::array<double, 4>& theta) const {
        double v = intercept;
        for (std::size_t i = 0; i < 4; ++i) v += gradient[i] * (theta[i] - point[i]);
        return v;
    }
};

/// Linearizes f at theta* with central differences (relative step 1e-5).
inline Linearization linearize(const std::function<double(const std::array<double, 4>&)>& f,
                               const std::array<double, 4>& theta_star, double rel_step = 1e-5) {
    Linearization out;
    out.point = theta_star;
    out.intercept = f(theta_star);
    if (!std::isfinite(out.intercept)) {
        throw std::domain_error("function is not finite at the linearization point");
    }
    for (std::size_t i = 0; i < 4; ++i) {
        const double h = rel_step * std::max(std::abs(theta_star[i]), 1.0e-8);
        auto up = theta_star;
        auto dn = theta_star;
        up[i] += h;
        dn[i] -= h;
        out.gradient[i] = (f(up) - f(dn)) / (2.0 * h);
    }
    return out;
}

struct McmcStep {
    std::array<double, 4> proposal{};  // log-parameters
    double u = 0.0;
    double log_post_current = 0.0;
    double log_post_proposal = 0.0;
    bool accepted = false;
};

struct BayesConfig {
    TemporalBinning binning;
    SpatialBanding banding;
    std::optional<PriorSpec> priors;  // default: centred on the initial values, scale 1
    std::optional<ParameterVector> initial;
    int max_evals = 3000;
    double tolerance = 1e-7;
    bool mcmc = false;
    int draws = 5000;
    int burn_in = 1000;
    std::uint64_t mcmc_seed = 1;
    bool keep_mcmc_log = false;
    std::optional<SeparableShape> background_shape;

    void validate() const {
        binning.validate();
        banding.validate();
        if (priors) priors->validate();
        if (mcmc && (draws < 1 || burn_in < 0)) {
            throw std::invalid_argument("MCMC needs draws >= 1 and burn_in >= 0");
        }
    }
};

struct PosteriorSummary {
    ParameterVector mode;
    std::array<std::array<double, 4>, 4> covariance{};  // log-parameter coordinates
    ParameterVector mean;
    ParameterVector sd;
    std::vector<ParameterVector> samples;
    std::vector<McmcStep> mcmc_log;
    double acceptance_rate = 0.0;
    double log_posterior = 0.0;
    bool hessian_regularized = false;
    bool converged = false;
    int evaluations = 0;
    double seconds = 0.0;
    std::vector<std::string> warnings;
};

namespace detail {

inline ParameterVector from_log(const std::array<double, 4>& z) {
    return {std::exp(z[0]), std::exp(z[1]), std::exp(z[2]), std::exp(z[3])};
}

// Hessian of f at x by central differences with step h.
template <typename F>
Eigen::Matrix4d numeric_hessian(F&& f, const std::array<double, 4>& x, double h) {
    Eigen::Matrix4d hess;
    const double f0 = f(x);
    for (int i = 0; i < 4; ++i) {
        for (int j = i; j < 4; ++j) {
            auto eval = [&](double di, double dj) {
                auto y = x;
                y[static_cast<std::size_t>(i)] += di;
                y[static_cast<std::size_t>(j)] += dj;
                return f(y);
            };
            double v;
            if (i == j) {
                v = (eval(h, 0) - 2.0 * f0 + eval(-h, 0)) / (h * h);
            } else {
                v = (eval(h, h) - eval(h, -h) - eval(-h, h) + eval(-h, -h)) / (4.0 * h * h);
            }
            hess(i, j) = v;
            hess(j, i) = v;
        }
    }
    return hess;
}

}  // namespace detail

/// Random-walk Metropolis on log-parameters. `log_post` is the log target in
/// log-parameter coordinates; `chol` is the lower Cholesky factor of the
/// proposal covariance.
inline std::vector<std::array<double, 4>> metropolis(const std::function<double(const std::array<double, 4>&)>& log_post,
                                                     const std::array<double, 4>& start, const Eigen::Matrix4d& chol,
                                                     int draws, int burn_in, std::uint64_t seed,
                                                     std::vector<McmcStep>* log = nullptr, double* acceptance = nullptr) {
    Rng rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    std::array<double, 4> cur = start;
    double lp_cur = log_post(cur);
    std::vector<std::array<double, 4>> kept;
    kept.reserve(static_cast<std::size_t>(draws));
    int accepted = 0;
    const int total = draws + burn_in;
    for (int it = 0; it < total; ++it) {
        Eigen::Vector4d e;
        for (int d = 0; d < 4; ++d) e(d) = z(rng);
        const Eigen::Vector4d step = chol * e;
        std::array<double, 4> prop;
        for (std::size_t d = 0; d < 4; ++d) prop[d] = cur[d] + step(static_cast<int>(d));
        const double lp_prop = log_post(prop);
        const double u = uniform_open_low(rng);
        const bool ok = std::isfinite(lp_prop) && std::log(u) < lp_prop - lp_cur;
        if (log) log->push_back({prop, u, lp_cur, lp_prop, ok});
        if (ok) {
            cur = prop;
            lp_cur = lp_prop;
            ++accepted;
        }
        if (it >= burn_in) kept.push_back(cur);
    }
    if (acceptance) *acceptance = total > 0 ? static_cast<double>(accepted) / total : 0.0;
    return kept;
}

/// MAP of the binned posterior, Laplace covariance, and optional MCMC.
inline PosteriorSummary fit_bayes(const EventSequence& data, const Window& window, TriggerKinds kinds,
                                  const BayesConfig& config) {
    require_enough_events(data);
    require_time_ordered(data);
    window.validate();
    config.validate();
    const auto start = std::chrono::steady_clock::now();

    const ParameterVector init = config.initial.value_or(default_initial(data, window, kinds));
    if (!init.all_positive()) {
        throw std::invalid_argument("initial parameters must be strictly positive");
    }
    const PriorSpec prior = config.priors.value_or(PriorSpec::centred_on(init));
    const auto design = build_design(data, window, config.binning, config.banding);

    PosteriorSummary out;
    // log posterior density of eta = log(theta), including the Jacobian
    auto log_post = [&](const std::array<double, 4>& z) {
        ++out.evaluations;
        const ParameterVector p = detail::from_log(z);
        if (!p.all_positive()) return -std::numeric_limits<double>::infinity();
        if (kinds.temporal == TemporalKind::PowerLaw && !(p.temporal > 1.0)) {
            return -std::numeric_limits<double>::infinity();
        }
        const double ll = binned_log_likelihood(p, kinds, data, window, design, config.background_shape);
        return ll + prior.log_density(p) + z[0] + z[1] + z[2] + z[3];
    };

    const auto a0 = init.as_array();
    NelderMeadOptions opt;
    opt.max_evals = config.max_evals;
    opt.f_tol = config.tolerance;
    opt.x_tol = 1e-6;
    const auto nm = nelder_mead([&](const std::vector<double>& v) { return -log_post({v[0], v[1], v[2], v[3]}); },
                                {std::log(a0[0]), std::log(a0[1]), std::log(a0[2]), std::log(a0[3])}, opt);
    const std::array<double, 4> eta{nm.x[0], nm.x[1], nm.x[2], nm.x[3]};
    out.mode = detail::from_log(eta);
    out.log_posterior = -nm.f;
    out.converged = nm.converged;
    if (!nm.converged) out.warnings.push_back("posterior mode search did not converge within max_evals");

    Eigen::Matrix4d hess = detail::numeric_hessian([&](const std::array<double, 4>& z) { return -log_post(z); }, eta, 1e-4);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(hess);
    if (eig.info() != Eigen::Success || !hess.allFinite() || eig.eigenvalues().minCoeff() <= 0.0) {
        out.hessian_regularized = true;
        out.warnings.push_back("Hessian at the mode is not positive definite; diagonal regularization applied");
        const double shift = (hess.allFinite() ? std::max(0.0, -eig.eigenvalues().minCoeff()) : 0.0) + 1e-3;
        if (!hess.allFinite()) hess = Eigen::Matrix4d::Identity();
        hess += shift * Eigen::Matrix4d::Identity();
    }
    const Eigen::Matrix4d cov = hess.inverse();
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) out.covariance[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = 0.5 * (cov(i, j) + cov(j, i));

    // log-normal moments of the Laplace Gaussian
    std::array<double, 4> mean{};
    std::array<double, 4> sd{};
    for (std::size_t i = 0; i < 4; ++i) {
        const double v = out.covariance[i][i];
        mean[i] = std::exp(eta[i] + 0.5 * v);
        sd[i] = std::sqrt(std::expm1(v)) * mean[i];
    }

    if (config.mcmc) {
        Eigen::Matrix4d prop = (2.38 * 2.38 / 4.0) * cov;
        prop = 0.5 * (prop + prop.transpose());
        Eigen::LLT<Eigen::Matrix4d> llt(prop);
        const Eigen::Matrix4d chol = llt.info() == Eigen::Success
                                         ? Eigen::Matrix4d(llt.matrixL())
                                         : Eigen::Matrix4d(prop.diagonal().cwiseAbs().cwiseSqrt().asDiagonal());
        const auto chain = metropolis(log_post, eta, chol, config.draws, config.burn_in, config.mcmc_seed,
                                      config.keep_mcmc_log ? &out.mcmc_log : nullptr, &out.acceptance_rate);
        std::array<double, 4> s1{};
        std::array<double, 4> s2{};
        out.samples.reserve(chain.size());
        for (const auto& z : chain) {
            const auto p = detail::from_log(z);
            out.samples.push_back(p);
            const auto a = p.as_array();
            for (std::size_t i = 0; i < 4; ++i) {
                s1[i] += a[i];
                s2[i] += a[i] * a[i];
            }
        }
        const double n = static_cast<double>(chain.size());
        for (std::size_t i = 0; i < 4; ++i) {
            mean[i] = s1[i] / n;
            sd[i] = n > 1 ? std::sqrt(std::max(0.0, (s2[i] - n * mean[i] * mean[i]) / (n - 1))) : 0.0;
        }
    }
    out.mean = ParameterVector::from_array(mean);
    out.sd = ParameterVector::from_array(sd);
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

}  // namespace sthawkes
