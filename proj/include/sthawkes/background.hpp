#pragma once

#include "sthawkes/field.hpp"
#include "sthawkes/model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace sthawkes {

inline constexpr std::size_t kMinEventsForKde = 5;
inline constexpr std::size_t kDefaultTemporalNodes = 512;
inline constexpr std::size_t kDefaultSpatialNodes = 128;

namespace detail {

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double sample_sd(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// Linear-interpolated empirical quantile.
inline double quantile(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    const double pos = p * static_cast<double>(v.size() - 1);
    const auto i = static_cast<std::size_t>(std::floor(pos));
    if (i + 1 >= v.size()) return v.back();
    return v[i] + (pos - static_cast<double>(i)) * (v[i + 1] - v[i]);
}

}  // namespace detail

/// Silverman's rule of thumb: 0.9 min(sd, IQR/1.34) n^(-1/5).
inline double silverman_bandwidth(std::span<const double> v) {
    if (v.size() < 2) throw std::invalid_argument("bandwidth needs at least two values");
    const double sd = detail::sample_sd(v);
    if (!(sd > 0.0)) throw std::invalid_argument("all values identical; kernel density is degenerate");
    std::vector<double> copy(v.begin(), v.end());
    const double iqr = detail::quantile(copy, 0.75) - detail::quantile(copy, 0.25);
    const double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
    return 0.9 * spread * std::pow(static_cast<double>(v.size()), -0.2);
}

/// Gaussian KDE of event times on `nodes` nodes over [t_min, t_max], with
/// reflection at both ends, rescaled to mean one.
inline TemporalField estimate_temporal_background(std::span<const double> times, double t_min, double t_max,
                                                  std::size_t nodes = kDefaultTemporalNodes,
                                                  std::optional<double> bandwidth = std::nullopt) {
    if (times.size() < kMinEventsForKde) {
        throw std::invalid_argument("temporal background needs at least 5 events");
    }
    if (!(t_min < t_max) || nodes < 2) {
        throw std::invalid_argument("temporal background needs a non-empty domain and at least two nodes");
    }
    for (double t : times) {
        if (!(t >= t_min && t <= t_max)) throw std::invalid_argument("event time outside the window");
    }
    if (std::all_of(times.begin(), times.end(), [&](double t) { return t == times[0]; })) {
        throw std::invalid_argument("all event times identical; kernel density is degenerate");
    }
    const double h = bandwidth ? *bandwidth : silverman_bandwidth(times);
    if (!(h > 0.0) || !std::isfinite(h)) throw std::invalid_argument("bandwidth must be positive");

    TemporalField f;
    f.t_min = t_min;
    f.t_max = t_max;
    f.bandwidth = h;
    f.values.assign(nodes, 0.0);
    const double cutoff = 8.0 * h;
    for (std::size_t g = 0; g < nodes; ++g) {
        const double t = f.node(g);
        double s = 0.0;
        for (double ti : times) {
            for (double c : {ti, 2.0 * t_min - ti, 2.0 * t_max - ti}) {
                const double d = t - c;
                if (std::abs(d) < cutoff) s += detail::normal_pdf(d / h);
            }
        }
        f.values[g] = s;
    }
    normalize_mean_one(f);
    return f;
}

inline TemporalField estimate_temporal_background(const EventSequence& data, const Window& w,
                                                  std::size_t nodes = kDefaultTemporalNodes,
                                                  std::optional<double> bandwidth = std::nullopt) {
    std::vector<double> t;
    t.reserve(data.size());
    for (const auto& e : data.events) t.push_back(e.t);
    return estimate_temporal_background(t, w.t_min, w.t_max, nodes, bandwidth);
}

/// Least-squares cross-validation score of the edge-corrected estimator,
/// evaluated on linearly binned data so each candidate bandwidth costs two
/// grid-sized matrix products.
class LscvScore {
public:
    LscvScore(std::span<const double> xs, std::span<const double> ys, const Window& w, std::size_t grid = 192)
        : w_(w), m_(static_cast<Eigen::Index>(grid)), n_(xs.size()) {
        if (xs.size() != ys.size() || xs.size() < 2 || grid < 8) {
            throw std::invalid_argument("LSCV needs at least two points and eight grid nodes");
        }
        dx_ = w.width() / static_cast<double>(grid - 1);
        dy_ = w.height() / static_cast<double>(grid - 1);
        counts_ = Eigen::MatrixXd::Zero(m_, m_);
        bins_.reserve(n_);
        for (std::size_t i = 0; i < n_; ++i) {
            const Bin bx = bin(xs[i], w.x_min, dx_);
            const Bin by = bin(ys[i], w.y_min, dy_);
            counts_(by.index, bx.index) += (1.0 - by.frac) * (1.0 - bx.frac);
            counts_(by.index, bx.index + 1) += (1.0 - by.frac) * bx.frac;
            counts_(by.index + 1, bx.index) += by.frac * (1.0 - bx.frac);
            counts_(by.index + 1, bx.index + 1) += by.frac * bx.frac;
            bins_.push_back({bx, by});
        }
    }

    double spacing() const { return std::max(dx_, dy_); }

    /// integral over S of fhat^2 - (2/n) sum_i fhat_{-i}(s_i), where fhat
    /// divides the Gaussian kernel sum by its mass inside S at the evaluation point.
    double operator()(double h) const {
        const double n = static_cast<double>(n_);
        const Eigen::MatrixXd kx = toeplitz(dx_, h);
        const Eigen::MatrixXd ky = toeplitz(dy_, h);
        const Eigen::VectorXd cx = coverage(w_.x_min, w_.x_max, dx_, h);
        const Eigen::VectorXd cy = coverage(w_.y_min, w_.y_max, dy_, h);
        // kernel sums at nodes, in units of 1/h^2
        const Eigen::MatrixXd sums = ky * counts_ * kx.transpose();
        double integral = 0.0;
        double loo = 0.0;
        for (Eigen::Index iy = 0; iy < m_; ++iy) {
            const double wy = (iy == 0 || iy + 1 == m_) ? 0.5 : 1.0;
            for (Eigen::Index ix = 0; ix < m_; ++ix) {
                const double wx = (ix == 0 || ix + 1 == m_) ? 0.5 : 1.0;
                const double c = cx(ix) * cy(iy);
                const double f = sums(iy, ix) / (n * h * h * c);
                integral += wx * wy * f * f;
                loo += counts_(iy, ix) * sums(iy, ix) / c;
            }
        }
        integral *= dx_ * dy_;
        // remove each point's pairing with itself under the same binning
        for (const auto& [bx, by] : bins_) {
            const double wxs[2] = {1.0 - bx.frac, bx.frac};
            const double wys[2] = {1.0 - by.frac, by.frac};
            for (int a = 0; a < 2; ++a) {
                for (int b = 0; b < 2; ++b) {
                    double inner = 0.0;
                    for (int a2 = 0; a2 < 2; ++a2) {
                        for (int b2 = 0; b2 < 2; ++b2) {
                            inner += wys[a2] * wxs[b2] * ky(by.index + a, by.index + a2) * kx(bx.index + b, bx.index + b2);
                        }
                    }
                    loo -= wys[a] * wxs[b] * inner / (cy(by.index + a) * cx(bx.index + b));
                }
            }
        }
        loo /= h * h;
        return integral - 2.0 * loo / (n * (n - 1.0));
    }

private:
    struct Bin {
        Eigen::Index index;
        double frac;
    };

    Bin bin(double u, double lo, double step) const {
        const double pos = std::clamp((u - lo) / step, 0.0, static_cast<double>(m_ - 1));
        auto i = static_cast<Eigen::Index>(std::floor(pos));
        if (i >= m_ - 1) i = m_ - 2;
        return {i, pos - static_cast<double>(i)};
    }

    Eigen::MatrixXd toeplitz(double step, double h) const {
        Eigen::VectorXd k(m_);
        for (Eigen::Index d = 0; d < m_; ++d) k(d) = detail::normal_pdf(static_cast<double>(d) * step / h);
        Eigen::MatrixXd t(m_, m_);
        for (Eigen::Index a = 0; a < m_; ++a)
            for (Eigen::Index b = 0; b < m_; ++b) t(a, b) = k(std::abs(a - b));
        return t;
    }

    Eigen::VectorXd coverage(double lo, double hi, double step, double h) const {
        Eigen::VectorXd c(m_);
        for (Eigen::Index a = 0; a < m_; ++a) {
            const double u = lo + step * static_cast<double>(a);
            c(a) = detail::normal_cdf((hi - u) / h) - detail::normal_cdf((lo - u) / h);
        }
        return c;
    }

    Window w_;
    Eigen::Index m_;
    std::size_t n_;
    double dx_ = 0.0;
    double dy_ = 0.0;
    Eigen::MatrixXd counts_;
    std::vector<std::pair<Bin, Bin>> bins_;
};

/// Least-squares cross-validated bandwidth over 41 log-spaced candidates from
/// 0.05 (or two bin widths) to 2 times the normal-reference bandwidth.
inline double lscv_bandwidth(std::span<const double> xs, std::span<const double> ys, const Window& w) {
    if (xs.size() < kMinEventsForKde) {
        throw std::invalid_argument("spatial background needs at least 5 events");
    }
    const double sx = detail::sample_sd(xs);
    const double sy = detail::sample_sd(ys);
    if (!(sx > 0.0) && !(sy > 0.0)) {
        throw std::invalid_argument("all points identical; kernel density is degenerate");
    }
    const double ref = std::sqrt(0.5 * (sx * sx + sy * sy)) * std::pow(static_cast<double>(xs.size()), -1.0 / 6.0);
    const LscvScore score(xs, ys, w);
    const int candidates = 41;
    const double lo = std::log(std::max(0.05 * ref, 2.0 * score.spacing()));
    const double hi = std::log(std::max(2.0 * ref, 4.0 * score.spacing()));
    double best_h = ref;
    double best = std::numeric_limits<double>::infinity();
    for (int c = 0; c < candidates; ++c) {
        const double h = std::exp(lo + (hi - lo) * c / (candidates - 1));
        const double v = score(h);
        if (v < best) {
            best = v;
            best_h = h;
        }
    }
    return best_h;
}

/// Gaussian KDE of locations on an nodes-by-nodes grid over the window,
/// divided by the kernel mass inside the window at each node, rescaled to
/// mean one.
inline SpatialField estimate_spatial_background(std::span<const double> xs, std::span<const double> ys, const Window& w,
                                                std::size_t nodes = kDefaultSpatialNodes,
                                                std::optional<double> bandwidth = std::nullopt) {
    if (xs.size() != ys.size()) throw std::invalid_argument("coordinate arrays differ in length");
    if (xs.size() < kMinEventsForKde) {
        throw std::invalid_argument("spatial background needs at least 5 events");
    }
    if (nodes < 2) throw std::invalid_argument("spatial background needs at least two nodes per axis");
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!w.contains_space(xs[i], ys[i])) throw std::invalid_argument("event location outside the window");
    }
    bool distinct = false;
    for (std::size_t i = 1; i < xs.size() && !distinct; ++i) distinct = xs[i] != xs[0] || ys[i] != ys[0];
    if (!distinct) throw std::invalid_argument("all event locations identical; kernel density is degenerate");
    const double h = bandwidth ? *bandwidth : lscv_bandwidth(xs, ys, w);
    if (!(h > 0.0) || !std::isfinite(h)) throw std::invalid_argument("bandwidth must be positive");

    SpatialField f;
    f.x_min = w.x_min;
    f.x_max = w.x_max;
    f.y_min = w.y_min;
    f.y_max = w.y_max;
    f.nx = nodes;
    f.ny = nodes;
    f.bandwidth = h;

    const auto n = static_cast<Eigen::Index>(xs.size());
    const auto g = static_cast<Eigen::Index>(nodes);
    Eigen::MatrixXd kx(g, n);
    Eigen::MatrixXd ky(g, n);
    Eigen::VectorXd cx(g);
    Eigen::VectorXd cy(g);
    for (Eigen::Index a = 0; a < g; ++a) {
        const double x = f.x_min + f.dx() * static_cast<double>(a);
        const double y = f.y_min + f.dy() * static_cast<double>(a);
        for (Eigen::Index i = 0; i < n; ++i) {
            kx(a, i) = detail::normal_pdf((x - xs[static_cast<std::size_t>(i)]) / h);
            ky(a, i) = detail::normal_pdf((y - ys[static_cast<std::size_t>(i)]) / h);
        }
        cx(a) = detail::normal_cdf((w.x_max - x) / h) - detail::normal_cdf((w.x_min - x) / h);
        cy(a) = detail::normal_cdf((w.y_max - y) / h) - detail::normal_cdf((w.y_min - y) / h);
    }
    // rows indexed by y node, columns by x node
    const Eigen::MatrixXd dens = ky * kx.transpose();
    f.values.resize(nodes * nodes);
    for (Eigen::Index iy = 0; iy < g; ++iy) {
        for (Eigen::Index ix = 0; ix < g; ++ix) {
            f.at(static_cast<std::size_t>(ix), static_cast<std::size_t>(iy)) = dens(iy, ix) / (cx(ix) * cy(iy));
        }
    }
    normalize_mean_one(f);
    return f;
}

inline SpatialField estimate_spatial_background(const EventSequence& data, const Window& w,
                                                std::size_t nodes = kDefaultSpatialNodes,
                                                std::optional<double> bandwidth = std::nullopt) {
    std::vector<double> xs;
    std::vector<double> ys;
    xs.reserve(data.size());
    ys.reserve(data.size());
    for (const auto& e : data.events) {
        xs.push_back(e.x);
        ys.push_back(e.y);
    }
    return estimate_spatial_background(xs, ys, w, nodes, bandwidth);
}

/// Both components from all observed events.
inline SeparableShape estimate_background(const EventSequence& data, const Window& w,
                                          std::size_t spatial_nodes = kDefaultSpatialNodes,
                                          std::size_t temporal_nodes = kDefaultTemporalNodes) {
    return {estimate_temporal_background(data, w, temporal_nodes), estimate_spatial_background(data, w, spatial_nodes)};
}

}  // namespace sthawkes
