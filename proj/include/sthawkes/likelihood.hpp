#pragma once

#include "sthawkes/fit.hpp"
#include "sthawkes/model.hpp"
#include "sthawkes/optimize.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

namespace sthawkes {

/// Number of cells per axis of the integration grid.
struct GridSpec {
    int nx = 25;
    int ny = 25;
    int nt = 25;

    void validate() const {
        if (nx < 2 || ny < 2 || nt < 2) {
            throw std::invalid_argument("integration grid needs at least 2 cells per axis");
        }
    }
};

struct MleConfig {
    GridSpec grid;
    std::optional<ParameterVector> initial;
    int max_evals = 2000;
    double tolerance = 1e-6;
    /// Fixed background shape; only the scalar mu is estimated.
    std::optional<SeparableShape> background_shape;
};

namespace detail {

// Midpoint-rule mass of the background over the grid.
inline double background_grid_mass(const BackgroundModel& b, const Window& w, const GridSpec& g) {
    if (!b.shape) {
        return b.mu * w.volume();
    }
    const double hx = w.width() / g.nx;
    const double hy = w.height() / g.ny;
    const double ht = w.duration() / g.nt;
    double s_mass = 0.0;
    for (int iy = 0; iy < g.ny; ++iy) {
        for (int ix = 0; ix < g.nx; ++ix) {
            s_mass += eval_field(b.shape->spatial, w.x_min + (ix + 0.5) * hx, w.y_min + (iy + 0.5) * hy);
        }
    }
    double t_mass = 0.0;
    for (int it = 0; it < g.nt; ++it) {
        t_mass += eval_field(b.shape->temporal, w.t_min + (it + 0.5) * ht);
    }
    return b.mu * s_mass * hx * hy * t_mass * ht;
}

// sum over cell-centre times after t_i of g_T(t_c - t_i) * ht
inline double temporal_grid_mass(const TemporalTrigger& g, double ti, const Window& w, int nt) {
    const double ht = w.duration() / nt;
    double s = 0.0;
    for (int it = 0; it < nt; ++it) {
        const double tc = w.t_min + (it + 0.5) * ht;
        if (tc > ti) s += std::exp(log_temporal_density(g, tc - ti));
    }
    return s * ht;
}

// sum over cell-centre locations of g_S(s_c - s_i) * hx * hy
inline double spatial_grid_mass(const SpatialTrigger& g, double xi, double yi, const Window& w, int nx, int ny) {
    const double hx = w.width() / nx;
    const double hy = w.height() / ny;
    const double s = g.param;
    if (g.kind == SpatialKind::Gaussian) {
        // the isotropic Gaussian factorizes into x and y sums
        const double norm = 1.0 / (s * std::sqrt(2.0 * std::numbers::pi));
        double sx = 0.0;
        for (int ix = 0; ix < nx; ++ix) {
            const double d = w.x_min + (ix + 0.5) * hx - xi;
            sx += std::exp(-d * d / (2.0 * s * s));
        }
        double sy = 0.0;
        for (int iy = 0; iy < ny; ++iy) {
            const double d = w.y_min + (iy + 0.5) * hy - yi;
            sy += std::exp(-d * d / (2.0 * s * s));
        }
        return norm * sx * hx * norm * sy * hy;
    }
    const double cutoff = 50.0 * s;
    double total = 0.0;
    for (int iy = 0; iy < ny; ++iy) {
        const double dy = w.y_min + (iy + 0.5) * hy - yi;
        if (std::abs(dy) > cutoff) continue;
        for (int ix = 0; ix < nx; ++ix) {
            const double dx = w.x_min + (ix + 0.5) * hx - xi;
            const double r = std::hypot(dx, dy);
            if (r > cutoff) continue;
            total += std::exp(-r / s);
        }
    }
    return total * hx * hy / (2.0 * std::numbers::pi * s * s);
}

}  // namespace detail

/// Midpoint-rule approximation of the integrated intensity over the window:
/// sum over cell centres of lambda(s_c, t_c | H_{t_c}) times the cell volume.
/// The separable form of the model lets the sum run per event instead of per
/// (cell, event) pair; the value is the same.
inline double approximate_integral(const HawkesModel& model, const EventSequence& data, const Window& window,
                                   const GridSpec& grid) {
    grid.validate();
    double total = detail::background_grid_mass(model.background, window, grid);
    if (model.k > 0.0) {
        double trig = 0.0;
        for (const auto& e : data.events) {
            const double a_t = detail::temporal_grid_mass(model.temporal, e.t, window, grid.nt);
            if (a_t == 0.0) continue;
            trig += a_t * detail::spatial_grid_mass(model.spatial, e.x, e.y, window, grid.nx, grid.ny);
        }
        total += model.k * trig;
    }
    return total;
}

/// Intensity at every event against its strictly earlier history.
inline std::vector<double> event_intensities(const HawkesModel& model, const EventSequence& data) {
    const TriggerKernel kernel(model);
    std::vector<double> lam(data.size());
    const std::span<const Event> all(data.events);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& e = data.events[i];
        const double mu = eval_background(model.background, e.x, e.y, e.t);
        lam[i] = mu + kernel.excitation(all.first(i), e.x, e.y, e.t, std::max(mu, 1e-300));
    }
    return lam;
}

/// Sum of log lambda over the events; -inf if any intensity is not positive.
inline double sum_log_intensity(const HawkesModel& model, const EventSequence& data) {
    double s = 0.0;
    for (double lam : event_intensities(model, data)) {
        if (!(lam > 0.0)) return -std::numeric_limits<double>::infinity();
        s += std::log(lam);
    }
    return s;
}

inline double log_likelihood(const HawkesModel& model, const EventSequence& data, const Window& window,
                             const GridSpec& grid) {
    require_time_ordered(data);
    const double s = sum_log_intensity(model, data);
    if (!std::isfinite(s)) return s;
    return s - approximate_integral(model, data, window, grid);
}

/// Log-likelihood with every triggering integral replaced by its full-space
/// value k (no edge correction). This is the objective EM ascends.
inline double full_space_log_likelihood(const HawkesModel& model, const EventSequence& data, const Window& window) {
    require_time_ordered(data);
    const double s = sum_log_intensity(model, data);
    if (!std::isfinite(s)) return s;
    return s - model.background.mu * window.volume() - model.k * static_cast<double>(data.size());
}

/// Maximum likelihood by Nelder-Mead on log-parameters.
inline FitResult fit_mle(const EventSequence& data, const Window& window, TriggerKinds kinds, const MleConfig& config) {
    require_enough_events(data);
    require_time_ordered(data);
    window.validate();
    config.grid.validate();
    const auto start = std::chrono::steady_clock::now();

    const ParameterVector init = config.initial.value_or(default_initial(data, window, kinds));
    if (!init.all_positive()) {
        throw std::invalid_argument("initial parameters must be strictly positive");
    }
    auto to_params = [](const std::vector<double>& z) {
        return ParameterVector{std::exp(z[0]), std::exp(z[1]), std::exp(z[2]), std::exp(z[3])};
    };
    auto objective = [&](const std::vector<double>& z) {
        ParameterVector p = to_params(z);
        if (kinds.temporal == TemporalKind::PowerLaw && !(p.temporal > 1.0)) {
            return std::numeric_limits<double>::infinity();
        }
        const auto model = make_model(p, kinds, config.background_shape);
        return -log_likelihood(model, data, window, config.grid);
    };
    const auto a = init.as_array();
    NelderMeadOptions opt;
    opt.max_evals = config.max_evals;
    opt.f_tol = config.tolerance;
    const auto nm = nelder_mead(objective, {std::log(a[0]), std::log(a[1]), std::log(a[2]), std::log(a[3])}, opt);

    FitResult out;
    out.method = "mle";
    out.estimate = to_params(nm.x);
    out.objective = -nm.f;
    out.iterations = nm.iterations;
    out.evaluations = nm.evaluations;
    out.converged = nm.converged;
    if (!nm.converged) out.warnings.push_back("simplex did not converge within max_evals");
    if (out.estimate.k >= 1.0) out.warnings.push_back("estimated k >= 1 (supercritical)");
    const double ht = window.duration() / config.grid.nt;
    const double hs = std::min(window.width() / config.grid.nx, window.height() / config.grid.ny);
    const double t_scale = kinds.temporal == TemporalKind::Exponential ? 1.0 / out.estimate.temporal
                                                                      : 1.0 / (out.estimate.temporal - 1.0);
    if (t_scale < ht / 50.0 || out.estimate.spatial < hs / 50.0) {
        out.warnings.push_back("fitted trigger is far narrower than the integration grid; the estimate is unreliable");
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

}  // namespace sthawkes
