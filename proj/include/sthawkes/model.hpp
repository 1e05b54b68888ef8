#pragma once

#include "sthawkes/field.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sthawkes {

/// Rectangular study region [x_min,x_max] x [y_min,y_max] x [t_min,t_max].
struct Window {
    double x_min = 0.0;
    double x_max = 1.0;
    double y_min = 0.0;
    double y_max = 1.0;
    double t_min = 0.0;
    double t_max = 1.0;

    Window() = default;
    Window(double x0, double x1, double y0, double y1, double t0, double t1)
        : x_min(x0), x_max(x1), y_min(y0), y_max(y1), t_min(t0), t_max(t1) {
        validate();
    }

    void validate() const {
        const bool finite = std::isfinite(x_min) && std::isfinite(x_max) && std::isfinite(y_min) &&
                            std::isfinite(y_max) && std::isfinite(t_min) && std::isfinite(t_max);
        if (!finite || !(x_min < x_max) || !(y_min < y_max) || !(t_min >= 0.0) || !(t_min < t_max)) {
            throw std::invalid_argument("window bounds must satisfy x_min<x_max, y_min<y_max, 0<=t_min<t_max");
        }
    }

    double width() const noexcept { return x_max - x_min; }
    double height() const noexcept { return y_max - y_min; }
    double area() const noexcept { return width() * height(); }
    double duration() const noexcept { return t_max - t_min; }
    double volume() const noexcept { return area() * duration(); }

    bool contains_space(double x, double y) const noexcept {
        return x >= x_min && x <= x_max && y >= y_min && y <= y_max;
    }
    bool contains(double x, double y, double t) const noexcept {
        return contains_space(x, y) && t >= t_min && t <= t_max;
    }
};

struct Event {
    double x = 0.0;
    double y = 0.0;
    double t = 0.0;

    friend bool operator==(const Event&, const Event&) = default;
};

inline constexpr std::int64_t kBackgroundLabel = -1;

/// Time-ordered realization. `parents` is either empty or holds one entry per
/// event: the index of the triggering event, or kBackgroundLabel.
struct EventSequence {
    std::vector<Event> events;
    std::vector<std::int64_t> parents;

    std::size_t size() const noexcept { return events.size(); }
    bool empty() const noexcept { return events.empty(); }
    const Event& operator[](std::size_t i) const { return events[i]; }

    bool is_time_ordered() const {
        return std::is_sorted(events.begin(), events.end(),
                              [](const Event& a, const Event& b) { return a.t < b.t; });
    }

    /// Stable sort by time; generation labels are remapped to the new order.
    void sort_by_time() {
        std::vector<std::size_t> order(events.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return events[a].t < events[b].t; });
        std::vector<std::size_t> rank(order.size());
        for (std::size_t i = 0; i < order.size(); ++i) rank[order[i]] = i;
        std::vector<Event> sorted(events.size());
        for (std::size_t i = 0; i < order.size(); ++i) sorted[i] = events[order[i]];
        if (!parents.empty()) {
            std::vector<std::int64_t> relabeled(parents.size());
            for (std::size_t i = 0; i < order.size(); ++i) {
                const auto p = parents[order[i]];
                relabeled[i] = p < 0 ? kBackgroundLabel : static_cast<std::int64_t>(rank[static_cast<std::size_t>(p)]);
            }
            parents = std::move(relabeled);
        }
        events = std::move(sorted);
    }
};

inline void require_time_ordered(const EventSequence& data) {
    if (!data.is_time_ordered()) {
        throw std::invalid_argument("event sequence is not ordered by time");
    }
}

inline void require_inside(const EventSequence& data, const Window& w) {
    for (const auto& e : data.events) {
        if (!std::isfinite(e.x) || !std::isfinite(e.y) || !std::isfinite(e.t) || !w.contains(e.x, e.y, e.t)) {
            throw std::invalid_argument("event lies outside the window or is not finite");
        }
    }
}

// ---------------------------------------------------------------------------
// Triggering functions

enum class TemporalKind { Exponential, PowerLaw };
enum class SpatialKind { Gaussian, Exponential };

struct TemporalTrigger {
    TemporalKind kind = TemporalKind::Exponential;
    double param = 1.0;  // alpha (Exponential) or gamma (PowerLaw)
};

struct SpatialTrigger {
    SpatialKind kind = SpatialKind::Gaussian;
    double param = 0.05;  // sigma (Gaussian) or beta (Exponential)
};

/// Which parametric families a fit uses.
struct TriggerKinds {
    TemporalKind temporal = TemporalKind::Exponential;
    SpatialKind spatial = SpatialKind::Gaussian;
};

inline std::string_view to_string(TemporalKind k) {
    return k == TemporalKind::Exponential ? "exp" : "powerlaw";
}
inline std::string_view to_string(SpatialKind k) {
    return k == SpatialKind::Gaussian ? "gauss" : "exp";
}
inline TemporalKind parse_temporal_kind(std::string_view s) {
    if (s == "exp" || s == "exponential") return TemporalKind::Exponential;
    if (s == "powerlaw" || s == "power" || s == "pl") return TemporalKind::PowerLaw;
    throw std::invalid_argument("unknown temporal trigger kind '" + std::string(s) + "'");
}
inline SpatialKind parse_spatial_kind(std::string_view s) {
    if (s == "gauss" || s == "gaussian") return SpatialKind::Gaussian;
    if (s == "exp" || s == "exponential") return SpatialKind::Exponential;
    throw std::invalid_argument("unknown spatial trigger kind '" + std::string(s) + "'");
}

inline void validate(const TemporalTrigger& g) {
    if (!(g.param > 0.0) || !std::isfinite(g.param)) {
        throw std::invalid_argument("temporal trigger parameter must be positive");
    }
    if (g.kind == TemporalKind::PowerLaw && !(g.param > 1.0)) {
        throw std::invalid_argument("power-law exponent must exceed 1");
    }
}

inline void validate(const SpatialTrigger& g) {
    if (!(g.param > 0.0) || !std::isfinite(g.param)) {
        throw std::invalid_argument("spatial trigger parameter must be positive");
    }
}

/// Log of the temporal density at lag dt >= 0.
inline double log_temporal_density(const TemporalTrigger& g, double dt) {
    if (g.kind == TemporalKind::Exponential) {
        return std::log(g.param) - g.param * dt;
    }
    return std::log(g.param - 1.0) - g.param * std::log1p(dt);
}

inline double eval_temporal_trigger(const TemporalTrigger& g, double dt) {
    if (!(dt >= 0.0)) {
        throw std::domain_error("temporal lag must be non-negative");
    }
    if (g.kind == TemporalKind::Exponential) {
        return g.param * std::exp(-g.param * dt);
    }
    return (g.param - 1.0) * std::pow(1.0 + dt, -g.param);
}

/// P(lag <= dt) for the normalized temporal density.
inline double temporal_cdf(const TemporalTrigger& g, double dt) {
    if (dt <= 0.0) return 0.0;
    if (std::isinf(dt)) return 1.0;
    if (g.kind == TemporalKind::Exponential) {
        return -std::expm1(-g.param * dt);
    }
    return -std::expm1((1.0 - g.param) * std::log1p(dt));
}

/// Log of the spatial density at squared distance r2.
inline double log_spatial_density_r2(const SpatialTrigger& g, double r2) {
    const double s = g.param;
    if (g.kind == SpatialKind::Gaussian) {
        return -r2 / (2.0 * s * s) - std::log(2.0 * std::numbers::pi * s * s);
    }
    return -std::sqrt(r2) / s - std::log(2.0 * std::numbers::pi * s * s);
}

inline double eval_spatial_trigger(const SpatialTrigger& g, double dx, double dy) {
    if (!std::isfinite(dx) || !std::isfinite(dy)) {
        throw std::domain_error("spatial offset must be finite");
    }
    const double s = g.param;
    const double norm = 1.0 / (2.0 * std::numbers::pi * s * s);
    if (g.kind == SpatialKind::Gaussian) {
        return norm * std::exp(-(dx * dx + dy * dy) / (2.0 * s * s));
    }
    return norm * std::exp(-std::hypot(dx, dy) / s);
}

/// Probability mass of the normalized spatial density inside the disc of
/// radius r around its centre. The exponential kernel has a Gamma(2, beta)
/// radial law.
inline double spatial_radial_cdf(const SpatialTrigger& g, double r) {
    if (r <= 0.0) return 0.0;
    if (std::isinf(r)) return 1.0;
    const double s = g.param;
    if (g.kind == SpatialKind::Gaussian) {
        return -std::expm1(-r * r / (2.0 * s * s));
    }
    const double u = r / s;
    return -std::expm1(-u) - u * std::exp(-u);
}

// ---------------------------------------------------------------------------
// Background

struct SeparableShape {
    TemporalField temporal;
    SpatialField spatial;
};

/// mu * (optional) mean-one spatial field * mean-one temporal field.
struct BackgroundModel {
    double mu = 1.0;
    std::optional<SeparableShape> shape;

    bool is_constant() const noexcept { return !shape.has_value(); }
};

inline void validate(const BackgroundModel& b) {
    if (!(b.mu > 0.0) || !std::isfinite(b.mu)) {
        throw std::invalid_argument("background rate mu must be positive");
    }
    if (b.shape) {
        validate(b.shape->temporal);
        validate(b.shape->spatial);
        if (std::abs(field_mean(b.shape->temporal) - 1.0) > 1e-6 ||
            std::abs(field_mean(b.shape->spatial) - 1.0) > 1e-6) {
            throw std::invalid_argument("separable background fields must be normalized to mean one");
        }
    }
}

/// Shape factor mu_S(x,y) * mu_T(t); 1 for a constant background.
inline double background_shape(const BackgroundModel& b, double x, double y, double t) {
    if (!b.shape) return 1.0;
    return eval_field(b.shape->spatial, x, y) * eval_field(b.shape->temporal, t);
}

inline double eval_background(const BackgroundModel& b, double x, double y, double t) {
    return b.mu * background_shape(b, x, y, t);
}

// ---------------------------------------------------------------------------
// Parameters and models

/// (mu, k, temporal parameter, spatial parameter).
struct ParameterVector {
    double mu = 1.0;
    double k = 0.5;
    double temporal = 1.0;
    double spatial = 0.05;

    static constexpr std::size_t kSize = 4;
    static constexpr std::array<std::string_view, 4> kNames{"mu", "k", "temporal", "spatial"};

    std::array<double, 4> as_array() const { return {mu, k, temporal, spatial}; }
    static ParameterVector from_array(const std::array<double, 4>& a) { return {a[0], a[1], a[2], a[3]}; }

    bool all_positive() const {
        return mu > 0.0 && k > 0.0 && temporal > 0.0 && spatial > 0.0 && std::isfinite(mu) && std::isfinite(k) &&
               std::isfinite(temporal) && std::isfinite(spatial);
    }
};

/// Conventional name of the temporal/spatial parameter for a kind.
inline std::string_view parameter_name(TemporalKind k) { return k == TemporalKind::Exponential ? "alpha" : "gamma"; }
inline std::string_view parameter_name(SpatialKind k) { return k == SpatialKind::Gaussian ? "sigma" : "beta"; }

struct HawkesModel {
    BackgroundModel background;
    double k = 0.5;
    TemporalTrigger temporal;
    SpatialTrigger spatial;

    TriggerKinds kinds() const { return {temporal.kind, spatial.kind}; }
    ParameterVector parameters() const { return {background.mu, k, temporal.param, spatial.param}; }
};

/// Builds a model from a parameter vector; `background` supplies the shape.
inline HawkesModel make_model(const ParameterVector& p, TriggerKinds kinds,
                              const std::optional<SeparableShape>& shape = std::nullopt) {
    HawkesModel m;
    m.background.mu = p.mu;
    m.background.shape = shape;
    m.k = p.k;
    m.temporal = {kinds.temporal, p.temporal};
    m.spatial = {kinds.spatial, p.spatial};
    return m;
}

/// Parameter validity; k >= 1 is allowed here (fitters explore it), the
/// simulators reject it separately.
inline void validate(const HawkesModel& m) {
    validate(m.background);
    if (!(m.k >= 0.0) || !std::isfinite(m.k)) {
        throw std::invalid_argument("reproduction number k must be non-negative");
    }
    validate(m.temporal);
    validate(m.spatial);
}

// ---------------------------------------------------------------------------
// Excitation sums

/// k * g_T * g_S with a cheap rejection of terms that cannot change a double
/// sum whose floor is the background rate.
class TriggerKernel {
public:
    /// Terms below exp(kNegligibleLog) times the background are skipped.
    static constexpr double kNegligibleLog = -42.0;

    TriggerKernel(double k, TemporalTrigger temporal, SpatialTrigger spatial)
        : k_(k), temporal_(temporal), spatial_(spatial) {
        log_k_ = k > 0.0 ? std::log(k) : -std::numeric_limits<double>::infinity();
        log_t0_ = log_temporal_density(temporal_, 0.0);
        log_s0_ = log_spatial_density_r2(spatial_, 0.0);
    }
    explicit TriggerKernel(const HawkesModel& m) : TriggerKernel(m.k, m.temporal, m.spatial) {}

    double k() const noexcept { return k_; }
    const TemporalTrigger& temporal() const noexcept { return temporal_; }
    const SpatialTrigger& spatial() const noexcept { return spatial_; }

    double log_value(double dt, double dx, double dy) const {
        return log_k_ + log_temporal_density(temporal_, dt) + log_spatial_density_r2(spatial_, dx * dx + dy * dy);
    }

    /// Sum of k*g over `history` events strictly before t. `history` must be
    /// time-ordered; iteration runs backwards from the most recent event.
    double excitation(std::span<const Event> history, double x, double y, double t, double floor_rate) const {
        if (!(k_ > 0.0) || history.empty()) return 0.0;
        const double log_floor = std::log(floor_rate) + kNegligibleLog;
        // any term with log value below this after adding the spatial peak is negligible
        const double temporal_cut = log_floor - log_k_ - log_s0_;
        const double spatial_cut = log_floor - log_k_ - log_t0_;
        auto end = std::lower_bound(history.begin(), history.end(), t,
                                    [](const Event& e, double tt) { return e.t < tt; });
        double sum = 0.0;
        for (auto it = end; it != history.begin();) {
            --it;
            const double dt = t - it->t;
            const double lt = log_temporal_density(temporal_, dt);
            if (lt < temporal_cut) break;  // temporal densities decrease in dt
            const double dx = x - it->x;
            const double dy = y - it->y;
            const double ls = log_spatial_density_r2(spatial_, dx * dx + dy * dy);
            if (ls < spatial_cut) continue;
            const double lv = log_k_ + lt + ls;
            if (lv < log_floor) continue;
            sum += std::exp(lv);
        }
        return sum;
    }

private:
    double k_;
    TemporalTrigger temporal_;
    SpatialTrigger spatial_;
    double log_k_;
    double log_t0_;
    double log_s0_;
};

/// lambda(s,t | H_t): background plus k * sum of triggering over events of
/// `history` strictly before t. Events at or after t are ignored.
inline double conditional_intensity(const HawkesModel& model, const EventSequence& history, double x, double y,
                                    double t) {
    require_time_ordered(history);
    const double mu = eval_background(model.background, x, y, t);
    const TriggerKernel kernel(model);
    const double floor_rate = mu > 0.0 ? mu : std::numeric_limits<double>::min();
    return mu + kernel.excitation(history.events, x, y, t, floor_rate);
}

}  // namespace sthawkes
