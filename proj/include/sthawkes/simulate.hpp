#pragma once

#include "sthawkes/model.hpp"
#include "sthawkes/random.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sthawkes {

enum class SimMethod { ParentsOffspring, Thinning };

inline std::string_view to_string(SimMethod m) {
    return m == SimMethod::ParentsOffspring ? "parents-offspring" : "thinning";
}
inline SimMethod parse_sim_method(std::string_view s) {
    if (s == "parents-offspring" || s == "po" || s == "cluster") return SimMethod::ParentsOffspring;
    if (s == "thinning" || s == "ar" || s == "acceptance-rejection") return SimMethod::Thinning;
    throw std::invalid_argument("unknown simulation method '" + std::string(s) + "'");
}

struct SimConfig {
    std::uint64_t seed = 1;
    SimMethod method = SimMethod::Thinning;
    std::optional<double> lambda_max_override;
    std::array<int, 3> lambda_max_grid{25, 25, 25};
    int max_generations = 100;

    void validate() const {
        if (lambda_max_grid[0] < 2 || lambda_max_grid[1] < 2 || lambda_max_grid[2] < 2) {
            throw std::invalid_argument("lambda_max grid dimensions must be >= 2");
        }
        if (max_generations < 1) {
            throw std::invalid_argument("max_generations must be >= 1");
        }
        if (lambda_max_override && !(*lambda_max_override > 0.0)) {
            throw std::invalid_argument("lambda_max override must be positive");
        }
    }
};

struct SimResult {
    EventSequence events;
    SimMethod method = SimMethod::ParentsOffspring;
    // thinning only
    std::uint64_t candidates_generated = 0;
    std::uint64_t accepted = 0;
    double lambda_max = 0.0;
    std::uint64_t bound_violations = 0;
    double max_observed_intensity = 0.0;
    // parents-offspring only
    int generations = 0;
    std::vector<std::string> warnings;
    double seconds = 0.0;
    std::size_t approx_peak_bytes = 0;

    double acceptance_ratio() const {
        return candidates_generated == 0 ? 0.0
                                         : static_cast<double>(accepted) / static_cast<double>(candidates_generated);
    }
};

// ---------------------------------------------------------------------------
// Parent laws

struct MixtureComponent {
    double weight;
    double mean_x;
    double mean_y;
    double var_x;
    double var_y;
};

/// Parent law with Gaussian-mixture locations (truncated to the window) and
/// Beta(a, b) times rescaled to [t_min, t_max].
struct MixtureParents {
    std::vector<MixtureComponent> components;
    double beta_a = 1.0;
    double beta_b = 1.0;
};

namespace detail {

inline double sample_beta(Rng& rng, double a, double b) {
    const double x = std::gamma_distribution<double>(a, 1.0)(rng);
    const double y = std::gamma_distribution<double>(b, 1.0)(rng);
    return x / (x + y);
}

// Exact draw from a piecewise-linear density given by node values.
class TemporalFieldSampler {
public:
    explicit TemporalFieldSampler(const TemporalField& f) : f_(f), cum_(f.values.size(), 0.0) {
        for (std::size_t i = 0; i + 1 < f.values.size(); ++i) {
            cum_[i + 1] = cum_[i] + 0.5 * (f.values[i] + f.values[i + 1]);
        }
    }

    double operator()(Rng& rng) const {
        const std::size_t cells = f_.values.size() - 1;
        const double target = uniform(rng, 0.0, cum_.back());
        auto it = std::upper_bound(cum_.begin(), cum_.end(), target);
        const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(it - cum_.begin()) - 1, cells - 1);
        const double a = f_.values[i];
        const double b = f_.values[i + 1];
        const double mass = 0.5 * (a + b);
        const double u = mass > 0.0 ? (target - cum_[i]) / mass : uniform(rng, 0.0, 1.0);
        double w;
        if (std::abs(b - a) <= 1e-12 * std::max(a, b)) {
            w = u;
        } else {
            // solve a*w + (b-a)*w^2/2 = u*(a+b)/2 for w in [0,1]
            const double c = b - a;
            w = (-a + std::sqrt(std::max(0.0, a * a + c * u * (a + b)))) / c;
        }
        return f_.t_min + (static_cast<double>(i) + std::clamp(w, 0.0, 1.0)) * f_.spacing();
    }

private:
    const TemporalField& f_;
    std::vector<double> cum_;
};

// Cell chosen by bilinear mass, then rejection inside the cell.
class SpatialFieldSampler {
public:
    explicit SpatialFieldSampler(const SpatialField& f) : f_(f) {
        const std::size_t cx = f.nx - 1;
        const std::size_t cy = f.ny - 1;
        cum_.assign(cx * cy + 1, 0.0);
        for (std::size_t iy = 0; iy < cy; ++iy) {
            for (std::size_t ix = 0; ix < cx; ++ix) {
                const double m = 0.25 * (f.at(ix, iy) + f.at(ix + 1, iy) + f.at(ix, iy + 1) + f.at(ix + 1, iy + 1));
                cum_[iy * cx + ix + 1] = cum_[iy * cx + ix] + m;
            }
        }
    }

    std::pair<double, double> operator()(Rng& rng) const {
        const std::size_t cx = f_.nx - 1;
        const double target = uniform(rng, 0.0, cum_.back());
        auto it = std::upper_bound(cum_.begin(), cum_.end(), target);
        const std::size_t cell = std::min<std::size_t>(static_cast<std::size_t>(it - cum_.begin()) - 1, cum_.size() - 2);
        const std::size_t ix = cell % cx;
        const std::size_t iy = cell / cx;
        const double v00 = f_.at(ix, iy), v10 = f_.at(ix + 1, iy), v01 = f_.at(ix, iy + 1), v11 = f_.at(ix + 1, iy + 1);
        const double top = std::max({v00, v10, v01, v11});
        while (true) {
            const double u = uniform(rng, 0.0, 1.0);
            const double v = uniform(rng, 0.0, 1.0);
            const double val = (1 - u) * (1 - v) * v00 + u * (1 - v) * v10 + (1 - u) * v * v01 + u * v * v11;
            if (top <= 0.0 || uniform(rng, 0.0, top) <= val) {
                return {f_.x_min + (static_cast<double>(ix) + u) * f_.dx(),
                        f_.y_min + (static_cast<double>(iy) + v) * f_.dy()};
            }
        }
    }

private:
    const SpatialField& f_;
    std::vector<double> cum_;
};

// Offspring displacement from the normalized triggering density.
inline Event draw_offspring(const Event& parent, const HawkesModel& m, Rng& rng) {
    double dt;
    if (m.temporal.kind == TemporalKind::Exponential) {
        dt = exponential_draw(rng, m.temporal.param);
    } else {
        // inverse of F(dt) = 1 - (1+dt)^(1-gamma)
        dt = std::pow(uniform_open_low(rng), 1.0 / (1.0 - m.temporal.param)) - 1.0;
    }
    double dx;
    double dy;
    if (m.spatial.kind == SpatialKind::Gaussian) {
        const auto [z1, z2] = polar_normal_pair(rng);
        dx = m.spatial.param * z1;
        dy = m.spatial.param * z2;
    } else {
        // radius ~ Gamma(2, beta) as a sum of two exponentials, uniform angle
        const double r = exponential_draw(rng, 1.0 / m.spatial.param) + exponential_draw(rng, 1.0 / m.spatial.param);
        const double theta = uniform(rng, 0.0, 2.0 * std::numbers::pi);
        dx = r * std::cos(theta);
        dy = r * std::sin(theta);
    }
    return {parent.x + dx, parent.y + dy, parent.t + dt};
}

inline void require_subcritical(const HawkesModel& m) {
    if (!(m.k < 1.0)) {
        throw std::invalid_argument("reproduction number k >= 1 gives an explosive process; simulation refused");
    }
}

template <typename ParentDraw>
SimResult run_parents_offspring(const HawkesModel& model, const Window& window, const SimConfig& config,
                                ParentDraw&& draw_parent) {
    const auto start = std::chrono::steady_clock::now();
    Rng rng(config.seed);
    SimResult out;
    out.method = SimMethod::ParentsOffspring;

    std::vector<Event> events;
    std::vector<std::int64_t> parents;
    const std::uint64_t n_parents = poisson_draw(rng, model.background.mu * window.volume());
    for (std::uint64_t i = 0; i < n_parents; ++i) {
        events.push_back(draw_parent(rng));
        parents.push_back(kBackgroundLabel);
    }

    std::size_t gen_begin = 0;
    std::size_t gen_end = events.size();
    int generation = 0;
    while (gen_begin < gen_end && generation < config.max_generations) {
        for (std::size_t i = gen_begin; i < gen_end; ++i) {
            const std::uint64_t n_children = poisson_draw(rng, model.k);
            for (std::uint64_t c = 0; c < n_children; ++c) {
                const Event child = draw_offspring(events[i], model, rng);
                if (window.contains(child.x, child.y, child.t)) {
                    events.push_back(child);
                    parents.push_back(static_cast<std::int64_t>(i));
                }
            }
        }
        gen_begin = gen_end;
        gen_end = events.size();
        ++generation;
    }
    if (gen_begin < gen_end) {
        out.warnings.push_back("max_generations reached with a non-empty generation");
    }
    out.generations = generation;
    out.approx_peak_bytes = events.capacity() * sizeof(Event) + parents.capacity() * sizeof(std::int64_t);
    out.events.events = std::move(events);
    out.events.parents = std::move(parents);
    out.events.sort_by_time();
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

}  // namespace detail

/// Cluster (parents-offspring) simulation. Parents follow the normalized
/// background; each event has Poisson(k) offspring displaced by the
/// normalized triggering density; offspring outside the window are dropped.
inline SimResult simulate_parents_offspring(const HawkesModel& model, const Window& window, const SimConfig& config) {
    validate(model);
    window.validate();
    config.validate();
    detail::require_subcritical(model);
    if (!model.background.shape) {
        return detail::run_parents_offspring(model, window, config, [&](Rng& rng) {
            const double x = uniform(rng, window.x_min, window.x_max);
            const double y = uniform(rng, window.y_min, window.y_max);
            const double t = uniform(rng, window.t_min, window.t_max);
            return Event{x, y, t};
        });
    }
    const auto& shape = *model.background.shape;
    detail::SpatialFieldSampler spatial(shape.spatial);
    detail::TemporalFieldSampler temporal(shape.temporal);
    return detail::run_parents_offspring(model, window, config, [&](Rng& rng) {
        const auto [x, y] = spatial(rng);
        const double t = temporal(rng);
        return Event{x, y, t};
    });
}

/// Cluster simulation with parents drawn from an explicit mixture law. The
/// expected parent count is mu * |W|.
inline SimResult simulate_parents_offspring(const HawkesModel& model, const Window& window, const SimConfig& config,
                                            const MixtureParents& parent_law) {
    validate(model);
    window.validate();
    config.validate();
    detail::require_subcritical(model);
    if (parent_law.components.empty()) {
        throw std::invalid_argument("mixture parent law has no components");
    }
    std::vector<double> weights;
    for (const auto& c : parent_law.components) weights.push_back(c.weight);
    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    return detail::run_parents_offspring(model, window, config, [&](Rng& rng) {
        double x;
        double y;
        do {
            const auto& c = parent_law.components[pick(rng)];
            const auto [z1, z2] = polar_normal_pair(rng);
            x = c.mean_x + std::sqrt(c.var_x) * z1;
            y = c.mean_y + std::sqrt(c.var_y) * z2;
        } while (!window.contains_space(x, y));
        const double t = window.t_min + window.duration() * detail::sample_beta(rng, parent_law.beta_a, parent_law.beta_b);
        return Event{x, y, t};
    });
}

/// Tabulates a mixture parent law as a separable mean-one background shape.
inline SeparableShape tabulate_mixture(const MixtureParents& law, const Window& w, std::size_t spatial_nodes = 128,
                                       std::size_t temporal_nodes = 512) {
    SeparableShape shape;
    auto& sf = shape.spatial;
    sf.x_min = w.x_min;
    sf.x_max = w.x_max;
    sf.y_min = w.y_min;
    sf.y_max = w.y_max;
    sf.nx = spatial_nodes;
    sf.ny = spatial_nodes;
    sf.values.assign(spatial_nodes * spatial_nodes, 0.0);
    for (std::size_t iy = 0; iy < sf.ny; ++iy) {
        const double y = sf.y_min + sf.dy() * static_cast<double>(iy);
        for (std::size_t ix = 0; ix < sf.nx; ++ix) {
            const double x = sf.x_min + sf.dx() * static_cast<double>(ix);
            double d = 0.0;
            for (const auto& c : law.components) {
                const double qx = (x - c.mean_x) * (x - c.mean_x) / c.var_x;
                const double qy = (y - c.mean_y) * (y - c.mean_y) / c.var_y;
                d += c.weight * std::exp(-0.5 * (qx + qy)) / (2.0 * std::numbers::pi * std::sqrt(c.var_x * c.var_y));
            }
            sf.at(ix, iy) = d;
        }
    }
    normalize_mean_one(sf);

    auto& tf = shape.temporal;
    tf.t_min = w.t_min;
    tf.t_max = w.t_max;
    tf.values.resize(temporal_nodes);
    for (std::size_t i = 0; i < temporal_nodes; ++i) {
        const double u = std::clamp(static_cast<double>(i) / static_cast<double>(temporal_nodes - 1), 1e-9, 1.0 - 1e-9);
        tf.values[i] = std::pow(u, law.beta_a - 1.0) * std::pow(1.0 - u, law.beta_b - 1.0);
    }
    normalize_mean_one(tf);
    return shape;
}

/// Pilot cluster realization, then the maximum of lambda over the cell
/// centres of an (nx, ny, nt) grid, times a 1.5 safety factor.
inline double grid_max_intensity(const HawkesModel& model, const EventSequence& history, const Window& window,
                                 std::array<int, 3> grid) {
    const TriggerKernel kernel(model);
    const double hx = window.width() / grid[0];
    const double hy = window.height() / grid[1];
    const double ht = window.duration() / grid[2];
    double best = 0.0;
    for (int it = 0; it < grid[2]; ++it) {
        const double t = window.t_min + (it + 0.5) * ht;
        for (int iy = 0; iy < grid[1]; ++iy) {
            const double y = window.y_min + (iy + 0.5) * hy;
            for (int ix = 0; ix < grid[0]; ++ix) {
                const double x = window.x_min + (ix + 0.5) * hx;
                const double mu = eval_background(model.background, x, y, t);
                const double lam = mu + kernel.excitation(history.events, x, y, t, std::max(mu, 1e-300));
                best = std::max(best, lam);
            }
        }
    }
    return best;
}

inline constexpr double kLambdaMaxSafety = 1.5;

inline double estimate_lambda_max(const HawkesModel& model, const Window& window, std::array<int, 3> grid,
                                  std::uint64_t seed) {
    if (grid[0] < 2 || grid[1] < 2 || grid[2] < 2) {
        throw std::invalid_argument("lambda_max grid dimensions must be >= 2");
    }
    SimConfig pilot_cfg;
    pilot_cfg.seed = seed;
    pilot_cfg.method = SimMethod::ParentsOffspring;
    const auto pilot = simulate_parents_offspring(model, window, pilot_cfg);
    return kLambdaMaxSafety * grid_max_intensity(model, pilot.events, window, grid);
}

/// Acceptance-rejection (thinning) simulation against a constant bound.
/// Candidates are uniform on W; acceptance uses lambda against the events
/// accepted so far.
inline SimResult simulate_thinning(const HawkesModel& model, const Window& window, const SimConfig& config) {
    validate(model);
    window.validate();
    config.validate();
    const auto start = std::chrono::steady_clock::now();
    SimResult out;
    out.method = SimMethod::Thinning;
    out.lambda_max = config.lambda_max_override
                         ? *config.lambda_max_override
                         : estimate_lambda_max(model, window, config.lambda_max_grid, derive_seed(config.seed, 0x9117));

    Rng rng(config.seed);
    const std::uint64_t n = poisson_draw(rng, out.lambda_max * window.volume());
    std::vector<Event> candidates(n);
    for (auto& c : candidates) {
        c.x = uniform(rng, window.x_min, window.x_max);
        c.y = uniform(rng, window.y_min, window.y_max);
        c.t = uniform(rng, window.t_min, window.t_max);
    }
    std::stable_sort(candidates.begin(), candidates.end(), [](const Event& a, const Event& b) { return a.t < b.t; });

    const TriggerKernel kernel(model);
    std::vector<Event> accepted;
    for (const auto& c : candidates) {
        const double mu = eval_background(model.background, c.x, c.y, c.t);
        const double lam = mu + kernel.excitation(accepted, c.x, c.y, c.t, std::max(mu, 1e-300));
        out.max_observed_intensity = std::max(out.max_observed_intensity, lam);
        if (lam > out.lambda_max) ++out.bound_violations;
        const double u = uniform(rng, 0.0, 1.0);
        if (u <= lam / out.lambda_max) accepted.push_back(c);
    }
    if (out.bound_violations > 0) {
        out.warnings.push_back("intensity exceeded lambda_max at " + std::to_string(out.bound_violations) +
                               " candidate(s); result is approximate");
    }
    out.candidates_generated = n;
    out.accepted = accepted.size();
    out.approx_peak_bytes = candidates.capacity() * sizeof(Event) + accepted.capacity() * sizeof(Event);
    out.events.events = std::move(accepted);
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

inline SimResult simulate(const HawkesModel& model, const Window& window, const SimConfig& config) {
    return config.method == SimMethod::ParentsOffspring ? simulate_parents_offspring(model, window, config)
                                                        : simulate_thinning(model, window, config);
}

}  // namespace sthawkes
