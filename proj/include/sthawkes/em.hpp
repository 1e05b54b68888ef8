#pragma once

#include "sthawkes/fit.hpp"
#include "sthawkes/likelihood.hpp"
#include "sthawkes/model.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <stdexcept>
#include <vector>

namespace sthawkes {

/// Lower-triangular matrix of parent-assignment probabilities. Entry (i, i)
/// is the probability that event i is a background event; entry (i, j), j < i,
/// the probability that event j triggered event i.
class BranchingProbabilities {
public:
    BranchingProbabilities() = default;
    explicit BranchingProbabilities(std::size_t n) : n_(n), p_(n * (n + 1) / 2, 0.0) {}

    std::size_t size() const noexcept { return n_; }
    double operator()(std::size_t i, std::size_t j) const { return p_[index(i, j)]; }
    double& operator()(std::size_t i, std::size_t j) { return p_[index(i, j)]; }

    std::span<const double> row(std::size_t i) const { return {p_.data() + index(i, 0), i + 1}; }
    std::span<double> row(std::size_t i) { return {p_.data() + index(i, 0), i + 1}; }

    double row_sum(std::size_t i) const {
        double s = 0.0;
        for (double v : row(i)) s += v;
        return s;
    }
    double background_mass() const {
        double s = 0.0;
        for (std::size_t i = 0; i < n_; ++i) s += (*this)(i, i);
        return s;
    }
    double triggered_mass() const {
        double s = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
            const auto r = row(i);
            for (std::size_t j = 0; j < i; ++j) s += r[j];
        }
        return s;
    }

private:
    static std::size_t index(std::size_t i, std::size_t j) { return i * (i + 1) / 2 + j; }

    std::size_t n_ = 0;
    std::vector<double> p_;
};

enum class EmConvergence { ParamDelta, IntensityDelta };

struct EmConfig {
    std::optional<ParameterVector> initial;
    int max_iters = 200;
    EmConvergence metric = EmConvergence::ParamDelta;
    double tolerance = 1e-6;
    /// Fixed background shape (mean-one fields); only mu is estimated.
    std::optional<SeparableShape> background_shape;
    /// Record the full-space observed log-likelihood at every iteration.
    bool track_loglik = true;

    void validate() const {
        if (!(tolerance > 0.0)) throw std::invalid_argument("EM tolerance must be positive");
        if (max_iters < 1) throw std::invalid_argument("EM max_iters must be >= 1");
    }
};

struct MStepResult {
    ParameterVector params;
    bool degenerate = false;  // no triggered mass; trigger parameters carried over
};

/// E-step: p_ii = mu(s_i,t_i) / lambda_i, p_ij = k g(s_i - s_j, t_i - t_j) / lambda_i.
/// Pairs whose term is negligible next to the background get probability 0.
inline BranchingProbabilities e_step(const ParameterVector& params, TriggerKinds kinds, const EventSequence& data,
                                     const std::optional<SeparableShape>& shape = std::nullopt,
                                     std::vector<double>* intensities = nullptr) {
    require_time_ordered(data);
    const auto model = make_model(params, kinds, shape);
    const std::size_t n = data.size();
    BranchingProbabilities probs(n);
    if (intensities) intensities->assign(n, 0.0);

    const double log_k = params.k > 0.0 ? std::log(params.k) : -std::numeric_limits<double>::infinity();
    const double log_s0 = log_spatial_density_r2(model.spatial, 0.0);
    const double log_t0 = log_temporal_density(model.temporal, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& ei = data.events[i];
        auto row = probs.row(i);
        const double bg = eval_background(model.background, ei.x, ei.y, ei.t);
        double lam = bg;
        if (params.k > 0.0 && i > 0) {
            const double log_floor = std::log(std::max(bg, 1e-300)) + TriggerKernel::kNegligibleLog;
            for (std::size_t j = i; j-- > 0;) {
                const auto& ej = data.events[j];
                const double dt = ei.t - ej.t;
                if (!(dt > 0.0)) continue;  // simultaneous events are not in each other's history
                const double lt = log_temporal_density(model.temporal, dt);
                if (log_k + lt + log_s0 < log_floor) break;
                const double dx = ei.x - ej.x;
                const double dy = ei.y - ej.y;
                const double ls = log_spatial_density_r2(model.spatial, dx * dx + dy * dy);
                if (log_k + log_t0 + ls < log_floor) continue;
                const double lv = log_k + lt + ls;
                if (lv < log_floor) continue;
                row[j] = std::exp(lv);
                lam += row[j];
            }
        }
        row[i] = bg;
        if (!(lam > 0.0)) {
            throw std::domain_error("conditional intensity vanished at an event");
        }
        for (double& v : row) v /= lam;
        if (intensities) (*intensities)[i] = lam;
    }
    return probs;
}

/// M-step closed forms. mu and k as usual; alpha = S / sum p dt,
/// gamma = 1 + S / sum p log(1+dt), sigma = sqrt(sum p r^2 / 2S),
/// beta = sum p r / 2S, where S is the total triggered mass.
inline MStepResult m_step(const BranchingProbabilities& probs, const EventSequence& data, const Window& window,
                          TriggerKinds kinds, const ParameterVector& previous = {}) {
    const std::size_t n = data.size();
    if (probs.size() != n) {
        throw std::invalid_argument("probability matrix does not match the data");
    }
    double bg = 0.0;
    double s = 0.0;
    double s_time = 0.0;
    double s_space = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = probs.row(i);
        bg += row[i];
        const auto& ei = data.events[i];
        for (std::size_t j = 0; j < i; ++j) {
            const double p = row[j];
            if (p == 0.0) continue;
            const auto& ej = data.events[j];
            const double dt = ei.t - ej.t;
            const double r2 = (ei.x - ej.x) * (ei.x - ej.x) + (ei.y - ej.y) * (ei.y - ej.y);
            s += p;
            s_time += p * (kinds.temporal == TemporalKind::Exponential ? dt : std::log1p(dt));
            s_space += p * (kinds.spatial == SpatialKind::Gaussian ? r2 : std::sqrt(r2));
        }
    }
    MStepResult out;
    out.params.mu = bg / window.volume();
    out.params.k = s / static_cast<double>(n);
    if (!(s > 0.0) || !(s_time > 0.0) || !(s_space > 0.0)) {
        out.params.temporal = previous.temporal;
        out.params.spatial = previous.spatial;
        out.degenerate = true;
        return out;
    }
    out.params.temporal = kinds.temporal == TemporalKind::Exponential ? s / s_time : 1.0 + s / s_time;
    out.params.spatial = kinds.spatial == SpatialKind::Gaussian ? std::sqrt(s_space / (2.0 * s)) : s_space / (2.0 * s);
    return out;
}

/// Expected complete-data log-likelihood under the full-space triggering
/// integral: sum p_ii log mu_i - mu|W| + sum p_ij log(k g_ij) - k n.
inline double expected_log_likelihood(const ParameterVector& params, TriggerKinds kinds,
                                      const BranchingProbabilities& probs, const EventSequence& data,
                                      const Window& window, const std::optional<SeparableShape>& shape = std::nullopt) {
    const auto model = make_model(params, kinds, shape);
    const TriggerKernel kernel(model);
    const std::size_t n = data.size();
    double q = -params.mu * window.volume() - params.k * static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = probs.row(i);
        const auto& ei = data.events[i];
        if (row[i] > 0.0) q += row[i] * std::log(eval_background(model.background, ei.x, ei.y, ei.t));
        for (std::size_t j = 0; j < i; ++j) {
            if (row[j] == 0.0) continue;
            const auto& ej = data.events[j];
            q += row[j] * kernel.log_value(ei.t - ej.t, ei.x - ej.x, ei.y - ej.y);
        }
    }
    return q;
}

/// EM over the latent branching structure.
inline FitResult fit_em(const EventSequence& data, const Window& window, TriggerKinds kinds, const EmConfig& config) {
    require_enough_events(data);
    require_time_ordered(data);
    window.validate();
    config.validate();
    const auto start = std::chrono::steady_clock::now();

    ParameterVector params = config.initial.value_or(default_initial(data, window, kinds));
    if (!params.all_positive()) {
        throw std::invalid_argument("initial parameters must be strictly positive");
    }
    FitResult out;
    out.method = "em";
    out.trace.push_back(params);
    std::vector<double> lam_prev;
    std::vector<double> lam;
    int decreases = 0;

    for (int iter = 1; iter <= config.max_iters; ++iter) {
        const auto probs = e_step(params, kinds, data, config.background_shape, &lam);
        if (config.track_loglik) {
            double s = 0.0;
            for (double v : lam) s += std::log(v);
            const double ll = s - params.mu * window.volume() - params.k * static_cast<double>(data.size());
            if (!out.loglik_trace.empty() && ll < out.loglik_trace.back() - 1e-8 * std::abs(ll)) ++decreases;
            out.loglik_trace.push_back(ll);
        }
        const auto m = m_step(probs, data, window, kinds, params);
        out.iterations = iter;

        double change = 0.0;
        if (config.metric == EmConvergence::ParamDelta || lam_prev.empty()) {
            const auto a = params.as_array();
            const auto b = m.params.as_array();
            for (std::size_t d = 0; d < 4; ++d) {
                const double scale = std::max(std::abs(a[d]), 1e-300);
                change = std::max(change, std::abs(b[d] - a[d]) / scale);
            }
        } else {
            for (std::size_t i = 0; i < lam.size(); ++i) {
                change = std::max(change, std::abs(lam[i] - lam_prev[i]) / lam_prev[i]);
            }
        }
        lam_prev = lam;
        params = m.params;
        out.trace.push_back(params);
        if (m.degenerate) {
            out.warnings.push_back("no triggered mass; trigger parameters held at previous values");
            out.converged = true;
            break;
        }
        if (change < config.tolerance && !(config.metric == EmConvergence::IntensityDelta && iter == 1)) {
            out.converged = true;
            break;
        }
    }
    if (decreases > 0) {
        out.warnings.push_back("observed log-likelihood decreased on " + std::to_string(decreases) + " iteration(s)");
    }
    if (!out.converged) out.warnings.push_back("EM did not converge within max_iters");
    out.estimate = params;
    out.evaluations = out.iterations;
    out.objective = full_space_log_likelihood(make_model(params, kinds, config.background_shape), data, window);
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

}  // namespace sthawkes
