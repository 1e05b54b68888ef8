#pragma once

#include "sthawkes/model.hpp"

#include <string>
#include <vector>

namespace sthawkes {

/// Shared result type of the point-estimate fitters.
struct FitResult {
    std::string method;
    ParameterVector estimate;
    double objective = 0.0;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
    double seconds = 0.0;
    std::vector<std::string> warnings;
    // per-iteration parameters (EM) and observed log-likelihood track
    std::vector<ParameterVector> trace;
    std::vector<double> loglik_trace;
};

/// Starting point used when the caller gives none: half the average event
/// rate for mu, k = 0.5, and fixed trigger scales per kind.
inline ParameterVector default_initial(const EventSequence& data, const Window& w, TriggerKinds kinds) {
    ParameterVector p;
    p.mu = 0.5 * static_cast<double>(data.size()) / w.volume();
    if (!(p.mu > 0.0)) p.mu = 1.0 / w.volume();
    p.k = 0.5;
    p.temporal = kinds.temporal == TemporalKind::Exponential ? 1.0 : 3.0;
    p.spatial = 0.05;
    return p;
}

inline constexpr std::size_t kMinEventsForFit = 10;

inline void require_enough_events(const EventSequence& data) {
    if (data.size() < kMinEventsForFit) {
        throw std::invalid_argument("at least " + std::to_string(kMinEventsForFit) +
                                    " events are required to fit; got " + std::to_string(data.size()));
    }
}

}  // namespace sthawkes
