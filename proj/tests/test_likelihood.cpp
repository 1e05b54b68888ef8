#include "sthawkes/likelihood.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

using namespace sthawkes;
using testing_support::model_of;
using testing_support::unit_window;

namespace {

// Direct triple sum over cell centres and history, no separability and no pruning.
double brute_integral(const HawkesModel& m, const EventSequence& d, const Window& w, const GridSpec& g) {
    const double hx = w.width() / g.nx;
    const double hy = w.height() / g.ny;
    const double ht = w.duration() / g.nt;
    double total = 0.0;
    for (int it = 0; it < g.nt; ++it) {
        const double t = w.t_min + (it + 0.5) * ht;
        for (int iy = 0; iy < g.ny; ++iy) {
            const double y = w.y_min + (iy + 0.5) * hy;
            for (int ix = 0; ix < g.nx; ++ix) {
                const double x = w.x_min + (ix + 0.5) * hx;
                double lam = m.background.mu;
                for (const auto& e : d.events) {
                    if (e.t >= t) break;
                    lam += m.k * testing_support::naive_temporal(m.temporal, t - e.t) *
                           testing_support::naive_spatial(m.spatial, x - e.x, y - e.y);
                }
                total += lam;
            }
        }
    }
    return total * hx * hy * ht;
}

double brute_log_likelihood(const HawkesModel& m, const EventSequence& d, const Window& w, const GridSpec& g) {
    double s = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) s += std::log(testing_support::naive_intensity(m, d, i));
    return s - brute_integral(m, d, w, g);
}

EventSequence poisson_pattern(double mu, const Window& w, std::uint64_t seed) {
    const auto m = model_of(mu, 0.0, TemporalKind::Exponential, 1.0, SpatialKind::Gaussian, 0.05);
    SimConfig c;
    c.seed = seed;
    c.method = SimMethod::ParentsOffspring;
    return simulate(m, w, c).events;
}

}  // namespace

TEST(ApproximateIntegral, ConstantIntensityIsExact) {
    const auto m = model_of(3.0, 0.0, TemporalKind::Exponential, 1.0, SpatialKind::Gaussian, 0.05);
    EventSequence none;
    EXPECT_DOUBLE_EQ(approximate_integral(m, none, Window(0, 1, 0, 1, 0, 1), {7, 9, 4}), 3.0);
    auto m2 = m;
    m2.background.mu = 2.0;
    EXPECT_NEAR(approximate_integral(m2, none, unit_window(), {}), 200.0, 1e-9);
}

TEST(ApproximateIntegral, SeparableFormEqualsTripleSum) {
    for (auto sk : {SpatialKind::Gaussian, SpatialKind::Exponential}) {
        const auto m = model_of(2.0, 0.85, TemporalKind::PowerLaw, 3.5, sk, 0.05);
        const Window w = unit_window(10.0);
        const auto d = testing_support::simulate_pattern(m, 17, 10.0);
        const GridSpec g{12, 12, 12};
        const double fast = approximate_integral(m, d, w, g);
        EXPECT_NEAR(fast, brute_integral(m, d, w, g), 1e-9 * fast);
    }
}

TEST(ApproximateIntegral, CloseToFineGrid) {
    const auto m = testing_support::scenario_1a();
    const auto d = testing_support::simulate_pattern(m, 18);
    const double g25 = approximate_integral(m, d, unit_window(), {25, 25, 25});
    const double g75 = approximate_integral(m, d, unit_window(), {75, 75, 75});
    EXPECT_NEAR(g25, g75, 0.02 * g75);
}

TEST(ApproximateIntegral, RefinementImprovesAccuracy) {
    // per pattern the midpoint error is erratic; averaged over patterns it shrinks with the grid
    const auto m = testing_support::scenario_1a();
    std::array<double, 3> err{};
    const std::array<int, 3> grids{10, 25, 50};
    const int reps = 20;
    for (int r = 0; r < reps; ++r) {
        const auto d = testing_support::simulate_pattern(m, 40 + r);
        const double ref = approximate_integral(m, d, unit_window(), {75, 75, 75});
        for (std::size_t g = 0; g < 3; ++g) {
            err[g] += std::abs(approximate_integral(m, d, unit_window(), {grids[g], grids[g], grids[g]}) - ref) / reps;
        }
    }
    EXPECT_GT(err[0], err[1]);
    EXPECT_GT(err[1], err[2]);
}

TEST(GridSpec, Validation) {
    EXPECT_THROW((GridSpec{1, 5, 5}.validate()), std::invalid_argument);
}

TEST(LogLikelihood, PoissonClosedForm) {
    const auto m = model_of(2.0, 0.0, TemporalKind::Exponential, 1.0, SpatialKind::Gaussian, 0.05);
    EventSequence d;
    for (int i = 0; i < 10; ++i) d.events.push_back({0.1 * i, 0.05 + 0.09 * i, static_cast<double>(i)});
    EXPECT_NEAR(log_likelihood(m, d, unit_window(10.0), {}), 10.0 * std::log(2.0) - 20.0, 1e-12);
    EXPECT_NEAR(log_likelihood(m, d, unit_window(10.0), {}), -13.0685, 1e-4);
}

TEST(LogLikelihood, PoissonRateMaximizesProfile) {
    const Window w = unit_window(50.0);
    const auto d = poisson_pattern(3.0, w, 5);
    const double mu_hat = static_cast<double>(d.size()) / w.volume();
    auto ll = [&](double mu) {
        return log_likelihood(model_of(mu, 0.0, TemporalKind::Exponential, 1.0, SpatialKind::Gaussian, 0.05), d, w, {});
    };
    EXPECT_GT(ll(mu_hat), ll(mu_hat * 1.01));
    EXPECT_GT(ll(mu_hat), ll(mu_hat * 0.99));
}

TEST(LogLikelihood, MatchesDirectSummation) {
    for (auto tk : {TemporalKind::Exponential, TemporalKind::PowerLaw}) {
        for (auto sk : {SpatialKind::Gaussian, SpatialKind::Exponential}) {
            const auto m = model_of(2.0, 0.85, tk, tk == TemporalKind::Exponential ? 1.0 : 3.5, sk, 0.05);
            const Window w = unit_window(20.0);
            const auto d = testing_support::simulate_pattern(m, 50, 20.0);
            const GridSpec g{10, 10, 10};
            const double ll = log_likelihood(m, d, w, g);
            EXPECT_NEAR(ll, brute_log_likelihood(m, d, w, g), 1e-9 * std::abs(ll));
        }
    }
}

TEST(LogLikelihood, TruthBeatsGrosslyWrongParameters) {
    const auto m = testing_support::scenario_1a();
    int wins = 0;
    const int reps = 100;
    for (int r = 0; r < reps; ++r) {
        const auto d = testing_support::simulate_pattern(m, 700 + r, 20.0);
        auto wrong = m;
        wrong.background.mu *= 10.0;
        wins += log_likelihood(m, d, unit_window(20.0), {10, 10, 10}) >
                log_likelihood(wrong, d, unit_window(20.0), {10, 10, 10});
    }
    EXPECT_GE(wins, 95);
}

TEST(LogLikelihood, RequiresOrderedData) {
    EventSequence d;
    d.events = {{0.5, 0.5, 2.0}, {0.5, 0.5, 1.0}};
    EXPECT_THROW(log_likelihood(testing_support::scenario_1a(), d, unit_window(), {}), std::invalid_argument);
}

TEST(FitMle, RejectsTooFewEvents) {
    EventSequence d;
    for (int i = 0; i < 9; ++i) d.events.push_back({0.5, 0.5, static_cast<double>(i)});
    EXPECT_THROW(fit_mle(d, unit_window(), {}, {}), std::invalid_argument);
}

TEST(FitMle, RecoversParametersOnOnePattern) {
    const auto m = testing_support::scenario_1b();
    const auto d = testing_support::simulate_pattern(m, 90);
    const auto r = fit_mle(d, unit_window(), m.kinds(), {});
    EXPECT_TRUE(r.converged);
    EXPECT_TRUE(r.estimate.all_positive());
    EXPECT_NEAR(r.estimate.k, 0.6, 0.12);
    EXPECT_NEAR(r.estimate.temporal, 2.5, 0.6);
    EXPECT_NEAR(r.estimate.spatial, 0.03, 0.005);
    const auto truth_ll = log_likelihood(m, d, unit_window(), {});
    EXPECT_GE(r.objective, truth_ll - 1e-6);
}

TEST(FitMle, InvariantToRowOrderAfterSorting) {
    const auto m = testing_support::scenario_1b();
    auto d = testing_support::simulate_pattern(m, 91, 40.0);
    d.parents.clear();
    MleConfig cfg;
    cfg.grid = {10, 10, 10};
    const auto a = fit_mle(d, unit_window(40.0), m.kinds(), cfg);
    auto shuffled = d;
    std::mt19937 rng(1);
    std::shuffle(shuffled.events.begin(), shuffled.events.end(), rng);
    shuffled.sort_by_time();
    const auto b = fit_mle(shuffled, unit_window(40.0), m.kinds(), cfg);
    EXPECT_EQ(a.estimate.as_array(), b.estimate.as_array());
}

TEST(FitMle, NearZeroKOnPoissonData) {
    double mean_k = 0.0;
    const int reps = 30;
    const MleConfig cfg;
    for (int r = 0; r < reps; ++r) {
        const auto d = poisson_pattern(5.0, unit_window(), 300 + r);
        mean_k += fit_mle(d, unit_window(), {}, cfg).estimate.k / reps;
    }
    EXPECT_LT(mean_k, 0.05);
}
