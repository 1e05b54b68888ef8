#include "sthawkes/background.hpp"
#include "sthawkes/simulate.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace sthawkes;
using testing_support::unit_window;

namespace {

const MixtureParents kExtendedLaw{{{0.2, 0.3, 0.7, 0.01, 0.01}, {0.5, 0.5, 0.5, 0.025, 0.01}, {0.3, 0.7, 0.3, 0.004, 0.004}},
                                  1.0,
                                  2.0};

struct Points {
    std::vector<double> x;
    std::vector<double> y;
};

Points uniform_points(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Points p;
    for (std::size_t i = 0; i < n; ++i) {
        p.x.push_back(uniform(rng, 0.0, 1.0));
        p.y.push_back(uniform(rng, 0.0, 1.0));
    }
    return p;
}

Points mixture_points(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::discrete_distribution<std::size_t> pick({0.2, 0.5, 0.3});
    Points p;
    while (p.x.size() < n) {
        const auto& c = kExtendedLaw.components[pick(rng)];
        const auto [a, b] = polar_normal_pair(rng);
        const double x = c.mean_x + std::sqrt(c.var_x) * a;
        const double y = c.mean_y + std::sqrt(c.var_y) * b;
        if (x < 0.0 || x > 1.0 || y < 0.0 || y > 1.0) continue;
        p.x.push_back(x);
        p.y.push_back(y);
    }
    return p;
}

// Distance from (mx, my) to the nearest strict 3x3 local maximum of the grid.
double nearest_local_max(const SpatialField& f, double mx, double my) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t iy = 1; iy + 1 < f.ny; ++iy) {
        for (std::size_t ix = 1; ix + 1 < f.nx; ++ix) {
            const double v = f.at(ix, iy);
            bool peak = true;
            for (int a = -1; a <= 1 && peak; ++a) {
                for (int b = -1; b <= 1; ++b) {
                    if ((a != 0 || b != 0) && f.at(ix + a, iy + b) >= v) peak = false;
                }
            }
            if (peak) best = std::min(best, std::hypot(f.x_min + f.dx() * ix - mx, f.y_min + f.dy() * iy - my));
        }
    }
    return best;
}

// Edge-corrected LSCV by brute force: fine midpoint grid for the integral and
// exact leave-one-out sums.
double brute_lscv(const Points& p, double h) {
    const double n = static_cast<double>(p.x.size());
    auto cover = [&](double u) { return 0.5 * std::erfc(-(1.0 - u) / (h * std::numbers::sqrt2)) - 0.5 * std::erfc(u / (h * std::numbers::sqrt2)); };
    auto kern = [&](double dx, double dy) { return std::exp(-(dx * dx + dy * dy) / (2 * h * h)) / (2 * std::numbers::pi * h * h); };
    const int g = 300;
    double integral = 0.0;
    for (int a = 0; a < g; ++a) {
        for (int b = 0; b < g; ++b) {
            const double x = (a + 0.5) / g;
            const double y = (b + 0.5) / g;
            double f = 0.0;
            for (std::size_t i = 0; i < p.x.size(); ++i) f += kern(x - p.x[i], y - p.y[i]);
            f /= n * cover(x) * cover(y);
            integral += f * f / (g * g);
        }
    }
    double loo = 0.0;
    for (std::size_t i = 0; i < p.x.size(); ++i) {
        double f = 0.0;
        for (std::size_t j = 0; j < p.x.size(); ++j) {
            if (j != i) f += kern(p.x[i] - p.x[j], p.y[i] - p.y[j]);
        }
        loo += f / ((n - 1) * cover(p.x[i]) * cover(p.y[i]));
    }
    return integral - 2.0 * loo / n;
}

}  // namespace

TEST(TemporalBackground, UniformTimesGiveFlatField) {
    Rng rng(1);
    std::vector<double> t;
    for (int i = 0; i < 5000; ++i) t.push_back(uniform(rng, 0.0, 100.0));
    const auto f = estimate_temporal_background(t, 0.0, 100.0);
    EXPECT_EQ(f.size(), 512U);
    for (double v : f.values) {
        EXPECT_GE(v, 0.85);
        EXPECT_LE(v, 1.15);
    }
    EXPECT_NEAR(field_mean(f), 1.0, 1e-6);
}

TEST(TemporalBackground, BetaTimesGiveDecreasingTrend) {
    Rng rng(2);
    std::vector<double> t;
    for (int i = 0; i < 5000; ++i) t.push_back(100.0 * detail::sample_beta(rng, 1.0, 2.0));
    const auto f = estimate_temporal_background(t, 0.0, 100.0);
    EXPECT_GT(eval_field(f, 1.0), eval_field(f, 99.0));
    std::array<double, 4> quarter{};
    for (std::size_t i = 0; i < f.size(); ++i) quarter[std::min<std::size_t>(3, 4 * i / f.size())] += f.values[i];
    EXPECT_GT(quarter[0], quarter[1]);
    EXPECT_GT(quarter[1], quarter[2]);
    EXPECT_GT(quarter[2], quarter[3]);
    // the density 2(1 - t/100)/100 has mean-one shape 2(1 - t/100)
    EXPECT_NEAR(eval_field(f, 50.0), 1.0, 0.15);
    EXPECT_NEAR(field_mean(f), 1.0, 1e-6);
}

TEST(TemporalBackground, SilvermanRule) {
    const std::vector<double> v{1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0};
    // sd = sqrt(6), IQR = 3.5, 0.9 * min(2.449, 2.612) * 8^(-1/5)
    EXPECT_NEAR(silverman_bandwidth(v), 0.9 * std::sqrt(6.0) * std::pow(8.0, -0.2), 1e-12);
}

TEST(TemporalBackground, RejectsDegenerateInput) {
    EXPECT_THROW(estimate_temporal_background(std::vector<double>(10, 4.0), 0.0, 10.0), std::invalid_argument);
    EXPECT_THROW(estimate_temporal_background(std::vector<double>(10, 4.0), 0.0, 10.0, 512, 1.0), std::invalid_argument);
    EXPECT_THROW(estimate_temporal_background(std::vector<double>{1, 2, 3, 4}, 0.0, 10.0), std::invalid_argument);
    EXPECT_THROW(estimate_temporal_background(std::vector<double>{1, 2, 3, 4, 11}, 0.0, 10.0), std::invalid_argument);
}

TEST(TemporalBackground, UserBandwidthIsUsed) {
    const std::vector<double> t{1, 2, 3, 4, 5, 6};
    const auto f = estimate_temporal_background(t, 0.0, 10.0, 64, 0.7);
    EXPECT_DOUBLE_EQ(f.bandwidth, 0.7);
    EXPECT_EQ(f.size(), 64U);
}

TEST(SpatialBackground, UniformPointsGiveFlatInterior) {
    const auto p = uniform_points(5000, 3);
    const auto f = estimate_spatial_background(p.x, p.y, unit_window());
    EXPECT_EQ(f.nx, 128U);
    for (std::size_t iy = 0; iy < f.ny; ++iy) {
        for (std::size_t ix = 0; ix < f.nx; ++ix) {
            const double x = f.dx() * ix;
            const double y = f.dy() * iy;
            EXPECT_GE(f.at(ix, iy), 0.0);
            if (x < 0.05 || x > 0.95 || y < 0.05 || y > 0.95) continue;
            EXPECT_GE(f.at(ix, iy), 0.8);
            EXPECT_LE(f.at(ix, iy), 1.2);
        }
    }
    EXPECT_NEAR(field_mean(f), 1.0, 1e-6);
}

TEST(SpatialBackground, TrueMixtureModesNearComponentMeans) {
    const auto truth = tabulate_mixture(kExtendedLaw, unit_window()).spatial;
    EXPECT_LE(nearest_local_max(truth, 0.3, 0.7), 0.05);
    EXPECT_LE(nearest_local_max(truth, 0.5, 0.5), 0.05);
    EXPECT_LE(nearest_local_max(truth, 0.7, 0.3), 0.05);
}

TEST(SpatialBackground, MixtureModesNearComponentMeans) {
    const auto p = mixture_points(5000, 1);
    const auto f = estimate_spatial_background(p.x, p.y, unit_window());
    EXPECT_LE(nearest_local_max(f, 0.3, 0.7), 0.05);
    EXPECT_LE(nearest_local_max(f, 0.5, 0.5), 0.05);
    EXPECT_LE(nearest_local_max(f, 0.7, 0.3), 0.05);
    EXPECT_NEAR(field_mean(f), 1.0, 1e-6);
}

TEST(SpatialBackground, BinnedLscvMatchesBruteForce) {
    const auto p = uniform_points(300, 4);
    const LscvScore score(p.x, p.y, unit_window(), 400);
    for (double h : {0.02, 0.05, 0.1}) {
        const double brute = brute_lscv(p, h);
        EXPECT_NEAR(score(h), brute, 0.01 * std::abs(brute)) << "h = " << h;
    }
}

TEST(SpatialBackground, LscvPrefersNarrowKernelForClusteredData) {
    const auto u = uniform_points(2000, 5);
    const auto c = mixture_points(2000, 5);
    EXPECT_LT(lscv_bandwidth(c.x, c.y, unit_window()), lscv_bandwidth(u.x, u.y, unit_window()));
}

TEST(SpatialBackground, RejectsDegenerateInput) {
    const std::vector<double> same(10, 0.4);
    EXPECT_THROW(estimate_spatial_background(same, same, unit_window()), std::invalid_argument);
    EXPECT_THROW(estimate_spatial_background(same, same, unit_window(), 128, 0.05), std::invalid_argument);
    const std::vector<double> four{0.1, 0.2, 0.3, 0.4};
    EXPECT_THROW(estimate_spatial_background(four, four, unit_window()), std::invalid_argument);
    const std::vector<double> outside{0.1, 0.2, 0.3, 0.4, 1.5};
    EXPECT_THROW(estimate_spatial_background(outside, outside, unit_window()), std::invalid_argument);
}

TEST(Background, TranslationEquivariant) {
    const auto m = testing_support::scenario_1b();
    const auto d = testing_support::simulate_pattern(m, 6, 50.0);
    const Window w = unit_window(50.0);
    EventSequence shifted = d;
    for (auto& e : shifted.events) {
        e.x += 3.0;
        e.y -= 2.0;
        e.t += 40.0;
    }
    const Window ws(3.0, 4.0, -2.0, -1.0, 40.0, 90.0);
    const auto a = estimate_background(d, w);
    const auto b = estimate_background(shifted, ws);
    EXPECT_NEAR(a.spatial.bandwidth, b.spatial.bandwidth, 1e-12);
    EXPECT_NEAR(a.temporal.bandwidth, b.temporal.bandwidth, 1e-9);
    for (std::size_t i = 0; i < a.spatial.values.size(); ++i) {
        ASSERT_NEAR(a.spatial.values[i], b.spatial.values[i], 1e-8 * std::max(1.0, a.spatial.values[i]));
    }
    for (std::size_t i = 0; i < a.temporal.values.size(); ++i) {
        ASSERT_NEAR(a.temporal.values[i], b.temporal.values[i], 1e-8);
    }
    EXPECT_NEAR(eval_field(a.spatial, 0.3, 0.6), eval_field(b.spatial, 3.3, -1.4), 1e-8);
}

TEST(Background, DeterministicAndUsableAsShape) {
    const auto m = testing_support::scenario_1b();
    const auto d = testing_support::simulate_pattern(m, 7, 50.0);
    const auto a = estimate_background(d, unit_window(50.0));
    const auto b = estimate_background(d, unit_window(50.0));
    EXPECT_EQ(a.spatial.values, b.spatial.values);
    EXPECT_EQ(a.temporal.values, b.temporal.values);
    EXPECT_EQ(a.spatial.bandwidth, b.spatial.bandwidth);
    const auto model = make_model({4.0, 0.6, 2.5, 0.03}, m.kinds(), a);
    EXPECT_NO_THROW(validate(model));
    EXPECT_GT(eval_background(model.background, 0.5, 0.5, 10.0), 0.0);
}
