#include "sthawkes/model.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <random>

using namespace sthawkes;
using testing_support::model_of;

namespace {

// Composite Simpson on [a, b] with n (even) panels.
template <typename F>
double simpson(F&& f, double a, double b, int n) {
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

}  // namespace

TEST(Window, RejectsInvalidBounds) {
    EXPECT_THROW(Window(1, 0, 0, 1, 0, 1), std::invalid_argument);
    EXPECT_THROW(Window(0, 1, 0, 1, -1, 1), std::invalid_argument);
    EXPECT_THROW(Window(0, 1, 0, 1, 2, 2), std::invalid_argument);
    const Window w(0, 2, 0, 3, 1, 5);
    EXPECT_DOUBLE_EQ(w.volume(), 24.0);
}

TEST(TemporalTrigger, Examples) {
    EXPECT_DOUBLE_EQ(eval_temporal_trigger({TemporalKind::Exponential, 1.0}, 0.0), 1.0);
    EXPECT_DOUBLE_EQ(eval_temporal_trigger({TemporalKind::PowerLaw, 3.5}, 0.0), 2.5);
    EXPECT_NEAR(eval_temporal_trigger({TemporalKind::Exponential, 2.5}, 1.0), 0.2052124966, 1e-10);
    EXPECT_THROW(eval_temporal_trigger({TemporalKind::Exponential, 1.0}, -0.1), std::domain_error);
}

TEST(TemporalTrigger, PowerLawNeedsExponentAboveOne) {
    EXPECT_THROW(validate(TemporalTrigger{TemporalKind::PowerLaw, 1.0}), std::invalid_argument);
    EXPECT_NO_THROW(validate(TemporalTrigger{TemporalKind::PowerLaw, 1.01}));
    EXPECT_THROW(validate(SpatialTrigger{SpatialKind::Gaussian, 0.0}), std::invalid_argument);
}

TEST(SpatialTrigger, Examples) {
    EXPECT_NEAR(eval_spatial_trigger({SpatialKind::Gaussian, 0.05}, 0, 0), 63.6619772, 1e-7);
    EXPECT_NEAR(eval_spatial_trigger({SpatialKind::Exponential, 0.02}, 0, 0), 397.8873577, 1e-6);
    const SpatialTrigger g{SpatialKind::Gaussian, 0.05};
    EXPECT_DOUBLE_EQ(eval_spatial_trigger(g, 0.1, -0.1), eval_spatial_trigger(g, -0.1, 0.1));
    EXPECT_THROW(eval_spatial_trigger(g, std::nan(""), 0.0), std::domain_error);
}

TEST(SpatialTrigger, LogDensityAgreesWithDensity) {
    for (auto kind : {SpatialKind::Gaussian, SpatialKind::Exponential}) {
        const SpatialTrigger g{kind, 0.03};
        for (double r : {0.0, 0.01, 0.05, 0.2}) {
            EXPECT_NEAR(std::exp(log_spatial_density_r2(g, r * r)), testing_support::naive_spatial(g, r, 0.0),
                        1e-12 * testing_support::naive_spatial(g, 0, 0));
        }
    }
}

TEST(TriggerProperties, TemporalDensitiesIntegrateToOne) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> alpha(0.2, 5.0);
    std::uniform_real_distribution<double> gamma(1.5, 7.0);
    for (int rep = 0; rep < 20; ++rep) {
        const TemporalTrigger e{TemporalKind::Exponential, alpha(rng)};
        const double ie = simpson([&](double s) { return eval_temporal_trigger(e, s); }, 0.0, 60.0 / e.param, 20000);
        EXPECT_NEAR(ie, 1.0, 1e-6) << "alpha=" << e.param;

        const TemporalTrigger p{TemporalKind::PowerLaw, gamma(rng)};
        // v = log(1 + dt) turns the power-law tail into an exponential one
        const double ip = simpson(
            [&](double v) { return eval_temporal_trigger(p, std::expm1(v)) * std::exp(v); }, 0.0,
            60.0 / (p.param - 1.0), 20000);
        EXPECT_NEAR(ip, 1.0, 1e-6) << "gamma=" << p.param;
    }
}

TEST(TriggerProperties, SpatialDensitiesIntegrateToOne) {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> scale(0.005, 0.2);
    for (int rep = 0; rep < 20; ++rep) {
        for (auto kind : {SpatialKind::Gaussian, SpatialKind::Exponential}) {
            const SpatialTrigger g{kind, scale(rng)};
            // polar quadrature on the disc of radius 20 scale
            const double total = simpson(
                [&](double r) { return 2.0 * std::numbers::pi * r * eval_spatial_trigger(g, r, 0.0); }, 0.0,
                20.0 * g.param, 4000);
            EXPECT_NEAR(total, 1.0, 1e-4) << "scale=" << g.param;
        }
    }
}

TEST(TriggerProperties, CdfsMatchQuadrature) {
    const TemporalTrigger p{TemporalKind::PowerLaw, 3.5};
    EXPECT_NEAR(temporal_cdf(p, 2.0), simpson([&](double s) { return eval_temporal_trigger(p, s); }, 0, 2, 2000), 1e-10);
    const SpatialTrigger e{SpatialKind::Exponential, 0.02};
    const double disc = simpson([&](double r) { return 2 * std::numbers::pi * r * eval_spatial_trigger(e, r, 0); }, 0,
                                0.05, 2000);
    EXPECT_NEAR(spatial_radial_cdf(e, 0.05), disc, 1e-10);
    EXPECT_DOUBLE_EQ(spatial_radial_cdf(e, std::numeric_limits<double>::infinity()), 1.0);
}

TEST(ConditionalIntensity, Examples) {
    const auto m = model_of(2.0, 0.85, TemporalKind::Exponential, 1.0, SpatialKind::Gaussian, 0.05);
    EventSequence empty;
    EXPECT_DOUBLE_EQ(conditional_intensity(m, empty, 0.3, 0.3, 5.0), 2.0);

    EventSequence one;
    one.events = {{0.5, 0.5, 0.0}};
    const double expected = 2.0 + 0.85 * std::exp(-1.0) / (2.0 * std::numbers::pi * 0.0025);
    EXPECT_NEAR(conditional_intensity(m, one, 0.5, 0.5, 1.0), expected, 1e-10);
    // the hand-rounded reference value 21.9081 is off in the fourth decimal
    EXPECT_NEAR(conditional_intensity(m, one, 0.5, 0.5, 1.0), 21.9081, 2e-3);

    auto m0 = m;
    m0.k = 0.0;
    EXPECT_DOUBLE_EQ(conditional_intensity(m0, one, 0.5, 0.5, 1.0), 2.0);
}

TEST(ConditionalIntensity, RejectsUnorderedHistory) {
    const auto m = testing_support::scenario_1a();
    EventSequence bad;
    bad.events = {{0.5, 0.5, 2.0}, {0.5, 0.5, 1.0}};
    EXPECT_THROW(conditional_intensity(m, bad, 0.5, 0.5, 3.0), std::invalid_argument);
}

TEST(ConditionalIntensity, FutureEventsNeverContribute) {
    const auto m = testing_support::scenario_1a();
    const auto d = testing_support::simulate_pattern(m, 3, 20.0);
    ASSERT_GT(d.size(), 20u);
    for (double t : {2.0, 7.5, 13.0}) {
        EventSequence past;
        for (const auto& e : d.events)
            if (e.t < t) past.events.push_back(e);
        EXPECT_DOUBLE_EQ(conditional_intensity(m, d, 0.4, 0.6, t), conditional_intensity(m, past, 0.4, 0.6, t));
    }
}

TEST(ConditionalIntensity, MonotoneInK) {
    const auto base = testing_support::scenario_1a();
    const auto d = testing_support::simulate_pattern(base, 4, 20.0);
    double prev = 0.0;
    for (double k : {0.0, 0.1, 0.4, 0.85, 0.99}) {
        auto m = base;
        m.k = k;
        const double v = conditional_intensity(m, d, 0.5, 0.5, 15.0);
        EXPECT_GE(v, prev);
        prev = v;
    }
}

TEST(ConditionalIntensity, MatchesNaiveSum) {
    const auto m = model_of(3.0, 0.75, TemporalKind::PowerLaw, 3.5, SpatialKind::Exponential, 0.02);
    const auto d = testing_support::simulate_pattern(m, 5, 30.0);
    for (std::size_t i = 1; i < d.size(); i += 7) {
        EventSequence hist;
        hist.events.assign(d.events.begin(), d.events.begin() + static_cast<long>(i));
        const double v = conditional_intensity(m, hist, d[i].x, d[i].y, d[i].t);
        EXPECT_NEAR(v, testing_support::naive_intensity(m, d, i), 1e-12 * v);
    }
}

TEST(Background, ConstantAndSeparable) {
    BackgroundModel c{4.0, std::nullopt};
    EXPECT_DOUBLE_EQ(eval_background(c, 0.1, 0.9, 3.0), 4.0);

    SeparableShape ones;
    ones.temporal = {0.0, 10.0, std::vector<double>(11, 1.0)};
    ones.spatial.nx = ones.spatial.ny = 5;
    ones.spatial.values.assign(25, 1.0);
    BackgroundModel s{3.0, ones};
    EXPECT_NO_THROW(validate(s));
    EXPECT_DOUBLE_EQ(eval_background(s, 0.37, 0.81, 4.4), 3.0);

    SeparableShape prod = ones;
    prod.spatial.values.assign(25, 2.0);
    prod.temporal.values.assign(11, 0.5);
    BackgroundModel p{5.0, prod};
    EXPECT_DOUBLE_EQ(eval_background(p, 0.5, 0.5, 5.0), 5.0);
    EXPECT_THROW(validate(p), std::invalid_argument);  // fields are not mean one
    EXPECT_THROW(eval_background(s, 1.5, 0.5, 1.0), std::domain_error);
    EXPECT_THROW(eval_background(s, 0.5, 0.5, 11.0), std::domain_error);
}

TEST(Field, Interpolation) {
    TemporalField f{0.0, 2.0, {1.0, 3.0, 2.0}};
    EXPECT_DOUBLE_EQ(eval_field(f, 1.0), 3.0);
    EXPECT_DOUBLE_EQ(eval_field(f, 0.5), 2.0);
    EXPECT_DOUBLE_EQ(eval_field(f, 2.0), 2.0);
    SpatialField s;
    s.nx = 2;
    s.ny = 2;
    s.values = {0.0, 1.0, 2.0, 3.0};
    EXPECT_DOUBLE_EQ(eval_field(s, 0.0, 1.0), 2.0);
    EXPECT_DOUBLE_EQ(eval_field(s, 0.5, 0.5), 1.5);
    EXPECT_DOUBLE_EQ(eval_field(s, 0.5, 0.0), 0.5);
}

TEST(Field, Normalization) {
    TemporalField f{0.0, 1.0, {1.0, 2.0, 3.0, 4.0}};
    normalize_mean_one(f);
    EXPECT_NEAR(field_mean(f), 1.0, 1e-12);
    TemporalField z{0.0, 1.0, {0.0, 0.0}};
    EXPECT_THROW(normalize_mean_one(z), std::invalid_argument);
}

TEST(EventSequence, StableSortRemapsLabels) {
    EventSequence d;
    d.events = {{0, 0, 3.0}, {0, 0, 1.0}, {0, 0, 2.0}, {1, 1, 1.0}};
    d.parents = {kBackgroundLabel, kBackgroundLabel, 1, 1};
    d.sort_by_time();
    ASSERT_TRUE(d.is_time_ordered());
    EXPECT_EQ(d[0].x, 0.0);  // tie at t=1 keeps insertion order
    EXPECT_EQ(d[1].x, 1.0);
    EXPECT_EQ(d.parents[1], 0);
    EXPECT_EQ(d.parents[2], 0);
    EXPECT_EQ(d.parents[3], kBackgroundLabel);
}

TEST(Kinds, ParseAndPrint) {
    EXPECT_EQ(parse_temporal_kind("powerlaw"), TemporalKind::PowerLaw);
    EXPECT_EQ(parse_spatial_kind(to_string(SpatialKind::Exponential)), SpatialKind::Exponential);
    EXPECT_THROW(parse_temporal_kind("weibull"), std::invalid_argument);
}
