#pragma once

#include "sthawkes/background.hpp"
#include "sthawkes/bayes.hpp"
#include "sthawkes/em.hpp"
#include "sthawkes/io.hpp"
#include "sthawkes/likelihood.hpp"
#include "sthawkes/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace sthawkes {

enum class FitMethod { Mle, Em, Bayes };

inline std::string_view to_string(FitMethod m) {
    switch (m) {
        case FitMethod::Mle: return "mle";
        case FitMethod::Em: return "em";
        case FitMethod::Bayes: return "bayes";
    }
    return "?";
}

inline FitMethod parse_fit_method(std::string_view s) {
    if (s == "mle" || s == "likelihood") return FitMethod::Mle;
    if (s == "em") return FitMethod::Em;
    if (s == "bayes" || s == "inla") return FitMethod::Bayes;
    throw std::invalid_argument("unknown fit method '" + std::string(s) + "' (expected mle, em or bayes)");
}

struct Scenario {
    std::string id;
    std::string description;
    HawkesModel model;
    Window window{0.0, 1.0, 0.0, 1.0, 0.0, 100.0};
    SimMethod sim_method = SimMethod::Thinning;
    int reps = 30;
    std::vector<FitMethod> methods{FitMethod::Mle, FitMethod::Em, FitMethod::Bayes};
    MleConfig mle;
    EmConfig em;
    BayesConfig bayes;
    std::uint64_t seed_base = 1;
    /// Parents drawn from this law instead of the homogeneous background.
    std::optional<MixtureParents> parent_law;
    /// Fit with background fields estimated by kernel smoothing from each pattern.
    bool estimate_background = false;

    void validate() const {
        if (reps < 1) throw std::invalid_argument("scenario needs at least one replication");
        if (!(model.k < 1.0)) throw std::invalid_argument("scenario model must be subcritical (k < 1)");
        sthawkes::validate(model);
        window.validate();
    }
};

namespace detail {

inline Scenario table1_scenario(std::string id, ParameterVector p, TriggerKinds kinds) {
    Scenario s;
    s.id = std::move(id);
    s.model = make_model(p, kinds);
    s.description = "temporal " + std::string(to_string(kinds.temporal)) + ", spatial " +
                    std::string(to_string(kinds.spatial));
    return s;
}

}  // namespace detail

/// The eight estimation scenarios, the two simulator-comparison settings and
/// the extended non-constant-background case.
inline std::vector<Scenario> builtin_scenarios() {
    using TK = TemporalKind;
    using SK = SpatialKind;
    std::vector<Scenario> out;
    out.push_back(detail::table1_scenario("1a", {2.0, 0.85, 1.0, 0.05}, {TK::Exponential, SK::Gaussian}));
    out.push_back(detail::table1_scenario("1b", {4.0, 0.6, 2.5, 0.03}, {TK::Exponential, SK::Gaussian}));
    out.push_back(detail::table1_scenario("2a", {2.0, 0.85, 1.0, 0.02}, {TK::Exponential, SK::Exponential}));
    out.push_back(detail::table1_scenario("2b", {4.0, 0.6, 2.5, 0.01}, {TK::Exponential, SK::Exponential}));
    out.push_back(detail::table1_scenario("3a", {3.0, 0.75, 3.5, 0.05}, {TK::PowerLaw, SK::Gaussian}));
    out.push_back(detail::table1_scenario("3b", {5.0, 0.5, 6.0, 0.03}, {TK::PowerLaw, SK::Gaussian}));
    out.push_back(detail::table1_scenario("4a", {3.0, 0.75, 3.5, 0.02}, {TK::PowerLaw, SK::Exponential}));
    out.push_back(detail::table1_scenario("4b", {5.0, 0.5, 6.0, 0.01}, {TK::PowerLaw, SK::Exponential}));

    for (auto [id, p] : {std::pair<const char*, ParameterVector>{"sim-i", {5.0, 0.5, 2.5, 0.03}},
                         std::pair<const char*, ParameterVector>{"sim-ii", {3.0, 0.9, 1.0, 0.05}}}) {
        Scenario s = detail::table1_scenario(id, p, {});
        s.description = "simulator comparison (event counts only)";
        s.methods.clear();
        s.reps = 100;
        out.push_back(std::move(s));
    }

    Scenario ext;
    ext.id = "extended";
    ext.description = "mixture parents, Beta(1,2) times, kernel-smoothed background";
    ext.parent_law = MixtureParents{{{0.2, 0.3, 0.7, 0.01, 0.01}, {0.5, 0.5, 0.5, 0.025, 0.01}, {0.3, 0.7, 0.3, 0.004, 0.004}},
                                    1.0,
                                    2.0};
    ext.model = make_model({5.0, 0.75, 3.0, 0.01}, {}, tabulate_mixture(*ext.parent_law, ext.window));
    ext.sim_method = SimMethod::ParentsOffspring;
    ext.estimate_background = true;
    ext.reps = 10;
    out.push_back(std::move(ext));
    return out;
}

inline std::vector<std::string> builtin_scenario_ids() {
    std::vector<std::string> ids;
    for (const auto& s : builtin_scenarios()) ids.push_back(s.id);
    return ids;
}

inline Scenario find_scenario(std::string_view id) {
    for (auto& s : builtin_scenarios()) {
        if (s.id == id) return s;
    }
    std::string known;
    for (const auto& k : builtin_scenario_ids()) known += (known.empty() ? "" : ", ") + k;
    throw std::invalid_argument("unknown scenario '" + std::string(id) + "'; valid ids: " + known);
}

/// Mean absolute deviation of `estimates` from `truth`.
inline double compute_mae(const std::vector<double>& estimates, double truth) {
    if (estimates.empty()) throw std::invalid_argument("MAE of an empty list");
    double s = 0.0;
    for (double v : estimates) s += std::abs(v - truth);
    return s / static_cast<double>(estimates.size());
}

struct ReplicationRecord {
    int rep = 0;
    std::uint64_t seed = 0;
    std::optional<FitMethod> method;  // empty for simulation-only rows
    std::size_t n_events = 0;
    ParameterVector estimate;
    double seconds = 0.0;
    bool ok = true;
    std::string error;
};

struct ParameterMetrics {
    double mae = 0.0;
    double mean = 0.0;
    double sd = 0.0;
};

struct MethodMetrics {
    FitMethod method = FitMethod::Em;
    std::array<ParameterMetrics, 4> params{};
    int ok = 0;
    int failed = 0;
    double mean_seconds = 0.0;
};

struct MetricsTable {
    std::string scenario;
    ParameterVector truth;
    TriggerKinds kinds;
    double mean_events = 0.0;
    double sd_events = 0.0;
    double mean_sim_seconds = 0.0;
    std::vector<MethodMetrics> methods;
    std::vector<ReplicationRecord> raw;

    const MethodMetrics& at(FitMethod m) const {
        for (const auto& x : methods) {
            if (x.method == m) return x;
        }
        throw std::out_of_range("method not in metrics table");
    }
};

namespace detail {

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline double sd_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

inline double elapsed(std::chrono::steady_clock::time_point since) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

struct RepOutput {
    std::size_t n_events = 0;
    double sim_seconds = 0.0;
    std::vector<ReplicationRecord> fits;
};

}  // namespace detail

/// Simulates replication `rep` of a scenario (seed = seed_base + rep).
inline SimResult simulate_scenario(const Scenario& sc, int rep) {
    SimConfig sim;
    sim.seed = sc.seed_base + static_cast<std::uint64_t>(rep);
    sim.method = sc.sim_method;
    return sc.parent_law ? simulate_parents_offspring(sc.model, sc.window, sim, *sc.parent_law)
                         : simulate(sc.model, sc.window, sim);
}

namespace detail {

inline RepOutput run_replication(const Scenario& sc, int rep) {
    RepOutput out;
    const auto t0 = std::chrono::steady_clock::now();
    const SimResult res = simulate_scenario(sc, rep);
    out.sim_seconds = elapsed(t0);
    const std::uint64_t seed = sc.seed_base + static_cast<std::uint64_t>(rep);
    const EventSequence& data = res.events;
    out.n_events = data.size();

    std::optional<SeparableShape> shape;
    std::string shape_error;
    if (sc.estimate_background && !sc.methods.empty()) {
        try {
            shape = estimate_background(data, sc.window);
        } catch (const std::exception& e) {
            shape_error = e.what();
        }
    }

    for (FitMethod m : sc.methods) {
        ReplicationRecord r;
        r.rep = rep;
        r.seed = seed;
        r.method = m;
        r.n_events = data.size();
        const auto start = std::chrono::steady_clock::now();
        try {
            if (sc.estimate_background && !shape) throw std::runtime_error("background estimation failed: " + shape_error);
            switch (m) {
                case FitMethod::Mle: {
                    MleConfig c = sc.mle;
                    if (shape) c.background_shape = shape;
                    r.estimate = fit_mle(data, sc.window, sc.model.kinds(), c).estimate;
                    break;
                }
                case FitMethod::Em: {
                    EmConfig c = sc.em;
                    if (shape) c.background_shape = shape;
                    c.track_loglik = false;
                    r.estimate = fit_em(data, sc.window, sc.model.kinds(), c).estimate;
                    break;
                }
                case FitMethod::Bayes: {
                    BayesConfig c = sc.bayes;
                    if (shape) c.background_shape = shape;
                    r.estimate = fit_bayes(data, sc.window, sc.model.kinds(), c).mean;
                    break;
                }
            }
            if (!r.estimate.all_positive()) throw std::runtime_error("non-finite or non-positive estimate");
        } catch (const std::exception& e) {
            r.ok = false;
            r.error = e.what();
        }
        r.seconds = elapsed(start);
        out.fits.push_back(std::move(r));
    }
    return out;
}

}  // namespace detail

/// Simulates and fits every replication (seed = seed_base + index), spreading
/// replications over `parallelism` threads; aggregates do not depend on the
/// thread count.
inline MetricsTable run_scenario(const Scenario& sc, int parallelism = 1) {
    sc.validate();
    if (parallelism < 1) throw std::invalid_argument("parallelism must be >= 1");
    std::vector<detail::RepOutput> reps(static_cast<std::size_t>(sc.reps));
    std::atomic<int> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    auto worker = [&] {
        for (int i = next++; i < sc.reps; i = next++) {
            try {
                reps[static_cast<std::size_t>(i)] = detail::run_replication(sc, i);
            } catch (...) {
                std::lock_guard lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    const int threads = std::min(parallelism, sc.reps);
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    MetricsTable table;
    table.scenario = sc.id;
    table.truth = sc.model.parameters();
    table.kinds = sc.model.kinds();
    std::vector<double> counts;
    std::vector<double> sim_seconds;
    for (int i = 0; i < sc.reps; ++i) {
        const auto& r = reps[static_cast<std::size_t>(i)];
        counts.push_back(static_cast<double>(r.n_events));
        sim_seconds.push_back(r.sim_seconds);
        ReplicationRecord row;
        row.rep = i;
        row.seed = sc.seed_base + static_cast<std::uint64_t>(i);
        row.n_events = r.n_events;
        row.seconds = r.sim_seconds;
        table.raw.push_back(row);
        for (const auto& f : r.fits) table.raw.push_back(f);
    }
    table.mean_events = detail::mean_of(counts);
    table.sd_events = detail::sd_of(counts);
    table.mean_sim_seconds = detail::mean_of(sim_seconds);

    const auto truth = table.truth.as_array();
    for (FitMethod m : sc.methods) {
        MethodMetrics mm;
        mm.method = m;
        std::array<std::vector<double>, 4> est;
        std::vector<double> secs;
        for (const auto& r : table.raw) {
            if (r.method != m) continue;
            if (!r.ok) {
                ++mm.failed;
                continue;
            }
            ++mm.ok;
            secs.push_back(r.seconds);
            const auto a = r.estimate.as_array();
            for (std::size_t p = 0; p < 4; ++p) est[p].push_back(a[p]);
        }
        if (mm.ok > 0) {
            for (std::size_t p = 0; p < 4; ++p) {
                mm.params[p] = {compute_mae(est[p], truth[p]), detail::mean_of(est[p]), detail::sd_of(est[p])};
            }
        }
        mm.mean_seconds = detail::mean_of(secs);
        table.methods.push_back(mm);
    }
    return table;
}

inline std::array<std::string, 4> parameter_labels(TriggerKinds kinds) {
    return {"mu", "k", std::string(parameter_name(kinds.temporal)), std::string(parameter_name(kinds.spatial))};
}

/// method,parameter,mae,mean,sd,n_ok,n_failed,mean_seconds; simulation-only
/// scenarios get a single "events" row.
inline void write_metrics_csv(std::ostream& os, const MetricsTable& t) {
    const auto sims = std::count_if(t.raw.begin(), t.raw.end(), [](const auto& r) { return !r.method; });
    os << "method,parameter,mae,mean,sd,n_ok,n_failed,mean_seconds\n";
    os << "simulate,events,," << format_double(t.mean_events) << ',' << format_double(t.sd_events) << ',' << sims
       << ",0," << format_double(t.mean_sim_seconds) << '\n';
    const auto labels = parameter_labels(t.kinds);
    for (const auto& m : t.methods) {
        for (std::size_t p = 0; p < 4; ++p) {
            const auto& pm = m.params[p];
            os << to_string(m.method) << ',' << labels[p] << ',';
            if (m.ok > 0) {
                os << format_double(pm.mae) << ',' << format_double(pm.mean) << ',' << format_double(pm.sd);
            } else {
                os << ",,";
            }
            os << ',' << m.ok << ',' << m.failed << ',' << format_double(m.mean_seconds) << '\n';
        }
    }
}

/// One row per replication and method; method "simulate" rows carry the
/// simulation time and event count.
/// One row per replication and method; simulation-only scenarios get one
/// "simulate" row per replication instead.
inline void write_raw_csv(std::ostream& os, const MetricsTable& t) {
    const auto labels = parameter_labels(t.kinds);
    const bool fits = !t.methods.empty();
    os << "rep,seed,method,n_events," << labels[0] << ',' << labels[1] << ',' << labels[2] << ',' << labels[3]
       << ",seconds,status\n";
    for (const auto& r : t.raw) {
        if (fits && !r.method) continue;
        os << r.rep << ',' << r.seed << ',' << (r.method ? to_string(*r.method) : "simulate") << ',' << r.n_events << ',';
        if (r.method && r.ok) {
            os << format_double(r.estimate.mu) << ',' << format_double(r.estimate.k) << ','
               << format_double(r.estimate.temporal) << ',' << format_double(r.estimate.spatial);
        } else {
            os << ",,,";
        }
        std::string status = r.ok ? "ok" : "failed: " + r.error;
        std::replace(status.begin(), status.end(), ',', ';');
        std::replace(status.begin(), status.end(), '\n', ' ');
        os << ',' << format_double(r.seconds) << ',' << status << '\n';
    }
}

inline json to_json(const Scenario& s) {
    json methods = json::array();
    for (auto m : s.methods) methods.push_back(to_string(m));
    json j = {{"id", s.id},
              {"description", s.description},
              {"model", to_json(make_model(s.model.parameters(), s.model.kinds()))},
              {"window", to_json(s.window)},
              {"simulation", to_string(s.sim_method)},
              {"reps", s.reps},
              {"seed_base", s.seed_base},
              {"methods", methods},
              {"mle", {{"grid", {s.mle.grid.nx, s.mle.grid.ny, s.mle.grid.nt}}, {"max_evals", s.mle.max_evals}}},
              {"em", {{"max_iters", s.em.max_iters}, {"tolerance", s.em.tolerance},
                      {"metric", s.em.metric == EmConvergence::ParamDelta ? "param" : "intensity"}}},
              {"bayes",
               {{"delta_t", s.bayes.binning.delta_t},
                {"growth_t", s.bayes.binning.growth},
                {"n_max", s.bayes.binning.n_max},
                {"delta_s", s.bayes.banding.delta_s},
                {"growth_s", s.bayes.banding.growth},
                {"n_circles", s.bayes.banding.n_circles},
                {"mc_points", s.bayes.banding.mc_points},
                {"weight_seed", s.bayes.banding.seed},
                {"mcmc", s.bayes.mcmc}}},
              {"estimate_background", s.estimate_background}};
    if (s.parent_law) {
        json comps = json::array();
        for (const auto& c : s.parent_law->components) {
            comps.push_back({{"weight", c.weight}, {"mean", {c.mean_x, c.mean_y}}, {"var", {c.var_x, c.var_y}}});
        }
        j["parent_law"] = {{"components", comps}, {"beta", {s.parent_law->beta_a, s.parent_law->beta_b}}};
    }
    return j;
}

/// Inverse of to_json(Scenario). Missing fields keep the defaults of a
/// fresh Scenario, so a hand-written file only needs "id" and "model".
inline Scenario scenario_from_json(const json& j) {
    try {
        Scenario s;
        s.id = j.at("id").get<std::string>();
        s.description = j.value("description", "");
        if (j.contains("window")) s.window = window_from_json(j.at("window"));
        if (j.contains("simulation")) s.sim_method = parse_sim_method(j.at("simulation").get<std::string>());
        s.reps = j.value("reps", s.reps);
        s.seed_base = j.value("seed_base", s.seed_base);
        if (j.contains("methods")) {
            s.methods.clear();
            for (const auto& m : j.at("methods")) s.methods.push_back(parse_fit_method(m.get<std::string>()));
        }
        if (j.contains("mle")) {
            const auto& m = j.at("mle");
            if (m.contains("grid")) {
                const auto g = m.at("grid").get<std::vector<int>>();
                if (g.size() != 3) throw std::invalid_argument("mle grid needs three sizes");
                s.mle.grid = {g[0], g[1], g[2]};
            }
            s.mle.max_evals = m.value("max_evals", s.mle.max_evals);
        }
        if (j.contains("em")) {
            const auto& e = j.at("em");
            s.em.max_iters = e.value("max_iters", s.em.max_iters);
            s.em.tolerance = e.value("tolerance", s.em.tolerance);
            if (e.value("metric", std::string("param")) == "intensity") s.em.metric = EmConvergence::IntensityDelta;
        }
        if (j.contains("bayes")) {
            const auto& b = j.at("bayes");
            s.bayes.binning.delta_t = b.value("delta_t", s.bayes.binning.delta_t);
            s.bayes.binning.growth = b.value("growth_t", s.bayes.binning.growth);
            s.bayes.binning.n_max = b.value("n_max", s.bayes.binning.n_max);
            s.bayes.banding.delta_s = b.value("delta_s", s.bayes.banding.delta_s);
            s.bayes.banding.growth = b.value("growth_s", s.bayes.banding.growth);
            s.bayes.banding.n_circles = b.value("n_circles", s.bayes.banding.n_circles);
            s.bayes.banding.mc_points = b.value("mc_points", s.bayes.banding.mc_points);
            s.bayes.banding.seed = b.value("weight_seed", s.bayes.banding.seed);
            s.bayes.mcmc = b.value("mcmc", false);
        }
        s.estimate_background = j.value("estimate_background", false);
        std::optional<SeparableShape> shape;
        if (j.contains("parent_law")) {
            const auto& pl = j.at("parent_law");
            MixtureParents law;
            for (const auto& c : pl.at("components")) {
                const auto mean = c.at("mean").get<std::vector<double>>();
                const auto var = c.at("var").get<std::vector<double>>();
                if (mean.size() != 2 || var.size() != 2) throw std::invalid_argument("mixture component needs 2-d mean and var");
                law.components.push_back({c.at("weight").get<double>(), mean[0], mean[1], var[0], var[1]});
            }
            const auto beta = pl.at("beta").get<std::vector<double>>();
            if (beta.size() != 2) throw std::invalid_argument("parent_law beta needs two shapes");
            law.beta_a = beta[0];
            law.beta_b = beta[1];
            s.parent_law = law;
            shape = tabulate_mixture(law, s.window);
        }
        const auto m = model_from_json(j.at("model"));
        s.model = make_model(m.parameters(), m.kinds(), shape ? shape : m.background.shape);
        s.validate();
        return s;
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("malformed scenario JSON: ") + e.what());
    }
}

}  // namespace sthawkes
