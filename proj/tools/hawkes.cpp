#include "sthawkes/sthawkes.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#ifndef STHAWKES_VERSION
#define STHAWKES_VERSION "dev"
#endif

namespace fs = std::filesystem;
using namespace sthawkes;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitUsage = 2;

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t tt = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::uint64_t default_seed() {
    if (const char* env = std::getenv("HAWKES_SEED")) {
        const std::string s(env);
        std::size_t used = 0;
        unsigned long long v = 0;
        try {
            v = std::stoull(s, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != s.size()) throw std::invalid_argument("HAWKES_SEED is not an unsigned integer: " + s);
        return v;
    }
    return 1;
}

Window window_from_flags(const std::vector<double>& v) {
    if (v.size() != 6) throw std::invalid_argument("--window needs six numbers: x0 x1 y0 y1 t0 t1");
    return Window(v[0], v[1], v[2], v[3], v[4], v[5]);
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw std::invalid_argument(path + ": " + e.what());
    }
}

std::string to_text(const std::function<void(std::ostream&)>& writer) {
    std::ostringstream os;
    writer(os);
    return os.str();
}

// Everything a manifest carries besides the subcommand-specific parts.
json manifest_base(const std::string& subcommand, const CLI::App& app, const std::string& started) {
    return {{"subcommand", subcommand},
            {"version", STHAWKES_VERSION},
            {"flags", app.config_to_str(true, false)},
            {"started_at", started}};
}

void finish_manifest(json& m, const fs::path& path, std::vector<std::string> outputs) {
    outputs.push_back(path.string());
    m["finished_at"] = utc_now();
    m["outputs"] = outputs;
    write_file_atomic(path, m.dump(2) + "\n");
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
    std::string scenario;
    std::string model_path;
    std::optional<double> mu, k, temporal_param, spatial_param;
    std::string temporal = "exp";
    std::string spatial = "gauss";
    std::vector<double> window;
    std::string method;
    int reps = 1;
    std::optional<std::uint64_t> seed;
    std::string out = ".";
};

int cmd_simulate(const SimulateArgs& a, const CLI::App& app) {
    const std::string started = utc_now();
    Scenario sc;
    if (!a.scenario.empty()) {
        if (!a.model_path.empty()) throw std::invalid_argument("give either --scenario or --model, not both");
        sc = find_scenario(a.scenario);
    } else if (!a.model_path.empty()) {
        sc.id = "custom";
        sc.model = model_from_json(read_json_file(a.model_path));
    } else {
        if (!a.mu || !a.k || !a.temporal_param || !a.spatial_param) {
            throw std::invalid_argument("give --scenario, --model, or all of --mu --k --temporal-param --spatial-param");
        }
        sc.id = "custom";
        sc.model = make_model({*a.mu, *a.k, *a.temporal_param, *a.spatial_param},
                              {parse_temporal_kind(a.temporal), parse_spatial_kind(a.spatial)});
        validate(sc.model);
    }
    if (!a.window.empty()) sc.window = window_from_flags(a.window);
    if (!a.method.empty()) sc.sim_method = parse_sim_method(a.method);
    if (a.reps < 1) throw std::invalid_argument("--reps must be >= 1");
    sc.reps = a.reps;
    sc.seed_base = a.seed ? *a.seed : default_seed();
    sc.methods.clear();
    sc.validate();

    const fs::path dir(a.out);
    fs::create_directories(dir);
    json m = manifest_base("simulate", app, started);
    m["scenario"] = to_json(sc);
    json reps = json::array();
    std::vector<std::string> outputs;
    for (int r = 0; r < sc.reps; ++r) {
        const SimResult res = simulate_scenario(sc, r);
        char name[32];
        std::snprintf(name, sizeof name, "pattern_%04d.csv", r + 1);
        const fs::path file = dir / name;
        write_file_atomic(file, to_text([&](std::ostream& os) { write_events_csv(os, res.events); }));
        outputs.push_back(file.string());
        json rec = {{"rep", r + 1},
                    {"seed", sc.seed_base + static_cast<std::uint64_t>(r)},
                    {"file", file.string()},
                    {"events", res.events.size()},
                    {"seconds", res.seconds},
                    {"warnings", res.warnings}};
        if (res.method == SimMethod::Thinning) {
            rec["lambda_max"] = res.lambda_max;
            rec["candidates"] = res.candidates_generated;
            rec["acceptance_ratio"] = res.acceptance_ratio();
            rec["bound_violations"] = res.bound_violations;
        } else {
            rec["generations"] = res.generations;
        }
        reps.push_back(rec);
        std::cout << file.string() << ": " << res.events.size() << " events\n";
        for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
    }
    m["replications"] = reps;
    finish_manifest(m, dir / "manifest.json", outputs);
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct FitArgs {
    std::string method;
    std::string input;
    std::vector<double> window;
    std::string temporal = "exp";
    std::string spatial = "gauss";
    std::vector<int> grid{25, 25, 25};
    std::vector<double> initial;
    std::string background = "constant";
    std::string out = "fit.json";
    // em
    int max_iters = 200;
    double tolerance = 1e-6;
    std::string metric = "param";
    std::string trace;
    // mle
    int max_evals = 2000;
    // bayes
    double delta_t = 0.5, growth_t = 1.0, delta_s = 0.05, growth_s = 0.5, prior_scale = 1.0;
    int n_bins = 10, n_circles = 10, mc_points = 10000;
    std::vector<double> prior_centre;
    bool mcmc = false;
    int draws = 5000, burn_in = 1000;
    std::optional<std::uint64_t> seed;
    std::string samples;
};

fs::path sibling(const fs::path& out, const std::string& suffix) {
    auto p = out;
    p.replace_extension();
    p += suffix;
    return p;
}

int cmd_fit(const FitArgs& a, const CLI::App& app) {
    const std::string started = utc_now();
    const FitMethod method = parse_fit_method(a.method);
    const Window w = window_from_flags(a.window);
    const TriggerKinds kinds{parse_temporal_kind(a.temporal), parse_spatial_kind(a.spatial)};
    EventSequence data = read_events_csv(fs::path(a.input));
    require_inside(data, w);
    require_enough_events(data);
    if (a.grid.size() != 3) throw std::invalid_argument("--grid needs three sizes");
    std::optional<ParameterVector> initial;
    if (!a.initial.empty()) {
        if (a.initial.size() != 4) throw std::invalid_argument("--initial needs four numbers: mu k temporal spatial");
        initial = ParameterVector{a.initial[0], a.initial[1], a.initial[2], a.initial[3]};
        if (!initial->all_positive()) throw std::invalid_argument("--initial values must be positive");
    }
    std::optional<SeparableShape> shape;
    if (a.background == "kde") {
        shape = estimate_background(data, w);
    } else if (a.background != "constant") {
        throw std::invalid_argument("--background must be constant or kde");
    }
    const std::uint64_t seed = a.seed ? *a.seed : default_seed();

    const fs::path out(a.out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    std::vector<std::string> outputs;
    json result;
    json config = {{"method", to_string(method)},
                   {"input", a.input},
                   {"window", to_json(w)},
                   {"temporal", to_string(kinds.temporal)},
                   {"spatial", to_string(kinds.spatial)},
                   {"background", a.background}};
    if (initial) config["initial"] = to_json(*initial);

    switch (method) {
        case FitMethod::Mle: {
            MleConfig c;
            c.grid = {a.grid[0], a.grid[1], a.grid[2]};
            c.initial = initial;
            c.max_evals = a.max_evals;
            c.background_shape = shape;
            config["grid"] = a.grid;
            config["max_evals"] = a.max_evals;
            result = to_json(fit_mle(data, w, kinds, c), kinds);
            break;
        }
        case FitMethod::Em: {
            EmConfig c;
            c.initial = initial;
            c.max_iters = a.max_iters;
            c.tolerance = a.tolerance;
            if (a.metric == "intensity") {
                c.metric = EmConvergence::IntensityDelta;
            } else if (a.metric != "param") {
                throw std::invalid_argument("--metric must be param or intensity");
            }
            c.background_shape = shape;
            config["max_iters"] = a.max_iters;
            config["tolerance"] = a.tolerance;
            config["metric"] = a.metric;
            const FitResult r = fit_em(data, w, kinds, c);
            result = to_json(r, kinds);
            if (!a.trace.empty()) {
                write_file_atomic(a.trace, to_text([&](std::ostream& os) {
                    os << "iteration,";
                    write_samples_csv(os, {}, kinds);
                    for (std::size_t i = 0; i < r.trace.size(); ++i) {
                        const auto& p = r.trace[i];
                        os << i << ',' << format_double(p.mu) << ',' << format_double(p.k) << ','
                           << format_double(p.temporal) << ',' << format_double(p.spatial) << '\n';
                    }
                }));
                outputs.push_back(a.trace);
            }
            break;
        }
        case FitMethod::Bayes: {
            BayesConfig c;
            c.binning = {a.delta_t, a.growth_t, a.n_bins};
            c.banding.delta_s = a.delta_s;
            c.banding.growth = a.growth_s;
            c.banding.n_circles = a.n_circles;
            c.banding.mc_points = a.mc_points;
            c.initial = initial;
            if (!a.prior_centre.empty()) {
                if (a.prior_centre.size() != 4) throw std::invalid_argument("--prior-centre needs four numbers");
                c.priors = PriorSpec::centred_on({a.prior_centre[0], a.prior_centre[1], a.prior_centre[2], a.prior_centre[3]},
                                                 a.prior_scale);
            } else {
                c.priors = PriorSpec::centred_on(initial ? *initial : default_initial(data, w, kinds), a.prior_scale);
            }
            c.mcmc = a.mcmc;
            c.draws = a.draws;
            c.burn_in = a.burn_in;
            c.mcmc_seed = seed;
            c.background_shape = shape;
            config["binning"] = {{"delta_t", a.delta_t}, {"growth_t", a.growth_t}, {"n_bins", a.n_bins}};
            config["banding"] = {{"delta_s", a.delta_s},
                                 {"growth_s", a.growth_s},
                                 {"n_circles", a.n_circles},
                                 {"mc_points", a.mc_points},
                                 {"weight_seed", c.banding.seed}};
            config["prior_scale"] = a.prior_scale;
            if (!a.prior_centre.empty()) config["prior_centre"] = a.prior_centre;
            config["mcmc"] = {{"enabled", a.mcmc}, {"draws", a.draws}, {"burn_in", a.burn_in}, {"seed", seed}};
            const PosteriorSummary s = fit_bayes(data, w, kinds, c);
            result = to_json(s, kinds);
            if (a.mcmc) {
                const fs::path sp = a.samples.empty() ? sibling(out, ".samples.csv") : fs::path(a.samples);
                write_file_atomic(sp, to_text([&](std::ostream& os) { write_samples_csv(os, s.samples, kinds); }));
                result["samples_file"] = sp.string();
                outputs.push_back(sp.string());
            }
            break;
        }
    }
    result["n_events"] = data.size();
    result["window"] = to_json(w);
    write_file_atomic(out, result.dump(2) + "\n");
    outputs.insert(outputs.begin(), out.string());
    std::cout << out.string() << '\n';

    json m = manifest_base("fit", app, started);
    m["config"] = config;
    m["seeds"] = {{"mcmc", seed}};
    m["n_events"] = data.size();
    finish_manifest(m, sibling(out, ".manifest.json"), outputs);
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
    std::string scenario;
    std::optional<int> reps;
    std::vector<std::string> methods;
    std::string out = "bench";
    int parallelism = static_cast<int>(std::max(1U, std::thread::hardware_concurrency()));
    std::optional<std::uint64_t> seed;
    std::vector<int> grid;
    bool mcmc = false;
};

int cmd_bench(const BenchArgs& a, const CLI::App& app) {
    const std::string started = utc_now();
    Scenario sc;
    if (a.scenario.size() > 5 && a.scenario.ends_with(".json")) {
        sc = scenario_from_json(read_json_file(a.scenario));
    } else {
        sc = find_scenario(a.scenario);
    }
    if (a.reps) sc.reps = *a.reps;
    if (!a.methods.empty()) {
        sc.methods.clear();
        for (const auto& m : a.methods) sc.methods.push_back(parse_fit_method(m));
    }
    if (a.seed) {
        sc.seed_base = *a.seed;
    } else if (std::getenv("HAWKES_SEED")) {
        sc.seed_base = default_seed();
    }
    if (!a.grid.empty()) {
        if (a.grid.size() != 3) throw std::invalid_argument("--grid needs three sizes");
        sc.mle.grid = {a.grid[0], a.grid[1], a.grid[2]};
        sc.mle.grid.validate();
    }
    if (a.mcmc) sc.bayes.mcmc = true;
    if (a.parallelism < 1) throw std::invalid_argument("--parallelism must be >= 1");
    sc.validate();

    const MetricsTable t = run_scenario(sc, a.parallelism);
    const fs::path dir(a.out);
    fs::create_directories(dir);
    const fs::path metrics = dir / "metrics.csv";
    const fs::path raw = dir / "raw.csv";
    write_file_atomic(metrics, to_text([&](std::ostream& os) { write_metrics_csv(os, t); }));
    write_file_atomic(raw, to_text([&](std::ostream& os) { write_raw_csv(os, t); }));

    json m = manifest_base("bench", app, started);
    m["scenario"] = to_json(sc);
    std::vector<std::uint64_t> seeds;
    for (int r = 0; r < sc.reps; ++r) seeds.push_back(sc.seed_base + static_cast<std::uint64_t>(r));
    m["seeds"] = seeds;
    m["parallelism"] = a.parallelism;
    m["mean_events"] = t.mean_events;
    json failures = json::object();
    for (const auto& mm : t.methods) failures[std::string(to_string(mm.method))] = mm.failed;
    m["failed_fits"] = failures;
    finish_manifest(m, dir / "manifest.json", {metrics.string(), raw.string()});

    std::cout << "scenario " << sc.id << ": " << sc.reps << " replications, mean events " << t.mean_events << '\n';
    const auto labels = parameter_labels(t.kinds);
    for (const auto& mm : t.methods) {
        std::cout << to_string(mm.method) << " (" << mm.ok << " ok, " << mm.failed << " failed, "
                  << mm.mean_seconds << " s/fit):";
        for (std::size_t p = 0; p < 4; ++p) {
            std::cout << ' ' << labels[p] << '=' << mm.params[p].mean << " (mae " << mm.params[p].mae << ')';
        }
        std::cout << '\n';
    }
    std::cout << "wrote " << metrics.string() << ", " << raw.string() << '\n';
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Simulate and fit spatio-temporal Hawkes processes"};
    app.set_version_flag("--version", STHAWKES_VERSION);
    app.set_config("--config", "", "read flags from a TOML or INI file");
    app.require_subcommand(1);

    SimulateArgs sa;
    auto* sim = app.add_subcommand("simulate", "simulate event patterns");
    sim->add_option("--scenario", sa.scenario, "built-in scenario id");
    sim->add_option("--model", sa.model_path, "model JSON file");
    sim->add_option("--mu", sa.mu, "background rate");
    sim->add_option("--k", sa.k, "expected offspring per event");
    sim->add_option("--temporal", sa.temporal, "temporal trigger: exp or powerlaw")->capture_default_str();
    sim->add_option("--temporal-param", sa.temporal_param, "alpha (exp) or gamma (powerlaw)");
    sim->add_option("--spatial", sa.spatial, "spatial trigger: gauss or exp")->capture_default_str();
    sim->add_option("--spatial-param", sa.spatial_param, "sigma (gauss) or beta (exp)");
    sim->add_option("--window", sa.window, "x0 x1 y0 y1 t0 t1")->expected(6);
    sim->add_option("--method", sa.method, "thinning or parents-offspring");
    sim->add_option("--reps", sa.reps, "number of patterns")->capture_default_str();
    sim->add_option("--seed", sa.seed, "seed of the first pattern (default: HAWKES_SEED or 1)");
    sim->add_option("--out", sa.out, "output directory")->capture_default_str();

    FitArgs fa;
    auto* fit = app.add_subcommand("fit", "fit a model to an event CSV");
    fit->add_option("--method", fa.method, "mle, em or bayes")->required();
    fit->add_option("--input", fa.input, "event CSV (x,y,t)")->required();
    fit->add_option("--window", fa.window, "x0 x1 y0 y1 t0 t1")->expected(6)->required();
    fit->add_option("--temporal", fa.temporal, "exp or powerlaw")->capture_default_str();
    fit->add_option("--spatial", fa.spatial, "gauss or exp")->capture_default_str();
    fit->add_option("--initial", fa.initial, "mu k temporal spatial")->expected(4);
    fit->add_option("--background", fa.background, "constant or kde")->capture_default_str();
    fit->add_option("--out", fa.out, "result JSON")->capture_default_str();
    fit->add_option("--grid", fa.grid, "mle: integration grid nx ny nt")->expected(3)->capture_default_str();
    fit->add_option("--max-evals", fa.max_evals, "mle: objective evaluation budget")->capture_default_str();
    fit->add_option("--max-iters", fa.max_iters, "em: iteration cap")->capture_default_str();
    fit->add_option("--tolerance", fa.tolerance, "em: convergence tolerance")->capture_default_str();
    fit->add_option("--metric", fa.metric, "em: param or intensity")->capture_default_str();
    fit->add_option("--trace", fa.trace, "em: per-iteration parameter CSV");
    fit->add_option("--delta-t", fa.delta_t, "bayes: first temporal bin width")->capture_default_str();
    fit->add_option("--growth-t", fa.growth_t, "bayes: temporal bin growth")->capture_default_str();
    fit->add_option("--n-bins", fa.n_bins, "bayes: temporal bin cap")->capture_default_str();
    fit->add_option("--delta-s", fa.delta_s, "bayes: first circle radius")->capture_default_str();
    fit->add_option("--growth-s", fa.growth_s, "bayes: radius growth")->capture_default_str();
    fit->add_option("--n-circles", fa.n_circles, "bayes: number of circles")->capture_default_str();
    fit->add_option("--mc-points", fa.mc_points, "bayes: Monte Carlo points per band weight")->capture_default_str();
    fit->add_option("--prior-scale", fa.prior_scale, "bayes: log-normal prior scale")->capture_default_str();
    fit->add_option("--prior-centre", fa.prior_centre, "bayes: prior medians mu k temporal spatial")->expected(4);
    fit->add_flag("--mcmc", fa.mcmc, "bayes: run random-walk Metropolis");
    fit->add_option("--draws", fa.draws, "bayes: kept MCMC draws")->capture_default_str();
    fit->add_option("--burn-in", fa.burn_in, "bayes: discarded MCMC draws")->capture_default_str();
    fit->add_option("--seed", fa.seed, "bayes: MCMC seed (default: HAWKES_SEED or 1)");
    fit->add_option("--samples", fa.samples, "bayes: samples CSV (default next to --out)");

    BenchArgs ba;
    auto* bench = app.add_subcommand("bench", "run a simulation study scenario");
    bench->add_option("--scenario", ba.scenario, "scenario id or scenario JSON file")->required();
    bench->add_option("--reps", ba.reps, "replications (default: the scenario's)");
    bench->add_option("--methods", ba.methods, "comma-separated subset of mle,em,bayes")->delimiter(',');
    bench->add_option("--out", ba.out, "output directory")->capture_default_str();
    bench->add_option("--parallelism", ba.parallelism, "concurrent replications")->capture_default_str();
    bench->add_option("--seed", ba.seed, "seed of the first replication");
    bench->add_option("--grid", ba.grid, "mle integration grid nx ny nt")->expected(3);
    bench->add_flag("--mcmc", ba.mcmc, "bayes: report MCMC posterior means");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (sim->parsed()) return cmd_simulate(sa, *sim);
        if (fit->parsed()) return cmd_fit(fa, *fit);
        if (bench->parsed()) return cmd_bench(ba, *bench);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kExitInternal;
    }
    return kExitUsage;
}
