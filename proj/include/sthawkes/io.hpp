#pragma once

#include "sthawkes/bayes.hpp"
#include "sthawkes/field.hpp"
#include "sthawkes/fit.hpp"
#include "sthawkes/model.hpp"

#include "json.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sthawkes {

using json = nlohmann::json;

/// Shortest text that round-trips a double.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Event CSV: header "x,y,t" with an optional fourth "parent" column.

inline void write_events_csv(std::ostream& os, const EventSequence& data) {
    const bool labels = !data.parents.empty();
    os << (labels ? "x,y,t,parent\n" : "x,y,t\n");
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& e = data.events[i];
        os << format_double(e.x) << ',' << format_double(e.y) << ',' << format_double(e.t);
        if (labels) os << ',' << data.parents[i];
        os << '\n';
    }
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        const auto b = cell.find_first_not_of(" \t\r");
        const auto e = cell.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline double parse_number(const std::string& s, std::size_t line) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != s.size() || !std::isfinite(v)) {
        throw std::invalid_argument("line " + std::to_string(line) + ": '" + s + "' is not a finite number");
    }
    return v;
}

}  // namespace detail

/// Reads events, sorts them by time (stable) and returns them. Blank lines
/// are skipped; anything else malformed is reported with its line number.
inline EventSequence read_events_csv(std::istream& is) {
    EventSequence out;
    std::string line;
    std::size_t lineno = 0;
    bool header_seen = false;
    bool labels = false;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto cells = detail::split_csv(line);
        if (!header_seen) {
            header_seen = true;
            if (cells.size() >= 3 && cells[0] == "x" && cells[1] == "y" && cells[2] == "t") {
                if (cells.size() == 4 && cells[3] == "parent") {
                    labels = true;
                } else if (cells.size() != 3) {
                    throw std::invalid_argument("line " + std::to_string(lineno) + ": expected header x,y,t[,parent]");
                }
                continue;
            }
        }
        const std::size_t want = labels ? 4 : 3;
        if (cells.size() != want) {
            throw std::invalid_argument("line " + std::to_string(lineno) + ": expected " + std::to_string(want) +
                                        " fields, found " + std::to_string(cells.size()));
        }
        out.events.push_back({detail::parse_number(cells[0], lineno), detail::parse_number(cells[1], lineno),
                              detail::parse_number(cells[2], lineno)});
        if (labels) {
            const double p = detail::parse_number(cells[3], lineno);
            if (p != std::floor(p) || p < -1.0) {
                throw std::invalid_argument("line " + std::to_string(lineno) + ": parent must be an index or -1");
            }
            out.parents.push_back(static_cast<std::int64_t>(p));
        }
    }
    for (auto p : out.parents) {
        if (p >= static_cast<std::int64_t>(out.size())) {
            throw std::invalid_argument("parent index out of range");
        }
    }
    out.sort_by_time();
    return out;
}

inline EventSequence read_events_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open " + path.string());
    return read_events_csv(in);
}

/// Writes `content` to `path` through a temporary file and a rename, so
/// readers never see a partial file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// JSON

inline json to_json(const Window& w) {
    return {{"x", {w.x_min, w.x_max}}, {"y", {w.y_min, w.y_max}}, {"t", {w.t_min, w.t_max}}};
}

inline Window window_from_json(const json& j) {
    if (j.is_array()) {
        const auto v = j.get<std::vector<double>>();
        if (v.size() != 6) throw std::invalid_argument("window array needs six numbers");
        return Window(v[0], v[1], v[2], v[3], v[4], v[5]);
    }
    const auto x = j.at("x").get<std::vector<double>>();
    const auto y = j.at("y").get<std::vector<double>>();
    const auto t = j.at("t").get<std::vector<double>>();
    if (x.size() != 2 || y.size() != 2 || t.size() != 2) throw std::invalid_argument("window bounds need two numbers each");
    return Window(x[0], x[1], y[0], y[1], t[0], t[1]);
}

inline json to_json(const TemporalField& f) {
    return {{"t_min", f.t_min}, {"t_max", f.t_max}, {"bandwidth", f.bandwidth}, {"values", f.values}};
}

inline json to_json(const SpatialField& f) {
    return {{"x_min", f.x_min}, {"x_max", f.x_max}, {"y_min", f.y_min}, {"y_max", f.y_max}, {"nx", f.nx},
            {"ny", f.ny},       {"bandwidth", f.bandwidth}, {"values", f.values}};
}

inline TemporalField temporal_field_from_json(const json& j) {
    TemporalField f;
    f.t_min = j.at("t_min").get<double>();
    f.t_max = j.at("t_max").get<double>();
    f.bandwidth = j.value("bandwidth", 0.0);
    f.values = j.at("values").get<std::vector<double>>();
    validate(f);
    return f;
}

inline SpatialField spatial_field_from_json(const json& j) {
    SpatialField f;
    f.x_min = j.at("x_min").get<double>();
    f.x_max = j.at("x_max").get<double>();
    f.y_min = j.at("y_min").get<double>();
    f.y_max = j.at("y_max").get<double>();
    f.nx = j.at("nx").get<std::size_t>();
    f.ny = j.at("ny").get<std::size_t>();
    f.bandwidth = j.value("bandwidth", 0.0);
    f.values = j.at("values").get<std::vector<double>>();
    validate(f);
    return f;
}

inline json to_json(const SeparableShape& s) {
    return {{"temporal", to_json(s.temporal)}, {"spatial", to_json(s.spatial)}};
}

inline SeparableShape shape_from_json(const json& j) {
    return {temporal_field_from_json(j.at("temporal")), spatial_field_from_json(j.at("spatial"))};
}

inline json to_json(const ParameterVector& p) {
    return {{"mu", p.mu}, {"k", p.k}, {"temporal", p.temporal}, {"spatial", p.spatial}};
}

inline ParameterVector parameters_from_json(const json& j) {
    return {j.at("mu").get<double>(), j.at("k").get<double>(), j.at("temporal").get<double>(),
            j.at("spatial").get<double>()};
}

/// {"mu", "k", "temporal": {"kind", "param"}, "spatial": {"kind", "param"},
///  optional "background": {"temporal": field, "spatial": field}}
inline json to_json(const HawkesModel& m) {
    json j = {{"mu", m.background.mu},
              {"k", m.k},
              {"temporal", {{"kind", to_string(m.temporal.kind)}, {"param", m.temporal.param}}},
              {"spatial", {{"kind", to_string(m.spatial.kind)}, {"param", m.spatial.param}}}};
    if (m.background.shape) j["background"] = to_json(*m.background.shape);
    return j;
}

/// Parses and validates a model. Subcriticality is checked by the simulator,
/// not here.
inline HawkesModel model_from_json(const json& j) {
    try {
        const ParameterVector p{j.at("mu").get<double>(), j.at("k").get<double>(),
                                j.at("temporal").at("param").get<double>(), j.at("spatial").at("param").get<double>()};
        const TriggerKinds kinds{parse_temporal_kind(j.at("temporal").at("kind").get<std::string>()),
                                 parse_spatial_kind(j.at("spatial").at("kind").get<std::string>())};
        std::optional<SeparableShape> shape;
        if (j.contains("background")) shape = shape_from_json(j.at("background"));
        auto m = make_model(p, kinds, shape);
        validate(m);
        return m;
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("malformed model JSON: ") + e.what());
    }
}

inline json to_json(const FitResult& r, TriggerKinds kinds) {
    json j = {{"method", r.method},
              {"temporal_kind", to_string(kinds.temporal)},
              {"spatial_kind", to_string(kinds.spatial)},
              {"estimate",
               {{"mu", r.estimate.mu},
                {"k", r.estimate.k},
                {std::string(parameter_name(kinds.temporal)), r.estimate.temporal},
                {std::string(parameter_name(kinds.spatial)), r.estimate.spatial}}},
              {"objective", r.objective},
              {"iterations", r.iterations},
              {"evaluations", r.evaluations},
              {"converged", r.converged},
              {"seconds", r.seconds},
              {"warnings", r.warnings}};
    if (!r.loglik_trace.empty()) j["loglik_trace"] = r.loglik_trace;
    return j;
}

inline json to_json(const PosteriorSummary& s, TriggerKinds kinds) {
    auto named = [&](const ParameterVector& p) {
        return json{{"mu", p.mu},
                    {"k", p.k},
                    {std::string(parameter_name(kinds.temporal)), p.temporal},
                    {std::string(parameter_name(kinds.spatial)), p.spatial}};
    };
    return {{"method", "bayes"},
            {"temporal_kind", to_string(kinds.temporal)},
            {"spatial_kind", to_string(kinds.spatial)},
            {"mode", named(s.mode)},
            {"mean", named(s.mean)},
            {"sd", named(s.sd)},
            {"log_covariance", s.covariance},
            {"log_posterior", s.log_posterior},
            {"hessian_regularized", s.hessian_regularized},
            {"converged", s.converged},
            {"evaluations", s.evaluations},
            {"draws", s.samples.size()},
            {"acceptance_rate", s.acceptance_rate},
            {"seconds", s.seconds},
            {"warnings", s.warnings}};
}

inline void write_samples_csv(std::ostream& os, const std::vector<ParameterVector>& samples, TriggerKinds kinds) {
    os << "mu,k," << parameter_name(kinds.temporal) << ',' << parameter_name(kinds.spatial) << '\n';
    for (const auto& p : samples) {
        os << format_double(p.mu) << ',' << format_double(p.k) << ',' << format_double(p.temporal) << ','
           << format_double(p.spatial) << '\n';
    }
}

}  // namespace sthawkes
