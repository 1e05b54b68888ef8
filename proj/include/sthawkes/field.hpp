#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace sthawkes {

/// Non-negative function of time tabulated on a regular grid of nodes
/// spanning [t_min, t_max] inclusive; evaluated by linear interpolation.
struct TemporalField {
    double t_min = 0.0;
    double t_max = 1.0;
    std::vector<double> values;
    double bandwidth = 0.0;

    std::size_t size() const noexcept { return values.size(); }
    double spacing() const { return (t_max - t_min) / static_cast<double>(values.size() - 1); }
    double node(std::size_t i) const { return t_min + spacing() * static_cast<double>(i); }
};

/// Non-negative function on a rectangle tabulated on an nx-by-ny grid of
/// nodes (corners included), stored row-major: values[iy * nx + ix].
/// Evaluated by bilinear interpolation.
struct SpatialField {
    double x_min = 0.0;
    double x_max = 1.0;
    double y_min = 0.0;
    double y_max = 1.0;
    std::size_t nx = 0;
    std::size_t ny = 0;
    std::vector<double> values;
    double bandwidth = 0.0;

    double dx() const { return (x_max - x_min) / static_cast<double>(nx - 1); }
    double dy() const { return (y_max - y_min) / static_cast<double>(ny - 1); }
    double at(std::size_t ix, std::size_t iy) const { return values[iy * nx + ix]; }
    double& at(std::size_t ix, std::size_t iy) { return values[iy * nx + ix]; }
};

namespace detail {

// Locates the cell containing u on a regular grid of `nodes` nodes over
// [lo, hi]; returns the lower node index and the fractional offset in [0,1].
inline std::pair<std::size_t, double> locate(double u, double lo, double hi, std::size_t nodes) {
    const double h = (hi - lo) / static_cast<double>(nodes - 1);
    double pos = (u - lo) / h;
    auto cell = static_cast<std::size_t>(std::floor(pos));
    if (cell >= nodes - 1) {
        cell = nodes - 2;
    }
    return {cell, pos - static_cast<double>(cell)};
}

}  // namespace detail

inline void validate(const TemporalField& f) {
    if (f.values.size() < 2) {
        throw std::invalid_argument("temporal field needs at least two nodes");
    }
    if (!(f.t_min < f.t_max)) {
        throw std::invalid_argument("temporal field domain is empty");
    }
    for (double v : f.values) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw std::invalid_argument("temporal field values must be finite and non-negative");
        }
    }
}

inline void validate(const SpatialField& f) {
    if (f.nx < 2 || f.ny < 2 || f.values.size() != f.nx * f.ny) {
        throw std::invalid_argument("spatial field grid is malformed");
    }
    if (!(f.x_min < f.x_max) || !(f.y_min < f.y_max)) {
        throw std::invalid_argument("spatial field domain is empty");
    }
    for (double v : f.values) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw std::invalid_argument("spatial field values must be finite and non-negative");
        }
    }
}

inline double eval_field(const TemporalField& f, double t) {
    if (!(t >= f.t_min && t <= f.t_max)) {
        throw std::domain_error("time " + std::to_string(t) + " outside temporal field domain");
    }
    const auto [i, w] = detail::locate(t, f.t_min, f.t_max, f.values.size());
    return (1.0 - w) * f.values[i] + w * f.values[i + 1];
}

inline double eval_field(const SpatialField& f, double x, double y) {
    if (!(x >= f.x_min && x <= f.x_max && y >= f.y_min && y <= f.y_max)) {
        throw std::domain_error("location outside spatial field domain");
    }
    const auto [ix, wx] = detail::locate(x, f.x_min, f.x_max, f.nx);
    const auto [iy, wy] = detail::locate(y, f.y_min, f.y_max, f.ny);
    const double lower = (1.0 - wx) * f.at(ix, iy) + wx * f.at(ix + 1, iy);
    const double upper = (1.0 - wx) * f.at(ix, iy + 1) + wx * f.at(ix + 1, iy + 1);
    return (1.0 - wy) * lower + wy * upper;
}

/// Mean of the interpolated field over its domain (trapezoid rule, which is
/// exact for the piecewise-linear interpolant).
inline double field_mean(const TemporalField& f) {
    const std::size_t n = f.values.size();
    double s = 0.5 * (f.values.front() + f.values.back());
    for (std::size_t i = 1; i + 1 < n; ++i) {
        s += f.values[i];
    }
    return s / static_cast<double>(n - 1);
}

/// Mean of the bilinear interpolant over the rectangle (tensor trapezoid).
inline double field_mean(const SpatialField& f) {
    double s = 0.0;
    for (std::size_t iy = 0; iy < f.ny; ++iy) {
        const double wy = (iy == 0 || iy + 1 == f.ny) ? 0.5 : 1.0;
        for (std::size_t ix = 0; ix < f.nx; ++ix) {
            const double wx = (ix == 0 || ix + 1 == f.nx) ? 0.5 : 1.0;
            s += wx * wy * f.at(ix, iy);
        }
    }
    return s / (static_cast<double>(f.nx - 1) * static_cast<double>(f.ny - 1));
}

template <typename Field>
void normalize_mean_one(Field& f) {
    const double m = field_mean(f);
    if (!(m > 0.0)) {
        throw std::invalid_argument("cannot normalize a field with zero mean");
    }
    for (double& v : f.values) {
        v /= m;
    }
}

}  // namespace sthawkes
