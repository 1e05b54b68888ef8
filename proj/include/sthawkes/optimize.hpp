#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <vector>

namespace sthawkes {

struct NelderMeadOptions {
    int max_evals = 2000;
    double f_tol = 1e-6;   // absolute spread of objective values across the simplex
    double x_tol = 1e-5;   // max vertex distance from the best vertex (inf-norm)
    double initial_step = 0.2;
    int restarts = 1;      // re-simplex around the best point after convergence
};

struct NelderMeadResult {
    std::vector<double> x;
    double f = std::numeric_limits<double>::infinity();
    int evaluations = 0;
    int iterations = 0;
    bool converged = false;
};

/// Derivative-free minimization with the standard reflection / expansion /
/// contraction / shrink coefficients (1, 2, 1/2, 1/2). Non-finite objective
/// values are treated as +inf.
template <typename Objective>
NelderMeadResult nelder_mead(Objective&& objective, std::vector<double> x0, const NelderMeadOptions& opt = {}) {
    const std::size_t n = x0.size();
    NelderMeadResult res;
    auto eval = [&](const std::vector<double>& x) {
        ++res.evaluations;
        const double v = objective(x);
        return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    };

    std::vector<double> best_x = x0;
    double best_f = eval(x0);

    for (int round = 0; round <= opt.restarts; ++round) {
        std::vector<std::vector<double>> simplex(n + 1, best_x);
        std::vector<double> fv(n + 1, best_f);
        for (std::size_t i = 0; i < n; ++i) {
            simplex[i + 1][i] += opt.initial_step;
            fv[i + 1] = eval(simplex[i + 1]);
        }
        std::vector<std::size_t> order(n + 1);
        bool converged = false;

        while (res.evaluations < opt.max_evals) {
            std::iota(order.begin(), order.end(), 0);
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
            const std::size_t ib = order.front();
            const std::size_t iw = order.back();
            const std::size_t isw = order[n - 1];

            double diameter = 0.0;
            for (std::size_t v = 0; v <= n; ++v) {
                for (std::size_t d = 0; d < n; ++d) {
                    diameter = std::max(diameter, std::abs(simplex[v][d] - simplex[ib][d]));
                }
            }
            if (std::isfinite(fv[iw]) && fv[iw] - fv[ib] <= opt.f_tol && diameter <= opt.x_tol) {
                converged = true;
                break;
            }
            ++res.iterations;

            std::vector<double> centroid(n, 0.0);
            for (std::size_t v = 0; v <= n; ++v) {
                if (v == iw) continue;
                for (std::size_t d = 0; d < n; ++d) centroid[d] += simplex[v][d] / static_cast<double>(n);
            }
            auto along = [&](double coef) {
                std::vector<double> p(n);
                for (std::size_t d = 0; d < n; ++d) p[d] = centroid[d] + coef * (simplex[iw][d] - centroid[d]);
                return p;
            };

            const auto xr = along(-1.0);
            const double fr = eval(xr);
            if (fr < fv[ib]) {
                const auto xe = along(-2.0);
                const double fe = eval(xe);
                if (fe < fr) {
                    simplex[iw] = xe;
                    fv[iw] = fe;
                } else {
                    simplex[iw] = xr;
                    fv[iw] = fr;
                }
                continue;
            }
            if (fr < fv[isw]) {
                simplex[iw] = xr;
                fv[iw] = fr;
                continue;
            }
            const bool outside = fr < fv[iw];
            const auto xc = along(outside ? -0.5 : 0.5);
            const double fc = eval(xc);
            if (fc < (outside ? fr : fv[iw])) {
                simplex[iw] = xc;
                fv[iw] = fc;
                continue;
            }
            for (std::size_t v = 0; v <= n; ++v) {
                if (v == ib) continue;
                for (std::size_t d = 0; d < n; ++d) simplex[v][d] = simplex[ib][d] + 0.5 * (simplex[v][d] - simplex[ib][d]);
                fv[v] = eval(simplex[v]);
            }
        }

        const auto ib = static_cast<std::size_t>(std::min_element(fv.begin(), fv.end()) - fv.begin());
        const double improvement = best_f - fv[ib];
        if (fv[ib] <= best_f) {
            best_f = fv[ib];
            best_x = simplex[ib];
        }
        res.converged = converged;
        if (!converged || (round > 0 && improvement <= opt.f_tol)) break;
    }
    res.x = best_x;
    res.f = best_f;
    return res;
}

}  // namespace sthawkes
