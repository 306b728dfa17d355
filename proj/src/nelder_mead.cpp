#include "regfuse/nelder_mead.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace regfuse {

namespace {

struct Vertex {
    std::vector<double> x;
    double f = 0.0;
};

} // namespace

NelderMeadResult nelder_mead(const std::function<double(std::span<const double>)> &objective, std::vector<double> x0,
                             std::vector<double> steps, const NelderMeadOptions &opts) {
    const std::size_t n = x0.size();
    if (n == 0 || steps.size() != n) throw std::invalid_argument("nelder_mead: dimension mismatch");

    NelderMeadResult res;
    auto eval = [&](const std::vector<double> &x) {
        ++res.evals;
        const double f = objective(x);
        return std::isfinite(f) ? f : std::numeric_limits<double>::max();
    };

    Vertex best{x0, eval(x0)};
    res.trace.push_back(best.f);

    for (std::size_t round = 0; round <= opts.restarts && res.evals < opts.max_evals; ++round) {
        std::vector<Vertex> simplex;
        simplex.push_back(best);
        for (std::size_t i = 0; i < n; ++i) {
            Vertex v{best.x, 0.0};
            v.x[i] += steps[i];
            v.f = eval(v.x);
            simplex.push_back(std::move(v));
        }
        const double round_start = best.f;

        while (res.evals < opts.max_evals) {
            std::sort(simplex.begin(), simplex.end(), [](const Vertex &a, const Vertex &b) { return a.f < b.f; });
            if (simplex.front().f < best.f) best = simplex.front();
            res.trace.push_back(best.f);

            double spread = simplex.back().f - simplex.front().f;
            double size = 0.0;
            for (std::size_t i = 1; i <= n; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    size = std::max(size, std::abs(simplex[i].x[j] - simplex[0].x[j]));
            if (spread <= opts.f_tol && size <= opts.x_tol) break;

            std::vector<double> centroid(n, 0.0);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) centroid[j] += simplex[i].x[j] / static_cast<double>(n);

            auto along = [&](double t) {
                std::vector<double> p(n);
                for (std::size_t j = 0; j < n; ++j) p[j] = centroid[j] + t * (simplex[n].x[j] - centroid[j]);
                return p;
            };

            Vertex refl{along(-1.0), 0.0};
            refl.f = eval(refl.x);
            if (refl.f < simplex[0].f) {
                Vertex expd{along(-2.0), 0.0};
                expd.f = eval(expd.x);
                simplex[n] = expd.f < refl.f ? std::move(expd) : std::move(refl);
                continue;
            }
            if (refl.f < simplex[n - 1].f) {
                simplex[n] = std::move(refl);
                continue;
            }
            const bool outside = refl.f < simplex[n].f;
            Vertex contr{along(outside ? -0.5 : 0.5), 0.0};
            contr.f = eval(contr.x);
            if (contr.f < (outside ? refl.f : simplex[n].f)) {
                simplex[n] = std::move(contr);
                continue;
            }
            for (std::size_t i = 1; i <= n; ++i) {
                for (std::size_t j = 0; j < n; ++j)
                    simplex[i].x[j] = simplex[0].x[j] + 0.5 * (simplex[i].x[j] - simplex[0].x[j]);
                simplex[i].f = eval(simplex[i].x);
            }
        }
        for (const auto &v : simplex)
            if (v.f < best.f) best = v;
        res.trace.push_back(best.f);

        if (round > 0 && !(best.f < round_start)) break;
        for (double &s : steps) s *= 0.5;
    }

    res.x = best.x;
    res.value = best.f;
    return res;
}

} // namespace regfuse
