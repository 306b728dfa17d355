#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace regfuse {

struct NelderMeadOptions {
    std::size_t max_evals = 2000;
    double f_tol = 1e-10; // spread of simplex values; both tolerances must hold to stop
    double x_tol = 1e-6;  // largest vertex offset from the best vertex, per coordinate
    std::size_t restarts = 2;
};

struct NelderMeadResult {
    std::vector<double> x;
    double value = 0.0;
    std::size_t evals = 0;
    std::vector<double> trace; // best value after every iteration, non-increasing
};

// Derivative-free simplex minimization (standard reflection/expansion/contraction/shrink
// coefficients 1, 2, 0.5, 0.5). After convergence the simplex is rebuilt around the best
// point with halved steps, up to `restarts` times while that keeps improving.
NelderMeadResult nelder_mead(const std::function<double(std::span<const double>)> &objective, std::vector<double> x0,
                             std::vector<double> steps, const NelderMeadOptions &opts = {});

} // namespace regfuse
