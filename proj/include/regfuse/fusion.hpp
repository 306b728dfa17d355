#pragma once

#include "regfuse/raster.hpp"

#include <vector>

namespace regfuse {

struct FusionConfig {
    double gamma = 0.7;         // gradient enhancement exponent
    double sigma_balance = 1.0; // weight of the SSIM term
    std::size_t max_iters = 500;
    double step_size = 0.5;     // largest per-pixel intensity change of one descent step
    double tol = 1e-6;          // relative energy decrease below which descent stops

    void validate() const;
};

struct FusionEnergy {
    double wsim = 0.0;
    double grad = 0.0;
    double total = 0.0;
};

struct FusionResult {
    GrayImage fused;
    std::vector<double> energy_trace; // one entry per accepted iterate, starting with the initial image
    std::size_t iterations_used = 0;
};

// Per pixel, the Laplacian of whichever source has the larger Laplacian magnitude
// (ties go to v), enhanced to sign(L) |L|^gamma. Zero where that Laplacian is zero.
GrayImage target_gradient(const GrayImage &v, const GrayImage &r, double gamma);

// 1 - (ssim(f, v) + ssim(f, r)) / 2
double loss_wsim(const GrayImage &f, const GrayImage &v, const GrayImage &r);

// Root-mean-square difference between laplacian(f) and target_gradient(v, r, gamma).
double loss_grad(const GrayImage &f, const GrayImage &v, const GrayImage &r, double gamma);

FusionEnergy fusion_energy(const GrayImage &f, const GrayImage &v, const GrayImage &r, const FusionConfig &cfg);

// Analytic gradient of fusion_energy().total with respect to f.
GrayImage fusion_energy_gradient(const GrayImage &f, const GrayImage &v, const GrayImage &r, const FusionConfig &cfg);

// Minimizes sigma_balance * loss_wsim + loss_grad from (v + r) / 2 by
// backtracking gradient descent; the fused output is clamped to [0,1].
FusionResult fuse(const GrayImage &v, const GrayImage &r, const FusionConfig &cfg = {});

} // namespace regfuse
