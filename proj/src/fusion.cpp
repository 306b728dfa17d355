#include "regfuse/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace regfuse {

void FusionConfig::validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("fusion gamma must be in (0, 1]");
    if (!(sigma_balance >= 0.0)) throw std::invalid_argument("fusion sigma_balance must be non-negative");
    if (max_iters < 1) throw std::invalid_argument("fusion max_iters must be at least 1");
    if (!(step_size > 0.0)) throw std::invalid_argument("fusion step_size must be positive");
    if (!(tol >= 0.0)) throw std::invalid_argument("fusion tol must be non-negative");
}

GrayImage target_gradient(const GrayImage &v, const GrayImage &r, double gamma) {
    require_same_size(v, r, "target_gradient");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("target_gradient: gamma must be in (0, 1]");
    const GrayImage lv = laplacian(v);
    const GrayImage lr = laplacian(r);
    GrayImage t(v.size());
    for (std::size_t i = 0; i < t.pixel_count(); ++i) {
        const double gv = lv.pixels()[i];
        const double gr = lr.pixels()[i];
        const double g = std::abs(gv) >= std::abs(gr) ? gv : gr;
        t.pixels()[i] = g == 0.0 ? 0.0 : std::copysign(std::pow(std::abs(g), gamma), g);
    }
    return t;
}

double loss_wsim(const GrayImage &f, const GrayImage &v, const GrayImage &r) {
    require_same_size(f, v, "loss_wsim");
    require_same_size(f, r, "loss_wsim");
    return 1.0 - 0.5 * (ssim(f, v) + ssim(f, r));
}

namespace {

double rms_residual(const GrayImage &lap_f, const GrayImage &target) {
    double acc = 0.0;
    for (std::size_t i = 0; i < lap_f.pixel_count(); ++i) {
        const double d = lap_f.pixels()[i] - target.pixels()[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(lap_f.pixel_count()));
}

// Energy pieces with the target precomputed, shared by the solver and the public API.
struct EnergyModel {
    const GrayImage &v;
    const GrayImage &r;
    const FusionConfig &cfg;
    GrayImage target;

    EnergyModel(const GrayImage &v_, const GrayImage &r_, const FusionConfig &cfg_)
        : v(v_), r(r_), cfg(cfg_), target(target_gradient(v_, r_, cfg_.gamma)) {}

    FusionEnergy energy(const GrayImage &f) const {
        FusionEnergy e;
        e.wsim = loss_wsim(f, v, r);
        e.grad = rms_residual(laplacian(f), target);
        e.total = cfg.sigma_balance * e.wsim + e.grad;
        return e;
    }

    GrayImage gradient(const GrayImage &f) const {
        GrayImage g(f.size());
        const GrayImage lap = laplacian(f);
        const double l = rms_residual(lap, target);
        if (l > 0.0) {
            GrayImage res(f.size());
            for (std::size_t i = 0; i < res.pixel_count(); ++i) res.pixels()[i] = lap.pixels()[i] - target.pixels()[i];
            const GrayImage back = laplacian_adjoint(res);
            const double scale = 1.0 / (static_cast<double>(f.pixel_count()) * l);
            for (std::size_t i = 0; i < g.pixel_count(); ++i) g.pixels()[i] = scale * back.pixels()[i];
        }
        if (cfg.sigma_balance > 0.0) {
            const GrayImage sv = ssim_gradient(f, v);
            const GrayImage sr = ssim_gradient(f, r);
            for (std::size_t i = 0; i < g.pixel_count(); ++i) {
                g.pixels()[i] -= 0.5 * cfg.sigma_balance * (sv.pixels()[i] + sr.pixels()[i]);
            }
        }
        return g;
    }
};

} // namespace

double loss_grad(const GrayImage &f, const GrayImage &v, const GrayImage &r, double gamma) {
    require_same_size(f, v, "loss_grad");
    return rms_residual(laplacian(f), target_gradient(v, r, gamma));
}

FusionEnergy fusion_energy(const GrayImage &f, const GrayImage &v, const GrayImage &r, const FusionConfig &cfg) {
    require_same_size(f, v, "fusion_energy");
    require_same_size(f, r, "fusion_energy");
    return EnergyModel(v, r, cfg).energy(f);
}

GrayImage fusion_energy_gradient(const GrayImage &f, const GrayImage &v, const GrayImage &r, const FusionConfig &cfg) {
    require_same_size(f, v, "fusion_energy_gradient");
    require_same_size(f, r, "fusion_energy_gradient");
    return EnergyModel(v, r, cfg).gradient(f);
}

FusionResult fuse(const GrayImage &v, const GrayImage &r, const FusionConfig &cfg) {
    require_same_size(v, r, "fuse");
    cfg.validate();
    const EnergyModel model(v, r, cfg);

    GrayImage f(v.size());
    for (std::size_t i = 0; i < f.pixel_count(); ++i) f.pixels()[i] = 0.5 * (v.pixels()[i] + r.pixels()[i]);

    FusionResult res;
    double e = model.energy(f).total;
    res.energy_trace.push_back(e);

    constexpr double kMinStep = 1e-10;
    double step = cfg.step_size;
    while (res.iterations_used < cfg.max_iters && e > 0.0) {
        const GrayImage g = model.gradient(f);
        double gmax = 0.0;
        for (double x : g.pixels()) gmax = std::max(gmax, std::abs(x));
        if (gmax == 0.0) break;

        bool accepted = false;
        GrayImage cand(f.size());
        double e_cand = e;
        while (step >= kMinStep) {
            for (std::size_t i = 0; i < cand.pixel_count(); ++i) {
                cand.pixels()[i] = f.pixels()[i] - step * g.pixels()[i] / gmax;
            }
            e_cand = model.energy(cand).total;
            if (e_cand < e) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;

        ++res.iterations_used;
        const double decrease = (e - e_cand) / std::max(e, 1e-300);
        f = std::move(cand);
        e = e_cand;
        res.energy_trace.push_back(e);
        if (decrease < cfg.tol) break;
        step = std::min(2.0 * step, cfg.step_size);
    }
    res.fused = clamp01(f);
    return res;
}

} // namespace regfuse
