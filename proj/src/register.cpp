#include "regfuse/register.hpp"

#include "regfuse/error.hpp"
#include "regfuse/metrics.hpp"
#include "regfuse/nelder_mead.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

namespace regfuse {

void RegisterConfig::validate() const {
    if (pyramid_levels < 1) throw std::invalid_argument("register: pyramid_levels must be at least 1");
    if (!(epsilon >= 0.0)) throw std::invalid_argument("register: epsilon must be non-negative");
    if (affine_max_evals < 1) throw std::invalid_argument("register: affine_max_evals must be positive");
    if (!(deform_step > 0.0)) throw std::invalid_argument("register: deform_step must be positive");
    if (!(deform_smooth_sigma > 0.0)) throw std::invalid_argument("register: deform_smooth_sigma must be positive");
    if (!(mask_threshold >= 0.0 && mask_threshold < 1.0)) {
        throw std::invalid_argument("register: mask_threshold must be in [0,1)");
    }
    mg_fusion.validate();
}

namespace {

// Worse than any attainable correlation objective.
constexpr double kPenalty = 2.0;
constexpr std::size_t kMinPyramidSide = 32;

double similarity(const GrayImage &reference, const GrayImage &warped, const ReconMask &mask, CorrelationMode mode) {
    const double m = mncc(warped, reference, mask);
    return mode == CorrelationMode::Signed ? -m : -m * m;
}

// d similarity / d warped, zero outside the mask.
GrayImage similarity_gradient(const GrayImage &reference, const GrayImage &warped, const ReconMask &mask,
                              CorrelationMode mode) {
    const std::size_t n = warped.pixel_count();
    std::size_t count = 0;
    double sx = 0.0, sw = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!mask.at(i)) continue;
        ++count;
        sx += reference.pixels()[i];
        sw += warped.pixels()[i];
    }
    const double mx = sx / static_cast<double>(count);
    const double mw = sw / static_cast<double>(count);
    double sxx = 0.0, sww = 0.0, sxw = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!mask.at(i)) continue;
        const double dx = reference.pixels()[i] - mx;
        const double dw = warped.pixels()[i] - mw;
        sxx += dx * dx;
        sww += dw * dw;
        sxw += dx * dw;
    }
    GrayImage g(warped.size());
    if (sxx <= 0.0 || sww <= 0.0) return g;
    const double denom = std::sqrt(sxx * sww);
    const double m = sxw / denom;
    const double ratio = std::sqrt(sxx / sww);
    const double outer = mode == CorrelationMode::Signed ? -1.0 : -2.0 * m;
    for (std::size_t i = 0; i < n; ++i) {
        if (!mask.at(i)) continue;
        const double dm = ((reference.pixels()[i] - mx) - m * ratio * (warped.pixels()[i] - mw)) / denom;
        g.pixels()[i] = outer * dm;
    }
    return g;
}

std::size_t usable_levels(Size size, std::size_t requested) {
    std::size_t levels = 1;
    while (levels < requested && std::min(size.height, size.width) >> levels >= kMinPyramidSide) ++levels;
    return levels;
}

std::vector<GrayImage> image_pyramid(const GrayImage &img, std::size_t levels) {
    std::vector<GrayImage> p{img};
    while (p.size() < levels) p.push_back(downsample2(p.back()));
    return p;
}

std::vector<ReconMask> mask_pyramid(const ReconMask &mask, std::size_t levels) {
    std::vector<ReconMask> p{mask};
    while (p.size() < levels) p.push_back(downsample_mask(p.back()));
    return p;
}

AffineParams params_to_affine(std::span<const double> p) {
    return {1.0 + p[0], p[1], p[2], 1.0 + p[3], p[4], p[5]};
}

std::vector<double> affine_to_params(const AffineParams &t) {
    return {t.a - 1.0, t.b, t.c, t.d - 1.0, t.dx, t.dy};
}

double laplacian_mask_rms(const GrayImage &lap_a, const GrayImage &lap_b, const ReconMask &mask) {
    double acc = 0.0;
    for (std::size_t i = 0; i < lap_a.pixel_count(); ++i) {
        if (!mask.at(i)) continue;
        const double d = lap_a.pixels()[i] - lap_b.pixels()[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(lap_a.pixel_count()));
}

} // namespace

double loss_mncc(const GrayImage &reference, const GrayImage &warped, const ReconMask &mask) {
    return -mncc(warped, reference, mask);
}

double loss_mg(const GrayImage &x, const GrayImage &y_warped, const GrayImage &y_true, const ReconMask &mask,
               const FusionConfig &fusion) {
    require_same_size(x, y_warped, "loss_mg");
    require_same_size(x, y_true, "loss_mg");
    if (mask.size() != x.size()) throw std::invalid_argument("loss_mg: mask size does not match image");
    if (mask.count() == 0) return 0.0;
    const GrayImage lap_w = laplacian(fuse(x, y_warped, fusion).fused);
    const GrayImage lap_t = laplacian(fuse(x, y_true, fusion).fused);
    return laplacian_mask_rms(lap_w, lap_t, mask);
}

AffineStage register_affine(const GrayImage &reference, const GrayImage &moving, const RegisterConfig &cfg,
                            const ReconMask *truth_mask) {
    require_same_size(reference, moving, "register_affine");
    cfg.validate();
    if (cfg.mask_mode == MaskMode::GroundTruth) {
        if (!truth_mask) throw std::invalid_argument("register_affine: ground-truth mask mode needs a mask");
        if (truth_mask->size() != reference.size()) {
            throw std::invalid_argument("register_affine: ground-truth mask size does not match image");
        }
    }

    const std::size_t levels = usable_levels(reference.size(), cfg.pyramid_levels);
    const auto refs = image_pyramid(reference, levels);
    const auto movs = image_pyramid(moving, levels);
    std::vector<ReconMask> masks;
    if (cfg.mask_mode == MaskMode::GroundTruth) masks = mask_pyramid(*truth_mask, levels);

    AffineStage out;
    AffineParams theta = AffineParams::identity();

    for (std::size_t li = levels; li-- > 0;) {
        const GrayImage &ref = refs[li];
        const GrayImage &mov = movs[li];
        const Size size = ref.size();
        const ReconMask ones = ReconMask::ones(size);
        const DeformationField no_field = DeformationField::zero(size);

        auto evaluate = [&](const AffineParams &t) {
            if (!t.is_invertible()) throw NumericalError("singular affine");
            const GrayImage warped = apply_affine(mov, t);
            switch (cfg.mask_mode) {
            case MaskMode::Ones:
                return similarity(ref, warped, ones, cfg.correlation);
            case MaskMode::GroundTruth:
                return similarity(ref, warped, masks[li], cfg.correlation);
            case MaskMode::Estimated:
                return similarity(ref, warped, compute_mask(size, invert_affine(t), no_field, cfg.mask_threshold),
                                  cfg.correlation);
            }
            return kPenalty;
        };
        auto objective = [&](std::span<const double> p) {
            try {
                return evaluate(params_to_affine(p));
            } catch (const NumericalError &) {
                return kPenalty;
            }
        };

        // The coarsest level must be well posed at the identity.
        if (li == levels - 1) (void)evaluate(AffineParams::identity());

        // Start from whichever of the propagated estimate and the identity scores better here.
        AffineParams start = theta;
        if (objective(affine_to_params(AffineParams::identity())) < objective(affine_to_params(theta))) {
            start = AffineParams::identity();
        }

        const double px_x = 2.0 / std::max<double>(1.0, static_cast<double>(size.width) - 1.0);
        const double px_y = 2.0 / std::max<double>(1.0, static_cast<double>(size.height) - 1.0);
        const bool coarsest = li == levels - 1;
        const double lin = coarsest ? 0.05 : 0.02;
        const double shift = coarsest ? 3.0 : 1.5;
        const std::vector<double> steps{lin, lin, lin, lin, shift * px_x, shift * px_y};

        // 1e-5 in normalized units is about a thousandth of a pixel at 256 px.
        NelderMeadOptions opts;
        opts.max_evals = cfg.affine_max_evals;
        opts.f_tol = 1e-9;
        opts.x_tol = 1e-5;
        opts.restarts = 1;
        const auto nm = nelder_mead(objective, affine_to_params(start), steps, opts);
        theta = params_to_affine(nm.x);
        out.trace.push_back({"affine", li, nm.trace});
    }
    out.theta = theta;
    return out;
}

namespace {

// Optimizes phi for output(p) = moving(theta(p + phi(p))), starting from `initial` when given.
DeformableStage deformable_from(const GrayImage &reference, const GrayImage &moving, const AffineParams &theta,
                                const RegisterConfig &cfg, const ReconMask &mask, const GrayImage *guide,
                                const DeformationField *initial) {
    require_same_size(reference, moving, "register_deformable");
    if (mask.size() != reference.size()) throw std::invalid_argument("register_deformable: mask size mismatch");
    if (guide) require_same_size(reference, *guide, "register_deformable");
    cfg.validate();

    const std::size_t levels = usable_levels(reference.size(), cfg.pyramid_levels);
    const auto refs = image_pyramid(reference, levels);
    const auto movs = image_pyramid(moving, levels);
    const auto masks = mask_pyramid(mask, levels);
    std::vector<GrayImage> guides;
    if (cfg.use_mg) guides = image_pyramid(guide ? *guide : reference, levels);

    const auto smooth_k = static_cast<std::size_t>(std::ceil(3.0 * cfg.deform_smooth_sigma));

    DeformableStage out;
    DeformationField field = initial ? resample_field(*initial, refs.back().size())
                                     : DeformationField::zero(refs.back().size());

    for (std::size_t li = levels; li-- > 0;) {
        const GrayImage &ref = refs[li];
        const GrayImage &mov = movs[li];
        const ReconMask &lmask = masks[li];
        const Size size = ref.size();
        if (field.size() != size) field = resample_field(field, size);

        std::optional<GrayImage> truth_lap;
        if (cfg.use_mg) truth_lap = laplacian(fuse(ref, guides[li], cfg.mg_fusion).fused);

        const PixelAffine px = to_pixel_affine(theta, size);
        const double cx = 0.5 * (static_cast<double>(size.width) - 1.0);
        const double cy = 0.5 * (static_cast<double>(size.height) - 1.0);

        auto energy_of = [&](const DeformationField &phi) {
            const GrayImage warped = apply_affine_deformation(mov, theta, phi);
            double e = cfg.epsilon * similarity(ref, warped, lmask, cfg.correlation);
            if (truth_lap && lmask.count() > 0) {
                e += laplacian_mask_rms(laplacian(fuse(ref, warped, cfg.mg_fusion).fused), *truth_lap, lmask);
            }
            return e;
        };
        auto try_energy = [&](const DeformationField &phi) {
            try {
                return energy_of(phi);
            } catch (const NumericalError &) {
                return std::numeric_limits<double>::infinity();
            }
        };

        // Never start a level worse than the undeformed image.
        const DeformationField zero = DeformationField::zero(size);
        double e = energy_of(zero);
        if (!field.is_zero()) {
            const double e_field = try_energy(field);
            if (e_field < e) {
                e = e_field;
            } else {
                field = zero;
            }
        }

        StageTrace trace{"deformable", li, {e}};
        const SobelResponse grad = central_gradient(mov);
        double step = cfg.deform_step;
        constexpr double kMinStep = 1e-3;

        for (std::size_t it = 0; it < cfg.deform_iters && step >= kMinStep; ++it) {
            const GrayImage warped = apply_affine_deformation(mov, theta, field);
            const GrayImage dsim = similarity_gradient(ref, warped, lmask, cfg.correlation);
            GrayImage ux(size), uy(size);
            for (std::size_t r = 0; r < size.height; ++r) {
                for (std::size_t c = 0; c < size.width; ++c) {
                    const double g = dsim(r, c);
                    if (g == 0.0) continue;
                    const double rx = static_cast<double>(c) + field.dx()(r, c) - cx;
                    const double ry = static_cast<double>(r) + field.dy()(r, c) - cy;
                    const double x = px.a * rx + px.b * ry + cx + px.tx;
                    const double y = px.c * rx + px.d * ry + cy + px.ty;
                    const double gx = bilinear_sample(grad.gx, x, y).value;
                    const double gy = bilinear_sample(grad.gy, x, y).value;
                    // Chain rule through the affine's linear part.
                    ux(r, c) = -cfg.epsilon * g * (gx * px.a + gy * px.c);
                    uy(r, c) = -cfg.epsilon * g * (gx * px.b + gy * px.d);
                }
            }
            ux = gaussian_filter(ux, cfg.deform_smooth_sigma, smooth_k);
            uy = gaussian_filter(uy, cfg.deform_smooth_sigma, smooth_k);
            double umax = 0.0;
            for (std::size_t i = 0; i < ux.pixel_count(); ++i) {
                umax = std::max(umax, std::hypot(ux.pixels()[i], uy.pixels()[i]));
            }
            if (umax == 0.0) break;

            bool accepted = false;
            while (step >= kMinStep) {
                DeformationField cand = field;
                const double scale = step / umax;
                for (std::size_t i = 0; i < ux.pixel_count(); ++i) {
                    cand.dx().pixels()[i] += scale * ux.pixels()[i];
                    cand.dy().pixels()[i] += scale * uy.pixels()[i];
                }
                const double e_cand = try_energy(cand);
                if (e_cand < e) {
                    field = std::move(cand);
                    e = e_cand;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if (!accepted) break;
            trace.values.push_back(e);
            step = std::min(step * 1.5, cfg.deform_step);
        }
        out.trace.push_back(std::move(trace));
    }
    out.phi = std::move(field);
    return out;
}

} // namespace

DeformableStage register_deformable(const GrayImage &reference, const GrayImage &moving_affined,
                                    const RegisterConfig &cfg, const ReconMask &mask, const GrayImage *guide) {
    return deformable_from(reference, moving_affined, AffineParams::identity(), cfg, mask, guide, nullptr);
}

RegistrationResult register_pair(const GrayImage &reference, const GrayImage &moving, const RegisterConfig &cfg,
                                 const ReconMask *truth_mask, const GrayImage *guide) {
    RegistrationResult res;
    AffineStage affine = register_affine(reference, moving, cfg, truth_mask);
    res.theta_hat = affine.theta;
    res.objective_trace = std::move(affine.trace);

    switch (cfg.mask_mode) {
    case MaskMode::Ones:
        res.mask = ReconMask::ones(reference.size());
        break;
    case MaskMode::GroundTruth:
        res.mask = *truth_mask;
        break;
    case MaskMode::Estimated:
        res.mask = registration_mask(reference.size(), res.theta_hat, DeformationField::zero(reference.size()),
                                     cfg.mask_threshold);
        break;
    }

    // The deformable stage samples the original moving image through theta_hat, so content
    // the affine alone would crop stays reachable.
    DeformableStage deform = deformable_from(reference, moving, res.theta_hat, cfg, res.mask, guide, nullptr);
    for (auto &t : deform.trace) res.objective_trace.push_back(std::move(t));
    if (cfg.mask_mode == MaskMode::Estimated && !deform.phi.is_zero()) {
        // Content pulled in from outside the moving image only shows up once a field is known:
        // refresh the mask from (theta_hat, phi_hat) and refine the field against it.
        res.mask = registration_mask(reference.size(), res.theta_hat, deform.phi, cfg.mask_threshold);
        DeformableStage refined =
            deformable_from(reference, moving, res.theta_hat, cfg, res.mask, guide, &deform.phi);
        for (auto &t : refined.trace) res.objective_trace.push_back(std::move(t));
        deform.phi = std::move(refined.phi);
    }
    res.phi_hat = std::move(deform.phi);

    res.registered = apply_affine_deformation(moving, res.theta_hat, res.phi_hat);
    res.final_mncc = mncc(res.registered, reference, res.mask);
    return res;
}

double corner_endpoint_error(const AffineParams &theta_hat, const AffineParams &theta_true, Size size) {
    const AffineParams expected = invert_affine(theta_true);
    const double w = static_cast<double>(size.width) - 1.0;
    const double h = static_cast<double>(size.height) - 1.0;
    const std::array<Point2, 4> corners{{{0.0, 0.0}, {w, 0.0}, {0.0, h}, {w, h}}};
    double acc = 0.0;
    for (const Point2 &c : corners) {
        const Point2 a = map_pixel(theta_hat, size, c);
        const Point2 b = map_pixel(expected, size, c);
        acc += std::hypot(a.x - b.x, a.y - b.y);
    }
    return acc / 4.0;
}

} // namespace regfuse
