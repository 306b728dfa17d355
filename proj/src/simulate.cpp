#include "regfuse/simulate.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace regfuse {

namespace {

// Stream ids inside one seed.
constexpr std::uint64_t kAffineStream = 0;
constexpr std::uint64_t kNoiseXStream = 1;
constexpr std::uint64_t kNoiseYStream = 2;

double radians(double deg) { return deg * std::numbers::pi / 180.0; }

} // namespace

void AugmentationRanges::validate() const {
    if (!(rotation_deg >= 0.0) || !(translate_px >= 0.0) || !(shear_deg >= 0.0)) {
        throw std::invalid_argument("augmentation ranges must be non-negative");
    }
    if (!(scale_min > 0.0) || !(scale_min <= scale_max)) {
        throw std::invalid_argument("augmentation scale range must satisfy 0 < scale_min <= scale_max");
    }
    if (shear_deg >= 90.0) throw std::invalid_argument("augmentation shear must be below 90 degrees");
}

void ElasticParams::validate() const {
    if (!(sigma > 0.0)) throw std::invalid_argument("elastic sigma must be positive");
    if (k < 1) throw std::invalid_argument("elastic kernel half-width k must be at least 1");
    if (!(amplitude >= 0.0)) throw std::invalid_argument("elastic amplitude must be non-negative");
}

AffineParams affine_from_factors(const AffineFactors &f, Size size) {
    const double cr = std::cos(radians(f.rotation_deg));
    const double sr = std::sin(radians(f.rotation_deg));
    const double sh = std::tan(radians(f.shear_deg));
    // L = R * Shear * Scale; M(p) = L (p - centre + t) + centre.
    const double a = cr * f.scale;
    const double b = (cr * sh - sr) * f.scale;
    const double c = sr * f.scale;
    const double d = (sr * sh + cr) * f.scale;
    PixelAffine px{a, b, c, d, a * f.tx_px + b * f.ty_px, c * f.tx_px + d * f.ty_px};
    return from_pixel_affine(px, size);
}

AffineParams gen_affine(const AugmentationRanges &ranges, Size size, RngSeed seed) {
    ranges.validate();
    RandomStream rng(seed, kAffineStream);
    AffineFactors f;
    // Fixed draw order keeps outputs stable when a range is zero.
    f.rotation_deg = rng.uniform(-ranges.rotation_deg, ranges.rotation_deg);
    f.shear_deg = rng.uniform(-ranges.shear_deg, ranges.shear_deg);
    f.scale = rng.uniform(ranges.scale_min, ranges.scale_max);
    f.tx_px = rng.uniform(-ranges.translate_px, ranges.translate_px);
    f.ty_px = rng.uniform(-ranges.translate_px, ranges.translate_px);
    return affine_from_factors(f, size);
}

GaussianKernel gaussian_kernel(double sigma, std::size_t k) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("gaussian_kernel: sigma must be positive");
    if (k < 1) throw std::invalid_argument("gaussian_kernel: half-width must be at least 1");
    const std::size_t n = 2 * k + 1;
    GaussianKernel kern{GrayImage(n, n), GrayImage(n, n)};
    const double centre = static_cast<double>(k + 1);
    const double norm = 1.0 / (2.0 * std::numbers::pi * sigma * sigma);
    double sum = 0.0;
    for (std::size_t y = 1; y <= n; ++y) {
        for (std::size_t x = 1; x <= n; ++x) {
            const double ddx = static_cast<double>(x) - centre;
            const double ddy = static_cast<double>(y) - centre;
            const double v = norm * std::exp(-(ddx * ddx + ddy * ddy) / (2.0 * sigma * sigma));
            kern.raw(y - 1, x - 1) = v;
            sum += v;
        }
    }
    for (std::size_t i = 0; i < kern.raw.pixel_count(); ++i) kern.normalized.pixels()[i] = kern.raw.pixels()[i] / sum;
    return kern;
}

DeformationField gen_deformation_field(Size size, const ElasticParams &params, RngSeed seed) {
    params.validate();
    if (params.amplitude == 0.0) return DeformationField::zero(size);
    auto noise = [&](std::uint64_t stream) {
        RandomStream rng(seed, stream);
        GrayImage n(size);
        for (double &v : n.pixels()) v = params.amplitude * rng.normal();
        return gaussian_filter(n, params.sigma, params.k);
    };
    GrayImage dx = noise(kNoiseXStream);
    GrayImage dy = noise(kNoiseYStream);
    return DeformationField(std::move(dx), std::move(dy));
}

double field_std(const DeformationField &phi) {
    auto variance = [](const GrayImage &img) {
        double mean = 0.0;
        for (double v : img.pixels()) mean += v;
        mean /= static_cast<double>(img.pixel_count());
        double acc = 0.0;
        for (double v : img.pixels()) acc += (v - mean) * (v - mean);
        return acc / static_cast<double>(img.pixel_count());
    };
    return std::sqrt(0.5 * (variance(phi.dx()) + variance(phi.dy())));
}

MisalignedPair make_misaligned_pair(const GrayImage &img, const AugmentationRanges &ranges,
                                    const ElasticParams &params, RngSeed seed) {
    MisalignedPair pair;
    pair.theta = gen_affine(ranges, img.size(), seed);
    pair.phi = gen_deformation_field(img.size(), params, seed);
    pair.moving = apply_deformation(apply_affine(img, pair.theta), pair.phi);
    return pair;
}

} // namespace regfuse
