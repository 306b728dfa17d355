#pragma once

#include "regfuse/geometry.hpp"
#include "regfuse/raster.hpp"
#include "regfuse/rng.hpp"

namespace regfuse {

// Bounds for random rigid misalignment. Angles in degrees, translation in pixels.
struct AugmentationRanges {
    double rotation_deg = 10.0;
    double translate_px = 25.0;
    double scale_min = 0.9;
    double scale_max = 1.1;
    double shear_deg = 5.0;

    static AugmentationRanges none() { return {0.0, 0.0, 1.0, 1.0, 0.0}; }
    void validate() const;
};

// Elastic field generation: raw noise of standard deviation `amplitude` (pixels)
// smoothed by a unit-sum (2k+1)^2 Gaussian of width `sigma`.
struct ElasticParams {
    double sigma = 32.0;
    std::size_t k = 30;
    double amplitude = 150.0;

    void validate() const;
};

// Individual factors of a generated affine, composed as rotation * shear * scale * translation
// about the image centre in pixel space.
struct AffineFactors {
    double rotation_deg = 0.0;
    double shear_deg = 0.0;
    double scale = 1.0;
    double tx_px = 0.0;
    double ty_px = 0.0;
};

AffineParams affine_from_factors(const AffineFactors &f, Size size);

AffineParams gen_affine(const AugmentationRanges &ranges, Size size, RngSeed seed);

struct GaussianKernel {
    GrayImage raw;        // direct evaluation of 1/(2 pi s^2) exp(-((x-k-1)^2 + (y-k-1)^2) / (2 s^2)), x,y = 1..2k+1
    GrayImage normalized; // raw / sum(raw)
};

GaussianKernel gaussian_kernel(double sigma, std::size_t k);

DeformationField gen_deformation_field(Size size, const ElasticParams &params, RngSeed seed);

// Pooled standard deviation of the dx and dy displacement components.
double field_std(const DeformationField &phi);

struct MisalignedPair {
    GrayImage moving;
    AffineParams theta;
    DeformationField phi;
};

// moving = E(S(img, theta), phi) with freshly drawn theta and phi.
MisalignedPair make_misaligned_pair(const GrayImage &img, const AugmentationRanges &ranges,
                                    const ElasticParams &params, RngSeed seed);

} // namespace regfuse
