#pragma once

#include "regfuse/fusion.hpp"
#include "regfuse/geometry.hpp"
#include "regfuse/mask.hpp"
#include "regfuse/raster.hpp"

#include <string>
#include <vector>

namespace regfuse {

enum class MaskMode {
    Ones,        // every pixel counts
    GroundTruth, // reconstructible mask of a known misalignment, supplied by the caller
    Estimated,   // recomputed from the current affine estimate
};

enum class CorrelationMode {
    Signed,    // minimize -MNCC
    Magnitude, // minimize -MNCC^2, for modalities whose structure is sign-flipped
};

struct RegisterConfig {
    std::size_t pyramid_levels = 3;
    double epsilon = 1.0;
    bool use_mg = false;
    std::size_t affine_max_evals = 2000;
    std::size_t deform_iters = 200;
    double deform_step = 0.25;
    double deform_smooth_sigma = 2.0;
    MaskMode mask_mode = MaskMode::Estimated;
    CorrelationMode correlation = CorrelationMode::Signed;
    // Threshold for masks built during registration. Strict, because fringe pixels carry
    // zero-filled taps that bias the correlation.
    double mask_threshold = kStrictMaskThreshold;
    // Fusion solver used inside the masked gradient term.
    FusionConfig mg_fusion{0.7, 1.0, 50, 0.5, 1e-6};

    void validate() const;
};

struct StageTrace {
    std::string stage; // "affine" or "deformable"
    std::size_t level = 0; // 0 = full resolution
    std::vector<double> values;
};

struct AffineStage {
    AffineParams theta;
    std::vector<StageTrace> trace;
};

struct DeformableStage {
    DeformationField phi;
    std::vector<StageTrace> trace;
};

struct RegistrationResult {
    AffineParams theta_hat;
    DeformationField phi_hat;
    GrayImage registered;
    std::vector<StageTrace> objective_trace;
    ReconMask mask; // mask used for the deformable stage and final_mncc
    double final_mncc = 0.0;
};

// -MNCC(warped, reference) over the mask.
double loss_mncc(const GrayImage &reference, const GrayImage &warped, const ReconMask &mask);

// Masked RMS difference of the Laplacians of fuse(x, y_warped) and fuse(x, y_true),
// normalized by the full pixel count. Uses fusion.gamma as the enhancement factor.
double loss_mg(const GrayImage &x, const GrayImage &y_warped, const GrayImage &y_true, const ReconMask &mask,
               const FusionConfig &fusion = {});

// Coarse-to-fine simplex search for theta such that apply_affine(moving, theta) matches reference.
// `truth_mask` is required when cfg.mask_mode is GroundTruth.
AffineStage register_affine(const GrayImage &reference, const GrayImage &moving, const RegisterConfig &cfg,
                            const ReconMask *truth_mask = nullptr);

// Smoothed gradient descent on epsilon * loss (+ loss_mg when enabled) over a displacement field.
// `mask` restricts the similarity term; `guide` is the aligned second image used by loss_mg
// (the reference itself when null).
DeformableStage register_deformable(const GrayImage &reference, const GrayImage &moving_affined,
                                    const RegisterConfig &cfg, const ReconMask &mask,
                                    const GrayImage *guide = nullptr);

// Affine stage, then deformable stage, then final masked correlation.
RegistrationResult register_pair(const GrayImage &reference, const GrayImage &moving, const RegisterConfig &cfg,
                                 const ReconMask *truth_mask = nullptr, const GrayImage *guide = nullptr);

// Mean distance in pixels between where theta_hat and the inverse of theta_true send the
// four image corners.
double corner_endpoint_error(const AffineParams &theta_hat, const AffineParams &theta_true, Size size);

} // namespace regfuse
