#pragma once

#include "regfuse/geometry.hpp"
#include "regfuse/raster.hpp"

#include <cstdint>
#include <vector>

namespace regfuse {

// Binary raster of reference pixels whose content survives a warp round trip.
class ReconMask {
public:
    ReconMask() = default;
    explicit ReconMask(Size size, bool value = false);

    static ReconMask ones(Size size) { return ReconMask(size, true); }
    static ReconMask zeros(Size size) { return ReconMask(size, false); }
    // Pixels strictly greater than `threshold` become set.
    static ReconMask from_threshold(const GrayImage &img, double threshold);

    Size size() const noexcept { return size_; }
    bool operator()(std::size_t row, std::size_t col) const { return bits_[row * size_.width + col] != 0; }
    bool at(std::size_t index) const { return bits_[index] != 0; }
    void set(std::size_t row, std::size_t col, bool v) { bits_[row * size_.width + col] = v ? 1 : 0; }

    std::size_t count() const noexcept;
    GrayImage to_image() const;

    bool operator==(const ReconMask &) const = default;

private:
    Size size_;
    std::vector<std::uint8_t> bits_;
};

// Paper-faithful rule keeps any pixel with positive round-trip support; the strict
// rule keeps only pixels fully supported through every bilinear tap.
inline constexpr double kDefaultMaskThreshold = 0.0;
inline constexpr double kStrictMaskThreshold = 0.999;

// Forward-warps an all-ones mask (affine then elastic), warps it back (inverse elastic,
// then inverse affine) and thresholds the result.
ReconMask compute_mask(Size size, const AffineParams &theta, const DeformationField &phi,
                       double threshold = kDefaultMaskThreshold);

// Mask for a registration estimate whose warp is E(S(moving, theta_hat), phi_hat). The
// misalignment is taken to be the inverse chain (elastic by -phi_hat, then the inverse affine):
// ones are warped through it and back, then thresholded. With a zero field this equals
// compute_mask(size, invert_affine(theta_hat), zero, threshold).
ReconMask registration_mask(Size size, const AffineParams &theta_hat, const DeformationField &phi_hat,
                            double threshold = kDefaultMaskThreshold);

double mask_fraction(const ReconMask &mask);

// Pyramid helper: a coarse pixel is set only when all four fine pixels are set.
ReconMask downsample_mask(const ReconMask &mask);

} // namespace regfuse
