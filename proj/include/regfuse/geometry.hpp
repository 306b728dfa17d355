#pragma once

#include "regfuse/raster.hpp"

namespace regfuse {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

// Six-parameter affine map p' = [a b; c d] p + [dx; dy] acting on normalized
// coordinates: pixel centres span [-1, 1] along each axis, origin at the image
// centre. Warps use it as a sampling map (output pixel -> input location).
struct AffineParams {
    double a = 1.0, b = 0.0, c = 0.0, d = 1.0;
    double dx = 0.0, dy = 0.0;

    static AffineParams identity() { return {}; }

    double determinant() const noexcept { return a * d - b * c; }
    bool is_finite() const noexcept;
    bool is_invertible() const noexcept;

    Point2 map(Point2 p) const noexcept { return {a * p.x + b * p.y + dx, c * p.x + d * p.y + dy}; }

    bool operator==(const AffineParams &) const = default;
};

inline constexpr double kMinAffineDeterminant = 1e-8;

// Throws NumericalError when |det| < kMinAffineDeterminant or a coefficient is non-finite.
void require_invertible(const AffineParams &theta);

AffineParams invert_affine(const AffineParams &theta);

// Applying `first` and then `second` to a coordinate.
AffineParams compose_affine(const AffineParams &first, const AffineParams &second);

// Conversion between pixel coordinates and the normalized frame of an image size.
Point2 pixel_to_normalized(Point2 px, Size size) noexcept;
Point2 normalized_to_pixel(Point2 n, Size size) noexcept;

// theta acting on pixel coordinates of an image of the given size.
Point2 map_pixel(const AffineParams &theta, Size size, Point2 px) noexcept;

// Affine map expressed in pixel coordinates: p' = L (p - centre) + centre + t.
struct PixelAffine {
    double a = 1.0, b = 0.0, c = 0.0, d = 1.0;
    double tx = 0.0, ty = 0.0;
};
AffineParams from_pixel_affine(const PixelAffine &px, Size size) noexcept;
PixelAffine to_pixel_affine(const AffineParams &theta, Size size) noexcept;

// Sampling map that moves image content by (+shift_x, +shift_y) pixels.
AffineParams content_shift(double shift_x, double shift_y, Size size) noexcept;

// output(p) = input(theta(p)), bilinear, zero outside the input support.
GrayImage apply_affine(const GrayImage &img, const AffineParams &theta);

// Per-pixel displacement field in pixel units.
class DeformationField {
public:
    DeformationField() = default;
    explicit DeformationField(Size size) : dx_(size), dy_(size) {}
    DeformationField(GrayImage dx, GrayImage dy);

    static DeformationField zero(Size size) { return DeformationField(size); }

    Size size() const noexcept { return dx_.size(); }
    const GrayImage &dx() const noexcept { return dx_; }
    const GrayImage &dy() const noexcept { return dy_; }
    GrayImage &dx() noexcept { return dx_; }
    GrayImage &dy() noexcept { return dy_; }

    bool is_zero() const noexcept;
    // Root-mean-square displacement magnitude.
    double rms() const noexcept;

    bool operator==(const DeformationField &) const = default;

private:
    GrayImage dx_, dy_;
};

// output(x, y) = input(x + dx[y,x], y + dy[y,x]), bilinear, zero outside.
GrayImage apply_deformation(const GrayImage &img, const DeformationField &phi);

// Single-resampling form of apply_deformation(apply_affine(img, theta), phi):
// output(p) = input(theta(p + phi(p))). Content outside the affine's output grid stays reachable.
GrayImage apply_affine_deformation(const GrayImage &img, const AffineParams &theta, const DeformationField &phi);

// Negated field. A first-order inverse; exact only for constant fields.
DeformationField invert_deformation(const DeformationField &phi);

// Bilinear resize of a field to a new grid, rescaling displacements to the new pixel units.
DeformationField resample_field(const DeformationField &phi, Size size);

} // namespace regfuse
