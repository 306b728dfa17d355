#include "regfuse/geometry.hpp"

#include "regfuse/error.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace regfuse {

bool AffineParams::is_finite() const noexcept {
    return std::isfinite(a) && std::isfinite(b) && std::isfinite(c) && std::isfinite(d) && std::isfinite(dx) &&
           std::isfinite(dy);
}

bool AffineParams::is_invertible() const noexcept {
    return is_finite() && std::abs(determinant()) >= kMinAffineDeterminant;
}

void require_invertible(const AffineParams &theta) {
    if (!theta.is_finite()) throw NumericalError("affine parameters are not finite");
    if (std::abs(theta.determinant()) < kMinAffineDeterminant) {
        throw NumericalError("affine linear part is singular (|det| = " + std::to_string(std::abs(theta.determinant())) +
                             ")");
    }
}

AffineParams invert_affine(const AffineParams &theta) {
    require_invertible(theta);
    const double det = theta.determinant();
    AffineParams inv;
    inv.a = theta.d / det;
    inv.b = -theta.b / det;
    inv.c = -theta.c / det;
    inv.d = theta.a / det;
    inv.dx = -(inv.a * theta.dx + inv.b * theta.dy);
    inv.dy = -(inv.c * theta.dx + inv.d * theta.dy);
    return inv;
}

AffineParams compose_affine(const AffineParams &first, const AffineParams &second) {
    AffineParams out;
    out.a = second.a * first.a + second.b * first.c;
    out.b = second.a * first.b + second.b * first.d;
    out.c = second.c * first.a + second.d * first.c;
    out.d = second.c * first.b + second.d * first.d;
    out.dx = second.a * first.dx + second.b * first.dy + second.dx;
    out.dy = second.c * first.dx + second.d * first.dy + second.dy;
    return out;
}

namespace {

// Half extent of an axis in pixels; a single-pixel axis gets unit scale.
double half_extent(std::size_t n) noexcept { return n > 1 ? 0.5 * static_cast<double>(n - 1) : 1.0; }
double centre(std::size_t n) noexcept { return 0.5 * static_cast<double>(n - 1); }

} // namespace

Point2 pixel_to_normalized(Point2 px, Size size) noexcept {
    return {(px.x - centre(size.width)) / half_extent(size.width),
            (px.y - centre(size.height)) / half_extent(size.height)};
}

Point2 normalized_to_pixel(Point2 n, Size size) noexcept {
    return {n.x * half_extent(size.width) + centre(size.width), n.y * half_extent(size.height) + centre(size.height)};
}

Point2 map_pixel(const AffineParams &theta, Size size, Point2 px) noexcept {
    return normalized_to_pixel(theta.map(pixel_to_normalized(px, size)), size);
}

AffineParams from_pixel_affine(const PixelAffine &px, Size size) noexcept {
    const double hx = half_extent(size.width);
    const double hy = half_extent(size.height);
    AffineParams t;
    t.a = px.a;
    t.b = px.b * hy / hx;
    t.c = px.c * hx / hy;
    t.d = px.d;
    t.dx = px.tx / hx;
    t.dy = px.ty / hy;
    return t;
}

PixelAffine to_pixel_affine(const AffineParams &theta, Size size) noexcept {
    const double hx = half_extent(size.width);
    const double hy = half_extent(size.height);
    PixelAffine px;
    px.a = theta.a;
    px.b = theta.b * hx / hy;
    px.c = theta.c * hy / hx;
    px.d = theta.d;
    px.tx = theta.dx * hx;
    px.ty = theta.dy * hy;
    return px;
}

AffineParams content_shift(double shift_x, double shift_y, Size size) noexcept {
    return from_pixel_affine(PixelAffine{1.0, 0.0, 0.0, 1.0, -shift_x, -shift_y}, size);
}

GrayImage apply_affine(const GrayImage &img, const AffineParams &theta) {
    require_invertible(theta);
    const Size size = img.size();
    const PixelAffine px = to_pixel_affine(theta, size);
    const double cx = centre(size.width);
    const double cy = centre(size.height);
    GrayImage out(size);
    for (std::size_t r = 0; r < size.height; ++r) {
        const double ry = static_cast<double>(r) - cy;
        for (std::size_t c = 0; c < size.width; ++c) {
            const double rx = static_cast<double>(c) - cx;
            const double sx = px.a * rx + px.b * ry + cx + px.tx;
            const double sy = px.c * rx + px.d * ry + cy + px.ty;
            out(r, c) = bilinear_sample(img, sx, sy).value;
        }
    }
    return out;
}

DeformationField::DeformationField(GrayImage dx, GrayImage dy) : dx_(std::move(dx)), dy_(std::move(dy)) {
    require_same_size(dx_, dy_, "DeformationField");
    for (std::size_t i = 0; i < dx_.pixel_count(); ++i) {
        if (!std::isfinite(dx_.pixels()[i]) || !std::isfinite(dy_.pixels()[i])) {
            throw std::invalid_argument("DeformationField: non-finite displacement");
        }
    }
}

bool DeformationField::is_zero() const noexcept {
    for (std::size_t i = 0; i < dx_.pixel_count(); ++i) {
        if (dx_.pixels()[i] != 0.0 || dy_.pixels()[i] != 0.0) return false;
    }
    return true;
}

double DeformationField::rms() const noexcept {
    if (dx_.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < dx_.pixel_count(); ++i) {
        acc += dx_.pixels()[i] * dx_.pixels()[i] + dy_.pixels()[i] * dy_.pixels()[i];
    }
    return std::sqrt(acc / static_cast<double>(dx_.pixel_count()));
}

GrayImage apply_deformation(const GrayImage &img, const DeformationField &phi) {
    if (phi.size() != img.size()) {
        throw std::invalid_argument("apply_deformation: field size does not match image size");
    }
    GrayImage out(img.size());
    for (std::size_t r = 0; r < img.height(); ++r) {
        for (std::size_t c = 0; c < img.width(); ++c) {
            out(r, c) =
                bilinear_sample(img, static_cast<double>(c) + phi.dx()(r, c), static_cast<double>(r) + phi.dy()(r, c))
                    .value;
        }
    }
    return out;
}

GrayImage apply_affine_deformation(const GrayImage &img, const AffineParams &theta, const DeformationField &phi) {
    require_invertible(theta);
    if (phi.size() != img.size()) {
        throw std::invalid_argument("apply_affine_deformation: field size does not match image size");
    }
    const Size size = img.size();
    const PixelAffine px = to_pixel_affine(theta, size);
    const double cx = centre(size.width);
    const double cy = centre(size.height);
    GrayImage out(size);
    for (std::size_t r = 0; r < size.height; ++r) {
        for (std::size_t c = 0; c < size.width; ++c) {
            const double rx = static_cast<double>(c) + phi.dx()(r, c) - cx;
            const double ry = static_cast<double>(r) + phi.dy()(r, c) - cy;
            out(r, c) = bilinear_sample(img, px.a * rx + px.b * ry + cx + px.tx, px.c * rx + px.d * ry + cy + px.ty).value;
        }
    }
    return out;
}

DeformationField invert_deformation(const DeformationField &phi) {
    DeformationField inv = phi;
    for (double &v : inv.dx().pixels()) v = -v;
    for (double &v : inv.dy().pixels()) v = -v;
    return inv;
}

DeformationField resample_field(const DeformationField &phi, Size size) {
    const Size from = phi.size();
    const double sx = static_cast<double>(size.width) / static_cast<double>(from.width);
    const double sy = static_cast<double>(size.height) / static_cast<double>(from.height);
    DeformationField out(size);
    for (std::size_t r = 0; r < size.height; ++r) {
        // Pixel-centre alignment between grids of different resolution.
        const double y = std::clamp((static_cast<double>(r) + 0.5) / sy - 0.5, 0.0, static_cast<double>(from.height - 1));
        for (std::size_t c = 0; c < size.width; ++c) {
            const double x =
                std::clamp((static_cast<double>(c) + 0.5) / sx - 0.5, 0.0, static_cast<double>(from.width - 1));
            out.dx()(r, c) = bilinear_sample(phi.dx(), x, y).value * sx;
            out.dy()(r, c) = bilinear_sample(phi.dy(), x, y).value * sy;
        }
    }
    return out;
}

} // namespace regfuse
