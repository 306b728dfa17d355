#include "regfuse/mask.hpp"

#include <algorithm>
#include <stdexcept>

namespace regfuse {

ReconMask::ReconMask(Size size, bool value) : size_(size), bits_(size.pixels(), value ? 1 : 0) {
    if (size.height == 0 || size.width == 0) throw std::invalid_argument("ReconMask: empty size");
}

ReconMask ReconMask::from_threshold(const GrayImage &img, double threshold) {
    ReconMask m(img.size());
    for (std::size_t i = 0; i < img.pixel_count(); ++i) m.bits_[i] = img.pixels()[i] > threshold ? 1 : 0;
    return m;
}

std::size_t ReconMask::count() const noexcept {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

GrayImage ReconMask::to_image() const {
    GrayImage img(size_);
    for (std::size_t i = 0; i < bits_.size(); ++i) img.pixels()[i] = bits_[i] ? 1.0 : 0.0;
    return img;
}

ReconMask compute_mask(Size size, const AffineParams &theta, const DeformationField &phi, double threshold) {
    require_invertible(theta);
    if (phi.size() != size) throw std::invalid_argument("compute_mask: field size does not match mask size");
    if (!(threshold >= 0.0 && threshold < 1.0)) throw std::invalid_argument("compute_mask: threshold must be in [0,1)");

    const bool elastic = !phi.is_zero();
    GrayImage m = apply_affine(GrayImage(size, 1.0), theta);
    if (elastic) m = apply_deformation(m, phi);
    if (elastic) m = apply_deformation(m, invert_deformation(phi));
    m = apply_affine(m, invert_affine(theta));
    return ReconMask::from_threshold(m, threshold);
}

ReconMask registration_mask(Size size, const AffineParams &theta_hat, const DeformationField &phi_hat,
                            double threshold) {
    require_invertible(theta_hat);
    if (phi_hat.size() != size) throw std::invalid_argument("registration_mask: field size does not match mask size");
    if (!(threshold >= 0.0 && threshold < 1.0)) {
        throw std::invalid_argument("registration_mask: threshold must be in [0,1)");
    }
    const bool elastic = !phi_hat.is_zero();
    GrayImage m(size, 1.0);
    if (elastic) m = apply_deformation(m, invert_deformation(phi_hat));
    m = apply_affine(m, invert_affine(theta_hat));
    m = apply_affine(m, theta_hat);
    if (elastic) m = apply_deformation(m, phi_hat);
    return ReconMask::from_threshold(m, threshold);
}

double mask_fraction(const ReconMask &mask) {
    return static_cast<double>(mask.count()) / static_cast<double>(mask.size().pixels());
}

ReconMask downsample_mask(const ReconMask &mask) {
    const Size s = mask.size();
    if (s.height < 2 || s.width < 2) throw std::invalid_argument("downsample_mask: mask must be at least 2x2");
    ReconMask out(Size{s.height / 2, s.width / 2});
    for (std::size_t r = 0; r < out.size().height; ++r) {
        for (std::size_t c = 0; c < out.size().width; ++c) {
            out.set(r, c, mask(2 * r, 2 * c) && mask(2 * r, 2 * c + 1) && mask(2 * r + 1, 2 * c) &&
                              mask(2 * r + 1, 2 * c + 1));
        }
    }
    return out;
}

} // namespace regfuse
