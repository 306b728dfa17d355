#include "regfuse/raster.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace regfuse {

GrayImage::GrayImage(std::size_t height, std::size_t width, double fill)
    : height_(height), width_(width), data_(height * width, fill) {
    if (height == 0 || width == 0) {
        throw std::invalid_argument("GrayImage: dimensions must be at least 1x1");
    }
}

GrayImage::GrayImage(std::size_t height, std::size_t width, std::vector<double> data)
    : height_(height), width_(width), data_(std::move(data)) {
    if (height == 0 || width == 0) {
        throw std::invalid_argument("GrayImage: dimensions must be at least 1x1");
    }
    if (data_.size() != height * width) {
        throw std::invalid_argument("GrayImage: data length " + std::to_string(data_.size()) +
                                    " does not match " + std::to_string(height) + "x" + std::to_string(width));
    }
}

double GrayImage::clamped(std::ptrdiff_t row, std::ptrdiff_t col) const {
    const auto r = std::clamp<std::ptrdiff_t>(row, 0, static_cast<std::ptrdiff_t>(height_) - 1);
    const auto c = std::clamp<std::ptrdiff_t>(col, 0, static_cast<std::ptrdiff_t>(width_) - 1);
    return data_[static_cast<std::size_t>(r) * width_ + static_cast<std::size_t>(c)];
}

void require_same_size(const GrayImage &a, const GrayImage &b, const char *what) {
    if (a.size() != b.size()) {
        throw std::invalid_argument(std::string(what) + ": dimension mismatch (" + std::to_string(a.height()) + "x" +
                                    std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                                    std::to_string(b.width()) + ")");
    }
}

GrayImage clamp01(const GrayImage &img) {
    GrayImage out = img;
    for (double &v : out.pixels()) v = std::clamp(v, 0.0, 1.0);
    return out;
}

void throw_non_finite_sample() { throw std::invalid_argument("bilinear_sample: non-finite coordinate"); }

GrayImage laplacian(const GrayImage &img) {
    GrayImage out(img.size());
    const auto h = static_cast<std::ptrdiff_t>(img.height());
    const auto w = static_cast<std::ptrdiff_t>(img.width());
    for (std::ptrdiff_t r = 0; r < h; ++r) {
        for (std::ptrdiff_t c = 0; c < w; ++c) {
            out(r, c) = img.clamped(r - 1, c) + img.clamped(r + 1, c) + img.clamped(r, c - 1) +
                        img.clamped(r, c + 1) - 4.0 * img(r, c);
        }
    }
    return out;
}

GrayImage laplacian_adjoint(const GrayImage &img) {
    GrayImage out(img.size());
    const auto h = static_cast<std::ptrdiff_t>(img.height());
    const auto w = static_cast<std::ptrdiff_t>(img.width());
    auto scatter = [&](std::ptrdiff_t r, std::ptrdiff_t c, double v) {
        r = std::clamp<std::ptrdiff_t>(r, 0, h - 1);
        c = std::clamp<std::ptrdiff_t>(c, 0, w - 1);
        out(r, c) += v;
    };
    for (std::ptrdiff_t r = 0; r < h; ++r) {
        for (std::ptrdiff_t c = 0; c < w; ++c) {
            const double v = img(r, c);
            scatter(r - 1, c, v);
            scatter(r + 1, c, v);
            scatter(r, c - 1, v);
            scatter(r, c + 1, v);
            out(r, c) -= 4.0 * v;
        }
    }
    return out;
}

SobelResponse sobel(const GrayImage &img) {
    SobelResponse s{GrayImage(img.size()), GrayImage(img.size())};
    const auto h = static_cast<std::ptrdiff_t>(img.height());
    const auto w = static_cast<std::ptrdiff_t>(img.width());
    for (std::ptrdiff_t r = 0; r < h; ++r) {
        for (std::ptrdiff_t c = 0; c < w; ++c) {
            const double tl = img.clamped(r - 1, c - 1), tc = img.clamped(r - 1, c), tr = img.clamped(r - 1, c + 1);
            const double ml = img.clamped(r, c - 1), mr = img.clamped(r, c + 1);
            const double bl = img.clamped(r + 1, c - 1), bc = img.clamped(r + 1, c), br = img.clamped(r + 1, c + 1);
            s.gx(r, c) = (tr + 2.0 * mr + br) - (tl + 2.0 * ml + bl);
            s.gy(r, c) = (bl + 2.0 * bc + br) - (tl + 2.0 * tc + tr);
        }
    }
    return s;
}

GrayImage sobel_magnitude(const GrayImage &img) {
    const auto s = sobel(img);
    GrayImage out(img.size());
    for (std::size_t i = 0; i < out.pixel_count(); ++i) {
        out.pixels()[i] = std::hypot(s.gx.pixels()[i], s.gy.pixels()[i]);
    }
    return out;
}

SobelResponse central_gradient(const GrayImage &img) {
    SobelResponse g{GrayImage(img.size()), GrayImage(img.size())};
    const auto h = static_cast<std::ptrdiff_t>(img.height());
    const auto w = static_cast<std::ptrdiff_t>(img.width());
    for (std::ptrdiff_t r = 0; r < h; ++r) {
        for (std::ptrdiff_t c = 0; c < w; ++c) {
            g.gx(r, c) = 0.5 * (img.clamped(r, c + 1) - img.clamped(r, c - 1));
            g.gy(r, c) = 0.5 * (img.clamped(r + 1, c) - img.clamped(r - 1, c));
        }
    }
    return g;
}

std::vector<double> gaussian_taps(double sigma, std::size_t k) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
        throw std::invalid_argument("gaussian kernel: sigma must be positive");
    }
    if (k < 1) throw std::invalid_argument("gaussian kernel: half-width must be at least 1");
    std::vector<double> taps(2 * k + 1);
    double sum = 0.0;
    for (std::size_t i = 0; i < taps.size(); ++i) {
        const double d = static_cast<double>(i) - static_cast<double>(k);
        taps[i] = std::exp(-(d * d) / (2.0 * sigma * sigma));
        sum += taps[i];
    }
    for (double &t : taps) t /= sum;
    return taps;
}

namespace {

enum class Border { Replicate, Zero };

GrayImage convolve_rows(const GrayImage &img, const std::vector<double> &taps, Border border) {
    GrayImage out(img.size());
    const std::size_t k = taps.size() / 2;
    const std::size_t w = img.width();
    std::vector<double> padded(w + 2 * k);
    for (std::size_t r = 0; r < img.height(); ++r) {
        const double *row = img.pixels().data() + r * w;
        const double left = border == Border::Zero ? 0.0 : row[0];
        const double right = border == Border::Zero ? 0.0 : row[w - 1];
        std::fill(padded.begin(), padded.begin() + static_cast<std::ptrdiff_t>(k), left);
        std::copy(row, row + w, padded.begin() + static_cast<std::ptrdiff_t>(k));
        std::fill(padded.end() - static_cast<std::ptrdiff_t>(k), padded.end(), right);
        double *dst = out.pixels().data() + r * w;
        for (std::size_t c = 0; c < w; ++c) {
            const double *src = padded.data() + c;
            double acc = 0.0;
            for (std::size_t t = 0; t < taps.size(); ++t) acc += taps[t] * src[t];
            dst[c] = acc;
        }
    }
    return out;
}

GrayImage convolve_cols(const GrayImage &img, const std::vector<double> &taps, Border border) {
    GrayImage out(img.size());
    const auto k = static_cast<std::ptrdiff_t>(taps.size() / 2);
    const auto h = static_cast<std::ptrdiff_t>(img.height());
    const auto w = static_cast<std::ptrdiff_t>(img.width());
    for (std::ptrdiff_t r = 0; r < h; ++r) {
        for (std::ptrdiff_t o = -k; o <= k; ++o) {
            const std::ptrdiff_t rr = r + o;
            if (border == Border::Zero && (rr < 0 || rr >= h)) continue;
            const std::ptrdiff_t src = std::clamp<std::ptrdiff_t>(rr, 0, h - 1);
            const double t = taps[static_cast<std::size_t>(o + k)];
            for (std::ptrdiff_t c = 0; c < w; ++c) out(r, c) += t * img(src, c);
        }
    }
    return out;
}

GrayImage convolve_separable(const GrayImage &img, const std::vector<double> &taps, Border border) {
    return convolve_cols(convolve_rows(img, taps, border), taps, border);
}

// Per-axis sum of window taps that fall inside [0, n).
std::vector<double> truncated_tap_mass(std::size_t n, const std::vector<double> &taps) {
    const auto k = static_cast<std::ptrdiff_t>(taps.size() / 2);
    std::vector<double> mass(n, 0.0);
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        for (std::ptrdiff_t o = -k; o <= k; ++o) {
            const std::ptrdiff_t j = i + o;
            if (j >= 0 && j < static_cast<std::ptrdiff_t>(n)) mass[i] += taps[static_cast<std::size_t>(o + k)];
        }
    }
    return mass;
}

// Local window statistics shared by ssim() and ssim_gradient().
struct SsimWindow {
    std::vector<double> taps;
    GrayImage norm; // per-pixel window mass Z(p)

    explicit SsimWindow(Size size) : taps(gaussian_taps(kSsimSigma, kSsimHalfWindow)), norm(size) {
        const auto mr = truncated_tap_mass(size.height, taps);
        const auto mc = truncated_tap_mass(size.width, taps);
        for (std::size_t r = 0; r < size.height; ++r)
            for (std::size_t c = 0; c < size.width; ++c) norm(r, c) = mr[r] * mc[c];
    }

    GrayImage mean(const GrayImage &img) const {
        GrayImage out = convolve_separable(img, taps, Border::Zero);
        for (std::size_t i = 0; i < out.pixel_count(); ++i) out.pixels()[i] /= norm.pixels()[i];
        return out;
    }

    // Adjoint of mean().
    GrayImage mean_adjoint(const GrayImage &img) const {
        GrayImage scaled = img;
        for (std::size_t i = 0; i < scaled.pixel_count(); ++i) scaled.pixels()[i] /= norm.pixels()[i];
        return convolve_separable(scaled, taps, Border::Zero);
    }
};

GrayImage product(const GrayImage &a, const GrayImage &b) {
    GrayImage out(a.size());
    for (std::size_t i = 0; i < out.pixel_count(); ++i) out.pixels()[i] = a.pixels()[i] * b.pixels()[i];
    return out;
}

struct SsimMoments {
    GrayImage mu_a, mu_b, e_aa, e_bb, e_ab;
};

SsimMoments ssim_moments(const SsimWindow &win, const GrayImage &a, const GrayImage &b) {
    return {win.mean(a), win.mean(b), win.mean(product(a, a)), win.mean(product(b, b)), win.mean(product(a, b))};
}

} // namespace

GrayImage gaussian_filter(const GrayImage &img, double sigma, std::size_t k) {
    return convolve_separable(img, gaussian_taps(sigma, k), Border::Replicate);
}

double ssim(const GrayImage &a, const GrayImage &b) {
    require_same_size(a, b, "ssim");
    const SsimWindow win(a.size());
    const auto m = ssim_moments(win, a, b);
    double total = 0.0;
    for (std::size_t i = 0; i < a.pixel_count(); ++i) {
        const double ma = m.mu_a.pixels()[i], mb = m.mu_b.pixels()[i];
        const double va = m.e_aa.pixels()[i] - ma * ma;
        const double vb = m.e_bb.pixels()[i] - mb * mb;
        const double cov = m.e_ab.pixels()[i] - ma * mb;
        total += ((2.0 * ma * mb + kSsimC1) * (2.0 * cov + kSsimC2)) /
                 ((ma * ma + mb * mb + kSsimC1) * (va + vb + kSsimC2));
    }
    return total / static_cast<double>(a.pixel_count());
}

GrayImage ssim_gradient(const GrayImage &a, const GrayImage &b) {
    require_same_size(a, b, "ssim_gradient");
    const SsimWindow win(a.size());
    const auto m = ssim_moments(win, a, b);
    const std::size_t n = a.pixel_count();
    GrayImage d_mu(a.size()), d_eaa(a.size()), d_eab(a.size());
    for (std::size_t i = 0; i < n; ++i) {
        const double ma = m.mu_a.pixels()[i], mb = m.mu_b.pixels()[i];
        const double va = m.e_aa.pixels()[i] - ma * ma;
        const double vb = m.e_bb.pixels()[i] - mb * mb;
        const double cov = m.e_ab.pixels()[i] - ma * mb;
        const double a1 = 2.0 * ma * mb + kSsimC1;
        const double a2 = 2.0 * cov + kSsimC2;
        const double b1 = ma * ma + mb * mb + kSsimC1;
        const double b2 = va + vb + kSsimC2;
        const double s = (a1 * a2) / (b1 * b2);
        d_mu.pixels()[i] = (2.0 * mb * a2 - 2.0 * mb * a1) / (b1 * b2) - s * (2.0 * ma / b1 - 2.0 * ma / b2);
        d_eaa.pixels()[i] = -s / b2;
        d_eab.pixels()[i] = 2.0 * a1 / (b1 * b2);
    }
    const GrayImage t_mu = win.mean_adjoint(d_mu);
    const GrayImage t_aa = win.mean_adjoint(d_eaa);
    const GrayImage t_ab = win.mean_adjoint(d_eab);
    GrayImage grad(a.size());
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        grad.pixels()[i] =
            inv_n * (t_mu.pixels()[i] + 2.0 * a.pixels()[i] * t_aa.pixels()[i] + b.pixels()[i] * t_ab.pixels()[i]);
    }
    return grad;
}

GrayImage downsample2(const GrayImage &img) {
    if (img.height() < 2 || img.width() < 2) {
        throw std::invalid_argument("downsample2: image must be at least 2x2");
    }
    GrayImage out(img.height() / 2, img.width() / 2);
    for (std::size_t r = 0; r < out.height(); ++r) {
        for (std::size_t c = 0; c < out.width(); ++c) {
            out(r, c) = 0.25 * (img(2 * r, 2 * c) + img(2 * r, 2 * c + 1) + img(2 * r + 1, 2 * c) +
                                img(2 * r + 1, 2 * c + 1));
        }
    }
    return out;
}

} // namespace regfuse
