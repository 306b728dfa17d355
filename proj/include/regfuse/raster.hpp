#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace regfuse {

struct Size {
    std::size_t height = 0;
    std::size_t width = 0;

    std::size_t pixels() const noexcept { return height * width; }
    bool operator==(const Size &) const = default;
};

// Single-channel double raster, row-major. Loaded images hold intensities in [0,1];
// intermediate results (Laplacians, displacement components) may be signed.
class GrayImage {
public:
    GrayImage() = default;
    GrayImage(std::size_t height, std::size_t width, double fill = 0.0);
    GrayImage(std::size_t height, std::size_t width, std::vector<double> data);
    explicit GrayImage(Size size, double fill = 0.0) : GrayImage(size.height, size.width, fill) {}

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    Size size() const noexcept { return {height_, width_}; }
    std::size_t pixel_count() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double &operator()(std::size_t row, std::size_t col) { return data_[row * width_ + col]; }
    double operator()(std::size_t row, std::size_t col) const { return data_[row * width_ + col]; }

    // Replicate-border access for signed coordinates.
    double clamped(std::ptrdiff_t row, std::ptrdiff_t col) const;

    std::span<double> pixels() noexcept { return data_; }
    std::span<const double> pixels() const noexcept { return data_; }

    bool operator==(const GrayImage &) const = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<double> data_;
};

// Throws std::invalid_argument when the two images differ in size.
void require_same_size(const GrayImage &a, const GrayImage &b, const char *what);

GrayImage clamp01(const GrayImage &img);

// ---------------------------------------------------------------------------
// File I/O. PGM is binary P5 with maxval 255. PFM is little-endian (scale -1),
// rows stored bottom-to-top as the format requires.

GrayImage load_pgm(const std::filesystem::path &path);
void save_pgm(const GrayImage &img, const std::filesystem::path &path);

// Byte quantization used by save_pgm: clamp to [0,1], then round(v*255).
unsigned char quantize_byte(double v);

GrayImage load_pfm_gray(const std::filesystem::path &path);
void save_pfm_gray(const GrayImage &img, const std::filesystem::path &path);

// Three-channel PFM ("PF"). Channels must share one size.
struct RgbPlanes {
    GrayImage r, g, b;
};
RgbPlanes load_pfm_rgb(const std::filesystem::path &path);
void save_pfm_rgb(const RgbPlanes &planes, const std::filesystem::path &path);

// ---------------------------------------------------------------------------
// Sampling. Integer coordinates address pixel centres; the domain is
// [0, width-1] x [0, height-1].

struct SampleResult {
    double value = 0.0;
    // True iff every tap carrying non-zero weight lies inside the image.
    bool inside = false;
};

[[noreturn]] void throw_non_finite_sample();

// Bilinear sampling over a grid of the given size whose values come from at(row, col).
// Lets callers sample images that are never materialized with bit-identical arithmetic.
template <class At>
SampleResult bilinear_sample_with(Size size, double x, double y, At &&at) {
    if (!std::isfinite(x) || !std::isfinite(y)) throw_non_finite_sample();
    const double xf = std::floor(x);
    const double yf = std::floor(y);
    const double fx = x - xf;
    const double fy = y - yf;
    const auto w = static_cast<double>(size.width);
    const auto h = static_cast<double>(size.height);

    SampleResult out;
    out.inside = true;
    if (xf >= 0.0 && yf >= 0.0 && xf + 1.0 <= w - 1.0 && yf + 1.0 <= h - 1.0) {
        // All four taps in bounds; same summation order as the general path.
        const auto r0 = static_cast<std::size_t>(yf);
        const auto c0 = static_cast<std::size_t>(xf);
        out.value = (1.0 - fy) * (1.0 - fx) * at(r0, c0) + (1.0 - fy) * fx * at(r0, c0 + 1) +
                    fy * (1.0 - fx) * at(r0 + 1, c0) + fy * fx * at(r0 + 1, c0 + 1);
        return out;
    }
    const double wx[2] = {1.0 - fx, fx};
    const double wy[2] = {1.0 - fy, fy};
    for (int j = 0; j < 2; ++j) {
        const double row = yf + j;
        for (int i = 0; i < 2; ++i) {
            const double weight = wy[j] * wx[i];
            if (weight == 0.0) continue;
            const double col = xf + i;
            if (col < 0.0 || col > w - 1.0 || row < 0.0 || row > h - 1.0) {
                out.inside = false;
                continue;
            }
            out.value += weight * at(static_cast<std::size_t>(row), static_cast<std::size_t>(col));
        }
    }
    return out;
}

inline SampleResult bilinear_sample(const GrayImage &img, double x, double y) {
    return bilinear_sample_with(img.size(), x, y, [&](std::size_t r, std::size_t c) { return img(r, c); });
}

// ---------------------------------------------------------------------------
// Fixed-kernel filters. All use replicate padding.

// 4-neighbour Laplacian [[0,1,0],[1,-4,1],[0,1,0]].
GrayImage laplacian(const GrayImage &img);

// Adjoint of laplacian() under the standard inner product, i.e. <L x, y> = <x, L^T y>.
GrayImage laplacian_adjoint(const GrayImage &img);

struct SobelResponse {
    GrayImage gx, gy;
};
SobelResponse sobel(const GrayImage &img);
GrayImage sobel_magnitude(const GrayImage &img);

// Normalized 1-D Gaussian taps for offsets -k..k.
std::vector<double> gaussian_taps(double sigma, std::size_t k);

// Convolution with the unit-sum (2k+1)x(2k+1) Gaussian, computed separably.
GrayImage gaussian_filter(const GrayImage &img, double sigma, std::size_t k);

// Central-difference image gradient (replicate borders).
SobelResponse central_gradient(const GrayImage &img);

// ---------------------------------------------------------------------------
// SSIM with an 11x11 Gaussian window (sigma 1.5), C1 = 0.01^2, C2 = 0.03^2.
// Windows are truncated at the image border and renormalized, so every pixel
// contributes a local SSIM value regardless of image size.

inline constexpr std::size_t kSsimHalfWindow = 5;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

double ssim(const GrayImage &a, const GrayImage &b);

// d ssim(a, b) / d a, one entry per pixel of a.
GrayImage ssim_gradient(const GrayImage &a, const GrayImage &b);

// ---------------------------------------------------------------------------
// Pyramid helper: 2x area averaging (odd trailing row/column dropped).
GrayImage downsample2(const GrayImage &img);

} // namespace regfuse
