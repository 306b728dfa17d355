#pragma once

#include "regfuse/mask.hpp"
#include "regfuse/raster.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>

namespace regfuse {

// Pearson correlation over all pixels. Throws NumericalError when either image is constant.
double ncc(const GrayImage &x, const GrayImage &y);

// Pearson correlation with sums and means restricted to mask=1 pixels.
// Throws NumericalError for masks with fewer than two pixels or zero masked variance.
double mncc(const GrayImage &x, const GrayImage &y, const ReconMask &mask);

double mse(const GrayImage &x, const GrayImage &y);
double mmse(const GrayImage &x, const GrayImage &y, const ReconMask &mask);

// Mean Sobel magnitude on the 8-bit scale.
double edge_intensity(const GrayImage &f);

// sqrt(RF^2 + CF^2) * 255 from horizontal/vertical first differences.
double spatial_frequency(const GrayImage &f);

// Kullback-Leibler divergence D(p || q) in bits. Both histograms are smoothed by
// adding kHistogramEpsilon to every bin and renormalized.
inline constexpr double kHistogramEpsilon = 1e-12;
double kl_divergence_bits(std::span<const double> p, std::span<const double> q);

// Mean of D(h_v || h_f) and D(h_r || h_f) over 256-bin intensity histograms.
double cross_entropy(const GrayImage &v, const GrayImage &r, const GrayImage &f);

// Feature mutual information, gradient variant: mean over sources of
// 2 I(G_s; G_f) / (H(G_s) + H(G_f)) on 64-bin histograms of Sobel magnitude.
inline constexpr std::size_t kFmiBins = 64;
double fmi_w(const GrayImage &v, const GrayImage &r, const GrayImage &f);

// Chen-Varshney style quality, Gaussian low-pass variant. Lower means closer to the sources.
inline constexpr std::size_t kQcvDefaultWindow = 16;
inline constexpr double kQcvFilterSigma = 2.0;
inline constexpr std::size_t kQcvFilterHalfWidth = 4;
double q_cv(const GrayImage &v, const GrayImage &r, const GrayImage &f, std::size_t window = kQcvDefaultWindow);

struct MetricsReport {
    std::map<std::string, double> values;
    std::map<std::string, std::string> labels;
    std::optional<double> mask_fraction;
};

// NCC and MSE, plus MNCC and MMSE when a mask is supplied.
MetricsReport registration_metrics(const GrayImage &x, const GrayImage &y, const ReconMask *mask = nullptr);

// EI, SF, CE, FMIw, Qcv and SSIM of the fused image against both sources.
MetricsReport fusion_metrics(const GrayImage &v, const GrayImage &r, const GrayImage &f);

} // namespace regfuse
