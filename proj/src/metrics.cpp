#include "regfuse/metrics.hpp"

#include "regfuse/error.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace regfuse {

namespace {

// Pearson correlation over the pixels selected by `keep`.
template <class Keep>
double correlation(const GrayImage &x, const GrayImage &y, Keep keep, const char *what) {
    require_same_size(x, y, what);
    const auto xs = x.pixels();
    const auto ys = y.pixels();
    std::size_t n = 0;
    double sx = 0.0, sy = 0.0;
    // A constant selection must be caught exactly: its two-pass variance is rounding noise.
    bool x_varies = false, y_varies = false;
    double x0 = 0.0, y0 = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!keep(i)) continue;
        if (n == 0) {
            x0 = xs[i];
            y0 = ys[i];
        }
        x_varies = x_varies || xs[i] != x0;
        y_varies = y_varies || ys[i] != y0;
        ++n;
        sx += xs[i];
        sy += ys[i];
    }
    if (n < 2) throw NumericalError(std::string(what) + ": fewer than two pixels selected");
    const double mx = sx / static_cast<double>(n);
    const double my = sy / static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!keep(i)) continue;
        const double dx = xs[i] - mx;
        const double dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (!x_varies || !y_varies || sxx <= 0.0 || syy <= 0.0) throw NumericalError(std::string(what) + ": zero variance in selected region");
    return std::clamp(sxy / (std::sqrt(sxx) * std::sqrt(syy)), -1.0, 1.0);
}

template <class Keep>
double mean_squared(const GrayImage &x, const GrayImage &y, Keep keep, const char *what) {
    require_same_size(x, y, what);
    std::size_t n = 0;
    double acc = 0.0;
    for (std::size_t i = 0; i < x.pixel_count(); ++i) {
        if (!keep(i)) continue;
        const double d = x.pixels()[i] - y.pixels()[i];
        acc += d * d;
        ++n;
    }
    if (n == 0) throw NumericalError(std::string(what) + ": empty mask");
    return acc / static_cast<double>(n);
}

void require_mask_size(const GrayImage &x, const ReconMask &mask, const char *what) {
    if (mask.size() != x.size()) throw std::invalid_argument(std::string(what) + ": mask size does not match image");
}

std::vector<double> intensity_histogram(const GrayImage &img) {
    std::vector<double> h(256, 0.0);
    for (double v : img.pixels()) h[quantize_byte(v)] += 1.0;
    for (double &b : h) b /= static_cast<double>(img.pixel_count());
    return h;
}

std::vector<std::size_t> bin_features(const GrayImage &feat, std::size_t bins) {
    const auto [lo, hi] = std::minmax_element(feat.pixels().begin(), feat.pixels().end());
    std::vector<std::size_t> idx(feat.pixel_count(), 0);
    const double span = *hi - *lo;
    if (span <= 0.0) return idx;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto b = static_cast<std::size_t>((feat.pixels()[i] - *lo) / span * static_cast<double>(bins));
        idx[i] = std::min(b, bins - 1);
    }
    return idx;
}

double entropy_bits(const std::vector<double> &p) {
    double h = 0.0;
    for (double v : p)
        if (v > 0.0) h -= v * std::log2(v);
    return h;
}

double normalized_feature_mi(const std::vector<std::size_t> &a, const std::vector<std::size_t> &b, std::size_t bins) {
    std::vector<double> joint(bins * bins, 0.0), pa(bins, 0.0), pb(bins, 0.0);
    const double inv = 1.0 / static_cast<double>(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        joint[a[i] * bins + b[i]] += inv;
        pa[a[i]] += inv;
        pb[b[i]] += inv;
    }
    const double ha = entropy_bits(pa);
    const double hb = entropy_bits(pb);
    if (ha + hb <= 0.0) return 0.0;
    const double mi = ha + hb - entropy_bits(joint);
    return std::clamp(2.0 * mi / (ha + hb), 0.0, 1.0);
}

} // namespace

double ncc(const GrayImage &x, const GrayImage &y) {
    return correlation(x, y, [](std::size_t) { return true; }, "ncc");
}

double mncc(const GrayImage &x, const GrayImage &y, const ReconMask &mask) {
    require_mask_size(x, mask, "mncc");
    return correlation(x, y, [&](std::size_t i) { return mask.at(i); }, "mncc");
}

double mse(const GrayImage &x, const GrayImage &y) {
    return mean_squared(x, y, [](std::size_t) { return true; }, "mse");
}

double mmse(const GrayImage &x, const GrayImage &y, const ReconMask &mask) {
    require_mask_size(x, mask, "mmse");
    return mean_squared(x, y, [&](std::size_t i) { return mask.at(i); }, "mmse");
}

double edge_intensity(const GrayImage &f) {
    const GrayImage mag = sobel_magnitude(f);
    double acc = 0.0;
    for (double v : mag.pixels()) acc += v;
    return 255.0 * acc / static_cast<double>(mag.pixel_count());
}

double spatial_frequency(const GrayImage &f) {
    if (f.height() < 2 || f.width() < 2) throw std::invalid_argument("spatial_frequency: image must be at least 2x2");
    double rf = 0.0, cf = 0.0;
    for (std::size_t r = 0; r < f.height(); ++r)
        for (std::size_t c = 1; c < f.width(); ++c) rf += std::pow(f(r, c) - f(r, c - 1), 2);
    for (std::size_t r = 1; r < f.height(); ++r)
        for (std::size_t c = 0; c < f.width(); ++c) cf += std::pow(f(r, c) - f(r - 1, c), 2);
    rf /= static_cast<double>(f.height() * (f.width() - 1));
    cf /= static_cast<double>((f.height() - 1) * f.width());
    return 255.0 * std::sqrt(rf + cf);
}

double kl_divergence_bits(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size() || p.empty()) throw std::invalid_argument("kl_divergence_bits: histogram size mismatch");
    double sp = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        sp += p[i] + kHistogramEpsilon;
        sq += q[i] + kHistogramEpsilon;
    }
    double d = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double pi = (p[i] + kHistogramEpsilon) / sp;
        const double qi = (q[i] + kHistogramEpsilon) / sq;
        d += pi * std::log2(pi / qi);
    }
    return std::max(d, 0.0);
}

double cross_entropy(const GrayImage &v, const GrayImage &r, const GrayImage &f) {
    require_same_size(v, f, "cross_entropy");
    require_same_size(r, f, "cross_entropy");
    const auto hv = intensity_histogram(v);
    const auto hr = intensity_histogram(r);
    const auto hf = intensity_histogram(f);
    return 0.5 * (kl_divergence_bits(hv, hf) + kl_divergence_bits(hr, hf));
}

double fmi_w(const GrayImage &v, const GrayImage &r, const GrayImage &f) {
    require_same_size(v, f, "fmi_w");
    require_same_size(r, f, "fmi_w");
    const auto gf = bin_features(sobel_magnitude(f), kFmiBins);
    const auto gv = bin_features(sobel_magnitude(v), kFmiBins);
    const auto gr = bin_features(sobel_magnitude(r), kFmiBins);
    return 0.5 * (normalized_feature_mi(gv, gf, kFmiBins) + normalized_feature_mi(gr, gf, kFmiBins));
}

double q_cv(const GrayImage &v, const GrayImage &r, const GrayImage &f, std::size_t window) {
    require_same_size(v, f, "q_cv");
    require_same_size(r, f, "q_cv");
    if (window < 4) throw std::invalid_argument("q_cv: window must be at least 4");

    auto filtered_diff = [&](const GrayImage &s) {
        GrayImage d(s.size());
        for (std::size_t i = 0; i < d.pixel_count(); ++i) d.pixels()[i] = s.pixels()[i] - f.pixels()[i];
        return gaussian_filter(d, kQcvFilterSigma, kQcvFilterHalfWidth);
    };
    const GrayImage dv = filtered_diff(v), dr = filtered_diff(r);
    const GrayImage sv = sobel_magnitude(v), sr = sobel_magnitude(r);

    double num = 0.0, den = 0.0, plain = 0.0;
    std::size_t blocks = 0;
    for (std::size_t r0 = 0; r0 < f.height(); r0 += window) {
        for (std::size_t c0 = 0; c0 < f.width(); c0 += window) {
            const std::size_t r1 = std::min(r0 + window, f.height());
            const std::size_t c1 = std::min(c0 + window, f.width());
            double lv = 0.0, lr = 0.0, ev = 0.0, er = 0.0;
            for (std::size_t y = r0; y < r1; ++y) {
                for (std::size_t x = c0; x < c1; ++x) {
                    lv += sv(y, x) * sv(y, x);
                    lr += sr(y, x) * sr(y, x);
                    ev += dv(y, x) * dv(y, x);
                    er += dr(y, x) * dr(y, x);
                }
            }
            const auto count = static_cast<double>((r1 - r0) * (c1 - c0));
            ev /= count;
            er /= count;
            num += lv * ev + lr * er;
            den += lv + lr;
            plain += 0.5 * (ev + er);
            ++blocks;
        }
    }
    // Flat sources carry no saliency; fall back to equal block weights.
    const double q = den > 0.0 ? num / den : plain / static_cast<double>(blocks);
    return 255.0 * 255.0 * q;
}

MetricsReport registration_metrics(const GrayImage &x, const GrayImage &y, const ReconMask *mask) {
    MetricsReport rep;
    rep.values["NCC"] = ncc(x, y);
    rep.values["MSE"] = mse(x, y);
    if (mask) {
        rep.values["MNCC"] = mncc(x, y, *mask);
        rep.values["MMSE"] = mmse(x, y, *mask);
        rep.mask_fraction = mask_fraction(*mask);
    }
    return rep;
}

MetricsReport fusion_metrics(const GrayImage &v, const GrayImage &r, const GrayImage &f) {
    MetricsReport rep;
    rep.values["EI"] = edge_intensity(f);
    rep.values["SF"] = spatial_frequency(f);
    rep.values["CE"] = cross_entropy(v, r, f);
    rep.values["FMIw"] = fmi_w(v, r, f);
    rep.values["Qcv"] = q_cv(v, r, f);
    rep.values["SSIM_v"] = ssim(f, v);
    rep.values["SSIM_r"] = ssim(f, r);
    rep.labels["FMIw"] = "sobel-magnitude features, 64 bins";
    rep.labels["Qcv"] = "gaussian low-pass (sigma 2), 16px blocks, 8-bit scale";
    return rep;
}

} // namespace regfuse
