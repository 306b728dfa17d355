#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "regfuse/mask.hpp"
#include "regfuse/metrics.hpp"
#include "regfuse/simulate.hpp"
#include "support/oracles.hpp"
#include "support/scenes.hpp"

#include <cmath>
#include <numbers>

using namespace regfuse;

TEST_CASE("seed mixing separates streams") {
    CHECK(mix_seed(1, 0) != mix_seed(1, 1));
    CHECK(mix_seed(1, 0) != mix_seed(2, 0));
    CHECK(mix_seed(7, 3) == mix_seed(7, 3));
    RandomStream a(RngSeed{4}, 0), b(RngSeed{4}, 0);
    for (int i = 0; i < 10; ++i) CHECK(a.normal() == b.normal());
    RandomStream u(RngSeed{9}, 2);
    double mean = 0.0, sq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double x = u.normal();
        mean += x;
        sq += x * x;
    }
    mean /= n;
    CHECK(std::abs(mean) < 0.05);
    CHECK(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("gen_affine") {
    const Size s{256, 256};
    const AffineParams id = gen_affine(AugmentationRanges::none(), s, RngSeed{42});
    CHECK(id == AffineParams::identity());
    CHECK(gen_affine({}, s, RngSeed{5}) == gen_affine({}, s, RngSeed{5}));
    CHECK_FALSE(gen_affine({}, s, RngSeed{5}) == gen_affine({}, s, RngSeed{6}));

    double max_rot = 0, max_shear = 0, max_t = 0, min_s = 10, max_s = 0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const AffineParams t = gen_affine({}, s, RngSeed{seed});
        CHECK(t.is_invertible());
        const auto d = oracle::decompose(t, s);
        max_rot = std::max(max_rot, std::abs(d.rotation_deg));
        max_shear = std::max(max_shear, std::abs(d.shear_deg));
        max_t = std::max({max_t, std::abs(d.tx), std::abs(d.ty)});
        min_s = std::min(min_s, d.scale);
        max_s = std::max(max_s, d.scale);
    }
    const double slack = 1e-9;
    CHECK(max_rot <= 10.0 + slack);
    CHECK(max_shear <= 5.0 + slack);
    CHECK(max_t <= 25.0 + slack);
    CHECK(min_s >= 0.9 - slack);
    CHECK(max_s <= 1.1 + slack);
    // The draws actually use the ranges.
    CHECK(max_rot > 9.0);
    CHECK(max_t > 24.0);

    CHECK_THROWS(gen_affine(AugmentationRanges{-1, 0, 1, 1, 0}, s, RngSeed{0}));
    CHECK_THROWS(gen_affine(AugmentationRanges{0, 0, 1.2, 1.1, 0}, s, RngSeed{0}));
    CHECK_THROWS(gen_affine(AugmentationRanges{0, 0, 0, 1, 0}, s, RngSeed{0}));
}

TEST_CASE("affine factors decompose back") {
    const Size s{100, 140};
    const AffineFactors f{7.5, -3.0, 1.05, 12.0, -4.0};
    const auto d = oracle::decompose(affine_from_factors(f, s), s);
    CHECK(d.rotation_deg == doctest::Approx(7.5).epsilon(1e-12));
    CHECK(d.shear_deg == doctest::Approx(-3.0).epsilon(1e-12));
    CHECK(d.scale == doctest::Approx(1.05).epsilon(1e-12));
    CHECK(d.tx == doctest::Approx(12.0).epsilon(1e-12));
    CHECK(d.ty == doctest::Approx(-4.0).epsilon(1e-12));
}

TEST_CASE("gaussian_kernel") {
    const auto k = gaussian_kernel(32.0, 30);
    CHECK(k.raw(30, 30) == doctest::Approx(1.0 / (2.0 * std::numbers::pi * 1024.0)).epsilon(1e-12));
    CHECK(k.raw(30, 30) == doctest::Approx(1.55425e-4).epsilon(1e-5));
    const std::size_t n = 61;
    for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x) {
            CHECK(k.raw(y, x) == k.raw(y, n - 1 - x));
            CHECK(k.raw(y, x) == k.raw(n - 1 - y, x));
            CHECK(k.raw(y, x) == k.raw(x, y));
        }
    for (auto [sigma, half] : {std::pair{32.0, 15}, std::pair{32.0, 30}, std::pair{4.0, 8}}) {
        const auto g = gaussian_kernel(sigma, half);
        double sum = 0.0;
        for (double v : g.normalized.pixels()) sum += v;
        CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
    const auto k1 = gaussian_kernel(32.0, 1);
    for (double v : k1.normalized.pixels()) CHECK(std::abs(v - 1.0 / 9.0) < 1e-4);
    // The separable filter uses the same normalized kernel.
    const auto taps = gaussian_taps(4.0, 8);
    const auto k48 = gaussian_kernel(4.0, 8);
    for (std::size_t y = 0; y < 17; ++y)
        for (std::size_t x = 0; x < 17; ++x) CHECK(std::abs(taps[y] * taps[x] - k48.normalized(y, x)) <= 1e-15);
    CHECK_THROWS(gaussian_kernel(0.0, 3));
}

TEST_CASE("gen_deformation_field") {
    const Size s{64, 64};
    CHECK(gen_deformation_field(s, ElasticParams{32.0, 30, 0.0}, RngSeed{1}).is_zero());
    CHECK(gen_deformation_field(s, {}, RngSeed{3}) == gen_deformation_field(s, {}, RngSeed{3}));
    CHECK_FALSE(gen_deformation_field(s, {}, RngSeed{3}) == gen_deformation_field(s, {}, RngSeed{4}));
    CHECK_THROWS(gen_deformation_field(s, ElasticParams{0.0, 30, 1.0}, RngSeed{1}));
    CHECK_THROWS(gen_deformation_field(s, ElasticParams{32.0, 0, 1.0}, RngSeed{1}));
    CHECK_THROWS(gen_deformation_field(s, ElasticParams{32.0, 3, -1.0}, RngSeed{1}));
}

TEST_CASE("displacement spread shrinks as the kernel widens") {
    const Size s{256, 256};
    std::vector<double> mean_std;
    for (std::size_t k : {15, 20, 25, 30}) {
        double acc = 0.0;
        for (std::uint64_t seed = 0; seed < 10; ++seed)
            acc += field_std(gen_deformation_field(s, ElasticParams{32.0, k, 150.0}, RngSeed{seed}));
        mean_std.push_back(acc / 10.0);
    }
    for (std::size_t i = 1; i < mean_std.size(); ++i) CHECK(mean_std[i] < mean_std[i - 1]);
}

TEST_CASE("generated fields are smooth") {
    // Largest central-difference slope relative to amplitude / sigma. The constant is a
    // measured regression bound (1.01 over these seeds).
    const Size s{128, 128};
    const ElasticParams ep{};
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto phi = gen_deformation_field(s, ep, RngSeed{seed});
        for (const GrayImage *g : {&phi.dx(), &phi.dy()}) {
            const auto grad = central_gradient(*g);
            for (std::size_t i = 0; i < g->pixel_count(); ++i)
                worst = std::max(worst, std::hypot(grad.gx.pixels()[i], grad.gy.pixels()[i]));
        }
    }
    const double c = worst / (ep.amplitude / ep.sigma);
    MESSAGE("smoothness constant " << c);
    CHECK(c < 1.25);
}

TEST_CASE("make_misaligned_pair") {
    const GrayImage img = testing::make_scene({64, 64}, 1);
    const auto same = make_misaligned_pair(img, AugmentationRanges::none(), ElasticParams{32.0, 30, 0.0}, RngSeed{0});
    CHECK(same.moving == img);

    // Integer translation factor: sampling at p + t is an exact shifted copy with zero fill.
    const GrayImage shifted = apply_affine(img, affine_from_factors({0.0, 0.0, 1.0, 3.0, -2.0}, img.size()));
    for (long r = 0; r < 64; ++r)
        for (long c = 0; c < 64; ++c) {
            const long sr = r - 2, sc = c + 3;
            const double want = (sr >= 0 && sr < 64 && sc >= 0 && sc < 64) ? img(sr, sc) : 0.0;
            CHECK(std::abs(shifted(r, c) - want) <= 1e-12);
        }

    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const GrayImage big = testing::make_scene({256, 256}, seed);
        const auto pair = make_misaligned_pair(big, {}, {}, RngSeed{seed});
        const GrayImage expect = apply_deformation(apply_affine(big, pair.theta), pair.phi);
        CHECK(pair.moving == expect);
        CHECK(mncc(pair.moving, big, ReconMask::ones(big.size())) < 0.95);
    }
}
