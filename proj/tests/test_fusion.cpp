#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "regfuse/fusion.hpp"
#include "support/oracles.hpp"
#include "support/scenes.hpp"

#include <cmath>

using namespace regfuse;
using testing::random_image;

namespace {

double relative_gradient_error(const GrayImage &f, const GrayImage &v, const GrayImage &r, const FusionConfig &cfg) {
    const GrayImage g = fusion_energy_gradient(f, v, r, cfg);
    const double h = 1e-6;
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < f.pixel_count(); ++i) {
        GrayImage p = f, m = f;
        p.pixels()[i] += h;
        m.pixels()[i] -= h;
        const double fd = (fusion_energy(p, v, r, cfg).total - fusion_energy(m, v, r, cfg).total) / (2 * h);
        num += std::pow(fd - g.pixels()[i], 2);
        den += fd * fd;
    }
    return std::sqrt(num / den);
}

} // namespace

TEST_CASE("target gradient") {
    CHECK(target_gradient(GrayImage(5, 5, 0.2), GrayImage(5, 5, 0.9), 0.7) == GrayImage(5, 5, 0.0));

    // Centre Laplacians 0.5 (visible) and 0.2 (infrared).
    GrayImage v(3, 3, 0.0), r(3, 3, 0.0);
    v(1, 1) = -0.125;
    r(1, 1) = -0.05;
    const GrayImage t = target_gradient(v, r, 0.7);
    CHECK(t(1, 1) == doctest::Approx(std::pow(0.5, 0.7)).epsilon(1e-12));
    CHECK(t(1, 1) == doctest::Approx(0.6156).epsilon(1e-4));

    for (std::uint64_t s = 0; s < 20; ++s) {
        const GrayImage a = random_image({7, 6}, s), b = random_image({7, 6}, s + 50);
        const GrayImage ab = target_gradient(a, b, 0.7), ba = target_gradient(b, a, 0.7);
        const auto o = oracle::target_gradient(oracle::to_grid(a), oracle::to_grid(b), 0.7);
        for (std::size_t i = 0; i < ab.pixel_count(); ++i) CHECK(std::abs(ab.pixels()[i]) == std::abs(ba.pixels()[i]));
        for (std::size_t y = 0; y < 7; ++y)
            for (std::size_t x = 0; x < 6; ++x) CHECK(std::abs(ab(y, x) - o[y][x]) <= 1e-12);
    }
    CHECK_THROWS(target_gradient(v, GrayImage(3, 4), 0.7));
    CHECK_THROWS(target_gradient(v, r, 0.0));
    CHECK_THROWS(target_gradient(v, r, 1.5));
}

TEST_CASE("loss terms") {
    const GrayImage v = random_image({12, 12}, 1), r = random_image({12, 12}, 2), f = random_image({12, 12}, 3);
    CHECK(loss_wsim(v, v, v) <= 1e-9);
    const double w = loss_wsim(f, v, r);
    CHECK(w >= 0.0);
    CHECK(w <= 2.0);
    CHECK(std::abs(w - (1.0 - 0.5 * (ssim(f, v) + ssim(f, r)))) <= 1e-12);

    CHECK(loss_grad(GrayImage(6, 6, 0.3), GrayImage(6, 6, 0.1), GrayImage(6, 6, 0.9), 0.7) == 0.0);

    const GrayImage a = random_image({4, 4}, 4), b = random_image({4, 4}, 5), g = random_image({4, 4}, 6);
    const auto lap = oracle::laplacian(oracle::to_grid(g));
    const auto tgt = oracle::target_gradient(oracle::to_grid(a), oracle::to_grid(b), 0.7);
    long double acc = 0;
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) acc += std::pow((long double)lap[y][x] - tgt[y][x], 2);
    CHECK(std::abs(loss_grad(g, a, b, 0.7) - (double)std::sqrt(acc / 16)) <= 1e-12);

    // gamma = 1 and v = r: f = v reproduces its own Laplacian.
    CHECK(loss_grad(a, a, a, 1.0) == 0.0);

    CHECK_THROWS(loss_grad(a, b, GrayImage(4, 5), 0.7));
    CHECK_THROWS(loss_wsim(a, b, GrayImage(4, 5)));
}

TEST_CASE("energy gradient matches finite differences") {
    for (std::uint64_t s = 0; s < 5; ++s) {
        const GrayImage v = random_image({8, 8}, s), r = random_image({8, 8}, s + 10), f = random_image({8, 8}, s + 20);
        FusionConfig grad_only;
        grad_only.sigma_balance = 0.0;
        CHECK(relative_gradient_error(f, v, r, grad_only) <= 1e-4);
        CHECK(relative_gradient_error(f, v, r, FusionConfig{}) <= 1e-4);
    }
}

TEST_CASE("fuse") {
    const GrayImage c(10, 10, 0.37);
    const auto same = fuse(c, c);
    CHECK(same.fused == c);
    CHECK(same.iterations_used == 0);

    const GrayImage img = testing::make_scene({32, 32}, 3);
    const auto self = fuse(img, img);
    for (std::size_t i = 1; i < self.energy_trace.size(); ++i) CHECK(self.energy_trace[i] < self.energy_trace[i - 1]);

    const GrayImage v = testing::make_scene({32, 32}, 4), r = testing::negate(testing::make_scene({32, 32}, 5));
    const auto res = fuse(v, r);
    REQUIRE(res.energy_trace.size() == res.iterations_used + 1);
    for (std::size_t i = 1; i < res.energy_trace.size(); ++i) CHECK(res.energy_trace[i] <= res.energy_trace[i - 1]);
    for (double x : res.fused.pixels()) {
        CHECK(x >= 0.0);
        CHECK(x <= 1.0);
    }

    FusionConfig short_run;
    short_run.max_iters = 3;
    short_run.tol = 0.0;
    CHECK(fuse(v, r, short_run).iterations_used == 3);

    CHECK_THROWS(fuse(v, GrayImage(32, 31)));
    FusionConfig bad;
    bad.step_size = 0.0;
    CHECK_THROWS(fuse(v, r, bad));
}

TEST_CASE("fusion is symmetric in its sources") {
    const GrayImage v = testing::make_scene({24, 24}, 6), r = testing::make_scene({24, 24}, 7);
    FusionConfig cfg;
    cfg.max_iters = 2000;
    cfg.tol = 1e-12;
    const double e1 = fuse(v, r, cfg).energy_trace.back();
    const double e2 = fuse(r, v, cfg).energy_trace.back();
    CHECK(std::abs(e1 - e2) <= 1e-6);
}

TEST_CASE("a step edge survives fusion with a flat image") {
    const Size s{64, 64};
    GrayImage v(s, 0.2);
    for (std::size_t y = 0; y < 64; ++y)
        for (std::size_t x = 32; x < 64; ++x) v(y, x) = 0.8;
    const GrayImage r(s, 0.5);
    const auto res = fuse(v, r);
    const GrayImage lap = laplacian(res.fused);
    const GrayImage tgt = target_gradient(v, r, 0.7);
    double ratio_min = 1e9;
    for (std::size_t y = 8; y < 56; ++y)
        for (std::size_t x : {31, 32}) ratio_min = std::min(ratio_min, std::abs(lap(y, x)) / std::abs(tgt(y, x)));
    MESSAGE("edge ratio " << ratio_min);
    CHECK(ratio_min >= 0.9);
}
