// Acceptance suite: one PASS/FAIL line per criterion. Run with criterion numbers as
// arguments to select a subset.

#include "regfuse/cli.hpp"
#include "regfuse/error.hpp"
#include "regfuse/fusion.hpp"
#include "regfuse/mask.hpp"
#include "regfuse/metrics.hpp"
#include "regfuse/register.hpp"
#include "regfuse/rng.hpp"
#include "regfuse/simulate.hpp"
#include "support/oracles.hpp"
#include "support/scenes.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#ifndef REGFUSE_EXE
#error "REGFUSE_EXE must name the command-line binary"
#endif

using namespace regfuse;
using testing::make_scene;
using testing::random_image;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string &what) {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

std::string fmt(double v, int prec = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    return buf;
}

// 1. Affine inverse composition and image round trip on the strict-mask interior.
Outcome warp_round_trip() {
    Outcome o;
    const Size s{128, 128};
    const GrayImage img = make_scene(s, 1);
    const auto t0 = Clock::now();
    double worst_coef = 0.0, worst_rmse = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const AffineParams t = gen_affine({}, s, RngSeed{seed});
        const AffineParams id = compose_affine(t, invert_affine(t));
        for (double d : {id.a - 1.0, id.b, id.c, id.d - 1.0, id.dx, id.dy}) worst_coef = std::max(worst_coef, std::abs(d));
        const GrayImage back = apply_affine(apply_affine(img, t), invert_affine(t));
        const ReconMask interior = compute_mask(s, t, DeformationField::zero(s), kStrictMaskThreshold);
        double acc = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < img.pixel_count(); ++i) {
            if (!interior.at(i)) continue;
            acc += std::pow(back.pixels()[i] - img.pixels()[i], 2);
            ++n;
        }
        worst_rmse = std::max(worst_rmse, n ? std::sqrt(acc / n) : INFINITY);
    }
    const double secs = seconds_since(t0);
    o.detail << "max coefficient error " << fmt(worst_coef) << ", max interior RMSE " << fmt(worst_rmse) << ", "
             << fmt(secs, 3) << " s";
    o.require(worst_coef <= 1e-12, "compose(theta, inverse) within 1e-12");
    o.require(worst_rmse <= 0.01, "round-trip RMSE <= 0.01");
    o.require(secs < 10.0, "runtime < 10 s");
    return o;
}

// 2. compute_mask against forward coverage.
Outcome mask_oracle() {
    Outcome o;
    const Size s{128, 128};
    double mask_secs = 0.0, worst = 1.0, mean = 0.0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const AffineParams t = gen_affine({}, s, RngSeed{seed});
        const DeformationField phi = gen_deformation_field(s, {}, RngSeed{seed});
        const auto t0 = Clock::now();
        const ReconMask m = compute_mask(s, t, phi);
        mask_secs += seconds_since(t0);
        const auto cov = oracle::coverage_mask(s, t, phi);
        std::size_t same = 0;
        for (std::size_t r = 0; r < s.height; ++r)
            for (std::size_t c = 0; c < s.width; ++c) same += m(r, c) == cov[r][c];
        const double agree = static_cast<double>(same) / static_cast<double>(s.pixels());
        worst = std::min(worst, agree);
        mean += agree / 50.0;
    }
    o.detail << "min agreement " << fmt(100 * worst, 6) << "%, mean " << fmt(100 * mean, 6) << "%, compute_mask "
             << fmt(mask_secs, 3) << " s";
    o.require(worst >= 0.99, "agreement >= 99% on every instance");
    o.require(mask_secs < 30.0, "runtime < 30 s");
    return o;
}

ReconMask random_mask(Size s, std::uint64_t seed) {
    RandomStream rng(RngSeed{seed}, 31);
    ReconMask m(s);
    for (std::size_t r = 0; r < s.height; ++r)
        for (std::size_t c = 0; c < s.width; ++c) m.set(r, c, rng.uniform() < 0.6);
    m.set(0, 0, true);
    m.set(s.height - 1, s.width - 1, true);
    m.set(0, s.width - 1, true);
    return m;
}

// 3. Metrics against direct-formula oracles.
Outcome metric_oracles() {
    Outcome o;
    const int instances = 25;
    std::map<std::string, double> worst;
    double ones_gap = 0.0;
    bool masked_insensitive = true;
    for (int k = 0; k < instances; ++k) {
        RandomStream rng(RngSeed{static_cast<std::uint64_t>(k)}, 44);
        const Size s{2 + static_cast<std::size_t>(rng.uniform() * 7), 2 + static_cast<std::size_t>(rng.uniform() * 7)};
        const std::uint64_t b = 1000 * static_cast<std::uint64_t>(k);
        const GrayImage x = random_image(s, b + 1), y = random_image(s, b + 2);
        const GrayImage v = random_image(s, b + 3), r = random_image(s, b + 4), f = random_image(s, b + 5);
        const ReconMask m = random_mask(s, b + 6);
        const auto gx = oracle::to_grid(x), gy = oracle::to_grid(y), gv = oracle::to_grid(v), gr = oracle::to_grid(r),
                   gf = oracle::to_grid(f), gm = oracle::to_grid(m.to_image());
        auto track = [&](const std::string &name, double got, double want) {
            worst[name] = std::max(worst[name], std::abs(got - want));
        };
        track("NCC", ncc(x, y), oracle::ncc(gx, gy));
        track("MNCC", mncc(x, y, m), oracle::ncc(gx, gy, &gm));
        track("MSE", mse(x, y), oracle::mse(gx, gy));
        track("MMSE", mmse(x, y, m), oracle::mse(gx, gy, &gm));
        track("EI", edge_intensity(f), oracle::edge_intensity(gf));
        track("SF", spatial_frequency(f), oracle::spatial_frequency(gf));
        track("CE", cross_entropy(v, r, f), oracle::cross_entropy(gv, gr, gf));
        track("FMIw", fmi_w(v, r, f), oracle::fmi_w(gv, gr, gf));
        track("Qcv", q_cv(v, r, f, 4), oracle::q_cv(gv, gr, gf, 4));
        track("Qcv", q_cv(v, r, f, 8), oracle::q_cv(gv, gr, gf, 8));
        ones_gap = std::max(ones_gap, std::abs(mncc(x, y, ReconMask::ones(s)) - ncc(x, y)));

        GrayImage x2 = x, y2 = y;
        for (std::size_t i = 0; i < x.pixel_count(); ++i)
            if (!m.at(i)) {
                x2.pixels()[i] = rng.uniform(-10.0, 10.0);
                y2.pixels()[i] = rng.uniform(-10.0, 10.0);
            }
        masked_insensitive = masked_insensitive && mncc(x, y, m) == mncc(x2, y2, m) && mmse(x, y, m) == mmse(x2, y2, m);
    }
    double max_err = 0.0;
    for (const auto &[name, e] : worst) {
        o.require(e <= 1e-9, name + " within 1e-9");
        max_err = std::max(max_err, e);
    }
    o.require(ones_gap <= 1e-12, "mncc(ones) = ncc within 1e-12");
    o.require(masked_insensitive, "masked metrics bit-insensitive to mask=0 pixels");
    o.detail << instances << " instances, worst oracle error " << fmt(max_err) << ", mncc/ncc gap " << fmt(ones_gap)
             << ", masked insensitivity " << (masked_insensitive ? "exact" : "broken");
    return o;
}

// 4. Fusion energy: monotone traces, analytic gradient, constant pairs.
Outcome fusion_contract() {
    Outcome o;
    bool monotone = true;
    std::size_t steps = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Size s{64, 64};
        // Half smooth scenes, half noisy ones.
        const GrayImage v = seed % 2 ? make_scene(s, seed) : random_image(s, seed);
        const GrayImage r = seed % 2 ? testing::negate(make_scene(s, seed + 500)) : random_image(s, seed + 500);
        const auto res = fuse(v, r);
        for (std::size_t i = 1; i < res.energy_trace.size(); ++i) monotone = monotone && res.energy_trace[i] <= res.energy_trace[i - 1];
        steps += res.iterations_used;
    }
    double worst_rel = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Size s{8, 8};
        const GrayImage v = random_image(s, 100 + seed), r = random_image(s, 200 + seed), f = random_image(s, 300 + seed);
        for (double sigma : {0.0, 1.0}) {
            FusionConfig cfg;
            cfg.sigma_balance = sigma;
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
            worst_rel = std::max(worst_rel, std::sqrt(num / den));
        }
    }
    bool constant_exact = true;
    for (double c : {0.0, 0.25, 0.37, 0.5, 1.0}) {
        const GrayImage k(64, 64, c);
        constant_exact = constant_exact && fuse(k, k).fused == k;
    }
    o.detail << "20 pairs, " << steps << " accepted steps " << (monotone ? "all non-increasing" : "NOT monotone")
             << ", gradient relative error " << fmt(worst_rel) << ", constant pairs "
             << (constant_exact ? "exact" : "changed");
    o.require(monotone, "energy trace non-increasing");
    o.require(worst_rel <= 1e-4, "gradient within 1e-4 relative");
    o.require(constant_exact, "constant pair returns the constant");
    return o;
}

// 5. Target gradient over every binary 3x3 pair.
Outcome target_gradient_exhaustive() {
    Outcome o;
    double worst = 0.0;
    std::size_t cases = 0;
    auto image_of = [](unsigned bits, double scale) {
        GrayImage img(3, 3);
        for (unsigned i = 0; i < 9; ++i) img.pixels()[i] = (bits >> i & 1u) ? scale : 0.0;
        return img;
    };
    for (double rscale : {1.0, 0.5}) {
        for (unsigned vb = 0; vb < 512; ++vb) {
            const GrayImage v = image_of(vb, 1.0);
            const auto gv = oracle::to_grid(v);
            for (unsigned rb = 0; rb < 512; ++rb) {
                const GrayImage r = image_of(rb, rscale);
                const GrayImage t = target_gradient(v, r, 0.7);
                const auto want = oracle::target_gradient(gv, oracle::to_grid(r), 0.7);
                for (std::size_t y = 0; y < 3; ++y)
                    for (std::size_t x = 0; x < 3; ++x) worst = std::max(worst, std::abs(t(y, x) - want[y][x]));
                ++cases;
            }
        }
    }
    o.detail << cases << " image pairs, max deviation " << fmt(worst);
    o.require(worst <= 1e-12, "within 1e-12");
    return o;
}

// 6. Affine recovery at 256x256.
Outcome affine_recovery() {
    Outcome o;
    const Size s{256, 256};
    double epe_sum = 0.0, min_mncc = 1.0, max_secs = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const GrayImage ref = make_scene(s, 600 + seed);
        const AffineParams t = gen_affine({}, s, RngSeed{seed});
        const GrayImage moving = apply_affine(ref, t);
        const auto t0 = Clock::now();
        const auto res = register_pair(ref, moving, RegisterConfig{});
        const double secs = seconds_since(t0);
        const double epe = corner_endpoint_error(res.theta_hat, t, s);
        epe_sum += epe;
        min_mncc = std::min(min_mncc, res.final_mncc);
        max_secs = std::max(max_secs, secs);
        std::cerr << "  affine pair " << seed << ": epe " << fmt(epe) << " px, mncc " << fmt(res.final_mncc, 6) << ", "
                  << fmt(secs, 3) << " s\n";
    }
    const double mean_epe = epe_sum / 20.0;
    o.detail << "mean corner EPE " << fmt(mean_epe) << " px, min MNCC " << fmt(min_mncc, 6) << ", slowest pair "
             << fmt(max_secs, 3) << " s";
    o.require(mean_epe <= 2.0, "mean EPE <= 2 px");
    o.require(min_mncc >= 0.98, "MNCC >= 0.98 on every pair");
    o.require(max_secs <= 30.0, "<= 30 s per pair");
    return o;
}

// 7. Elastic recovery and the k sweep.
Outcome elastic_sweep() {
    Outcome o;
    const Size s{256, 256};
    const std::vector<std::size_t> ks{15, 20, 25, 30};
    const int seeds = 10;
    RegisterConfig cfg;
    cfg.mask_mode = MaskMode::GroundTruth;
    std::vector<double> mean_std, mean_with, mean_without;
    double min_k30 = 1.0;
    bool ordered = true;
    for (std::size_t k : ks) {
        double sd = 0.0, w = 0.0, wo = 0.0;
        for (int seed = 0; seed < seeds; ++seed) {
            const GrayImage ref = make_scene(s, 700 + seed);
            const ElasticParams ep{32.0, k, ElasticParams{}.amplitude};
            const auto pair = make_misaligned_pair(ref, AugmentationRanges::none(), ep, RngSeed{static_cast<std::uint64_t>(seed)});
            const ReconMask truth = compute_mask(s, pair.theta, pair.phi, cfg.mask_threshold);
            const auto res = register_pair(ref, pair.moving, cfg, &truth);
            const double without = mncc(apply_affine(pair.moving, res.theta_hat), ref, truth);
            const double with = mncc(res.registered, ref, truth);
            sd += field_std(pair.phi) / seeds;
            w += with / seeds;
            wo += without / seeds;
            if (with < without) ordered = false;
            if (k == 30) min_k30 = std::min(min_k30, with);
            std::cerr << "  k=" << k << " seed " << seed << ": field std " << fmt(field_std(pair.phi)) << ", without "
                      << fmt(without, 6) << ", with " << fmt(with, 6) << "\n";
        }
        mean_std.push_back(sd);
        mean_with.push_back(w);
        mean_without.push_back(wo);
    }
    bool decreasing = true;
    for (std::size_t i = 1; i < mean_std.size(); ++i) decreasing = decreasing && mean_std[i] < mean_std[i - 1];
    o.detail << "k=30 min MNCC " << fmt(min_k30, 6) << "; mean with/without per k:";
    for (std::size_t i = 0; i < ks.size(); ++i)
        o.detail << " k" << ks[i] << " " << fmt(mean_with[i], 5) << "/" << fmt(mean_without[i], 5) << " (std "
                 << fmt(mean_std[i]) << ")";
    o.require(min_k30 >= 0.95, "k=30 MNCC >= 0.95 on every seed");
    o.require(ordered, "with-deformable >= without-deformable for every k and seed");
    o.require(decreasing, "field std strictly decreasing in k");
    return o;
}

// 8. Corrupting non-reconstructible reference pixels.
Outcome mask_effect() {
    Outcome o;
    const Size s{128, 128};
    int wins = 0;
    double worst_gt = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const GrayImage ref = make_scene(s, 800 + seed);
        const AffineParams t = gen_affine({}, s, RngSeed{100 + seed});
        const GrayImage moving = apply_affine(ref, t);
        const ReconMask truth = compute_mask(s, t, DeformationField::zero(s), kStrictMaskThreshold);
        GrayImage corrupt = ref;
        RandomStream rng(RngSeed{seed}, 55);
        std::size_t touched = 0;
        for (std::size_t i = 0; i < ref.pixel_count(); ++i)
            if (!truth.at(i)) {
                corrupt.pixels()[i] = rng.uniform() < 0.5 ? 1.0 : rng.uniform(0.0, 0.2);
                ++touched;
            }

        auto change = [&](MaskMode mode) {
            RegisterConfig cfg;
            cfg.mask_mode = mode;
            const double clean = corner_endpoint_error(register_affine(ref, moving, cfg, &truth).theta, t, s);
            const double dirty = corner_endpoint_error(register_affine(corrupt, moving, cfg, &truth).theta, t, s);
            return std::abs(dirty - clean);
        };
        const double gt = change(MaskMode::GroundTruth);
        const double ones = change(MaskMode::Ones);
        worst_gt = std::max(worst_gt, gt);
        if (gt <= 0.5 && ones > gt) ++wins;
        std::cerr << "  trial " << seed << ": " << touched << " corrupted pixels, EPE change gt " << fmt(gt)
                  << " ones " << fmt(ones) << "\n";
    }
    o.detail << wins << "/20 trials with ground-truth change <= 0.5 px and a larger all-ones change; worst ground-truth change "
             << fmt(worst_gt) << " px";
    o.require(wins >= 15, ">= 15 of 20 trials");
    return o;
}

// 9. Every CLI command twice with a fixed seed.
int run_cli(const std::string &args) {
    const std::string cmd = std::string("\"") + REGFUSE_EXE + "\" " + args + " > /dev/null 2>&1";
    return std::system(cmd.c_str());
}

std::string q(const fs::path &p) { return "\"" + p.string() + "\""; }

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

Outcome cli_determinism() {
    Outcome o;
    const fs::path root = fs::temp_directory_path() / "regfuse_acceptance_cli";
    fs::remove_all(root);
    fs::create_directories(root);
    const GrayImage ref = make_scene({64, 64}, 9);
    save_pgm(ref, root / "ref.pgm");
    save_pgm(testing::negate(make_scene({64, 64}, 10)), root / "ir.pgm");
    {
        std::ofstream m(root / "manifest.json");
        m << R"([["ref.pgm", "ir.pgm"], ["ir.pgm", "ref.pgm"], ["ref.pgm", "ref.pgm"]])";
    }

    auto commands = [&](const fs::path &out) {
        const fs::path sim = out / "simulate";
        return std::vector<std::pair<std::string, std::string>>{
            {"simulate", "simulate " + q(root / "ref.pgm") + " --seed 7 --out " + q(sim)},
            {"mask", "mask " + q(root / "ref.pgm") + " " + q(sim / "theta.json") + " " + q(sim / "phi.pfm") +
                         " --out " + q(out / "mask")},
            {"register", "register " + q(root / "ref.pgm") + " " + q(sim / "moving.pgm") + " --theta " +
                             q(sim / "theta.json") + " --phi " + q(sim / "phi.pfm") + " --seed 7 --out " +
                             q(out / "register")},
            {"fuse", "fuse " + q(root / "ref.pgm") + " " + q(root / "ir.pgm") + " --out " + q(out / "fuse")},
            {"evaluate", "evaluate --manifest " + q(root / "manifest.json") + " --workers 2 --out " +
                             q(out / "evaluate")},
            {"evaluate-fusion", "evaluate " + q(root / "ref.pgm") + " " + q(root / "ir.pgm") + " " +
                                    q(out / "fuse" / "fused.pgm") + " --out " + q(out / "evaluate_fusion")},
            {"ksweep", "ksweep " + q(root / "ref.pgm") + " --k 15,30 --seeds 1 --seed 7 --out " + q(out / "ksweep")},
        };
    };

    const auto first = commands(root / "run1");
    const auto second = commands(root / "run2");
    std::vector<std::string> failures;
    std::size_t compared = 0;
    for (std::size_t i = 0; i < first.size(); ++i) {
        const int a = run_cli(first[i].second);
        const int b = run_cli(second[i].second);
        if (a != 0 || b != 0) failures.push_back(first[i].first + " exited non-zero");
    }
    for (const auto &entry : fs::recursive_directory_iterator(root / "run1")) {
        if (!entry.is_regular_file()) continue;
        const fs::path rel = fs::relative(entry.path(), root / "run1");
        const fs::path other = root / "run2" / rel;
        if (!fs::exists(other)) {
            failures.push_back(rel.string() + " missing in second run");
            continue;
        }
        ++compared;
        if (rel.extension() == ".json") {
            const auto ja = nlohmann::json::parse(slurp(entry.path()));
            auto jb = nlohmann::json::parse(slurp(other));
            // Reports echo nothing run-specific except the paths passed in; normalize the run directory.
            std::string sb = jb.dump();
            const std::string r1 = (root / "run1").string(), r2 = (root / "run2").string();
            for (std::size_t pos; (pos = sb.find(r2)) != std::string::npos;) sb.replace(pos, r2.size(), r1);
            if (ja != nlohmann::json::parse(sb)) failures.push_back(rel.string() + " differs");
        } else if (slurp(entry.path()) != slurp(other)) {
            failures.push_back(rel.string() + " not byte-identical");
        }
    }
    o.detail << first.size() << " invocations twice, " << compared << " output files compared";
    for (const auto &f : failures) o.detail << "; " << f;
    o.require(failures.empty(), "identical outputs");
    o.require(compared >= 15, "outputs produced");
    return o;
}

} // namespace

int main(int argc, char **argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"warp/inverse round trip", warp_round_trip},
        {"mask oracle equivalence", mask_oracle},
        {"metric oracles", metric_oracles},
        {"fusion energy contract", fusion_contract},
        {"target-gradient pointwise check", target_gradient_exhaustive},
        {"affine recovery", affine_recovery},
        {"elastic recovery and k-sweep ordering", elastic_sweep},
        {"mask-aware objective effect", mask_effect},
        {"determinism", cli_determinism},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!selected.empty() && !selected.count(id)) continue;
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception &e) {
            o.pass = false;
            o.detail << "exception: " << e.what();
        }
        if (!o.pass) ++failed;
        std::cout << "criterion " << id << " (" << criteria[i].first << "): " << (o.pass ? "PASS" : "FAIL") << " - "
                  << o.detail.str() << " [" << fmt(seconds_since(t0), 3) << " s]" << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
