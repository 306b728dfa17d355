#include "regfuse/cli.hpp"

#include "regfuse/error.hpp"
#include "regfuse/mask.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <functional>
#include <iostream>
#include <mutex>
#include <thread>

namespace regfuse::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CommonOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<std::size_t> workers;
    std::string manifest;
};

void add_common(CLI::App *cmd, CommonOptions &o) {
    cmd->add_option("--config", o.config, "JSON configuration file");
    cmd->add_option("--seed", o.seed, "Random seed (overrides the config)");
    cmd->add_option("--out", o.out, "Output directory (overrides the config)");
    cmd->add_option("--workers", o.workers, "Concurrent batch items (overrides the config)");
    cmd->add_option("--manifest", o.manifest, "Batch manifest (JSON array)");
}

PipelineConfig resolve_config(const CommonOptions &o) {
    PipelineConfig cfg = o.config.empty() ? PipelineConfig{} : load_config(o.config);
    if (o.seed) cfg.seed = *o.seed;
    if (o.workers) cfg.workers = *o.workers;
    if (!o.out.empty()) cfg.output_dir = fs::path(o.out);
    cfg.validate();
    return cfg;
}

fs::path require_out(const PipelineConfig &cfg) {
    if (!cfg.output_dir) throw UsageError("an output directory is required (--out or output_dir in the config)");
    fs::create_directories(*cfg.output_dir);
    return *cfg.output_dir;
}

int exit_code_for(const std::exception_ptr &ep) {
    try {
        std::rethrow_exception(ep);
    } catch (const UsageError &) {
        return kUsage;
    } catch (const NumericalError &) {
        return kNumerical;
    } catch (const IoError &) {
        return kData;
    } catch (const FormatError &) {
        return kData;
    } catch (const fs::filesystem_error &) {
        return kData;
    } catch (const std::invalid_argument &) {
        return kData;
    } catch (...) {
        return kNumerical;
    }
}

std::string message_for(const std::exception_ptr &ep) {
    try {
        std::rethrow_exception(ep);
    } catch (const std::exception &e) {
        return e.what();
    } catch (...) {
        return "unknown error";
    }
}

struct ItemOutcome {
    json report;
    std::optional<MetricsReport> metrics;
    int code = kOk;
};

// Runs fn(i) for every item, up to `workers` at a time. Failures are recorded per
// item; results keep manifest order regardless of completion order.
std::vector<ItemOutcome> run_batch(std::size_t count, std::size_t workers,
                                   const std::function<ItemOutcome(std::size_t)> &fn) {
    std::vector<ItemOutcome> out(count);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                out[i] = fn(i);
            } catch (...) {
                const auto ep = std::current_exception();
                out[i].code = exit_code_for(ep);
                out[i].report = {{"status", "error"}, {"error", message_for(ep)}, {"exit_code", out[i].code}};
            }
        }
    };
    const std::size_t n = std::min(workers, count);
    if (n <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
        for (auto &th : pool) th.join();
    }
    return out;
}

MetricsReport select_metrics(MetricsReport r, const std::vector<std::string> &selected) {
    if (selected.empty()) return r;
    static const std::vector<std::string> standard{"NCC", "MSE", "MNCC", "MMSE", "EI", "SF",
                                                   "CE",  "FMIw", "Qcv", "SSIM_v", "SSIM_r"};
    for (const auto &name : standard) {
        if (std::find(selected.begin(), selected.end(), name) == selected.end()) {
            r.values.erase(name);
            r.labels.erase(name);
        }
    }
    return r;
}

// Writes the batch report and returns the batch exit code.
int finish_batch(const std::string &command, const fs::path &out, const PipelineConfig &cfg,
                 std::vector<ItemOutcome> &items) {
    json list = json::array();
    std::vector<MetricsReport> reports;
    std::size_t failed = 0;
    int code = kOk;
    for (std::size_t i = 0; i < items.size(); ++i) {
        json entry = items[i].report;
        entry["index"] = i;
        if (items[i].code != kOk) {
            ++failed;
            code = std::max(code, items[i].code);
            std::cerr << command << ": item " << i << ": " << entry.value("error", std::string("failed")) << '\n';
        } else if (items[i].metrics) {
            reports.push_back(*items[i].metrics);
        }
        list.push_back(std::move(entry));
    }
    json report{{"command", command},
                {"config", cfg.to_json()},
                {"items", list},
                {"succeeded", items.size() - failed},
                {"failed", failed}};
    report["config"].erase("output_dir");
    if (!reports.empty()) report["aggregate"] = aggregate_metrics(reports);
    write_json(report, out / "report.json");
    return code;
}

fs::path item_dir(const fs::path &out, std::size_t index, bool batch) {
    if (!batch) return out;
    char name[32];
    std::snprintf(name, sizeof name, "item_%03zu", index);
    fs::path dir = out / name;
    fs::create_directories(dir);
    return dir;
}

std::vector<ManifestItem> items_from(const CommonOptions &o, const std::vector<std::string> &positional,
                                     std::size_t min_paths, std::size_t max_paths,
                                     const std::function<ManifestItem(const std::vector<std::string> &)> &make) {
    if (!o.manifest.empty()) {
        if (!positional.empty()) throw UsageError("give either --manifest or positional paths, not both");
        return load_manifest(o.manifest);
    }
    if (positional.size() < min_paths || positional.size() > max_paths) {
        throw UsageError("expected between " + std::to_string(min_paths) + " and " + std::to_string(max_paths) +
                         " input paths (or --manifest)");
    }
    return {make(positional)};
}

json trace_to_json(const std::vector<StageTrace> &trace) {
    json arr = json::array();
    for (const auto &t : trace) arr.push_back({{"stage", t.stage}, {"level", t.level}, {"values", t.values}});
    return arr;
}

ReconMask truth_mask_for(const ManifestItem &item, Size size, double threshold) {
    const AffineParams theta = load_affine(*item.theta);
    DeformationField phi = item.phi ? load_field(*item.phi) : DeformationField::zero(size);
    if (phi.size() != size) throw std::invalid_argument("deformation field size does not match the image");
    return compute_mask(size, theta, phi, threshold);
}

ManifestItem reference_item(const std::string &path) {
    ManifestItem m;
    m.reference = path;
    return m;
}

// --- commands ------------------------------------------------------------------

int cmd_simulate(const CommonOptions &o, const std::vector<std::string> &inputs) {
    const PipelineConfig cfg = resolve_config(o);
    const auto items = items_from(o, inputs, 1, 1, [](const auto &p) { return reference_item(p[0]); });
    const fs::path out = require_out(cfg);
    const bool batch = !o.manifest.empty();
    auto results = run_batch(items.size(), cfg.workers, [&](std::size_t i) {
        const GrayImage img = load_pgm(items[i].reference);
        // Batch items draw from distinct streams derived from the base seed.
        const RngSeed seed{batch ? mix_seed(cfg.seed, 1000 + i) : cfg.seed};
        const MisalignedPair pair = make_misaligned_pair(img, cfg.augmentation, cfg.elastic, seed);
        const fs::path dir = item_dir(out, i, batch);
        save_pgm(pair.moving, dir / "moving.pgm");
        save_affine(pair.theta, dir / "theta.json");
        save_field(pair.phi, dir / "phi.pfm");
        const bool identity = pair.theta == AffineParams::identity() && pair.phi.is_zero();
        const PixelAffine px = to_pixel_affine(pair.theta, img.size());
        ItemOutcome r;
        r.report = {{"status", "ok"},
                    {"input", items[i].reference.string()},
                    {"seed", seed.value},
                    {"size", {img.height(), img.width()}},
                    {"theta", affine_to_json(pair.theta)},
                    {"theta_pixel", {{"a", px.a}, {"b", px.b}, {"c", px.c}, {"d", px.d}, {"tx", px.tx}, {"ty", px.ty}}},
                    {"field_std", field_std(pair.phi)},
                    {"field_rms", pair.phi.rms()},
                    {"identity", identity},
                    {"outputs", {{"moving", "moving.pgm"}, {"theta", "theta.json"}, {"phi", "phi.pfm"}}}};
        return r;
    });
    return finish_batch("simulate", out, cfg, results);
}

int cmd_mask(const CommonOptions &o, const std::vector<std::string> &inputs) {
    const PipelineConfig cfg = resolve_config(o);
    const auto items = items_from(o, inputs, 2, 3, [](const auto &p) {
        ManifestItem m = reference_item(p[0]);
        m.theta = p[1];
        if (p.size() > 2) m.phi = p[2];
        return m;
    });
    const fs::path out = require_out(cfg);
    const bool batch = !o.manifest.empty();
    auto results = run_batch(items.size(), cfg.workers, [&](std::size_t i) {
        if (!items[i].theta) throw UsageError("mask: item has no theta");
        const GrayImage img = load_pgm(items[i].reference);
        const ReconMask mask = truth_mask_for(items[i], img.size(), cfg.mask_threshold);
        const fs::path dir = item_dir(out, i, batch);
        save_pgm(mask.to_image(), dir / "mask.pgm");
        ItemOutcome r;
        r.report = {{"status", "ok"},
                    {"threshold", cfg.mask_threshold},
                    {"mask_fraction", mask_fraction(mask)},
                    {"count", mask.count()},
                    {"outputs", {{"mask", "mask.pgm"}}}};
        return r;
    });
    return finish_batch("mask", out, cfg, results);
}

int cmd_register(const CommonOptions &o, const std::vector<std::string> &inputs, const std::string &theta_path,
                 const std::string &phi_path) {
    const PipelineConfig cfg = resolve_config(o);
    const auto items = items_from(o, inputs, 2, 2, [&](const auto &p) {
        ManifestItem m = reference_item(p[0]);
        m.moving = p[1];
        if (!theta_path.empty()) m.theta = theta_path;
        if (!phi_path.empty()) m.phi = phi_path;
        return m;
    });
    const fs::path out = require_out(cfg);
    const bool batch = !o.manifest.empty();
    auto results = run_batch(items.size(), cfg.workers, [&](std::size_t i) {
        const ManifestItem &item = items[i];
        if (!item.moving) throw UsageError("register: item has no moving image");
        const GrayImage ref = load_pgm(item.reference);
        const GrayImage mov = load_pgm(*item.moving);
        require_same_size(ref, mov, "register");
        std::optional<ReconMask> truth;
        if (item.theta) truth = truth_mask_for(item, ref.size(), cfg.registration.mask_threshold);
        if (cfg.registration.mask_mode == MaskMode::GroundTruth && !truth) {
            throw UsageError("mask_mode ground_truth needs a ground-truth theta");
        }
        const RegistrationResult res = register_pair(ref, mov, cfg.registration, truth ? &*truth : nullptr);

        const fs::path dir = item_dir(out, i, batch);
        save_pgm(res.registered, dir / "registered.pgm");
        save_affine(res.theta_hat, dir / "theta_hat.json");
        save_field(res.phi_hat, dir / "phi_hat.pfm");

        MetricsReport m = registration_metrics(res.registered, ref, &res.mask);
        ItemOutcome r;
        r.report = {{"status", "ok"},
                    {"final_mncc", res.final_mncc},
                    {"theta_hat", affine_to_json(res.theta_hat)},
                    {"phi_rms", res.phi_hat.rms()},
                    {"mask_fraction", mask_fraction(res.mask)},
                    {"trace", trace_to_json(res.objective_trace)},
                    {"outputs", {{"registered", "registered.pgm"}, {"theta", "theta_hat.json"}, {"phi", "phi_hat.pfm"}}}};
        m.values["final_mncc"] = res.final_mncc;
        if (item.theta) {
            const double epe = corner_endpoint_error(res.theta_hat, load_affine(*item.theta), ref.size());
            r.report["corner_endpoint_error"] = epe;
            m.values["corner_endpoint_error"] = epe;
        }
        m = select_metrics(std::move(m), cfg.metrics);
        r.report["metrics"] = metrics_to_json(m);
        r.metrics = std::move(m);
        return r;
    });
    return finish_batch("register", out, cfg, results);
}

int cmd_fuse(const CommonOptions &o, const std::vector<std::string> &inputs) {
    const PipelineConfig cfg = resolve_config(o);
    const auto items = items_from(o, inputs, 2, 2, [](const auto &p) {
        ManifestItem m = reference_item(p[0]);
        m.second = p[1];
        return m;
    });
    const fs::path out = require_out(cfg);
    const bool batch = !o.manifest.empty();
    auto results = run_batch(items.size(), cfg.workers, [&](std::size_t i) {
        const ManifestItem &item = items[i];
        // Two-path manifest entries name (reference, moving); treat the moving image as the second source.
        const auto second = item.second ? item.second : item.moving;
        if (!second) throw UsageError("fuse: item has no second source");
        const GrayImage v = load_pgm(item.reference);
        const GrayImage ir = load_pgm(*second);
        require_same_size(v, ir, "fuse");
        const FusionResult res = fuse(v, ir, cfg.fusion);
        const fs::path dir = item_dir(out, i, batch);
        save_pgm(res.fused, dir / "fused.pgm");
        MetricsReport m = select_metrics(fusion_metrics(v, ir, res.fused), cfg.metrics);
        ItemOutcome r;
        r.report = {{"status", "ok"},
                    {"iterations", res.iterations_used},
                    {"energy_initial", res.energy_trace.front()},
                    {"energy_final", res.energy_trace.back()},
                    {"energy_trace", res.energy_trace},
                    {"metrics", metrics_to_json(m)},
                    {"outputs", {{"fused", "fused.pgm"}}}};
        r.metrics = std::move(m);
        return r;
    });
    return finish_batch("fuse", out, cfg, results);
}

int cmd_evaluate(const CommonOptions &o, const std::vector<std::string> &inputs, const std::string &theta_path,
                 const std::string &phi_path) {
    const PipelineConfig cfg = resolve_config(o);
    const auto items = items_from(o, inputs, 2, 3, [&](const auto &p) {
        ManifestItem m = reference_item(p[0]);
        if (p.size() == 2) {
            m.moving = p[1];
            if (!theta_path.empty()) m.theta = theta_path;
            if (!phi_path.empty()) m.phi = phi_path;
        } else {
            m.second = p[1];
            m.fused = p[2];
        }
        return m;
    });
    const fs::path out = require_out(cfg);
    auto results = run_batch(items.size(), cfg.workers, [&](std::size_t i) {
        const ManifestItem &item = items[i];
        const GrayImage ref = load_pgm(item.reference);
        MetricsReport m;
        if (item.fused) {
            if (!item.second) throw UsageError("evaluate: a fused image needs a second source");
            const GrayImage ir = load_pgm(*item.second);
            const GrayImage f = load_pgm(*item.fused);
            require_same_size(ref, ir, "evaluate");
            require_same_size(ref, f, "evaluate");
            m = fusion_metrics(ref, ir, f);
        } else if (item.moving) {
            const GrayImage mov = load_pgm(*item.moving);
            require_same_size(ref, mov, "evaluate");
            if (item.theta) {
                const ReconMask mask = truth_mask_for(item, ref.size(), cfg.mask_threshold);
                m = registration_metrics(mov, ref, &mask);
            } else {
                m = registration_metrics(mov, ref);
            }
        } else {
            throw UsageError("evaluate: item needs a moving image or a (second, fused) pair");
        }
        m = select_metrics(std::move(m), cfg.metrics);
        ItemOutcome r;
        r.report = {{"status", "ok"}, {"metrics", metrics_to_json(m)}};
        r.metrics = std::move(m);
        return r;
    });
    return finish_batch("evaluate", out, cfg, results);
}

int cmd_ksweep(const CommonOptions &o, const std::vector<std::string> &inputs, std::vector<std::size_t> ks,
               std::size_t seeds) {
    const PipelineConfig cfg = resolve_config(o);
    if (!o.manifest.empty()) throw UsageError("ksweep takes a single input image, not a manifest");
    if (inputs.size() != 1) throw UsageError("ksweep expects exactly one input image");
    if (ks.empty()) ks = {15, 20, 25, 30};
    for (std::size_t k : ks) {
        if (k < 1) throw UsageError("ksweep: k values must be at least 1");
    }
    if (seeds < 1) throw UsageError("ksweep: --seeds must be at least 1");
    const fs::path out = require_out(cfg);
    const GrayImage img = load_pgm(inputs[0]);

    // One job per (k, seed). Elastic misalignment only: the affine ranges are zeroed.
    const std::size_t jobs = ks.size() * seeds;
    auto results = run_batch(jobs, cfg.workers, [&](std::size_t j) {
        const std::size_t k = ks[j / seeds];
        const std::uint64_t seed = cfg.seed + j % seeds;
        ElasticParams ep = cfg.elastic;
        ep.k = k;
        const MisalignedPair pair = make_misaligned_pair(img, AugmentationRanges::none(), ep, RngSeed{seed});
        const ReconMask truth = compute_mask(img.size(), pair.theta, pair.phi, cfg.registration.mask_threshold);
        const RegistrationResult res = register_pair(img, pair.moving, cfg.registration, &truth);
        const double without = mncc(apply_affine(pair.moving, res.theta_hat), img, res.mask);
        ItemOutcome r;
        r.report = {{"status", "ok"},
                    {"k", k},
                    {"seed", seed},
                    {"field_std", field_std(pair.phi)},
                    {"mncc_input", mncc(pair.moving, img, res.mask)},
                    {"mncc_without_deformable", without},
                    {"mncc_with_deformable", res.final_mncc}};
        return r;
    });

    json rows = json::array();
    int code = kOk;
    for (std::size_t ki = 0; ki < ks.size(); ++ki) {
        std::vector<MetricsReport> reps;
        json runs = json::array();
        for (std::size_t s = 0; s < seeds; ++s) {
            const ItemOutcome &it = results[ki * seeds + s];
            runs.push_back(it.report);
            if (it.code != kOk) {
                code = std::max(code, it.code);
                std::cerr << "ksweep: k=" << ks[ki] << " seed " << s << ": " << it.report.value("error", "") << '\n';
                continue;
            }
            MetricsReport m;
            m.values["with_deformable"] = it.report["mncc_with_deformable"].get<double>();
            m.values["without_deformable"] = it.report["mncc_without_deformable"].get<double>();
            m.values["field_std"] = it.report["field_std"].get<double>();
            reps.push_back(std::move(m));
        }
        json row{{"k", ks[ki]}, {"runs", runs}};
        if (!reps.empty()) row["aggregate"] = aggregate_metrics(reps);
        rows.push_back(std::move(row));
    }
    json report{{"command", "ksweep"},
                {"input", inputs[0]},
                {"seeds", seeds},
                {"config", cfg.to_json()},
                {"rows", rows}};
    report["config"].erase("output_dir");
    write_json(report, out / "report.json");
    return code;
}

} // namespace

int run(int argc, char **argv) {
    CLI::App app{"regfuse: mask-aware image registration and gradient-guided fusion"};
    app.require_subcommand(1);

    CommonOptions common;
    std::vector<std::string> inputs;
    std::string theta_path, phi_path;
    std::vector<std::size_t> ks;
    std::size_t seeds = 10;

    auto *sim = app.add_subcommand("simulate", "Generate a misaligned copy of an image");
    add_common(sim, common);
    sim->add_option("input", inputs, "Input PGM");

    auto *msk = app.add_subcommand("mask", "Compute the reconstructible mask of a known misalignment");
    add_common(msk, common);
    msk->add_option("inputs", inputs, "REFERENCE THETA_JSON [PHI_PFM]");

    auto *reg = app.add_subcommand("register", "Register a moving image to a reference");
    add_common(reg, common);
    reg->add_option("inputs", inputs, "REFERENCE MOVING");
    reg->add_option("--theta", theta_path, "Ground-truth theta JSON");
    reg->add_option("--phi", phi_path, "Ground-truth deformation PFM");

    auto *fus = app.add_subcommand("fuse", "Fuse two aligned images");
    add_common(fus, common);
    fus->add_option("inputs", inputs, "VISIBLE INFRARED");

    auto *ev = app.add_subcommand("evaluate", "Compute registration or fusion metrics");
    add_common(ev, common);
    ev->add_option("inputs", inputs, "REFERENCE MOVING | VISIBLE INFRARED FUSED");
    ev->add_option("--theta", theta_path, "Ground-truth theta JSON for masked metrics");
    ev->add_option("--phi", phi_path, "Ground-truth deformation PFM for masked metrics");

    auto *ks_cmd = app.add_subcommand("ksweep", "Elastic misalignment sweep over the kernel half-width k");
    add_common(ks_cmd, common);
    ks_cmd->add_option("input", inputs, "Input PGM");
    ks_cmd->add_option("--k", ks, "Kernel half-widths (default 15 20 25 30)")->delimiter(',');
    ks_cmd->add_option("--seeds", seeds, "Seeds per k");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (sim->parsed()) return cmd_simulate(common, inputs);
        if (msk->parsed()) return cmd_mask(common, inputs);
        if (reg->parsed()) return cmd_register(common, inputs, theta_path, phi_path);
        if (fus->parsed()) return cmd_fuse(common, inputs);
        if (ev->parsed()) return cmd_evaluate(common, inputs, theta_path, phi_path);
        if (ks_cmd->parsed()) return cmd_ksweep(common, inputs, ks, seeds);
    } catch (...) {
        const auto ep = std::current_exception();
        std::cerr << "regfuse: " << message_for(ep) << '\n';
        return exit_code_for(ep);
    }
    return kUsage;
}

} // namespace regfuse::cli
