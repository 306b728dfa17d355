#include "regfuse/cli.hpp"

#include "regfuse/error.hpp"

#include <algorithm>
#include <fstream>
#include <initializer_list>
#include <set>

namespace regfuse::cli {

using nlohmann::json;

namespace {

void check_keys(const json &j, std::initializer_list<const char *> allowed, const std::string &section) {
    if (!j.is_object()) throw UsageError("config: section '" + section + "' must be an object");
    const std::set<std::string> keys(allowed.begin(), allowed.end());
    for (const auto &item : j.items()) {
        if (!keys.count(item.key())) {
            throw UsageError("config: unknown key '" + item.key() + "' in section '" + section + "'");
        }
    }
}

template <class T>
void read(const json &j, const char *key, T &dst, const std::string &section) {
    if (!j.contains(key)) return;
    try {
        dst = j.at(key).get<T>();
    } catch (const json::exception &) {
        throw UsageError("config: key '" + std::string(key) + "' in section '" + section + "' has the wrong type");
    }
}

MaskMode parse_mask_mode(const std::string &s) {
    if (s == "ones") return MaskMode::Ones;
    if (s == "ground_truth") return MaskMode::GroundTruth;
    if (s == "estimated") return MaskMode::Estimated;
    throw UsageError("config: mask_mode must be one of ones, ground_truth, estimated (got '" + s + "')");
}

const char *mask_mode_name(MaskMode m) {
    switch (m) {
    case MaskMode::Ones: return "ones";
    case MaskMode::GroundTruth: return "ground_truth";
    case MaskMode::Estimated: return "estimated";
    }
    return "ones";
}

CorrelationMode parse_correlation(const std::string &s) {
    if (s == "signed") return CorrelationMode::Signed;
    if (s == "magnitude") return CorrelationMode::Magnitude;
    throw UsageError("config: correlation must be signed or magnitude (got '" + s + "')");
}

FusionConfig parse_fusion(const json &j, const std::string &section, FusionConfig f) {
    check_keys(j, {"gamma", "sigma_balance", "max_iters", "step_size", "tol"}, section);
    read(j, "gamma", f.gamma, section);
    read(j, "sigma_balance", f.sigma_balance, section);
    read(j, "max_iters", f.max_iters, section);
    read(j, "step_size", f.step_size, section);
    read(j, "tol", f.tol, section);
    return f;
}

json fusion_json(const FusionConfig &f) {
    return {{"gamma", f.gamma},
            {"sigma_balance", f.sigma_balance},
            {"max_iters", f.max_iters},
            {"step_size", f.step_size},
            {"tol", f.tol}};
}

const std::set<std::string> &known_metrics() {
    static const std::set<std::string> names{"NCC", "MSE", "MNCC", "MMSE", "EI", "SF",
                                             "CE",  "FMIw", "Qcv", "SSIM_v", "SSIM_r"};
    return names;
}

} // namespace

PipelineConfig PipelineConfig::from_json(const json &j) {
    check_keys(j, {"augmentation", "elastic", "register", "fusion", "mask", "metrics", "output_dir", "seed", "workers"},
               "root");
    PipelineConfig cfg;
    if (j.contains("augmentation")) {
        const json &a = j.at("augmentation");
        check_keys(a, {"rotation_deg", "translate_px", "scale_min", "scale_max", "shear_deg"}, "augmentation");
        read(a, "rotation_deg", cfg.augmentation.rotation_deg, "augmentation");
        read(a, "translate_px", cfg.augmentation.translate_px, "augmentation");
        read(a, "scale_min", cfg.augmentation.scale_min, "augmentation");
        read(a, "scale_max", cfg.augmentation.scale_max, "augmentation");
        read(a, "shear_deg", cfg.augmentation.shear_deg, "augmentation");
    }
    if (j.contains("elastic")) {
        const json &e = j.at("elastic");
        check_keys(e, {"sigma", "k", "amplitude"}, "elastic");
        read(e, "sigma", cfg.elastic.sigma, "elastic");
        read(e, "k", cfg.elastic.k, "elastic");
        read(e, "amplitude", cfg.elastic.amplitude, "elastic");
    }
    if (j.contains("register")) {
        const json &r = j.at("register");
        check_keys(r,
                   {"pyramid_levels", "epsilon", "use_mg", "affine_max_evals", "deform_iters", "deform_step",
                    "deform_smooth_sigma", "mask_mode", "correlation", "mask_threshold", "mg_fusion"},
                   "register");
        RegisterConfig &rc = cfg.registration;
        read(r, "pyramid_levels", rc.pyramid_levels, "register");
        read(r, "epsilon", rc.epsilon, "register");
        read(r, "use_mg", rc.use_mg, "register");
        read(r, "affine_max_evals", rc.affine_max_evals, "register");
        read(r, "deform_iters", rc.deform_iters, "register");
        read(r, "deform_step", rc.deform_step, "register");
        read(r, "deform_smooth_sigma", rc.deform_smooth_sigma, "register");
        read(r, "mask_threshold", rc.mask_threshold, "register");
        std::string s;
        if (r.contains("mask_mode")) {
            read(r, "mask_mode", s, "register");
            rc.mask_mode = parse_mask_mode(s);
        }
        if (r.contains("correlation")) {
            read(r, "correlation", s, "register");
            rc.correlation = parse_correlation(s);
        }
        if (r.contains("mg_fusion")) rc.mg_fusion = parse_fusion(r.at("mg_fusion"), "register.mg_fusion", rc.mg_fusion);
    }
    if (j.contains("fusion")) cfg.fusion = parse_fusion(j.at("fusion"), "fusion", cfg.fusion);
    if (j.contains("mask")) {
        const json &m = j.at("mask");
        check_keys(m, {"threshold"}, "mask");
        read(m, "threshold", cfg.mask_threshold, "mask");
    }
    read(j, "metrics", cfg.metrics, "root");
    if (j.contains("output_dir")) {
        std::string dir;
        read(j, "output_dir", dir, "root");
        cfg.output_dir = dir;
    }
    read(j, "seed", cfg.seed, "root");
    read(j, "workers", cfg.workers, "root");
    cfg.validate();
    return cfg;
}

json PipelineConfig::to_json() const {
    const RegisterConfig &rc = registration;
    json j{{"augmentation",
            {{"rotation_deg", augmentation.rotation_deg},
             {"translate_px", augmentation.translate_px},
             {"scale_min", augmentation.scale_min},
             {"scale_max", augmentation.scale_max},
             {"shear_deg", augmentation.shear_deg}}},
           {"elastic", {{"sigma", elastic.sigma}, {"k", elastic.k}, {"amplitude", elastic.amplitude}}},
           {"register",
            {{"pyramid_levels", rc.pyramid_levels},
             {"epsilon", rc.epsilon},
             {"use_mg", rc.use_mg},
             {"affine_max_evals", rc.affine_max_evals},
             {"deform_iters", rc.deform_iters},
             {"deform_step", rc.deform_step},
             {"deform_smooth_sigma", rc.deform_smooth_sigma},
             {"mask_mode", mask_mode_name(rc.mask_mode)},
             {"correlation", rc.correlation == CorrelationMode::Signed ? "signed" : "magnitude"},
             {"mask_threshold", rc.mask_threshold},
             {"mg_fusion", fusion_json(rc.mg_fusion)}}},
           {"fusion", fusion_json(fusion)},
           {"mask", {{"threshold", mask_threshold}}},
           {"metrics", metrics},
           {"seed", seed},
           {"workers", workers}};
    if (output_dir) j["output_dir"] = output_dir->string();
    return j;
}

void PipelineConfig::validate() const {
    try {
        augmentation.validate();
        elastic.validate();
        registration.validate();
        fusion.validate();
    } catch (const std::invalid_argument &e) {
        throw UsageError(std::string("config: ") + e.what());
    }
    if (!(mask_threshold >= 0.0 && mask_threshold < 1.0)) throw UsageError("config: mask threshold must be in [0,1)");
    if (workers < 1) throw UsageError("config: workers must be at least 1");
    for (const auto &m : metrics) {
        if (!known_metrics().count(m)) throw UsageError("config: unknown metric '" + m + "'");
    }
}

PipelineConfig load_config(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path.string() + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error &e) {
        throw UsageError("config '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return PipelineConfig::from_json(j);
}

std::vector<ManifestItem> load_manifest(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error &e) {
        throw UsageError("manifest '" + path.string() + "' is not valid JSON: " + e.what());
    }
    if (!j.is_array()) throw UsageError("manifest must be a JSON array");
    if (j.empty()) throw UsageError("manifest is empty");

    const auto base = path.parent_path();
    auto resolve = [&](const json &v) -> std::filesystem::path {
        if (!v.is_string()) throw UsageError("manifest paths must be strings");
        std::filesystem::path p = v.get<std::string>();
        return p.is_relative() ? base / p : p;
    };

    std::vector<ManifestItem> items;
    for (const json &entry : j) {
        ManifestItem item;
        if (entry.is_array()) {
            if (entry.size() == 2) {
                item.reference = resolve(entry[0]);
                item.moving = resolve(entry[1]);
            } else if (entry.size() == 3) {
                item.reference = resolve(entry[0]);
                item.second = resolve(entry[1]);
                item.fused = resolve(entry[2]);
            } else {
                throw UsageError("manifest array items must hold 2 or 3 paths");
            }
        } else if (entry.is_object()) {
            check_keys(entry, {"reference", "moving", "theta", "phi", "second", "fused"}, "manifest item");
            if (!entry.contains("reference")) throw UsageError("manifest item without 'reference'");
            item.reference = resolve(entry.at("reference"));
            if (entry.contains("moving")) item.moving = resolve(entry.at("moving"));
            if (entry.contains("theta")) item.theta = resolve(entry.at("theta"));
            if (entry.contains("phi")) item.phi = resolve(entry.at("phi"));
            if (entry.contains("second")) item.second = resolve(entry.at("second"));
            if (entry.contains("fused")) item.fused = resolve(entry.at("fused"));
        } else {
            throw UsageError("manifest items must be arrays or objects");
        }
        items.push_back(std::move(item));
    }
    for (const auto &item : items) {
        for (const auto *p : {&item.reference}) {
            if (!std::filesystem::exists(*p)) throw IoError("manifest path does not exist: " + p->string());
        }
        for (const auto *p : {&item.moving, &item.theta, &item.phi, &item.second, &item.fused}) {
            if (*p && !std::filesystem::exists(**p)) throw IoError("manifest path does not exist: " + (*p)->string());
        }
    }
    return items;
}

} // namespace regfuse::cli
