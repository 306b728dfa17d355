#include "regfuse/cli.hpp"

#include "regfuse/error.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

namespace regfuse::cli {

using nlohmann::json;

json affine_to_json(const AffineParams &t) {
    return {{"a", t.a}, {"b", t.b}, {"c", t.c}, {"d", t.d}, {"dx", t.dx}, {"dy", t.dy}};
}

AffineParams affine_from_json(const json &j) {
    if (!j.is_object()) throw FormatError(FormatError::Kind::Schema, "affine JSON must be an object");
    // Reports wrap the parameters in a "theta" field; accept either layout.
    const json &src = j.contains("theta") ? j.at("theta") : j;
    AffineParams t;
    try {
        t.a = src.at("a").get<double>();
        t.b = src.at("b").get<double>();
        t.c = src.at("c").get<double>();
        t.d = src.at("d").get<double>();
        t.dx = src.at("dx").get<double>();
        t.dy = src.at("dy").get<double>();
    } catch (const json::exception &e) {
        throw FormatError(FormatError::Kind::Schema, std::string("affine JSON: ") + e.what());
    }
    if (!t.is_finite()) throw FormatError(FormatError::Kind::Schema, "affine JSON holds non-finite values");
    return t;
}

void save_affine(const AffineParams &theta, const std::filesystem::path &path) {
    write_json(affine_to_json(theta), path);
}

AffineParams load_affine(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error &e) {
        throw FormatError(FormatError::Kind::Schema, "'" + path.string() + "': " + e.what());
    }
    return affine_from_json(j);
}

void save_field(const DeformationField &phi, const std::filesystem::path &path) {
    save_pfm_rgb({phi.dx(), phi.dy(), GrayImage(phi.size())}, path);
}

DeformationField load_field(const std::filesystem::path &path) {
    RgbPlanes planes = load_pfm_rgb(path);
    try {
        return DeformationField(std::move(planes.r), std::move(planes.g));
    } catch (const std::invalid_argument &e) {
        throw FormatError(FormatError::Kind::Schema, "'" + path.string() + "': " + e.what());
    }
}

json metrics_to_json(const MetricsReport &report) {
    json j = json::object();
    for (const auto &[name, value] : report.values) j[name] = value;
    if (!report.labels.empty()) j["labels"] = report.labels;
    if (report.mask_fraction) j["mask_fraction"] = *report.mask_fraction;
    return j;
}

json aggregate_metrics(const std::vector<MetricsReport> &reports) {
    std::set<std::string> names;
    for (const auto &r : reports) {
        for (const auto &kv : r.values) names.insert(kv.first);
    }
    json out = json::object();
    for (const auto &name : names) {
        std::vector<double> xs;
        for (const auto &r : reports) {
            auto it = r.values.find(name);
            if (it != r.values.end()) xs.push_back(it->second);
        }
        double mean = 0.0;
        for (double x : xs) mean += x;
        mean /= static_cast<double>(xs.size());
        double var = 0.0;
        for (double x : xs) var += (x - mean) * (x - mean);
        const double sd = xs.size() > 1 ? std::sqrt(var / static_cast<double>(xs.size() - 1)) : 0.0;
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.3f±%.3f", mean, sd);
        out[name] = {{"mean", mean}, {"std", sd}, {"n", xs.size()}, {"summary", buf}};
    }
    return out;
}

void write_json(const json &j, const std::filesystem::path &path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

} // namespace regfuse::cli
