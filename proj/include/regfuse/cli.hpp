#pragma once

#include "regfuse/fusion.hpp"
#include "regfuse/geometry.hpp"
#include "regfuse/metrics.hpp"
#include "regfuse/register.hpp"
#include "regfuse/simulate.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace regfuse::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Every section is optional in the JSON file; unknown keys are rejected.
struct PipelineConfig {
    AugmentationRanges augmentation;
    ElasticParams elastic;
    RegisterConfig registration;
    FusionConfig fusion;
    double mask_threshold = kDefaultMaskThreshold;
    std::vector<std::string> metrics; // empty selects every metric
    std::optional<std::filesystem::path> output_dir;
    std::uint64_t seed = 0;
    std::size_t workers = 1;

    static PipelineConfig from_json(const nlohmann::json &j);
    nlohmann::json to_json() const;
    void validate() const;
};

PipelineConfig load_config(const std::filesystem::path &path);

// One batch entry. Relative paths are resolved against the manifest's directory.
struct ManifestItem {
    std::filesystem::path reference;
    std::optional<std::filesystem::path> moving;
    std::optional<std::filesystem::path> theta;
    std::optional<std::filesystem::path> phi;
    std::optional<std::filesystem::path> second;
    std::optional<std::filesystem::path> fused;
};

// Accepts a JSON array whose items are either objects with the fields above or
// arrays of 2 paths (reference, moving) / 3 paths (visible, infrared, fused).
std::vector<ManifestItem> load_manifest(const std::filesystem::path &path);

// --- serialization -----------------------------------------------------------

nlohmann::json affine_to_json(const AffineParams &theta);
AffineParams affine_from_json(const nlohmann::json &j);
void save_affine(const AffineParams &theta, const std::filesystem::path &path);
AffineParams load_affine(const std::filesystem::path &path);

// Three-channel PFM: R = dx, G = dy, B = 0.
void save_field(const DeformationField &phi, const std::filesystem::path &path);
DeformationField load_field(const std::filesystem::path &path);

nlohmann::json metrics_to_json(const MetricsReport &report);

// mean, sample std and a "mean±std" string (3 decimals) for every metric name present.
nlohmann::json aggregate_metrics(const std::vector<MetricsReport> &reports);

void write_json(const nlohmann::json &j, const std::filesystem::path &path);

// --- entry point ---------------------------------------------------------------

// Parses arguments and runs one subcommand; returns the process exit code.
int run(int argc, char **argv);

} // namespace regfuse::cli
