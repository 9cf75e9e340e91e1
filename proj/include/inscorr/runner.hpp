#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "inscorr/config.hpp"
#include "inscorr/pipeline.hpp"

namespace inscorr {

// Environment variable naming the directory that holds run directories.
inline constexpr const char* kOutputRootEnv = "INSCORR_OUTPUT_ROOT";

// $INSCORR_OUTPUT_ROOT, or "runs" under the working directory.
std::filesystem::path default_output_root();

// One JSON object per line; fields of EpochMetrics plus config_hash, then a
// final summary record. Contains no timing, so reruns are byte-identical.
std::string metrics_jsonl(const std::string& hash, std::span<const EpochMetrics> metrics);
std::string metrics_csv(const std::string& hash, std::span<const EpochMetrics> metrics);

struct RunRecord {
    std::string hash;
    std::filesystem::path dir;
    RunResult result;
    std::optional<Summary> summary;  // last-ten, when the run has >= 10 epochs
    double wall_seconds = 0.0;
};

// Runs one experiment and writes under root/<hash>/:
//   config.json, metrics.jsonl, metrics.csv, checkpoint.bin, manifest.json
RunRecord run_and_record(const ExperimentConfig& cfg, const std::filesystem::path& root);

struct CampaignGrid {
    std::vector<NoiseKind> kinds;
    std::vector<double> rates;
    std::vector<std::uint64_t> seeds;
    std::vector<Method> methods;
};

struct CampaignCell {
    NoiseKind kind = NoiseKind::TypeI;
    double rate = 0.0;
    Method method = Method::InsCorr;
    std::vector<double> run_means;  // last-ten mean of each successful seed
    std::vector<std::string> failures;
    std::optional<Summary> summary;
};

struct CampaignOptions {
    std::size_t workers = 1;
    // When set, each run also writes its run directory there.
    std::optional<std::filesystem::path> output_root;
};

// Cartesian product of the grid. Each run uses Seeds::all(seed), noise.kind,
// noise.rate and schedule.tau = rate on top of `base`. A failing run is
// recorded in its cell and the campaign carries on.
std::vector<CampaignCell> run_campaign(const ExperimentConfig& base, const CampaignGrid& grid,
                                       const CampaignOptions& opts = {});
// noise,rate,method,mean,std,runs,failures
std::string campaign_table_csv(std::span<const CampaignCell> cells);

struct AblationRow {
    double lambda = 0.0;
    double mean_acc = 0.0;
    double std_acc = 0.0;
    std::size_t failures = 0;
};

inline const std::vector<double> kAblationLambdas{0.05, 0.10, 0.15, 0.20, 0.25, 0.30};

// One row per lambda (ascending), statistics over the seeds' last-ten means.
std::vector<AblationRow> run_ablation(const ExperimentConfig& base, std::vector<double> lambdas,
                                      std::span<const std::uint64_t> seeds, const CampaignOptions& opts = {});
// lambda,mean_acc,std_acc
std::string ablation_csv(std::span<const AblationRow> rows);

// Writes train/validation/test datasets (binary and CSV) into `dir`.
struct DataFiles {
    std::vector<std::filesystem::path> written;
};
DataFiles write_experiment_data(const ExperimentConfig& cfg, const std::filesystem::path& dir);

std::uint32_t file_crc32(const std::filesystem::path& path);

}  // namespace inscorr
