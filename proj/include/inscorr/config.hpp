#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "inscorr/attack.hpp"
#include "inscorr/data.hpp"
#include "inscorr/nn.hpp"
#include "inscorr/noise.hpp"
#include "inscorr/select.hpp"

namespace inscorr {

enum class Method { SelectionOnly, Mix, InsCorr };
enum class PartitionRule { Agreement, SmallLossGlobal };
// Which term lambda weighs in the mixed objective.
//   CleanWeight:     L = lambda * clean + (1 - lambda) * corrected   (as written)
//   DiscardedWeight: L = (1 - lambda) * clean + lambda * corrected
enum class LambdaSemantics { CleanWeight, DiscardedWeight };

const char* method_name(Method m);

struct Seeds {
    std::uint64_t data = 0;
    std::uint64_t noise = 0;
    std::uint64_t init = 0;
    std::uint64_t epochs = 0;

    static Seeds all(std::uint64_t s) { return {s, s, s, s}; }
    bool operator==(const Seeds&) const = default;
};

struct DataConfig {
    std::size_t classes = 4;
    std::size_t per_class = 500;
    std::size_t test_per_class = 250;
    ImageShape image{16, 16};
    double validation_fraction = 0.10;
    std::size_t ood_pool = 0;  // 0: exactly as many OOD instances as Type I needs
    std::vector<OodFamily> ood_families = kDefaultOodFamilies;
    SyntheticStyle style;
    bool operator==(const DataConfig&) const = default;
};

struct ExperimentConfig {
    Method method = Method::InsCorr;
    double lambda = 0.5;
    LambdaSemantics lambda_semantics = LambdaSemantics::CleanWeight;
    std::size_t warmup_epochs = 100;  // T_c
    std::size_t epochs = 200;         // T_max
    std::size_t batch_size = 128;
    bool refresh_correction = false;
    PartitionRule partition_rule = PartitionRule::Agreement;
    Seeds seeds;
    std::vector<std::size_t> hidden_widths{64};
    OptimizerConfig optimizer;
    SelectionSchedule schedule;
    AttackConfig attack;
    NoiseSpec noise;
    DataConfig data;

    ModelSpec model_spec() const;
    // Weight of the clean term in the mixed objective after resolving
    // lambda_semantics.
    double clean_weight() const;
    NoiseSpec resolved_noise() const;
    // Throws ConfigError naming the offending key.
    void validate() const;
    bool operator==(const ExperimentConfig&) const = default;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
// Strict: unknown keys and out-of-range values raise ConfigError. Missing
// keys take defaults; a missing schedule.tau follows noise.rate.
ExperimentConfig config_from_json(const nlohmann::json& j);

// Applies "dotted.key=value" overrides onto a raw config tree. Values are
// parsed as JSON when possible, otherwise taken as strings.
void apply_override(nlohmann::json& tree, const std::string& assignment);

// File (may be empty path) merged with overrides; overrides win.
ExperimentConfig parse_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

// Hex digest (16 chars) of the canonical serialisation of the resolved config.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace inscorr
