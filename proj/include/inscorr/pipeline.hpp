#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "inscorr/attack.hpp"
#include "inscorr/config.hpp"
#include "inscorr/data.hpp"
#include "inscorr/nn.hpp"

namespace inscorr {

struct ExperimentData {
    Dataset train;
    Dataset validation;  // noisy labels
    Dataset test;        // clean, true labels
};

// Synthetic clean data -> open-set noise -> 10% noisy validation split,
// plus an independent clean test draw.
ExperimentData build_experiment_data(const ExperimentConfig& cfg);

struct EpochMetrics {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_accuracy = 0.0;   // against given (noisy) labels
    double test_accuracy = 0.0;  // against true labels
    std::optional<double> selection_precision;
    std::optional<double> attack_success;
    double keep_fraction = 1.0;  // R(T) during warmup, 1 afterwards
    bool operator==(const EpochMetrics&) const = default;
};

struct Partition {
    std::vector<std::size_t> clean;       // ascending training indices
    std::vector<std::size_t> mislabeled;  // ascending training indices
};

struct RunResult {
    ModelParams params;
    AdamState optimizer_state;  // final moments, for checkpoints
    std::vector<EpochMetrics> metrics;
    std::optional<Partition> partition;
    std::vector<CorrectionResult> corrections;  // the last S_p built (InsCorr)
    std::size_t optimizer_steps = 0;
};

struct RunHooks {
    // Called after every epoch with the current parameters.
    std::function<void(std::size_t epoch, const ModelParams&)> on_epoch;
};

// Seeds of the per-epoch batch streams.
std::uint64_t warmup_epoch_seed(const ExperimentConfig& cfg, std::size_t epoch);
std::uint64_t mixed_epoch_seed(const ExperimentConfig& cfg, std::size_t epoch);

// Selection-only training for cfg.epochs epochs (the SelectionOnly baseline).
RunResult run_algorithm1(const ExperimentConfig& cfg, const ExperimentData& data, const RunHooks& hooks = {});
RunResult run_algorithm1(const ExperimentConfig& cfg);

// Two-stage training: warmup by selection, partition, instance correction, mixed
// objective. run_mix is the same with correction skipped.
RunResult run_inscorr(const ExperimentConfig& cfg, const ExperimentData& data, const RunHooks& hooks = {});
RunResult run_mix(const ExperimentConfig& cfg, const ExperimentData& data, const RunHooks& hooks = {});

// Dispatches on cfg.method.
RunResult run_experiment(const ExperimentConfig& cfg, const ExperimentData& data, const RunHooks& hooks = {});
RunResult run_experiment(const ExperimentConfig& cfg);

// Agreement: clean iff argmax prediction == given label.
// SmallLossGlobal: the round((1-tau)*n) smallest-loss examples are clean,
// ties by lower index.
Partition partition_clean_mislabeled(const ModelParams& params, const Dataset& train, PartitionRule rule,
                                     double tau = 0.0);

// A labelled batch; an undefined `x` means empty.
struct LabeledBatch {
    Tensor x;
    std::vector<int> labels;
    bool empty() const { return labels.empty(); }
};

// clean_weight * mean CE(clean) + (1 - clean_weight) * mean CE(corrected).
// Empty batches and zero-weight terms are left out of the graph entirely. If
// nothing remains the result is a constant 0 that does not require grad.
Tensor mixed_loss(const ModelParams& params, const LabeledBatch& clean, const LabeledBatch& corrected,
                  double clean_weight);

// One gradient step of the post-warmup phase: indices into the clean
// partition and into the corrected set.
struct MixedStep {
    std::vector<std::size_t> clean;
    std::vector<std::size_t> corrected;
};

// Batches drawn proportionally from both sets: the clean share of each batch
// is round(batch * n_clean / (n_clean + n_corrected)) (at least one when
// n_clean > 0), the corrected share the remainder.
std::vector<MixedStep> mixed_epoch_plan(std::size_t n_clean, std::size_t n_corrected, std::size_t batch_size,
                                        std::uint64_t epoch_seed);

// Fraction of examples whose argmax prediction equals the true label.
double evaluate(const ModelParams& params, const Dataset& test);
// Same against given labels; 0 for an empty set.
double noisy_accuracy(const ModelParams& params, const Dataset& ds);

struct Summary {
    double mean = 0.0;
    double std = 0.0;  // population
};

Summary mean_std(std::span<const double> values);
// Mean and population std of test accuracy over the final ten epochs.
Summary last_ten_summary(std::span<const EpochMetrics> trail);

// Returns the candidate with the best score, ties to the smallest candidate.
std::size_t choose_t_c(std::span<const std::size_t> candidates, std::span<const double> scores);
// Runs warmup to max(candidates) and picks by noisy-validation accuracy.
std::size_t select_t_c(const ExperimentConfig& cfg, std::span<const std::size_t> candidates);
std::size_t select_t_c(const ExperimentConfig& cfg, const ExperimentData& data, std::span<const std::size_t> candidates);

}  // namespace inscorr
