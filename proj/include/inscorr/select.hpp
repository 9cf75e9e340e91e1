#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "inscorr/data.hpp"
#include "inscorr/nn.hpp"

namespace inscorr {

// Keep-fraction schedule R(T) = 1 - min(T/ramp_epochs * tau, tau).
struct SelectionSchedule {
    double tau = 0.4;
    std::size_t ramp_epochs = 10;

    void validate() const;
    bool operator==(const SelectionSchedule&) const = default;
};

double drop_rate(const SelectionSchedule& schedule, std::size_t epoch);

// ceil(keep_fraction * batch), at least 1 for a non-empty batch. A 1e-9 slack
// absorbs representation error so e.g. R = 0.7 over 10 examples keeps 7.
std::size_t kept_count(double keep_fraction, std::size_t batch);

struct Selection {
    std::vector<std::size_t> kept;       // ascending
    std::vector<std::size_t> discarded;  // ascending
};

// Keeps the kept_count() smallest losses, ties broken by lower index.
Selection select_small_loss(std::span<const double> losses, double keep_fraction);

struct SelfTeachStats {
    std::vector<std::size_t> kept_per_batch;
    std::vector<std::size_t> batch_sizes;
    double mean_train_loss = 0.0;   // mean over batches of the kept-example loss
    double selection_precision = 0.0;  // mean over batches of clean share among kept
};

// One selection epoch: per mini-batch, select small-loss
// examples with R(epoch) and take one optimizer step on their mean loss.
SelfTeachStats self_teach_epoch(ModelParams& params, Optimizer& opt, const Dataset& train,
                                const SelectionSchedule& schedule, std::size_t epoch, std::size_t batch_size,
                                std::uint64_t epoch_seed);

// Clean share among `rows`, read from provenance flags. Diagnostics only.
double clean_share(const Dataset& ds, std::span<const std::size_t> rows);

}  // namespace inscorr
