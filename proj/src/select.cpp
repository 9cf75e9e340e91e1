#include "inscorr/select.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "inscorr/errors.hpp"

namespace inscorr {

void SelectionSchedule::validate() const {
    if (!(tau >= 0.0 && tau < 1.0)) throw ContractError("schedule: tau must be in [0,1)");
    if (ramp_epochs < 1) throw ContractError("schedule: ramp_epochs must be >= 1");
}

double drop_rate(const SelectionSchedule& schedule, std::size_t epoch) {
    const double ramp = static_cast<double>(epoch) / static_cast<double>(schedule.ramp_epochs) * schedule.tau;
    return 1.0 - std::min(ramp, schedule.tau);
}

std::size_t kept_count(double keep_fraction, std::size_t batch) {
    if (batch == 0) return 0;
    const auto k = static_cast<std::size_t>(std::ceil(keep_fraction * static_cast<double>(batch) - 1e-9));
    return std::clamp<std::size_t>(k, 1, batch);
}

Selection select_small_loss(std::span<const double> losses, double keep_fraction) {
    if (losses.empty()) throw ContractError("select_small_loss: empty loss vector");
    if (!(keep_fraction > 0.0 && keep_fraction <= 1.0))
        throw ContractError("select_small_loss: keep_fraction must be in (0,1]");
    for (std::size_t i = 0; i < losses.size(); ++i)
        if (!std::isfinite(losses[i]))
            throw DataError("select_small_loss: non-finite loss at index " + std::to_string(i), i);

    std::vector<std::size_t> order(losses.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return losses[a] < losses[b]; });
    const std::size_t k = kept_count(keep_fraction, losses.size());
    Selection sel;
    sel.kept.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    sel.discarded.assign(order.begin() + static_cast<std::ptrdiff_t>(k), order.end());
    std::sort(sel.kept.begin(), sel.kept.end());
    std::sort(sel.discarded.begin(), sel.discarded.end());
    return sel;
}

double clean_share(const Dataset& ds, std::span<const std::size_t> rows) {
    if (rows.empty()) return 0.0;
    std::size_t clean = 0;
    for (auto r : rows)
        if (ds.examples[r].provenance == Provenance::Clean) ++clean;
    return static_cast<double>(clean) / static_cast<double>(rows.size());
}

SelfTeachStats self_teach_epoch(ModelParams& params, Optimizer& opt, const Dataset& train,
                                const SelectionSchedule& schedule, std::size_t epoch, std::size_t batch_size,
                                std::uint64_t epoch_seed) {
    schedule.validate();
    const double keep = drop_rate(schedule, epoch);
    SelfTeachStats stats;
    double loss_sum = 0.0, precision_sum = 0.0;
    const auto batches = minibatches(train, batch_size, epoch_seed);
    for (const auto& batch : batches) {
        const Tensor x = train.instances(batch);
        const auto labels = train.given_labels(batch);
        params.zero_grad();
        const Tensor losses = softmax_cross_entropy(forward(params, x), labels);
        const auto sel = select_small_loss(losses.values(), keep);
        const Tensor loss = mean(gather(losses, sel.kept));
        loss.backward();
        opt.step(params);

        std::vector<std::size_t> kept_rows;
        kept_rows.reserve(sel.kept.size());
        for (auto k : sel.kept) kept_rows.push_back(batch[k]);
        stats.kept_per_batch.push_back(sel.kept.size());
        stats.batch_sizes.push_back(batch.size());
        loss_sum += loss.item();
        precision_sum += clean_share(train, kept_rows);
    }
    params.zero_grad();
    if (!batches.empty()) {
        stats.mean_train_loss = loss_sum / static_cast<double>(batches.size());
        stats.selection_precision = precision_sum / static_cast<double>(batches.size());
    }
    return stats;
}

}  // namespace inscorr
