#include "inscorr/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "inscorr/errors.hpp"
#include "inscorr/noise.hpp"
#include "inscorr/rng.hpp"
#include "inscorr/select.hpp"

namespace inscorr {

ExperimentData build_experiment_data(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto& dc = cfg.data;
    Dataset clean = generate_synthetic(dc.classes, dc.per_class, dc.image, cfg.seeds.data, dc.style);
    Dataset test = generate_synthetic(dc.classes, dc.test_per_class, dc.image, stream_seed(cfg.seeds.data, "test"), dc.style);

    const NoiseSpec spec = cfg.resolved_noise();
    Dataset noisy;
    if (spec.kind == NoiseKind::TypeI) {
        const std::size_t needed = noise_count(spec.rate, clean.size());
        const std::size_t pool = std::max<std::size_t>({dc.ood_pool, needed, 1});
        const Dataset ood = generate_ood_source(dc.image, pool, stream_seed(cfg.seeds.noise, "ood"), dc.classes,
                                             dc.style, dc.ood_families);
        noisy = inject_type1(clean, ood, spec);
    } else {
        noisy = inject_type2(clean, spec);
    }
    auto [train, val] = split_validation(noisy, {dc.validation_fraction, stream_seed(cfg.seeds.data, "split")});
    return {std::move(train), std::move(val), std::move(test)};
}

std::uint64_t warmup_epoch_seed(const ExperimentConfig& cfg, std::size_t epoch) {
    return stream_seed(cfg.seeds.epochs, "warmup", epoch);
}

std::uint64_t mixed_epoch_seed(const ExperimentConfig& cfg, std::size_t epoch) {
    return stream_seed(cfg.seeds.epochs, "mixed", epoch);
}

// --- evaluation --------------------------------------------------------------

namespace {

std::vector<int> predict_dataset(const ModelParams& params, const Dataset& ds) {
    if (ds.empty()) return {};
    return predict(params, ds.all_instances());
}

// Per-example cross-entropy against given labels, outside any graph.
std::vector<double> dataset_losses(const ModelParams& params, const Dataset& ds) {
    const ModelParams frozen = params.frozen();
    std::vector<std::size_t> rows(ds.size());
    std::iota(rows.begin(), rows.end(), 0);
    const Tensor ce = softmax_cross_entropy(forward(frozen, ds.instances(rows)), ds.given_labels(rows));
    return {ce.values().begin(), ce.values().end()};
}

}  // namespace

double evaluate(const ModelParams& params, const Dataset& test) {
    if (test.empty()) throw ContractError("evaluate: empty test set");
    for (std::size_t i = 0; i < test.size(); ++i)
        if (!test.examples[i].true_label)
            throw ContractError("evaluate: example " + std::to_string(i) + " has no true label");
    const auto preds = predict_dataset(params, test);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        if (preds[i] == *test.examples[i].true_label) ++correct;
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

double noisy_accuracy(const ModelParams& params, const Dataset& ds) {
    if (ds.empty()) return 0.0;
    const auto preds = predict_dataset(params, ds);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        if (preds[i] == ds.examples[i].given_label) ++correct;
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

Summary mean_std(std::span<const double> values) {
    if (values.empty()) throw ContractError("mean_std: no values");
    double s = 0.0;
    for (double v : values) s += v;
    const double m = s / static_cast<double>(values.size());
    double sq = 0.0;
    for (double v : values) sq += (v - m) * (v - m);
    return {m, std::sqrt(sq / static_cast<double>(values.size()))};
}

Summary last_ten_summary(std::span<const EpochMetrics> trail) {
    if (trail.size() < 10)
        throw ContractError("last_ten_summary: need at least 10 epochs, got " + std::to_string(trail.size()));
    std::vector<double> acc;
    for (const auto& m : trail.subspan(trail.size() - 10)) acc.push_back(m.test_accuracy);
    return mean_std(acc);
}

// --- partition & mixed objective ----------------------------------------------

Partition partition_clean_mislabeled(const ModelParams& params, const Dataset& train, PartitionRule rule, double tau) {
    Partition part;
    const std::size_t n = train.size();
    if (n == 0) return part;
    if (rule == PartitionRule::Agreement) {
        const auto preds = predict_dataset(params, train);
        for (std::size_t i = 0; i < n; ++i)
            (preds[i] == train.examples[i].given_label ? part.clean : part.mislabeled).push_back(i);
        return part;
    }
    if (!(tau >= 0.0 && tau < 1.0)) throw ContractError("partition: tau must be in [0,1)");
    const auto losses = dataset_losses(params, train);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return losses[a] < losses[b]; });
    const auto keep = static_cast<std::size_t>(std::llround((1.0 - tau) * static_cast<double>(n)));
    part.clean.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep));
    part.mislabeled.assign(order.begin() + static_cast<std::ptrdiff_t>(keep), order.end());
    std::sort(part.clean.begin(), part.clean.end());
    std::sort(part.mislabeled.begin(), part.mislabeled.end());
    return part;
}

Tensor mixed_loss(const ModelParams& params, const LabeledBatch& clean, const LabeledBatch& corrected,
                  double clean_weight) {
    if (clean.empty() && corrected.empty()) throw ContractError("mixed_loss: both batches are empty");
    if (!(clean_weight >= 0.0 && clean_weight <= 1.0)) throw ContractError("mixed_loss: weight must be in [0,1]");
    auto term = [&](const LabeledBatch& b, double w) -> std::optional<Tensor> {
        if (b.empty() || w == 0.0) return std::nullopt;
        return scale(mean(softmax_cross_entropy(forward(params, b.x), b.labels)), w);
    };
    auto lc = term(clean, clean_weight);
    auto lp = term(corrected, 1.0 - clean_weight);
    if (lc && lp) return add(*lc, *lp);
    if (lc) return *lc;
    if (lp) return *lp;
    return Tensor::scalar(0.0);
}

std::vector<MixedStep> mixed_epoch_plan(std::size_t n_clean, std::size_t n_corrected, std::size_t batch_size,
                                        std::uint64_t epoch_seed) {
    if (batch_size < 1) throw ContractError("mixed_epoch_plan: batch_size must be >= 1");
    const std::size_t n = n_clean + n_corrected;
    if (n == 0) return {};
    std::size_t bc = 0, bp = 0;
    if (n_clean > 0) {
        const auto share = static_cast<std::size_t>(
            std::llround(static_cast<double>(batch_size) * static_cast<double>(n_clean) / static_cast<double>(n)));
        bc = std::clamp<std::size_t>(share, 1, batch_size);
    }
    if (n_corrected > 0) bp = std::max<std::size_t>(1, batch_size - std::min(bc, batch_size));
    auto ceil_div = [](std::size_t a, std::size_t b) { return b == 0 ? 0 : (a + b - 1) / b; };
    const std::size_t steps = std::max(ceil_div(n_clean, bc), ceil_div(n_corrected, bp));

    auto perm = [](std::size_t count, Rng rng) {
        std::vector<std::size_t> p(count);
        std::iota(p.begin(), p.end(), 0);
        std::shuffle(p.begin(), p.end(), rng);
        return p;
    };
    const auto pc = perm(n_clean, make_rng(epoch_seed, "clean"));
    const auto pp = perm(n_corrected, make_rng(epoch_seed, "corrected"));
    auto chunk = [](const std::vector<std::size_t>& p, std::size_t s, std::size_t size) {
        const std::size_t start = std::min(p.size(), s * size);
        const std::size_t end = std::min(p.size(), start + size);
        return std::vector<std::size_t>(p.begin() + static_cast<std::ptrdiff_t>(start),
                                        p.begin() + static_cast<std::ptrdiff_t>(end));
    };
    std::vector<MixedStep> plan(steps);
    for (std::size_t s = 0; s < steps; ++s) {
        plan[s].clean = chunk(pc, s, bc);
        plan[s].corrected = chunk(pp, s, bp);
    }
    return plan;
}

// --- runners -----------------------------------------------------------------

namespace {

struct Trainer {
    const ExperimentConfig& cfg;
    const ExperimentData& data;
    const RunHooks& hooks;
    ModelParams params;
    Optimizer opt;
    RunResult result;

    Trainer(const ExperimentConfig& c, const ExperimentData& d, const RunHooks& h)
        : cfg(c), data(d), hooks(h), params(init_model(c.model_spec(), c.seeds.init)), opt(c.optimizer) {
        c.validate();
        if (data.train.dim != cfg.model_spec().input_dim)
            throw DimensionError("training data dimension " + std::to_string(data.train.dim) +
                                 " does not match the model input " + std::to_string(cfg.model_spec().input_dim));
    }

    void finish_epoch(EpochMetrics m) {
        m.val_accuracy = noisy_accuracy(params, data.validation);
        m.test_accuracy = evaluate(params, data.test);
        result.metrics.push_back(m);
        if (hooks.on_epoch) hooks.on_epoch(m.epoch, params);
    }

    void warmup(std::size_t end_epoch) {
        for (std::size_t t = 0; t < end_epoch; ++t) {
            const auto stats =
                self_teach_epoch(params, opt, data.train, cfg.schedule, t, cfg.batch_size, warmup_epoch_seed(cfg, t));
            result.optimizer_steps += stats.kept_per_batch.size();
            EpochMetrics m;
            m.epoch = t;
            m.train_loss = stats.mean_train_loss;
            m.selection_precision = stats.selection_precision;
            m.keep_fraction = drop_rate(cfg.schedule, t);
            finish_epoch(m);
        }
    }

    std::vector<CorrectionResult> correct(const std::vector<std::size_t>& rows) {
        std::vector<CorrectionRequest> reqs;
        reqs.reserve(rows.size());
        for (auto r : rows) reqs.push_back({data.train.examples[r].instance, data.train.examples[r].given_label});
        return correct_set(params, reqs, cfg.attack);
    }

    // Partition, correct, then mixed training; `apply_correction` false gives Mix.
    void mixed_phase(bool apply_correction) {
        const Partition part =
            partition_clean_mislabeled(params, data.train, cfg.partition_rule, cfg.schedule.tau);
        const std::size_t d = data.train.dim;

        std::vector<std::vector<double>> corr_inst;
        std::vector<int> corr_labels;
        std::optional<double> success;
        auto rebuild = [&]() {
            corr_inst.clear();
            corr_labels.clear();
            if (apply_correction) {
                result.corrections = correct(part.mislabeled);
                std::size_t ok = 0;
                for (const auto& r : result.corrections) {
                    corr_inst.push_back(r.instance);
                    ok += r.success ? 1 : 0;
                }
                success = part.mislabeled.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(part.mislabeled.size());
            } else {
                for (auto r : part.mislabeled) corr_inst.push_back(data.train.examples[r].instance);
            }
            for (auto r : part.mislabeled) corr_labels.push_back(data.train.examples[r].given_label);
        };
        rebuild();
        const double precision = clean_share(data.train, part.clean);
        const double w = cfg.clean_weight();

        for (std::size_t t = cfg.warmup_epochs; t < cfg.epochs; ++t) {
            if (cfg.refresh_correction && apply_correction && t > cfg.warmup_epochs) rebuild();
            const auto plan = mixed_epoch_plan(part.clean.size(), corr_inst.size(), cfg.batch_size, mixed_epoch_seed(cfg, t));
            double loss_sum = 0.0;
            std::size_t loss_count = 0;
            for (const auto& step : plan) {
                LabeledBatch clean, corr;
                if (!step.clean.empty()) {
                    std::vector<std::size_t> rows;
                    for (auto i : step.clean) rows.push_back(part.clean[i]);
                    clean.x = data.train.instances(rows);
                    clean.labels = data.train.given_labels(rows);
                }
                if (!step.corrected.empty()) {
                    std::vector<double> buf;
                    buf.reserve(step.corrected.size() * d);
                    for (auto i : step.corrected) {
                        buf.insert(buf.end(), corr_inst[i].begin(), corr_inst[i].end());
                        corr.labels.push_back(corr_labels[i]);
                    }
                    corr.x = Tensor::from({step.corrected.size(), d}, std::move(buf));
                }
                params.zero_grad();
                const Tensor loss = mixed_loss(params, clean, corr, w);
                if (!loss.requires_grad()) continue;
                loss.backward();
                opt.step(params);
                ++result.optimizer_steps;
                loss_sum += loss.item();
                ++loss_count;
            }
            params.zero_grad();
            EpochMetrics m;
            m.epoch = t;
            m.train_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
            m.selection_precision = precision;
            m.attack_success = success;
            m.keep_fraction = 1.0;
            finish_epoch(m);
        }
        result.partition = part;
    }

    RunResult take() {
        result.params = std::move(params);
        result.optimizer_state = opt.adam();
        return std::move(result);
    }
};

RunResult run_two_stage(const ExperimentConfig& cfg, const ExperimentData& data, const RunHooks& hooks,
                        bool apply_correction) {
    Trainer tr(cfg, data, hooks);
    tr.warmup(cfg.warmup_epochs);
    if (cfg.warmup_epochs < cfg.epochs) tr.mixed_phase(apply_correction);
    return tr.take();
}

}  // namespace

RunResult run_algorithm1(const ExperimentConfig& cfg, const ExperimentData& data, const RunHooks& hooks) {
    Trainer tr(cfg, data, hooks);
    tr.warmup(cfg.epochs);
    return tr.take();
}

RunResult run_algorithm1(const ExperimentConfig& cfg) { return run_algorithm1(cfg, build_experiment_data(cfg)); }

RunResult run_inscorr(const ExperimentConfig& cfg, const ExperimentData& data, const RunHooks& hooks) {
    return run_two_stage(cfg, data, hooks, true);
}

RunResult run_mix(const ExperimentConfig& cfg, const ExperimentData& data, const RunHooks& hooks) {
    return run_two_stage(cfg, data, hooks, false);
}

RunResult run_experiment(const ExperimentConfig& cfg, const ExperimentData& data, const RunHooks& hooks) {
    switch (cfg.method) {
        case Method::SelectionOnly: return run_algorithm1(cfg, data, hooks);
        case Method::Mix: return run_mix(cfg, data, hooks);
        case Method::InsCorr: return run_inscorr(cfg, data, hooks);
    }
    throw ContractError("run_experiment: unknown method");
}

RunResult run_experiment(const ExperimentConfig& cfg) { return run_experiment(cfg, build_experiment_data(cfg)); }

std::size_t choose_t_c(std::span<const std::size_t> candidates, std::span<const double> scores) {
    if (candidates.empty()) throw ContractError("choose_t_c: no candidates");
    if (candidates.size() != scores.size()) throw ContractError("choose_t_c: one score per candidate required");
    std::size_t best = 0;
    for (std::size_t i = 1; i < candidates.size(); ++i)
        if (scores[i] > scores[best] || (scores[i] == scores[best] && candidates[i] < candidates[best])) best = i;
    return candidates[best];
}

std::size_t select_t_c(const ExperimentConfig& cfg, const ExperimentData& data, std::span<const std::size_t> candidates) {
    if (candidates.empty()) throw ContractError("select_t_c: no candidates");
    const std::size_t horizon = *std::max_element(candidates.begin(), candidates.end());
    std::vector<double> by_epoch(horizon + 1, 0.0);
    ModelParams params = init_model(cfg.model_spec(), cfg.seeds.init);
    by_epoch[0] = noisy_accuracy(params, data.validation);
    Optimizer opt(cfg.optimizer);
    for (std::size_t t = 0; t < horizon; ++t) {
        self_teach_epoch(params, opt, data.train, cfg.schedule, t, cfg.batch_size, warmup_epoch_seed(cfg, t));
        by_epoch[t + 1] = noisy_accuracy(params, data.validation);
    }
    std::vector<double> scores;
    for (auto c : candidates) scores.push_back(by_epoch[c]);
    return choose_t_c(candidates, scores);
}

std::size_t select_t_c(const ExperimentConfig& cfg, std::span<const std::size_t> candidates) {
    return select_t_c(cfg, build_experiment_data(cfg), candidates);
}

}  // namespace inscorr
