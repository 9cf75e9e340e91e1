#include "inscorr/acceptance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

#include "inscorr/attack.hpp"
#include "inscorr/config.hpp"
#include "inscorr/noise.hpp"
#include "inscorr/pipeline.hpp"
#include "inscorr/rng.hpp"
#include "inscorr/runner.hpp"
#include "inscorr/select.hpp"

namespace inscorr::acceptance {

namespace {

using Clock = std::chrono::steady_clock;

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

struct Timer {
    Clock::time_point start = Clock::now();
    double seconds() const { return std::chrono::duration<double>(Clock::now() - start).count(); }
};

CriterionResult finish(const char* id, bool ok, std::string detail, const Timer& t, double limit_s) {
    CriterionResult r{id, ok, std::move(detail), t.seconds()};
    if (limit_s > 0.0 && r.seconds > limit_s) {
        r.passed = false;
        r.detail += "; runtime " + fmt("%.1f", r.seconds) + "s over the " + fmt("%.0f", limit_s) + "s limit";
    }
    return r;
}

double mean_ce(const ModelParams& p, const Tensor& x, std::span<const int> labels) {
    return mean(softmax_cross_entropy(forward(p, x), labels)).item();
}

ExperimentConfig small_config(std::uint64_t seed) {
    ExperimentConfig cfg;
    cfg.seeds = Seeds::all(seed);
    cfg.data.per_class = 60;
    cfg.data.test_per_class = 20;
    cfg.batch_size = 32;
    cfg.epochs = 8;
    cfg.warmup_epochs = 4;
    cfg.schedule.ramp_epochs = 2;
    cfg.attack.steps = 10;
    return cfg;
}

bool same_trace(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
    return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin());
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::vector<std::string> criterion_ids() { return {"A1", "A2", "A3", "A4", "A5", "A6", "A7", "A8", "A9"}; }

// --- A1 ----------------------------------------------------------------------

CriterionResult gradient_correctness() {
    Timer timer;
    Rng rng(20240101);
    auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double h = 1e-5;
    double worst = 0.0;
    std::size_t checked = 0;

    for (int trial = 0; trial < 20; ++trial) {
        ModelSpec spec;
        spec.input_dim = pick(1, 32);
        spec.num_classes = pick(2, 5);
        spec.hidden_widths.clear();
        for (std::size_t l = 0, n = pick(0, 2); l < n; ++l) spec.hidden_widths.push_back(pick(1, 16));
        const std::size_t batch = pick(1, 4);
        ModelParams params = init_model(spec, 1000 + static_cast<std::uint64_t>(trial));
        // nonzero biases so they take part in the check
        for (auto& layer : params.layers)
            for (auto& b : layer.bias.mutable_values()) b = unit(rng) - 0.5;

        std::vector<double> xv(batch * spec.input_dim);
        for (auto& v : xv) v = unit(rng);
        Tensor x = Tensor::from({batch, spec.input_dim}, xv, true);
        std::vector<int> labels(batch);
        for (auto& l : labels) l = static_cast<int>(pick(0, spec.num_classes - 1));

        params.zero_grad();
        mean(softmax_cross_entropy(forward(params, x), labels)).backward();

        std::vector<Tensor> leaves = params.tensors();
        leaves.push_back(x);
        for (auto& t : leaves) {
            std::vector<double> analytic(t.numel(), 0.0);
            if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
            auto vals = t.mutable_values();
            for (std::size_t i = 0; i < vals.size(); ++i) {
                const double keep = vals[i];
                vals[i] = keep + h;
                const double up = mean_ce(params, x, labels);
                vals[i] = keep - h;
                const double down = mean_ce(params, x, labels);
                vals[i] = keep;
                const double numeric = (up - down) / (2.0 * h);
                const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
                worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
                ++checked;
            }
        }
    }
    return finish("A1", worst < 1e-3,
                  "20 MLPs, " + std::to_string(checked) + " partials, max rel err " + fmt("%.2e", worst), timer, 30.0);
}

// --- A2 ----------------------------------------------------------------------

CriterionResult schedule_exactness() {
    Timer timer;
    bool ok = true;
    double worst = 0.0;
    std::size_t count_checks = 0;
    std::string first_fail;
    for (int tenths : {2, 4, 6, 8}) {
        const double tau = tenths / 10.0;
        const SelectionSchedule sched{tau, 10};
        for (std::size_t t = 0; t <= 30; ++t) {
            const double closed = 1.0 - std::min(static_cast<double>(t) / 10.0 * tau, tau);
            const double r = drop_rate(sched, t);
            worst = std::max(worst, std::abs(r - closed));
            if (std::abs(r - closed) > 4.0 * std::numeric_limits<double>::epsilon()) ok = false;
            // R = (100 - tenths * min(t,10)) / 100 exactly, so ceil(R*b) in integers
            const std::size_t num = 100 - static_cast<std::size_t>(tenths) * std::min<std::size_t>(t, 10);
            for (std::size_t b = 1; b <= 256; ++b) {
                const std::size_t expected = std::max<std::size_t>(1, (num * b + 99) / 100);
                ++count_checks;
                if (kept_count(r, b) != expected) {
                    ok = false;
                    if (first_fail.empty())
                        first_fail = "; first mismatch tau=" + fmt("%.1f", tau) + " T=" + std::to_string(t) +
                                     " b=" + std::to_string(b);
                }
            }
        }
    }
    return finish("A2", ok,
                  "124 R(T) values, max |err| " + fmt("%.1e", worst) + ", " + std::to_string(count_checks) +
                      " kept counts" + first_fail,
                  timer, 1.0);
}

// --- A3 ----------------------------------------------------------------------

CriterionResult selection_oracle() {
    Timer timer;
    Rng rng(777);
    std::uniform_int_distribution<std::size_t> len(1, 8);
    std::uniform_int_distribution<int> coarse(0, 3);
    std::uniform_real_distribution<double> fine(0.0, 2.0), frac(0.01, 1.0);
    std::size_t mismatches = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = len(rng);
        std::vector<double> losses(n);
        const bool ties = trial % 2 == 0;
        for (auto& l : losses) l = ties ? coarse(rng) * 0.5 : fine(rng);
        const double keep = frac(rng);
        const auto sel = select_small_loss(losses, keep);

        // oracle: full sort of (loss, index) pairs
        std::vector<std::pair<double, std::size_t>> pairs;
        for (std::size_t i = 0; i < n; ++i) pairs.emplace_back(losses[i], i);
        std::sort(pairs.begin(), pairs.end());
        const std::size_t k = kept_count(keep, n);
        std::vector<std::size_t> want_kept, want_disc;
        for (std::size_t i = 0; i < n; ++i) (i < k ? want_kept : want_disc).push_back(pairs[i].second);
        std::sort(want_kept.begin(), want_kept.end());
        std::sort(want_disc.begin(), want_disc.end());
        if (sel.kept != want_kept || sel.discarded != want_disc) ++mismatches;
    }
    return finish("A3", mismatches == 0, "1000 vectors, " + std::to_string(mismatches) + " mismatches", timer, 5.0);
}

// --- A4 ----------------------------------------------------------------------

CriterionResult qualitative_ordering() {
    Timer timer;
    const std::uint64_t seeds[] = {1, 2, 3, 4, 5};
    auto mean_last_ten = [&](NoiseKind kind, Method method, bool discarded_weight) {
        double total = 0.0;
        for (auto s : seeds) {
            ExperimentConfig cfg;
            cfg.epochs = 60;
            cfg.warmup_epochs = 30;
            cfg.seeds = Seeds::all(s);
            cfg.method = method;
            cfg.noise.kind = kind;
            cfg.noise.rate = 0.4;
            cfg.schedule.tau = 0.4;
            if (discarded_weight) {
                cfg.lambda = 0.3;
                cfg.lambda_semantics = LambdaSemantics::DiscardedWeight;
            }
            total += last_ten_summary(run_experiment(cfg).metrics).mean;
        }
        return total / static_cast<double>(std::size(seeds));
    };

    bool no_worse = true;
    int strictly_better = 0;
    std::string detail;
    for (auto kind : {NoiseKind::Fog, NoiseKind::Occlusion, NoiseKind::Resolution}) {
        const double sel = mean_last_ten(kind, Method::SelectionOnly, false);
        const double ins = mean_last_ten(kind, Method::InsCorr, false);
        no_worse = no_worse && ins >= sel - 0.005;
        strictly_better += ins > sel ? 1 : 0;
        detail += std::string(noise_kind_name(kind)) + " sel " + fmt("%.4f", sel) + " inscorr " + fmt("%.4f", ins) + "; ";
    }
    const double sel1 = mean_last_ten(NoiseKind::TypeI, Method::SelectionOnly, false);
    const double mix1 = mean_last_ten(NoiseKind::TypeI, Method::Mix, true);
    const bool type1 = sel1 - mix1 >= 0.02;
    detail += "type1 sel " + fmt("%.4f", sel1) + " mix " + fmt("%.4f", mix1) + " (gap " + fmt("%.4f", sel1 - mix1) + ")";
    return finish("A4", no_worse && strictly_better >= 2 && type1, detail, timer, 15.0 * 60.0);
}

// --- A5 ----------------------------------------------------------------------

CriterionResult attack_efficacy() {
    Timer timer;
    const ImageShape shape{16, 16};
    const SyntheticStyle style;
    const Dataset train = generate_synthetic(4, 250, shape, 51, style);
    ModelParams params = init_model(ModelSpec{shape.numel(), {64}, 4}, 52);
    Optimizer opt(OptimizerConfig{});
    const SelectionSchedule keep_all{0.0, 10};
    for (std::size_t e = 0; e < 20; ++e) self_teach_epoch(params, opt, train, keep_all, e, 64, stream_seed(53, "epoch", e));

    const Dataset ood = generate_ood_source(shape, 200, 54, 4, style);
    Rng rng(55);
    std::uniform_int_distribution<int> cls(0, 3);
    std::vector<CorrectionRequest> reqs;
    for (const auto& ex : ood.examples) reqs.push_back({ex.instance, cls(rng)});

    bool invariants = true;
    std::size_t successes = 0;
    for (auto norm : {AttackNorm::Linf, AttackNorm::L2}) {
        AttackConfig cfg;
        cfg.norm = norm;
        cfg.budget = norm == AttackNorm::Linf ? 0.3 : 3.0;
        cfg.steps = 40;
        const auto results = correct_set(params, reqs, cfg);
        for (std::size_t i = 0; i < results.size(); ++i) {
            const auto& r = results[i];
            invariants = invariants && r.failure == CorrectionFailure::None;
            invariants = invariants && perturbation_norm(r.instance, reqs[i].instance, norm) <= cfg.budget + 1e-9;
            invariants = invariants && std::all_of(r.instance.begin(), r.instance.end(),
                                                   [&](double v) { return v >= cfg.clamp_min && v <= cfg.clamp_max; });
            invariants = invariants && r.loss <= r.initial_loss;
            if (norm == AttackNorm::Linf && r.success) ++successes;
        }
    }
    const double rate = static_cast<double>(successes) / 200.0;
    return finish("A5", invariants && rate >= 0.95,
                  "Linf rho=0.3 K=40 success " + fmt("%.3f", rate) + " on 200 OOD; budget/clamp invariants " +
                      (invariants ? "hold" : "violated") + " (Linf and L2)",
                  timer, 60.0);
}

// --- A6 ----------------------------------------------------------------------

CriterionResult reduction_identities() {
    Timer timer;
    std::vector<std::string> failures;
    auto trace_hooks = [](std::vector<std::vector<double>>& trace) {
        RunHooks hooks;
        hooks.on_epoch = [&trace](std::size_t, const ModelParams& p) { trace.push_back(p.flat()); };
        return hooks;
    };

    // (i) InsCorr with T_c = T_max is plain selection training.
    {
        ExperimentConfig cfg = small_config(61);
        cfg.warmup_epochs = cfg.epochs;
        const auto data = build_experiment_data(cfg);
        std::vector<std::vector<double>> a, b;
        const auto ra = run_inscorr(cfg, data, trace_hooks(a));
        const auto rb = run_algorithm1(cfg, data, trace_hooks(b));
        if (!same_trace(a, b) || ra.metrics != rb.metrics) failures.push_back("T_c=T_max differs from run_algorithm1");
    }

    // (ii) lambda = 1: InsCorr, Mix and clean-partition training coincide.
    {
        ExperimentConfig cfg = small_config(62);
        cfg.lambda = 1.0;
        const auto data = build_experiment_data(cfg);
        std::vector<std::vector<double>> ins, mix;
        cfg.method = Method::InsCorr;
        const auto ri = run_inscorr(cfg, data, trace_hooks(ins));
        cfg.method = Method::Mix;
        run_mix(cfg, data, trace_hooks(mix));

        // reference: warmup, then plain mean-CE steps on the clean rows only
        ExperimentConfig warm = cfg;
        warm.epochs = cfg.warmup_epochs;
        std::vector<std::vector<double>> ref;
        auto w = run_algorithm1(warm, data, trace_hooks(ref));
        ModelParams params = w.params;
        Optimizer opt(cfg.optimizer);
        opt.adam() = w.optimizer_state;
        const auto part = partition_clean_mislabeled(params, data.train, cfg.partition_rule);
        if (part.mislabeled.empty()) failures.push_back("lambda=1 fixture has no mislabeled rows");
        if (part.clean.size() + part.mislabeled.size() != data.train.size()) failures.push_back("partition sizes");
        for (std::size_t t = cfg.warmup_epochs; t < cfg.epochs; ++t) {
            const auto plan = mixed_epoch_plan(part.clean.size(), part.mislabeled.size(), cfg.batch_size,
                                               mixed_epoch_seed(cfg, t));
            for (const auto& step : plan) {
                if (step.clean.empty()) continue;
                std::vector<std::size_t> rows;
                for (auto i : step.clean) rows.push_back(part.clean[i]);
                params.zero_grad();
                mean(softmax_cross_entropy(forward(params, data.train.instances(rows)), data.train.given_labels(rows)))
                    .backward();
                opt.step(params);
            }
            ref.push_back(params.flat());
        }
        if (!same_trace(ins, mix)) failures.push_back("lambda=1 InsCorr and Mix differ");
        if (!same_trace(ins, ref)) failures.push_back("lambda=1 InsCorr differs from clean-partition training");
        if (ri.corrections.empty()) failures.push_back("lambda=1 InsCorr ran no correction");
    }

    // (iii) mixed_loss is affine in lambda on fixed batches.
    double worst = 0.0;
    {
        const ExperimentConfig cfg = small_config(63);
        const auto data = build_experiment_data(cfg);
        const ModelParams params = init_model(cfg.model_spec(), 64);
        const std::vector<std::size_t> ra{0, 3, 5, 7, 9}, rb{1, 2, 4, 11};
        const LabeledBatch clean{data.train.instances(ra), data.train.given_labels(ra)};
        const LabeledBatch corr{data.train.instances(rb), data.train.given_labels(rb)};
        const double lc = mixed_loss(params, clean, corr, 1.0).item();
        const double lp = mixed_loss(params, clean, corr, 0.0).item();
        if (lc != mean_ce(params, clean.x, clean.labels) || lp != mean_ce(params, corr.x, corr.labels))
            failures.push_back("lambda in {0,1} does not reduce to a single term");
        for (double lam : {0.2, 0.5, 0.9}) {
            const double l = mixed_loss(params, clean, corr, lam).item();
            worst = std::max(worst, std::abs(l - (lam * (lc - lp) + lp)));
        }
        if (!(worst <= 1e-12)) failures.push_back("affinity error " + fmt("%.2e", worst));
    }

    std::string detail = failures.empty() ? "T_c=T_max, lambda=1 (InsCorr/Mix/clean-only) trajectories identical; "
                                            "affinity err " + fmt("%.1e", worst)
                                          : "";
    for (const auto& f : failures) detail += f + "; ";
    return finish("A6", failures.empty(), detail, timer, 120.0);
}

// --- A7 ----------------------------------------------------------------------

CriterionResult noise_invariants() {
    Timer timer;
    const ImageShape shape{16, 16};
    const Dataset clean = generate_synthetic(4, 25, shape, 71);
    const Dataset ood = generate_ood_source(shape, clean.size(), 72, 4);
    std::vector<std::string> failures;
    std::size_t cases = 0;

    for (auto kind : {NoiseKind::TypeI, NoiseKind::Gaussian, NoiseKind::Occlusion, NoiseKind::Resolution,
                      NoiseKind::Fog, NoiseKind::MotionBlur}) {
        for (double tau : {0.0, 0.2, 0.8}) {
            NoiseSpec spec;
            spec.kind = kind;
            spec.rate = tau;
            spec.seed = 73;
            const Dataset noisy = inject_noise(clean, spec, &ood);
            ++cases;
            const std::string tag = std::string(noise_kind_name(kind)) + " tau=" + fmt("%.1f", tau);
            if (noisy.label_histogram() != clean.label_histogram()) failures.push_back(tag + " label multiset");
            std::size_t changed = 0;
            bool in_range = true;
            for (std::size_t i = 0; i < noisy.size(); ++i) {
                const auto& ex = noisy.examples[i];
                changed += ex.provenance != Provenance::Clean ? 1 : 0;
                if (ex.given_label != clean.examples[i].given_label) failures.push_back(tag + " label moved");
                for (double v : ex.instance) in_range = in_range && v >= 0.0 && v <= 1.0;
            }
            const auto want = static_cast<std::size_t>(std::floor(tau * static_cast<double>(clean.size()) + 0.5));
            if (changed != want) failures.push_back(tag + " count " + std::to_string(changed));
            if (!in_range) failures.push_back(tag + " out of [0,1]");
        }
    }

    // degenerate parameters are identities on the selected rows
    struct Degenerate {
        NoiseKind kind;
        CorruptionParams params;
        const char* name;
    };
    CorruptionParams sigma0, len1, fog0;
    sigma0.gaussian_sigma = 0.0;
    len1.blur_length = 1;
    fog0.fog_intensity = 0.0;
    for (const auto& d : {Degenerate{NoiseKind::Gaussian, sigma0, "sigma=0"},
                          Degenerate{NoiseKind::MotionBlur, len1, "blur length 1"},
                          Degenerate{NoiseKind::Fog, fog0, "fog intensity 0"}}) {
        NoiseSpec spec{d.kind, 0.8, 74, d.params};
        const Dataset out = inject_type2(clean, spec);
        ++cases;
        std::size_t touched = 0;
        for (std::size_t i = 0; i < out.size(); ++i) {
            if (out.examples[i].provenance != Provenance::Corrupted) continue;
            ++touched;
            if (out.examples[i].instance != clean.examples[i].instance) {
                failures.push_back(std::string(d.name) + " changed an instance");
                break;
            }
        }
        if (touched != 80) failures.push_back(std::string(d.name) + " touched " + std::to_string(touched));
    }

    std::string detail = std::to_string(cases) + " cases";
    for (const auto& f : failures) detail += "; " + f;
    return finish("A7", failures.empty(), detail, timer, 10.0);
}

// --- A8 ----------------------------------------------------------------------

CriterionResult memorization_proxy() {
    Timer timer;
    double total = 0.0;
    std::string per_seed;
    const std::uint64_t seeds[] = {1, 2, 3};
    for (auto s : seeds) {
        ExperimentConfig cfg;
        cfg.method = Method::SelectionOnly;
        cfg.seeds = Seeds::all(s);
        cfg.noise.kind = NoiseKind::TypeI;
        cfg.noise.rate = 0.4;
        cfg.schedule.tau = 0.4;
        cfg.epochs = cfg.schedule.ramp_epochs + 1;
        cfg.warmup_epochs = cfg.epochs;
        const auto r = run_experiment(cfg);
        const double p = r.metrics.at(cfg.schedule.ramp_epochs).selection_precision.value_or(0.0);
        total += p;
        per_seed += (per_seed.empty() ? "" : ", ") + fmt("%.3f", p);
    }
    const double avg = total / 3.0;
    return finish("A8", avg >= 0.9 && avg > 0.6,
                  "precision at epoch T_k " + fmt("%.4f", avg) + " (seeds: " + per_seed + "), base rate 0.6", timer,
                  300.0);
}

// --- A9 ----------------------------------------------------------------------

CriterionResult reproducibility(const std::filesystem::path& scratch) {
    Timer timer;
    ExperimentConfig cfg = small_config(91);
    cfg.epochs = 12;
    cfg.warmup_epochs = 6;
    std::filesystem::remove_all(scratch);
    const auto a = run_and_record(cfg, scratch / "first");
    const auto b = run_and_record(cfg, scratch / "second");
    bool ok = a.hash == b.hash;
    for (const char* f : {"metrics.jsonl", "metrics.csv", "checkpoint.bin"}) {
        const auto x = slurp(a.dir / f), y = slurp(b.dir / f);
        ok = ok && !x.empty() && x == y;
    }
    std::filesystem::remove_all(scratch);
    return finish("A9", ok, "config " + a.hash + ": metrics.jsonl, metrics.csv and checkpoint byte-identical across two runs",
                  timer, 0.0);
}

std::vector<CriterionResult> run(const Options& opts) {
    auto wanted = [&](const std::string& id) {
        return opts.only.empty() || std::find(opts.only.begin(), opts.only.end(), id) != opts.only.end();
    };
    std::vector<CriterionResult> out;
    auto go = [&](const char* id, const std::function<CriterionResult()>& fn) {
        if (!wanted(id)) return;
        CriterionResult r;
        Timer t;
        try {
            r = fn();
        } catch (const std::exception& e) {
            r = {id, false, std::string("threw: ") + e.what(), t.seconds()};
        }
        if (opts.on_result) opts.on_result(r);
        out.push_back(std::move(r));
    };
    go("A1", gradient_correctness);
    go("A2", schedule_exactness);
    go("A3", selection_oracle);
    go("A4", qualitative_ordering);
    go("A5", attack_efficacy);
    go("A6", reduction_identities);
    go("A7", noise_invariants);
    go("A8", memorization_proxy);
    go("A9", [&] { return reproducibility(opts.scratch); });
    return out;
}

std::string format_line(const CriterionResult& r) {
    return std::string(r.passed ? "PASS " : "FAIL ") + r.id + " (" + fmt("%.1f", r.seconds) + "s) " + r.detail;
}

}  // namespace inscorr::acceptance
