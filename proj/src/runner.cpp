#include "inscorr/runner.hpp"

#include <zlib.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iterator>
#include <mutex>
#include <sstream>
#include <thread>

#include "inscorr/errors.hpp"

namespace inscorr {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

fs::path default_output_root() {
    if (const char* env = std::getenv(kOutputRootEnv); env && *env) return fs::path(env);
    return fs::path("runs");
}

namespace {

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

ojson opt_json(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

std::optional<Summary> maybe_summary(std::span<const EpochMetrics> metrics) {
    if (metrics.size() < 10) return std::nullopt;
    return last_ten_summary(metrics);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw Error("write failed: " + path.string());
}

std::string hex32(std::uint32_t v) {
    char buf[9];
    std::snprintf(buf, sizeof buf, "%08x", v);
    return buf;
}

// Runs `count` jobs on up to `workers` threads. Jobs must not share state.
void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& job) {
    workers = std::max<std::size_t>(1, std::min(workers, count));
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) job(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) job(i);
        });
    for (auto& t : pool) t.join();
}

struct SeedOutcome {
    std::optional<double> mean;
    std::string error;
};

SeedOutcome run_one(const ExperimentConfig& cfg, const CampaignOptions& opts) {
    SeedOutcome out;
    try {
        std::optional<Summary> s;
        if (opts.output_root) {
            s = run_and_record(cfg, *opts.output_root).summary;
        } else {
            const auto r = run_experiment(cfg);
            s = maybe_summary(r.metrics);
        }
        if (!s) throw ContractError("run has fewer than 10 epochs; no last-ten summary");
        out.mean = s->mean;
    } catch (const std::exception& e) {
        out.error = e.what();
    }
    return out;
}

}  // namespace

std::string metrics_jsonl(const std::string& hash, std::span<const EpochMetrics> metrics) {
    std::string out;
    for (const auto& m : metrics) {
        ojson rec;
        rec["record"] = "epoch";
        rec["config_hash"] = hash;
        rec["epoch"] = m.epoch;
        rec["train_loss"] = m.train_loss;
        rec["val_accuracy"] = m.val_accuracy;
        rec["test_accuracy"] = m.test_accuracy;
        rec["selection_precision"] = opt_json(m.selection_precision);
        rec["attack_success"] = opt_json(m.attack_success);
        rec["keep_fraction"] = m.keep_fraction;
        out += rec.dump() + "\n";
    }
    ojson fin;
    fin["record"] = "summary";
    fin["config_hash"] = hash;
    fin["epochs"] = metrics.size();
    const auto s = maybe_summary(metrics);
    fin["last_ten_mean"] = s ? ojson(s->mean) : ojson(nullptr);
    fin["last_ten_std"] = s ? ojson(s->std) : ojson(nullptr);
    fin["final_test_accuracy"] = metrics.empty() ? ojson(nullptr) : ojson(metrics.back().test_accuracy);
    out += fin.dump() + "\n";
    return out;
}

std::string metrics_csv(const std::string& hash, std::span<const EpochMetrics> metrics) {
    std::string out =
        "record,config_hash,epoch,train_loss,val_accuracy,test_accuracy,selection_precision,attack_success,"
        "keep_fraction,last_ten_mean,last_ten_std\n";
    for (const auto& m : metrics) {
        out += "epoch," + hash + "," + std::to_string(m.epoch) + "," + num(m.train_loss) + "," + num(m.val_accuracy) +
               "," + num(m.test_accuracy) + "," + opt_num(m.selection_precision) + "," + opt_num(m.attack_success) +
               "," + num(m.keep_fraction) + ",,\n";
    }
    const auto s = maybe_summary(metrics);
    out += "summary," + hash + "," + std::to_string(metrics.size()) + ",,,,,,," + (s ? num(s->mean) : "") + "," +
           (s ? num(s->std) : "") + "\n";
    return out;
}

std::uint32_t file_crc32(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::vector<char> buf(1 << 16);
    uLong crc = ::crc32(0L, Z_NULL, 0);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        const auto got = in.gcount();
        if (got > 0) crc = ::crc32(crc, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(got));
    }
    return static_cast<std::uint32_t>(crc);
}

RunRecord run_and_record(const ExperimentConfig& cfg, const fs::path& root) {
    cfg.validate();
    RunRecord rec;
    rec.hash = config_hash(cfg);
    rec.dir = root / rec.hash;
    fs::create_directories(rec.dir);

    const auto t0 = std::chrono::steady_clock::now();
    rec.result = run_experiment(cfg);
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rec.summary = maybe_summary(rec.result.metrics);

    const std::vector<std::pair<std::string, fs::path>> files{
        {"config", rec.dir / "config.json"},
        {"metrics_jsonl", rec.dir / "metrics.jsonl"},
        {"metrics_csv", rec.dir / "metrics.csv"},
        {"checkpoint", rec.dir / "checkpoint.bin"},
    };
    write_text(files[0].second, to_json(cfg).dump(2) + "\n");
    write_text(files[1].second, metrics_jsonl(rec.hash, rec.result.metrics));
    write_text(files[2].second, metrics_csv(rec.hash, rec.result.metrics));
    Checkpoint ckpt{rec.result.params, rec.result.optimizer_state, rec.result.metrics.size(), cfg.seeds.epochs};
    save_checkpoint(ckpt, files[3].second);

    ojson manifest;
    manifest["config_hash"] = rec.hash;
    manifest["config"] = to_json(cfg);
    ojson outputs, sums;
    for (const auto& [name, path] : files) {
        outputs[name] = path.filename().string();
        sums[name] = "crc32:" + hex32(file_crc32(path));
    }
    manifest["outputs"] = outputs;
    manifest["checksums"] = sums;
    manifest["wall_seconds"] = rec.wall_seconds;
    manifest["optimizer_steps"] = rec.result.optimizer_steps;
    write_text(rec.dir / "manifest.json", manifest.dump(2) + "\n");
    return rec;
}

std::vector<CampaignCell> run_campaign(const ExperimentConfig& base, const CampaignGrid& grid,
                                       const CampaignOptions& opts) {
    if (grid.kinds.empty() || grid.rates.empty() || grid.seeds.empty() || grid.methods.empty())
        throw ContractError("campaign grid has an empty axis");

    std::vector<CampaignCell> cells;
    for (auto kind : grid.kinds)
        for (double rate : grid.rates)
            for (auto method : grid.methods) cells.push_back({kind, rate, method, {}, {}, {}});

    const std::size_t per_cell = grid.seeds.size();
    std::vector<SeedOutcome> outcomes(cells.size() * per_cell);
    parallel_for(outcomes.size(), opts.workers, [&](std::size_t job) {
        const auto& cell = cells[job / per_cell];
        ExperimentConfig cfg = base;
        cfg.method = cell.method;
        cfg.noise.kind = cell.kind;
        cfg.noise.rate = cell.rate;
        cfg.schedule.tau = cell.rate;
        cfg.seeds = Seeds::all(grid.seeds[job % per_cell]);
        outcomes[job] = run_one(cfg, opts);
    });

    for (std::size_t c = 0; c < cells.size(); ++c) {
        for (std::size_t s = 0; s < per_cell; ++s) {
            const auto& o = outcomes[c * per_cell + s];
            if (o.mean)
                cells[c].run_means.push_back(*o.mean);
            else
                cells[c].failures.push_back("seed " + std::to_string(grid.seeds[s]) + ": " + o.error);
        }
        if (!cells[c].run_means.empty()) cells[c].summary = mean_std(cells[c].run_means);
    }
    return cells;
}

std::string campaign_table_csv(std::span<const CampaignCell> cells) {
    std::string out = "noise,rate,method,mean,std,runs,failures\n";
    for (const auto& c : cells) {
        out += std::string(noise_kind_name(c.kind)) + "," + num(c.rate) + "," + method_name(c.method) + "," +
               (c.summary ? num(c.summary->mean) : "") + "," + (c.summary ? num(c.summary->std) : "") + "," +
               std::to_string(c.run_means.size()) + "," + std::to_string(c.failures.size()) + "\n";
    }
    return out;
}

std::vector<AblationRow> run_ablation(const ExperimentConfig& base, std::vector<double> lambdas,
                                      std::span<const std::uint64_t> seeds, const CampaignOptions& opts) {
    if (lambdas.empty()) throw ContractError("ablation needs at least one lambda");
    if (seeds.empty()) throw ContractError("ablation needs at least one seed");
    for (double l : lambdas)
        if (!(l >= 0.0 && l <= 1.0)) throw ConfigError("lambda", "ablation lambda " + num(l) + " outside [0,1]");
    std::sort(lambdas.begin(), lambdas.end());

    const std::size_t per = seeds.size();
    std::vector<SeedOutcome> outcomes(lambdas.size() * per);
    parallel_for(outcomes.size(), opts.workers, [&](std::size_t job) {
        ExperimentConfig cfg = base;
        cfg.lambda = lambdas[job / per];
        cfg.seeds = Seeds::all(seeds[job % per]);
        outcomes[job] = run_one(cfg, opts);
    });

    std::vector<AblationRow> rows;
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
        AblationRow row;
        row.lambda = lambdas[i];
        std::vector<double> means;
        for (std::size_t s = 0; s < per; ++s) {
            const auto& o = outcomes[i * per + s];
            if (o.mean)
                means.push_back(*o.mean);
            else
                ++row.failures;
        }
        if (means.empty()) throw Error("every run failed for lambda " + num(lambdas[i]) + ": " + outcomes[i * per].error);
        const auto s = mean_std(means);
        row.mean_acc = s.mean;
        row.std_acc = s.std;
        rows.push_back(row);
    }
    return rows;
}

std::string ablation_csv(std::span<const AblationRow> rows) {
    std::string out = "lambda,mean_acc,std_acc\n";
    for (const auto& r : rows) out += num(r.lambda) + "," + num(r.mean_acc) + "," + num(r.std_acc) + "\n";
    return out;
}

DataFiles write_experiment_data(const ExperimentConfig& cfg, const fs::path& dir) {
    const auto data = build_experiment_data(cfg);
    fs::create_directories(dir);
    DataFiles files;
    const std::pair<const char*, const Dataset*> parts[] = {
        {"train", &data.train}, {"validation", &data.validation}, {"test", &data.test}};
    for (const auto& [name, ds] : parts) {
        const auto bin = dir / (std::string(name) + ".osnd");
        const auto csv = dir / (std::string(name) + ".csv");
        save_dataset(*ds, bin);
        export_csv(*ds, csv);
        files.written.push_back(bin);
        files.written.push_back(csv);
    }
    return files;
}

}  // namespace inscorr
