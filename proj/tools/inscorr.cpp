// Command-line front end: run, campaign, ablate, make-data, verify.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "inscorr/acceptance.hpp"
#include "inscorr/config.hpp"
#include "inscorr/errors.hpp"
#include "inscorr/runner.hpp"

namespace fs = std::filesystem;
using namespace inscorr;

namespace {

// Config sources shared by every verb. Aliases are turned into dotted
// overrides and applied before --set, so --set has the last word.
struct ConfigFlags {
    std::string file;
    std::vector<std::string> sets;
    std::map<std::string, std::string> aliases;  // dotted key -> raw value
    std::string tau;
    std::string seed;
    std::string output_root;

    void attach(CLI::App* app) {
        app->add_option("-c,--config", file, "JSON config file (comments allowed)")->check(CLI::ExistingFile);
        app->add_option("--set", sets, "Override any config key, e.g. --set attack.budget=0.05")->take_all();
        const std::pair<const char*, const char*> keys[] = {
            {"method", "method"},
            {"lambda", "lambda"},
            {"lambda-semantics", "lambda_semantics"},
            {"warmup-epochs", "warmup_epochs"},
            {"epochs", "epochs"},
            {"batch-size", "batch_size"},
            {"refresh-correction", "refresh_correction"},
            {"partition-rule", "partition_rule"},
            {"noise", "noise.kind"},
            {"budget", "attack.budget"},
            {"attack-steps", "attack.steps"},
            {"attack-norm", "attack.norm"},
            {"attack-loss", "attack.loss"},
            {"lr", "optimizer.lr"},
            {"ramp-epochs", "schedule.ramp_epochs"},
            {"classes", "data.classes"},
            {"per-class", "data.per_class"},
        };
        for (const auto& [flag, key] : keys)
            app->add_option(std::string("--") + flag, aliases[key], std::string("Config key ") + key);
        app->add_option("--tau", tau, "Noise rate; sets noise.rate and schedule.tau");
        app->add_option("--seed", seed, "Sets all four seeds (data, noise, init, epochs)");
        app->add_option("--output-root", output_root,
                        std::string("Directory for run outputs (default $") + kOutputRootEnv + " or ./runs)");
    }

    ExperimentConfig resolve() const {
        std::vector<std::string> overrides;
        for (const auto& [key, value] : aliases)
            if (!value.empty()) overrides.push_back(key + "=" + value);
        if (!tau.empty()) {
            overrides.push_back("noise.rate=" + tau);
            overrides.push_back("schedule.tau=" + tau);
        }
        if (!seed.empty())
            for (const char* k : {"data", "noise", "init", "epochs"}) overrides.push_back(std::string("seeds.") + k + "=" + seed);
        overrides.insert(overrides.end(), sets.begin(), sets.end());
        auto cfg = parse_config(file, overrides);
        cfg.validate();
        return cfg;
    }

    fs::path root() const { return output_root.empty() ? default_output_root() : fs::path(output_root); }
};

template <class T, class Parse>
std::vector<T> parse_list(const std::vector<std::string>& items, const char* what, Parse parse) {
    std::vector<T> out;
    for (const auto& s : items) {
        auto v = parse(s);
        if (!v) throw ConfigError(what, "unknown value '" + s + "'");
        out.push_back(*v);
    }
    return out;
}

std::optional<Method> parse_method(const std::string& s) {
    for (auto m : {Method::SelectionOnly, Method::Mix, Method::InsCorr})
        if (s == method_name(m)) return m;
    return std::nullopt;
}

void write_file(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw Error("cannot write " + p.string());
}

int cmd_run(const ConfigFlags& flags, bool dry_run) {
    const auto cfg = flags.resolve();
    if (dry_run) {
        std::cout << to_json(cfg).dump(2) << "\n" << "config_hash " << config_hash(cfg) << "\n";
        return 0;
    }
    const auto rec = run_and_record(cfg, flags.root());
    std::cout << "run " << rec.hash << " -> " << rec.dir.string() << "\n";
    if (rec.summary)
        std::printf("last-ten test accuracy %.4f +- %.4f (%.1fs)\n", rec.summary->mean, rec.summary->std, rec.wall_seconds);
    else
        std::printf("final test accuracy %.4f (%.1fs)\n", rec.result.metrics.back().test_accuracy, rec.wall_seconds);
    return 0;
}

int cmd_campaign(const ConfigFlags& flags, const std::vector<std::string>& kinds, const std::vector<double>& rates,
                 const std::vector<std::uint64_t>& seeds, const std::vector<std::string>& methods,
                 std::size_t workers, const std::string& out) {
    const auto base = flags.resolve();
    CampaignGrid grid;
    grid.kinds = parse_list<NoiseKind>(kinds, "kinds", parse_noise_kind);
    grid.rates = rates;
    grid.seeds = seeds;
    grid.methods = parse_list<Method>(methods, "methods", parse_method);
    CampaignOptions opts;
    opts.workers = workers;
    opts.output_root = flags.root();
    const auto cells = run_campaign(base, grid, opts);
    const auto table = campaign_table_csv(cells);
    const fs::path path = out.empty() ? flags.root() / ("campaign-" + config_hash(base) + ".csv") : fs::path(out);
    write_file(path, table);
    std::cout << table << "table -> " << path.string() << "\n";
    bool failed = false;
    for (const auto& c : cells)
        for (const auto& f : c.failures) {
            failed = true;
            std::cerr << noise_kind_name(c.kind) << " rate " << c.rate << " " << method_name(c.method) << ": " << f << "\n";
        }
    return failed ? 1 : 0;
}

int cmd_ablate(const ConfigFlags& flags, std::vector<double> lambdas, const std::vector<std::uint64_t>& seeds,
               std::size_t workers, const std::string& out) {
    const auto base = flags.resolve();
    if (lambdas.empty()) lambdas = kAblationLambdas;
    CampaignOptions opts;
    opts.workers = workers;
    opts.output_root = flags.root();
    const auto rows = run_ablation(base, lambdas, seeds, opts);
    const auto csv = ablation_csv(rows);
    const std::string semantics = to_json(base)["lambda_semantics"];
    const fs::path path =
        out.empty() ? flags.root() / ("ablation-" + config_hash(base)) / "ablation.csv" : fs::path(out);
    write_file(path, csv);
    nlohmann::ordered_json meta;
    meta["method"] = method_name(base.method);
    meta["lambda_semantics"] = semantics;
    meta["seeds"] = seeds;
    meta["base_config_hash"] = config_hash(base);
    write_file(fs::path(path).replace_extension(".json"), meta.dump(2) + "\n");
    std::cout << "lambda semantics: " << semantics << "\n" << csv << "curve -> " << path.string() << "\n";
    std::size_t failures = 0;
    for (const auto& r : rows) failures += r.failures;
    return failures ? 1 : 0;
}

int cmd_make_data(const ConfigFlags& flags, const std::string& out) {
    const auto cfg = flags.resolve();
    const fs::path dir = out.empty() ? flags.root() / ("data-" + config_hash(cfg)) : fs::path(out);
    const auto files = write_experiment_data(cfg, dir);
    for (const auto& f : files.written) std::cout << f.string() << "\n";
    return 0;
}

int cmd_verify(const std::vector<std::string>& only, const std::string& scratch) {
    acceptance::Options opts;
    opts.only = only;
    if (!scratch.empty()) opts.scratch = scratch;
    opts.on_result = [](const acceptance::CriterionResult& r) { std::cout << acceptance::format_line(r) << std::endl; };
    const auto results = acceptance::run(opts);
    std::size_t passed = 0;
    for (const auto& r : results) passed += r.passed ? 1 : 0;
    std::cout << passed << "/" << results.size() << " criteria passed\n";
    return passed == results.size() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Open-set noisy label experiments: sample selection, instance correction, mixed retraining"};
    app.require_subcommand(1);

    ConfigFlags run_flags, camp_flags, abl_flags, data_flags;

    auto* run = app.add_subcommand("run", "Run one experiment into <output-root>/<config-hash>/");
    run_flags.attach(run);
    bool dry_run = false;
    run->add_flag("--dry-run", dry_run, "Print the resolved config and its hash, then exit");

    auto* camp = app.add_subcommand("campaign", "Grid of noise kinds x rates x seeds x methods");
    camp_flags.attach(camp);
    std::vector<std::string> kinds{"type1"}, methods{"selection_only", "mix", "inscorr"};
    std::vector<double> rates{0.4};
    std::vector<std::uint64_t> camp_seeds{1, 2, 3, 4, 5};
    std::size_t camp_workers = 1;
    std::string camp_out;
    camp->add_option("--kinds", kinds, "Noise kinds")->delimiter(',');
    camp->add_option("--rates", rates, "Noise rates")->delimiter(',');
    camp->add_option("--seeds", camp_seeds, "Seeds")->delimiter(',');
    camp->add_option("--methods", methods, "Methods")->delimiter(',');
    camp->add_option("--workers", camp_workers, "Parallel runs")->check(CLI::PositiveNumber);
    camp->add_option("--out", camp_out, "Summary table path");

    auto* abl = app.add_subcommand("ablate", "Lambda sweep, written as lambda,mean_acc,std_acc");
    abl_flags.attach(abl);
    std::vector<double> lambdas;
    std::vector<std::uint64_t> abl_seeds{1, 2, 3, 4, 5};
    std::size_t abl_workers = 1;
    std::string abl_out;
    abl->add_option("--lambdas", lambdas, "Lambda values (default 0.05..0.30 step 0.05)")->delimiter(',');
    abl->add_option("--seeds", abl_seeds, "Seeds")->delimiter(',');
    abl->add_option("--workers", abl_workers, "Parallel runs")->check(CLI::PositiveNumber);
    abl->add_option("--out", abl_out, "CSV path");

    auto* mk = app.add_subcommand("make-data", "Write train/validation/test datasets (.osnd and .csv)");
    data_flags.attach(mk);
    std::string data_out;
    mk->add_option("--out", data_out, "Output directory");

    auto* ver = app.add_subcommand("verify", "Run the acceptance suite");
    std::vector<std::string> only;
    std::string scratch;
    ver->add_option("--only", only, "Criteria to run, e.g. A1,A4")->delimiter(',');
    ver->add_option("--scratch", scratch, "Scratch directory for the reproducibility check");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return cmd_run(run_flags, dry_run);
        if (*camp) return cmd_campaign(camp_flags, kinds, rates, camp_seeds, methods, camp_workers, camp_out);
        if (*abl) return cmd_ablate(abl_flags, lambdas, abl_seeds, abl_workers, abl_out);
        if (*mk) return cmd_make_data(data_flags, data_out);
        if (*ver) return cmd_verify(only, scratch);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
