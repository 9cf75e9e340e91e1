#include <cstdlib>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "inscorr/errors.hpp"
#include "inscorr/runner.hpp"

using namespace inscorr;
using inscorr::testing::TempDir;

namespace {

ExperimentConfig tiny() {
    ExperimentConfig c;
    c.data.classes = 2;
    c.data.per_class = 20;
    c.data.test_per_class = 5;
    c.data.image = ImageShape{6, 6};
    c.hidden_widths = {8};
    c.epochs = 10;
    c.warmup_epochs = 6;
    c.batch_size = 16;
    c.schedule = SelectionSchedule{0.2, 3};
    c.noise.rate = 0.2;
    c.attack.steps = 2;
    c.seeds = Seeds::all(1);
    return c;
}

std::vector<std::string> lines_of(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string l; std::getline(ss, l);) out.push_back(l);
    return out;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST(Metrics, JsonlHasEpochRecordsThenSummary) {
    std::vector<EpochMetrics> m(12);
    for (std::size_t i = 0; i < 12; ++i) {
        m[i].epoch = i;
        m[i].test_accuracy = 0.5;
    }
    m[11].attack_success = 0.9;
    const auto lines = lines_of(metrics_jsonl("abc", m));
    ASSERT_EQ(lines.size(), 13u);
    const auto first = nlohmann::json::parse(lines[0]);
    EXPECT_EQ(first["record"], "epoch");
    EXPECT_EQ(first["config_hash"], "abc");
    EXPECT_TRUE(first["attack_success"].is_null());
    EXPECT_DOUBLE_EQ(nlohmann::json::parse(lines[11])["attack_success"].get<double>(), 0.9);
    const auto last = nlohmann::json::parse(lines.back());
    EXPECT_EQ(last["record"], "summary");
    EXPECT_EQ(last["epochs"], 12);
    EXPECT_DOUBLE_EQ(last["last_ten_mean"].get<double>(), 0.5);
    EXPECT_DOUBLE_EQ(last["last_ten_std"].get<double>(), 0.0);
}

TEST(Metrics, ShortRunsHaveNullSummary) {
    std::vector<EpochMetrics> m(3);
    const auto last = nlohmann::json::parse(lines_of(metrics_jsonl("h", m)).back());
    EXPECT_TRUE(last["last_ten_mean"].is_null());
}

TEST(Metrics, CsvMirrorsJsonl) {
    std::vector<EpochMetrics> m(10);
    for (std::size_t i = 0; i < 10; ++i) m[i].epoch = i;
    const auto lines = lines_of(metrics_csv("h", m));
    ASSERT_EQ(lines.size(), 12u);
    EXPECT_EQ(lines[0],
              "record,config_hash,epoch,train_loss,val_accuracy,test_accuracy,selection_precision,attack_success,"
              "keep_fraction,last_ten_mean,last_ten_std");
    EXPECT_EQ(lines[1].rfind("epoch,h,0,", 0), 0u);
    EXPECT_EQ(lines.back().rfind("summary,h,", 0), 0u);
}

TEST(OutputRoot, EnvironmentOverride) {
    ::setenv(kOutputRootEnv, "/tmp/somewhere", 1);
    EXPECT_EQ(default_output_root(), std::filesystem::path("/tmp/somewhere"));
    ::unsetenv(kOutputRootEnv);
    EXPECT_EQ(default_output_root(), std::filesystem::path("runs"));
}

TEST(RunAndRecord, WritesHashedDirectory) {
    TempDir dir("record");
    const auto cfg = tiny();
    const auto rec = run_and_record(cfg, dir.path());
    EXPECT_EQ(rec.hash, config_hash(cfg));
    EXPECT_EQ(rec.dir, dir.path() / rec.hash);
    for (const char* f : {"config.json", "metrics.jsonl", "metrics.csv", "checkpoint.bin", "manifest.json"})
        EXPECT_TRUE(std::filesystem::exists(rec.dir / f)) << f;
    EXPECT_EQ(config_from_json(nlohmann::json::parse(slurp(rec.dir / "config.json"))), cfg);
    const auto ck = load_checkpoint(rec.dir / "checkpoint.bin");
    EXPECT_EQ(ck.params.flat(), rec.result.params.flat());
    const auto manifest = nlohmann::json::parse(slurp(rec.dir / "manifest.json"));
    EXPECT_EQ(manifest["config_hash"], rec.hash);
    EXPECT_TRUE(rec.summary.has_value());
}

TEST(Campaign, OneCellPerMethodAndTable) {
    const auto base = tiny();
    CampaignGrid grid{{NoiseKind::TypeI}, {0.2}, {1}, {Method::SelectionOnly, Method::InsCorr}};
    const auto cells = run_campaign(base, grid);
    ASSERT_EQ(cells.size(), 2u);
    for (const auto& c : cells) {
        EXPECT_TRUE(c.failures.empty());
        ASSERT_EQ(c.run_means.size(), 1u);
        ASSERT_TRUE(c.summary.has_value());
        EXPECT_DOUBLE_EQ(c.summary->mean, c.run_means[0]);
    }
    const auto lines = lines_of(campaign_table_csv(cells));
    ASSERT_EQ(lines.size(), 3u);
    EXPECT_EQ(lines[0], "noise,rate,method,mean,std,runs,failures");
    // workers do not change results
    CampaignOptions two;
    two.workers = 2;
    const auto again = run_campaign(base, grid, two);
    for (std::size_t i = 0; i < cells.size(); ++i) EXPECT_EQ(again[i].run_means, cells[i].run_means);
}

TEST(Campaign, FailuresAreRecordedNotThrown) {
    auto base = tiny();
    base.epochs = 8;  // no last-ten summary possible
    base.warmup_epochs = 4;
    CampaignGrid grid{{NoiseKind::TypeI}, {0.2}, {1}, {Method::SelectionOnly}};
    const auto cells = run_campaign(base, grid);
    ASSERT_EQ(cells.size(), 1u);
    EXPECT_EQ(cells[0].failures.size(), 1u);
    EXPECT_FALSE(cells[0].summary.has_value());
}

TEST(Ablation, RowsSortedByLambda) {
    auto base = tiny();
    base.method = Method::Mix;
    const std::vector<std::uint64_t> seeds{1};
    const auto rows = run_ablation(base, {0.3, 0.1}, seeds);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_DOUBLE_EQ(rows[0].lambda, 0.1);
    EXPECT_DOUBLE_EQ(rows[1].lambda, 0.3);
    const auto lines = lines_of(ablation_csv(rows));
    EXPECT_EQ(lines[0], "lambda,mean_acc,std_acc");
    EXPECT_EQ(lines.size(), 3u);
}

TEST(MakeData, WritesAllSplits) {
    TempDir dir("mkdata");
    const auto files = write_experiment_data(tiny(), dir.path());
    EXPECT_EQ(files.written.size(), 6u);
    const auto train = load_dataset(dir / "train.osnd");
    EXPECT_EQ(train, build_experiment_data(tiny()).train);
}
