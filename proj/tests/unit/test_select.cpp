#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "inscorr/errors.hpp"
#include "inscorr/select.hpp"

using namespace inscorr;

TEST(Schedule, RampsLinearlyThenHolds) {
    const SelectionSchedule s{0.4, 10};
    EXPECT_DOUBLE_EQ(drop_rate(s, 0), 1.0);
    EXPECT_NEAR(drop_rate(s, 5), 0.8, 1e-12);
    EXPECT_NEAR(drop_rate(s, 10), 0.6, 1e-12);
    EXPECT_NEAR(drop_rate(s, 57), 0.6, 1e-12);
    EXPECT_DOUBLE_EQ(drop_rate(SelectionSchedule{0.0, 10}, 7), 1.0);
}

TEST(Schedule, Validation) {
    EXPECT_THROW((SelectionSchedule{1.0, 10}.validate()), ContractError);
    EXPECT_THROW((SelectionSchedule{-0.1, 10}.validate()), ContractError);
    EXPECT_THROW((SelectionSchedule{0.2, 0}.validate()), ContractError);
    EXPECT_NO_THROW((SelectionSchedule{0.0, 1}.validate()));
}

TEST(KeptCount, CeilWithFloorOfOne) {
    EXPECT_EQ(kept_count(0.7, 10), 7u);
    EXPECT_EQ(kept_count(0.6, 128), 77u);
    EXPECT_EQ(kept_count(0.01, 5), 1u);
    EXPECT_EQ(kept_count(1.0, 5), 5u);
    EXPECT_EQ(kept_count(0.5, 0), 0u);
}

TEST(SmallLoss, WorkedExample) {
    const std::vector<double> l{0.9, 0.1, 0.5, 0.3};
    const auto s = select_small_loss(l, 0.5);
    EXPECT_EQ(s.kept, (std::vector<std::size_t>{1, 3}));
    EXPECT_EQ(s.discarded, (std::vector<std::size_t>{0, 2}));
}

TEST(SmallLoss, TiesGoToLowerIndex) {
    const std::vector<double> l{0.2, 0.2, 0.2, 0.1};
    EXPECT_EQ(select_small_loss(l, 0.5).kept, (std::vector<std::size_t>{0, 3}));
}

TEST(SmallLoss, Errors) {
    EXPECT_THROW(select_small_loss(std::vector<double>{}, 0.5), ContractError);
    EXPECT_THROW(select_small_loss(std::vector<double>{1.0}, 0.0), ContractError);
    EXPECT_THROW(select_small_loss(std::vector<double>{1.0}, 1.5), ContractError);
    try {
        select_small_loss(std::vector<double>{1.0, std::numeric_limits<double>::quiet_NaN()}, 0.5);
        FAIL();
    } catch (const DataError& e) {
        EXPECT_EQ(e.index(), 1u);
    }
}

// Property: against a brute-force (loss, index) sort, for random sizes and
// keep fractions, with coarse losses so ties are common.
TEST(SmallLossProperty, MatchesSortOracle) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 1 + rng() % 64;
        std::vector<double> l(n);
        for (auto& v : l) v = static_cast<double>(rng() % 8) / 4.0;
        const std::size_t tenths = 1 + rng() % 10;
        const double keep = static_cast<double>(tenths) / 10.0;
        std::vector<std::pair<double, std::size_t>> pairs;
        for (std::size_t i = 0; i < n; ++i) pairs.emplace_back(l[i], i);
        std::sort(pairs.begin(), pairs.end());
        const std::size_t k = std::max<std::size_t>(1, (tenths * n + 9) / 10);  // integer ceil
        std::vector<std::size_t> expect;
        for (std::size_t i = 0; i < k; ++i) expect.push_back(pairs[i].second);
        std::sort(expect.begin(), expect.end());
        const auto s = select_small_loss(l, keep);
        ASSERT_EQ(s.kept, expect) << "n=" << n << " keep=" << keep;
        ASSERT_EQ(s.kept.size() + s.discarded.size(), n);
        std::vector<std::size_t> all(s.kept);
        all.insert(all.end(), s.discarded.begin(), s.discarded.end());
        std::sort(all.begin(), all.end());
        for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(all[i], i);
    }
}

TEST(SelfTeach, KeepsScheduledCountPerBatch) {
    const auto clean = generate_synthetic(2, 50, ImageShape{4, 4}, 3);
    auto params = init_model(ModelSpec{clean.dim, {8}, 2}, 1);
    Optimizer opt(OptimizerConfig{});
    const SelectionSchedule s{0.4, 4};
    const auto stats = self_teach_epoch(params, opt, clean, s, 2, 32, 9);
    ASSERT_EQ(stats.batch_sizes, (std::vector<std::size_t>{32, 32, 32, 4}));
    for (std::size_t i = 0; i < stats.batch_sizes.size(); ++i)
        EXPECT_EQ(stats.kept_per_batch[i], kept_count(0.8, stats.batch_sizes[i]));
    EXPECT_DOUBLE_EQ(stats.selection_precision, 1.0);
    EXPECT_GT(stats.mean_train_loss, 0.0);
    EXPECT_EQ(opt.adam().step, 4u);
}

TEST(SelfTeach, CleanShareReadsProvenance) {
    auto ds = generate_synthetic(2, 2, ImageShape{2, 2}, 3);
    ds.examples[0].provenance = Provenance::Corrupted;
    EXPECT_DOUBLE_EQ(clean_share(ds, std::vector<std::size_t>{0, 1, 2, 3}), 0.75);
    EXPECT_DOUBLE_EQ(clean_share(ds, std::vector<std::size_t>{}), 0.0);
}
