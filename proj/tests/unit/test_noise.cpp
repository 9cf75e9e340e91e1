#include <cmath>
#include <numeric>
#include <set>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "inscorr/errors.hpp"
#include "inscorr/noise.hpp"

using namespace inscorr;
using inscorr::testing::uniform_values;

namespace {

const ImageShape kShape{16, 16};

Dataset clean100() { return generate_synthetic(4, 25, kShape, 11); }

std::size_t non_clean(const Dataset& ds) {
    std::size_t n = 0;
    for (const auto& ex : ds.examples) n += ex.provenance != Provenance::Clean;
    return n;
}

NoiseSpec spec_of(NoiseKind kind, double rate, std::uint64_t seed = 5) {
    NoiseSpec s;
    s.kind = kind;
    s.rate = rate;
    s.seed = seed;
    return s;
}

}  // namespace

TEST(NoiseKinds, NamesRoundTrip) {
    for (auto k : {NoiseKind::TypeI, NoiseKind::Gaussian, NoiseKind::Occlusion, NoiseKind::Resolution, NoiseKind::Fog,
                   NoiseKind::MotionBlur})
        EXPECT_EQ(parse_noise_kind(noise_kind_name(k)), k);
    EXPECT_FALSE(parse_noise_kind("salt").has_value());
    EXPECT_FALSE(is_type2(NoiseKind::TypeI));
    EXPECT_TRUE(is_type2(NoiseKind::Fog));
}

TEST(NoiseCount, RoundsToNearest) {
    EXPECT_EQ(noise_count(0.2, 100), 20u);
    EXPECT_EQ(noise_count(0.4, 1800), 720u);
    EXPECT_EQ(noise_count(0.25, 10), 3u);  // 2.5 rounds half away from zero
    EXPECT_EQ(noise_count(0.0, 10), 0u);
}

TEST(TypeI, ReplacesExactlyRoundTauN) {
    const auto ds = clean100();
    const auto ood = generate_ood_source(kShape, 60, 3, 4);
    const auto out = inject_type1(ds, ood, spec_of(NoiseKind::TypeI, 0.2));
    EXPECT_EQ(non_clean(out), 20u);
    std::set<std::vector<double>> used;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto& ex = out.examples[i];
        EXPECT_EQ(ex.given_label, ds.examples[i].given_label);
        if (ex.provenance == Provenance::OpenSetReplaced) {
            EXPECT_FALSE(ex.true_label.has_value());
            used.insert(ex.instance);
        } else {
            EXPECT_EQ(ex, ds.examples[i]);
        }
    }
    EXPECT_EQ(used.size(), 20u);  // distinct OOD instances
    EXPECT_EQ(out.label_histogram(), ds.label_histogram());
    EXPECT_NO_THROW(out.validate());
}

TEST(TypeI, BalancedAcrossClasses) {
    const auto ds = clean100();
    const auto ood = generate_ood_source(kShape, 60, 3, 4);
    const auto out = inject_type1(ds, ood, spec_of(NoiseKind::TypeI, 0.4));
    std::vector<std::size_t> per_class(4, 0);
    for (const auto& ex : out.examples)
        if (ex.provenance != Provenance::Clean) ++per_class[ex.given_label];
    EXPECT_EQ(per_class, (std::vector<std::size_t>{10, 10, 10, 10}));
}

TEST(TypeI, ZeroRateIsIdentity) {
    const auto ds = clean100();
    const auto ood = generate_ood_source(kShape, 5, 3, 4);
    EXPECT_EQ(inject_type1(ds, ood, spec_of(NoiseKind::TypeI, 0.0)), ds);
}

TEST(TypeI, Errors) {
    const auto ds = clean100();
    const auto small = generate_ood_source(kShape, 5, 3, 4);
    EXPECT_THROW(inject_type1(ds, small, spec_of(NoiseKind::TypeI, 0.2)), CapacityError);
    const auto narrow = generate_ood_source(ImageShape{4, 4}, 50, 3, 4);
    EXPECT_THROW(inject_type1(ds, narrow, spec_of(NoiseKind::TypeI, 0.2)), DataError);
    EXPECT_THROW(inject_type1(ds, small, spec_of(NoiseKind::Fog, 0.0)), ContractError);
    EXPECT_THROW(inject_noise(ds, spec_of(NoiseKind::TypeI, 0.2), nullptr), ContractError);
}

TEST(TypeII, CorruptsExactlyRoundTauNAndKeepsTruth) {
    const auto ds = clean100();
    for (auto kind : {NoiseKind::Gaussian, NoiseKind::Occlusion, NoiseKind::Resolution, NoiseKind::Fog,
                      NoiseKind::MotionBlur}) {
        const auto out = inject_type2(ds, spec_of(kind, 0.3));
        EXPECT_EQ(non_clean(out), 30u) << noise_kind_name(kind);
        for (std::size_t i = 0; i < out.size(); ++i) {
            EXPECT_EQ(out.examples[i].true_label, ds.examples[i].true_label);
            EXPECT_EQ(out.examples[i].given_label, ds.examples[i].given_label);
        }
        EXPECT_NO_THROW(out.validate());
    }
}

TEST(TypeII, SelectionIsSharedAcrossKinds) {
    const auto ds = clean100();
    const auto a = inject_type2(ds, spec_of(NoiseKind::Fog, 0.3));
    const auto b = inject_type2(ds, spec_of(NoiseKind::Gaussian, 0.3));
    for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(a.examples[i].provenance, b.examples[i].provenance);
}

TEST(TypeII, NeedsImageShape) {
    auto ds = clean100();
    ds.image_shape.reset();
    EXPECT_THROW(inject_type2(ds, spec_of(NoiseKind::Fog, 0.3)), ContractError);
    EXPECT_THROW(inject_type2(clean100(), spec_of(NoiseKind::TypeI, 0.3)), ContractError);
}

TEST(TypeII, DeterministicPerSeed) {
    const auto ds = clean100();
    EXPECT_EQ(inject_type2(ds, spec_of(NoiseKind::Gaussian, 0.3, 1)), inject_type2(ds, spec_of(NoiseKind::Gaussian, 0.3, 1)));
    EXPECT_NE(inject_type2(ds, spec_of(NoiseKind::Gaussian, 0.3, 1)), inject_type2(ds, spec_of(NoiseKind::Gaussian, 0.3, 2)));
}

TEST(Corruption, DegenerateParametersAreIdentities) {
    const auto grid = uniform_values(256, 4, 0, 1);
    CorruptionParams p;
    p.gaussian_sigma = 0.0;
    EXPECT_EQ(corruption_transform(grid, kShape, NoiseKind::Gaussian, p, 1), grid);
    p = {};
    p.blur_length = 1;
    EXPECT_EQ(corruption_transform(grid, kShape, NoiseKind::MotionBlur, p, 1), grid);
    p = {};
    p.fog_intensity = 0.0;
    EXPECT_EQ(corruption_transform(grid, kShape, NoiseKind::Fog, p, 1), grid);
    p = {};
    p.resolution_factor = 1;
    EXPECT_EQ(corruption_transform(grid, kShape, NoiseKind::Resolution, p, 1), grid);
}

TEST(Corruption, FullOcclusionIsGrey) {
    const auto grid = uniform_values(256, 4, 0, 1);
    CorruptionParams p;
    p.occlusion_fraction = 1.0;
    for (double v : corruption_transform(grid, kShape, NoiseKind::Occlusion, p, 3)) EXPECT_EQ(v, 0.5);
}

TEST(Corruption, OcclusionCoversRequestedArea) {
    const std::vector<double> grid(256, 0.0);
    CorruptionParams p;
    p.occlusion_fraction = 0.25;
    const auto out = corruption_transform(grid, kShape, NoiseKind::Occlusion, p, 3);
    EXPECT_EQ(std::count(out.begin(), out.end(), 0.5), 64);
}

// Pixel-loop oracle: 2x block average then nearest-neighbour upsample.
TEST(Corruption, ResolutionMatchesPixelLoop) {
    const auto grid = uniform_values(256, 8, 0, 1);
    CorruptionParams p;
    p.resolution_factor = 2;
    const auto out = corruption_transform(grid, kShape, NoiseKind::Resolution, p, 1);
    for (std::size_t r = 0; r < 16; ++r)
        for (std::size_t c = 0; c < 16; ++c) {
            const std::size_t br = r / 2 * 2, bc = c / 2 * 2;
            const double avg =
                (grid[br * 16 + bc] + grid[br * 16 + bc + 1] + grid[(br + 1) * 16 + bc] + grid[(br + 1) * 16 + bc + 1]) / 4.0;
            ASSERT_NEAR(out[r * 16 + c], avg, 1e-12) << r << "," << c;
        }
}

TEST(Corruption, BlurSpreadsAnImpulseAndKeepsMass) {
    std::vector<double> grid(256, 0.0);
    grid[8 * 16 + 8] = 1.0;
    CorruptionParams p;
    p.blur_length = 5;
    p.blur_angle_deg = 0.0;
    const auto out = corruption_transform(grid, kShape, NoiseKind::MotionBlur, p, 1);
    EXPECT_NEAR(std::accumulate(out.begin(), out.end(), 0.0), 1.0, 1e-9);
    // horizontal kernel: mass stays in row 8, five taps of 1/5
    for (std::size_t c = 6; c <= 10; ++c) EXPECT_NEAR(out[8 * 16 + c], 0.2, 1e-12);
    EXPECT_EQ(out[7 * 16 + 8], 0.0);
}

TEST(Corruption, FogFollowsClosedForm) {
    const std::vector<double> grid(256, 0.2);
    CorruptionParams p;
    p.fog_intensity = 0.6;
    p.fog_decay = 1.5;
    const auto out = corruption_transform(grid, kShape, NoiseKind::Fog, p, 1);
    for (std::size_t r = 0; r < 16; ++r) {
        const double t = 0.6 * std::exp(-1.5 * static_cast<double>(r) / 16.0);
        EXPECT_NEAR(out[r * 16 + 3], (1.0 - t) * 0.2 + t, 1e-12);
    }
}

TEST(Corruption, GaussianStaysInRangeAndHasRoughlyTheRightSpread) {
    const std::vector<double> grid(256, 0.5);
    CorruptionParams p;
    p.gaussian_sigma = 0.1;
    const auto out = corruption_transform(grid, kShape, NoiseKind::Gaussian, p, 9);
    double sq = 0.0;
    for (double v : out) {
        ASSERT_TRUE(v >= 0.0 && v <= 1.0);
        sq += (v - 0.5) * (v - 0.5);
    }
    EXPECT_NEAR(std::sqrt(sq / 256.0), 0.1, 0.02);
}

TEST(Corruption, ParameterErrors) {
    const auto grid = uniform_values(256, 4, 0, 1);
    CorruptionParams p;
    p.gaussian_sigma = -0.1;
    EXPECT_THROW(corruption_transform(grid, kShape, NoiseKind::Gaussian, p, 1), ParameterError);
    p = {};
    p.blur_length = 0;
    EXPECT_THROW(corruption_transform(grid, kShape, NoiseKind::MotionBlur, p, 1), ParameterError);
    p = {};
    p.resolution_factor = 0;
    EXPECT_THROW(corruption_transform(grid, kShape, NoiseKind::Resolution, p, 1), ParameterError);
    p = {};
    p.fog_intensity = 1.5;
    EXPECT_THROW(p.validate(), ParameterError);
    EXPECT_THROW(corruption_transform(grid, kShape, NoiseKind::TypeI, CorruptionParams{}, 1), ParameterError);
    EXPECT_THROW(corruption_transform(std::vector<double>(10), kShape, NoiseKind::Fog, CorruptionParams{}, 1), DimensionError);
    EXPECT_THROW(spec_of(NoiseKind::Fog, 1.0).validate(), ParameterError);
}

// Property: for random rates and kinds, labels and counts are preserved and
// values stay in [0,1].
TEST(NoiseProperty, InvariantsOverRandomSpecs) {
    const auto ds = clean100();
    const auto ood = generate_ood_source(kShape, 100, 2, 4);
    std::mt19937_64 rng(17);
    const NoiseKind kinds[] = {NoiseKind::TypeI, NoiseKind::Gaussian, NoiseKind::Occlusion, NoiseKind::Resolution,
                               NoiseKind::Fog, NoiseKind::MotionBlur};
    for (int trial = 0; trial < 40; ++trial) {
        const auto kind = kinds[rng() % 6];
        const double rate = static_cast<double>(rng() % 96) / 100.0;
        const auto out = inject_noise(ds, spec_of(kind, rate, rng()), &ood);
        ASSERT_EQ(out.label_histogram(), ds.label_histogram());
        ASSERT_EQ(non_clean(out), noise_count(rate, ds.size()));
        for (const auto& ex : out.examples)
            for (double v : ex.instance) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
    }
}
