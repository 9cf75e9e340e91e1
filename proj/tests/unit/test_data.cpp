#include <cmath>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "inscorr/data.hpp"
#include "inscorr/errors.hpp"
#include "inscorr/nn.hpp"

using namespace inscorr;
using inscorr::testing::TempDir;

namespace {

std::string read_all(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_all(const std::filesystem::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << s;
}

double dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

}  // namespace

TEST(Synthetic, CountsAndLabels) {
    const auto ds = generate_synthetic(2, 5, ImageShape{8, 8}, 1);
    EXPECT_EQ(ds.size(), 10u);
    EXPECT_EQ(ds.dim, 64u);
    EXPECT_EQ(ds.label_histogram(), (std::vector<std::size_t>{5, 5}));
    for (const auto& ex : ds.examples) {
        EXPECT_EQ(ex.provenance, Provenance::Clean);
        EXPECT_EQ(ex.true_label, ex.given_label);
        for (double v : ex.instance) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
    }
    EXPECT_NO_THROW(ds.validate());
}

TEST(Synthetic, DeterministicPerSeed) {
    EXPECT_EQ(generate_synthetic(3, 4, ImageShape{}, 5), generate_synthetic(3, 4, ImageShape{}, 5));
    EXPECT_NE(generate_synthetic(3, 4, ImageShape{}, 5), generate_synthetic(3, 4, ImageShape{}, 6));
}

TEST(Synthetic, RejectsDegenerateRequests) {
    EXPECT_THROW(generate_synthetic(1, 4, ImageShape{}, 1), ContractError);
    EXPECT_THROW(generate_synthetic(2, 0, ImageShape{}, 1), ContractError);
    EXPECT_THROW(generate_synthetic(2, 4, ImageShape{0, 4}, 1), ContractError);
}

// Separability oracle: a linear softmax classifier trained on 500 examples
// generalises to a fresh draw.
TEST(Synthetic, LinearProbeSeparatesClasses) {
    const auto train = generate_synthetic(4, 125, ImageShape{}, 21);
    const auto test = generate_synthetic(4, 125, ImageShape{}, 22);
    auto p = init_model(ModelSpec{train.dim, {}, 4}, 3);
    Optimizer opt(OptimizerConfig{});
    const auto x = train.all_instances();
    std::vector<std::size_t> rows(train.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    const auto y = train.given_labels(rows);
    for (int it = 0; it < 400; ++it) {
        p.zero_grad();
        mean(softmax_cross_entropy(forward(p, x), y)).backward();
        opt.step(p);
    }
    const auto pred = predict(p, test.all_instances());
    std::size_t ok = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) ok += pred[i] == test.examples[i].given_label;
    EXPECT_GE(static_cast<double>(ok) / static_cast<double>(pred.size()), 0.95);
}

TEST(Ood, CountAndNoTrueLabel) {
    const auto ood = generate_ood_source(ImageShape{}, 20, 3, 4);
    EXPECT_EQ(ood.size(), 20u);
    for (const auto& ex : ood.examples) {
        EXPECT_FALSE(ex.true_label.has_value());
        EXPECT_EQ(ex.provenance, Provenance::OpenSetReplaced);
        for (double v : ex.instance) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
    }
    EXPECT_EQ(ood, generate_ood_source(ImageShape{}, 20, 3, 4));
    EXPECT_THROW(generate_ood_source(ImageShape{}, 0, 3), ContractError);
    EXPECT_THROW(generate_ood_source(ImageShape{}, 3, 3, 4, SyntheticStyle{}, std::vector<OodFamily>{}), ContractError);
}

TEST(Ood, FamilyNamesRoundTrip) {
    for (auto f : {OodFamily::OffAngleBar, OodFamily::Blob, OodFamily::Texture})
        EXPECT_EQ(parse_ood_family(ood_family_name(f)), f);
    EXPECT_FALSE(parse_ood_family("cats").has_value());
}

// Centroid oracle: OOD instances sit farther from the nearest class centroid
// than class members sit from their own centroid, for every family.
TEST(Ood, FartherFromCentroidsThanClassSpread) {
    const auto clean = generate_synthetic(4, 250, ImageShape{}, 31);
    std::vector<std::vector<double>> centroid(4, std::vector<double>(clean.dim, 0.0));
    std::vector<double> count(4, 0.0);
    for (const auto& ex : clean.examples) {
        for (std::size_t j = 0; j < clean.dim; ++j) centroid[ex.given_label][j] += ex.instance[j];
        count[ex.given_label] += 1.0;
    }
    for (std::size_t k = 0; k < 4; ++k)
        for (auto& v : centroid[k]) v /= count[k];
    double spread = 0.0;
    for (const auto& ex : clean.examples) spread += dist(ex.instance, centroid[ex.given_label]);
    spread /= static_cast<double>(clean.size());

    for (auto fam : {OodFamily::OffAngleBar, OodFamily::Blob, OodFamily::Texture}) {
        const std::vector<OodFamily> only{fam};
        const auto ood = generate_ood_source(ImageShape{}, 200, 32, 4, SyntheticStyle{}, only);
        double nearest = 0.0;
        for (const auto& ex : ood.examples) {
            double best = 1e300;
            for (const auto& c : centroid) best = std::min(best, dist(ex.instance, c));
            nearest += best;
        }
        nearest /= static_cast<double>(ood.size());
        EXPECT_GT(nearest, spread) << ood_family_name(fam);
    }
}

TEST(Split, NinetyTen) {
    const auto ds = generate_synthetic(4, 25, ImageShape{}, 1);
    const auto [train, val] = split_validation(ds, {0.10, 7});
    EXPECT_EQ(train.size(), 90u);
    EXPECT_EQ(val.size(), 10u);
    // together they are a permutation of the input
    std::multiset<std::vector<double>> all, parts;
    for (const auto& ex : ds.examples) all.insert(ex.instance);
    for (const auto& ex : train.examples) parts.insert(ex.instance);
    for (const auto& ex : val.examples) parts.insert(ex.instance);
    EXPECT_EQ(all, parts);
    EXPECT_EQ(split_validation(ds, {0.10, 7}).second, val);
}

TEST(Split, Errors) {
    const auto ds = generate_synthetic(2, 1, ImageShape{}, 1);
    EXPECT_THROW(split_validation(ds, {1.0, 1}), ContractError);
    EXPECT_THROW(split_validation(ds, {0.9, 1}), ContractError);
    EXPECT_EQ(split_validation(ds, {0.0, 1}).first.size(), 2u);
}

TEST(Minibatches, SizesAndCoverage) {
    const auto b = minibatches(10, 4, 3);
    ASSERT_EQ(b.size(), 3u);
    EXPECT_EQ(b[0].size(), 4u);
    EXPECT_EQ(b[1].size(), 4u);
    EXPECT_EQ(b[2].size(), 2u);
    std::set<std::size_t> seen;
    for (const auto& batch : b) seen.insert(batch.begin(), batch.end());
    EXPECT_EQ(seen.size(), 10u);
    EXPECT_EQ(minibatches(10, 4, 3), b);
    EXPECT_NE(minibatches(10, 4, 4), b);
    EXPECT_THROW(minibatches(10, 0, 3), ContractError);
    EXPECT_TRUE(minibatches(0, 4, 3).empty());
}

TEST(DatasetFile, RoundTrip) {
    TempDir dir("osnd");
    auto ds = generate_synthetic(3, 4, ImageShape{4, 4}, 2);
    ds.examples[1].provenance = Provenance::OpenSetReplaced;
    ds.examples[1].true_label.reset();
    ds.examples[2].provenance = Provenance::Corrupted;
    save_dataset(ds, dir / "d.osnd");
    EXPECT_EQ(load_dataset(dir / "d.osnd"), ds);

    Dataset flat{{}, 3, 2, std::nullopt};
    flat.examples.push_back(Example{{0.1, 0.2, 0.3}, 1, Provenance::Clean, 1});
    save_dataset(flat, dir / "f.osnd");
    EXPECT_EQ(load_dataset(dir / "f.osnd"), flat);
}

TEST(DatasetFile, LoadErrors) {
    TempDir dir("osnd-bad");
    save_dataset(generate_synthetic(2, 3, ImageShape{4, 4}, 2), dir / "a");
    const auto good = read_all(dir / "a");

    auto bad = good;
    bad[1] = 'Q';
    write_all(dir / "b", bad);
    EXPECT_THROW(load_dataset(dir / "b"), FormatError);

    bad = good;
    bad[4] = 2;
    write_all(dir / "b", bad);
    EXPECT_THROW(load_dataset(dir / "b"), VersionError);

    write_all(dir / "b", good.substr(0, 40));
    EXPECT_THROW(load_dataset(dir / "b"), TruncatedError);

    bad = good;
    bad[100] ^= 0x01;
    write_all(dir / "b", bad);
    EXPECT_THROW(load_dataset(dir / "b"), ChecksumError);
}

TEST(DatasetFile, CsvHasOneRowPerExample) {
    TempDir dir("csv");
    const auto ds = generate_synthetic(2, 3, ImageShape{2, 2}, 2);
    export_csv(ds, dir / "d.csv");
    std::ifstream in(dir / "d.csv");
    std::string line;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        ASSERT_EQ(cells.size(), 5u);
        EXPECT_EQ(std::stoi(cells.back()), ds.examples[rows].given_label);
        EXPECT_DOUBLE_EQ(std::stod(cells[0]), ds.examples[rows].instance[0]);
        ++rows;
    }
    EXPECT_EQ(rows, ds.size());
}

TEST(DatasetValidate, CatchesBrokenInvariants) {
    auto ds = generate_synthetic(2, 2, ImageShape{2, 2}, 1);
    auto bad = ds;
    bad.examples[0].instance[0] = 1.5;
    EXPECT_THROW(bad.validate(), DataError);
    bad = ds;
    bad.examples[0].given_label = 2;
    EXPECT_THROW(bad.validate(), LabelError);
    bad = ds;
    bad.examples[0].instance.pop_back();
    EXPECT_THROW(bad.validate(), DataError);
    bad = ds;
    bad.examples[0].provenance = Provenance::OpenSetReplaced;
    EXPECT_THROW(bad.validate(), DataError);
    EXPECT_THROW(Dataset{}.validate(), DataError);
}
