#include <fstream>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "inscorr/config.hpp"
#include "inscorr/errors.hpp"

using namespace inscorr;
using inscorr::testing::TempDir;

namespace {

std::string error_key(const nlohmann::json& j) {
    try {
        config_from_json(j);
    } catch (const ConfigError& e) {
        return e.key();
    }
    return "<none>";
}

}  // namespace

TEST(Config, EmptyGivesDefaults) {
    const auto c = config_from_json(nlohmann::json::object());
    EXPECT_EQ(c.method, Method::InsCorr);
    EXPECT_EQ(c.warmup_epochs, 100u);
    EXPECT_EQ(c.epochs, 200u);
    EXPECT_EQ(c.batch_size, 128u);
    EXPECT_DOUBLE_EQ(c.attack.budget, 8.0 / 255.0);
    EXPECT_EQ(c.attack.steps, 40u);
    EXPECT_EQ(c.data.ood_families, kDefaultOodFamilies);
    EXPECT_EQ(config_from_json(nlohmann::json(nullptr)), c);
}

TEST(Config, ErrorsNameTheKey) {
    EXPECT_EQ(error_key({{"lambda", 1.5}}), "lambda");
    EXPECT_EQ(error_key({{"lambdaa", 0.5}}), "lambdaa");
    EXPECT_EQ(error_key({{"attack", {{"budget", 0.0}}}}), "attack.budget");
    EXPECT_EQ(error_key({{"attack", {{"norm", "l1"}}}}), "attack.norm");
    EXPECT_EQ(error_key({{"epochs", -3}}), "epochs");
    EXPECT_EQ(error_key({{"epochs", 10}, {"warmup_epochs", 20}}), "warmup_epochs");
    EXPECT_EQ(error_key({{"noise", {{"kind", "snow"}}}}), "noise.kind");
    EXPECT_EQ(error_key({{"data", {{"ood_families", {"blob", "cats"}}}}}), "data.ood_families");
    EXPECT_EQ(error_key({{"data", {{"ood_families", nlohmann::json::array()}}}}), "data.ood_families");
    EXPECT_EQ(error_key({{"method", "mix"}, {"refresh_correction", true}}), "refresh_correction");
}

TEST(Config, TauFollowsNoiseRateUnlessSet) {
    auto c = config_from_json({{"noise", {{"rate", 0.2}}}});
    EXPECT_DOUBLE_EQ(c.schedule.tau, 0.2);
    c = config_from_json({{"noise", {{"rate", 0.2}}}, {"schedule", {{"tau", 0.3}}}});
    EXPECT_DOUBLE_EQ(c.schedule.tau, 0.3);
}

TEST(Config, JsonRoundTrip) {
    ExperimentConfig c;
    c.method = Method::Mix;
    c.lambda = 0.25;
    c.lambda_semantics = LambdaSemantics::DiscardedWeight;
    c.partition_rule = PartitionRule::SmallLossGlobal;
    c.seeds = Seeds{1, 2, 3, 4};
    c.hidden_widths = {32, 16};
    c.attack.norm = AttackNorm::L2;
    c.attack.step_size = 0.01;
    c.attack.loss = AttackLoss::NegativeProbability;
    c.noise.kind = NoiseKind::Fog;
    c.noise.rate = 0.3;
    c.schedule.tau = 0.3;
    c.data.ood_families = {OodFamily::Texture};
    EXPECT_EQ(config_from_json(to_json(c)), c);
    EXPECT_EQ(config_from_json(to_json(ExperimentConfig{})), ExperimentConfig{});
}

TEST(Config, OverridesWinOverFile) {
    TempDir dir("cfg");
    {
        std::ofstream f(dir / "c.json");
        f << "{\n  // comment\n  \"lambda\": 0.2,\n  \"attack\": {\"steps\": 5}\n}\n";
    }
    const auto c = parse_config(dir / "c.json", {"attack.steps=7", "method=mix"});
    EXPECT_DOUBLE_EQ(c.lambda, 0.2);
    EXPECT_EQ(c.attack.steps, 7u);
    EXPECT_EQ(c.method, Method::Mix);
    EXPECT_THROW(parse_config(dir / "missing.json"), ConfigError);
    EXPECT_THROW(parse_config({}, {"no_equals"}), ConfigError);
    EXPECT_THROW(parse_config({}, {"lambda.x=1"}), ConfigError);
}

TEST(Config, LambdaSemanticsResolveCleanWeight) {
    ExperimentConfig c;
    c.lambda = 0.3;
    EXPECT_DOUBLE_EQ(c.clean_weight(), 0.3);
    c.lambda_semantics = LambdaSemantics::DiscardedWeight;
    EXPECT_DOUBLE_EQ(c.clean_weight(), 0.7);
}

TEST(Config, HashIsStableAndSensitive) {
    ExperimentConfig a;
    const auto h = config_hash(a);
    EXPECT_EQ(h.size(), 16u);
    EXPECT_EQ(h.find_first_not_of("0123456789abcdef"), std::string::npos);
    EXPECT_EQ(config_hash(config_from_json(to_json(a))), h);
    a.seeds.epochs = 1;
    EXPECT_NE(config_hash(a), h);
    // override order does not matter once resolved
    EXPECT_EQ(config_hash(parse_config({}, {"lambda=0.1", "epochs=150"})),
              config_hash(parse_config({}, {"epochs=150", "lambda=0.1"})));
}

TEST(Config, ModelSpecFollowsData) {
    ExperimentConfig c;
    c.data.image = ImageShape{8, 4};
    c.data.classes = 3;
    c.hidden_widths = {5};
    EXPECT_EQ(c.model_spec(), (ModelSpec{32, {5}, 3}));
}
