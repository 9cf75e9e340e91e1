#include "inscorr/config.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include "inscorr/errors.hpp"

namespace inscorr {

using nlohmann::json;

const char* method_name(Method m) {
    switch (m) {
        case Method::SelectionOnly: return "selection_only";
        case Method::Mix: return "mix";
        case Method::InsCorr: return "inscorr";
    }
    return "unknown";
}

ModelSpec ExperimentConfig::model_spec() const {
    return ModelSpec{data.image.numel(), hidden_widths, data.classes};
}

double ExperimentConfig::clean_weight() const {
    return lambda_semantics == LambdaSemantics::CleanWeight ? lambda : 1.0 - lambda;
}

NoiseSpec ExperimentConfig::resolved_noise() const {
    NoiseSpec spec = noise;
    spec.seed = seeds.noise;
    return spec;
}

void ExperimentConfig::validate() const {
    auto fail = [](const char* key, const std::string& msg) { throw ConfigError(key, msg); };
    if (!(lambda >= 0.0 && lambda <= 1.0)) fail("lambda", "must be in [0,1], got " + std::to_string(lambda));
    if (epochs < warmup_epochs) fail("warmup_epochs", "must not exceed epochs");
    if (batch_size < 1) fail("batch_size", "must be >= 1");
    if (method == Method::SelectionOnly && refresh_correction)
        fail("refresh_correction", "only meaningful for method inscorr");
    if (method == Method::Mix && refresh_correction) fail("refresh_correction", "only meaningful for method inscorr");
    for (auto w : hidden_widths)
        if (w < 1) fail("model.hidden_widths", "widths must be >= 1");
    if (!(optimizer.lr > 0.0)) fail("optimizer.lr", "must be > 0");
    if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0)) fail("optimizer.beta1", "must be in [0,1)");
    if (!(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) fail("optimizer.beta2", "must be in [0,1)");
    if (!(optimizer.eps > 0.0)) fail("optimizer.eps", "must be > 0");
    if (!(schedule.tau >= 0.0 && schedule.tau < 1.0)) fail("schedule.tau", "must be in [0,1)");
    if (schedule.ramp_epochs < 1) fail("schedule.ramp_epochs", "must be >= 1");
    if (!(attack.budget > 0.0) || !std::isfinite(attack.budget)) fail("attack.budget", "must be > 0");
    if (attack.step_size && !(*attack.step_size > 0.0)) fail("attack.step_size", "must be > 0");
    if (!(attack.clamp_min < attack.clamp_max)) fail("attack.clamp_max", "must exceed clamp_min");
    if (!(noise.rate >= 0.0 && noise.rate < 1.0)) fail("noise.rate", "must be in [0,1)");
    try {
        noise.params.validate();
    } catch (const ParameterError& e) {
        throw ConfigError("noise", e.what());
    }
    if (data.classes < 2) fail("data.classes", "must be >= 2");
    if (data.per_class < 1) fail("data.per_class", "must be >= 1");
    if (data.test_per_class < 1) fail("data.test_per_class", "must be >= 1");
    if (data.image.height < 1 || data.image.width < 1) fail("data.height", "image dimensions must be >= 1");
    if (!(data.validation_fraction >= 0.0 && data.validation_fraction < 1.0))
        fail("data.validation_fraction", "must be in [0,1)");
    if (!(data.style.jitter >= 0.0)) fail("data.style.jitter", "must be >= 0");
    if (!(data.style.bar_width > 0.0)) fail("data.style.bar_width", "must be > 0");
    if (data.ood_families.empty()) fail("data.ood_families", "needs at least one family");
}

// --- serialisation -----------------------------------------------------------

namespace {

template <class E>
struct EnumName {
    E value;
    const char* name;
};

constexpr EnumName<Method> kMethods[] = {
    {Method::SelectionOnly, "selection_only"}, {Method::Mix, "mix"}, {Method::InsCorr, "inscorr"}};
constexpr EnumName<PartitionRule> kRules[] = {{PartitionRule::Agreement, "agreement"},
                                              {PartitionRule::SmallLossGlobal, "small_loss_global"}};
constexpr EnumName<LambdaSemantics> kSemantics[] = {{LambdaSemantics::CleanWeight, "clean_weight"},
                                                    {LambdaSemantics::DiscardedWeight, "discarded_weight"}};
constexpr EnumName<OptimizerKind> kOptimizers[] = {{OptimizerKind::Adam, "adam"}, {OptimizerKind::Sgd, "sgd"}};
constexpr EnumName<AttackNorm> kNorms[] = {{AttackNorm::Linf, "linf"}, {AttackNorm::L2, "l2"}};
constexpr EnumName<AttackLoss> kLosses[] = {{AttackLoss::CrossEntropy, "cross_entropy"},
                                            {AttackLoss::NegativeProbability, "negative_probability"}};

template <class E, std::size_t N>
const char* enum_to(const EnumName<E> (&table)[N], E v) {
    for (const auto& e : table)
        if (e.value == v) return e.name;
    return "unknown";
}

template <class E, std::size_t N>
E enum_from(const EnumName<E> (&table)[N], const std::string& key, const json& j) {
    if (!j.is_string()) throw ConfigError(key, "expected a string");
    const auto s = j.get<std::string>();
    std::string options;
    for (const auto& e : table) {
        if (s == e.name) return e.value;
        options += options.empty() ? e.name : std::string(", ") + e.name;
    }
    throw ConfigError(key, "unknown value '" + s + "' (expected one of: " + options + ")");
}

std::string join(const std::string& base, const std::string& key) { return base.empty() ? key : base + "." + key; }

void check_keys(const json& obj, const std::string& base, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) throw ConfigError(base.empty() ? "<root>" : base, "expected an object");
    for (const auto& [k, _] : obj.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || k == a;
        if (!ok) throw ConfigError(join(base, k), "unknown key");
    }
}

template <class T>
void read(const json& obj, const std::string& base, const char* key, T& out) {
    auto it = obj.find(key);
    if (it == obj.end()) return;
    const auto path = join(base, key);
    try {
        if constexpr (std::is_same_v<T, double>) {
            if (!it->is_number()) throw ConfigError(path, "expected a number");
            out = it->template get<double>();
        } else if constexpr (std::is_same_v<T, bool>) {
            if (!it->is_boolean()) throw ConfigError(path, "expected true/false");
            out = it->template get<bool>();
        } else if constexpr (std::is_integral_v<T>) {
            if (!it->is_number_integer()) throw ConfigError(path, "expected an integer");
            if (it->is_number_integer() && !it->is_number_unsigned() && it->template get<long long>() < 0)
                throw ConfigError(path, "must be non-negative");
            out = it->template get<T>();
        } else {
            out = it->template get<T>();
        }
    } catch (const json::exception& e) {
        throw ConfigError(path, std::string("bad value: ") + e.what());
    }
}

template <class E, std::size_t N>
void read_enum(const json& obj, const std::string& base, const char* key, const EnumName<E> (&table)[N], E& out) {
    auto it = obj.find(key);
    if (it != obj.end()) out = enum_from(table, join(base, key), *it);
}

const json& child(const json& obj, const char* key) {
    static const json empty = json::object();
    auto it = obj.find(key);
    return it == obj.end() ? empty : *it;
}

}  // namespace

json to_json(const ExperimentConfig& c) {
    json j;
    j["method"] = enum_to(kMethods, c.method);
    j["lambda"] = c.lambda;
    j["lambda_semantics"] = enum_to(kSemantics, c.lambda_semantics);
    j["warmup_epochs"] = c.warmup_epochs;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["refresh_correction"] = c.refresh_correction;
    j["partition_rule"] = enum_to(kRules, c.partition_rule);
    j["seeds"] = {{"data", c.seeds.data}, {"noise", c.seeds.noise}, {"init", c.seeds.init}, {"epochs", c.seeds.epochs}};
    j["model"] = {{"hidden_widths", c.hidden_widths}};
    j["optimizer"] = {{"kind", enum_to(kOptimizers, c.optimizer.kind)},
                      {"lr", c.optimizer.lr},
                      {"beta1", c.optimizer.beta1},
                      {"beta2", c.optimizer.beta2},
                      {"eps", c.optimizer.eps}};
    j["schedule"] = {{"tau", c.schedule.tau}, {"ramp_epochs", c.schedule.ramp_epochs}};
    j["attack"] = {{"norm", enum_to(kNorms, c.attack.norm)},
                   {"budget", c.attack.budget},
                   {"steps", c.attack.steps},
                   {"step_size", c.attack.step_size ? json(*c.attack.step_size) : json(nullptr)},
                   {"random_start", c.attack.random_start},
                   {"random_seed", c.attack.random_seed},
                   {"clamp_min", c.attack.clamp_min},
                   {"clamp_max", c.attack.clamp_max},
                   {"loss", enum_to(kLosses, c.attack.loss)}};
    const auto& p = c.noise.params;
    j["noise"] = {{"kind", noise_kind_name(c.noise.kind)},
                  {"rate", c.noise.rate},
                  {"gaussian_sigma", p.gaussian_sigma},
                  {"occlusion_fraction", p.occlusion_fraction},
                  {"resolution_factor", p.resolution_factor},
                  {"fog_intensity", p.fog_intensity},
                  {"fog_decay", p.fog_decay},
                  {"blur_length", p.blur_length},
                  {"blur_angle_deg", p.blur_angle_deg}};
    const auto& s = c.data.style;
    json families = json::array();
    for (auto f : c.data.ood_families) families.push_back(ood_family_name(f));
    j["data"] = {{"classes", c.data.classes},
                 {"per_class", c.data.per_class},
                 {"test_per_class", c.data.test_per_class},
                 {"height", c.data.image.height},
                 {"width", c.data.image.width},
                 {"validation_fraction", c.data.validation_fraction},
                 {"ood_pool", c.data.ood_pool},
                 {"ood_families", families},
                 {"style",
                  {{"background", s.background},
                   {"amplitude", s.amplitude},
                   {"bar_width", s.bar_width},
                   {"max_shift", s.max_shift},
                   {"jitter", s.jitter}}}};
    return j;
}

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    static const json kEmpty = json::object();
    const json& root = j.is_null() ? kEmpty : j;
    check_keys(root, "",
               {"method", "lambda", "lambda_semantics", "warmup_epochs", "epochs", "batch_size", "refresh_correction",
                "partition_rule", "seeds", "model", "optimizer", "schedule", "attack", "noise", "data"});
    read_enum(root, "", "method", kMethods, c.method);
    read(root, "", "lambda", c.lambda);
    read_enum(root, "", "lambda_semantics", kSemantics, c.lambda_semantics);
    read(root, "", "warmup_epochs", c.warmup_epochs);
    read(root, "", "epochs", c.epochs);
    read(root, "", "batch_size", c.batch_size);
    read(root, "", "refresh_correction", c.refresh_correction);
    read_enum(root, "", "partition_rule", kRules, c.partition_rule);

    const auto& seeds = child(root, "seeds");
    check_keys(seeds, "seeds", {"data", "noise", "init", "epochs"});
    read(seeds, "seeds", "data", c.seeds.data);
    read(seeds, "seeds", "noise", c.seeds.noise);
    read(seeds, "seeds", "init", c.seeds.init);
    read(seeds, "seeds", "epochs", c.seeds.epochs);

    const auto& model = child(root, "model");
    check_keys(model, "model", {"hidden_widths"});
    read(model, "model", "hidden_widths", c.hidden_widths);

    const auto& opt = child(root, "optimizer");
    check_keys(opt, "optimizer", {"kind", "lr", "beta1", "beta2", "eps"});
    read_enum(opt, "optimizer", "kind", kOptimizers, c.optimizer.kind);
    read(opt, "optimizer", "lr", c.optimizer.lr);
    read(opt, "optimizer", "beta1", c.optimizer.beta1);
    read(opt, "optimizer", "beta2", c.optimizer.beta2);
    read(opt, "optimizer", "eps", c.optimizer.eps);

    const auto& noise = child(root, "noise");
    check_keys(noise, "noise",
               {"kind", "rate", "gaussian_sigma", "occlusion_fraction", "resolution_factor", "fog_intensity", "fog_decay",
                "blur_length", "blur_angle_deg"});
    if (auto it = noise.find("kind"); it != noise.end()) {
        if (!it->is_string()) throw ConfigError("noise.kind", "expected a string");
        auto kind = parse_noise_kind(it->get<std::string>());
        if (!kind) throw ConfigError("noise.kind", "unknown noise kind '" + it->get<std::string>() + "'");
        c.noise.kind = *kind;
    }
    read(noise, "noise", "rate", c.noise.rate);
    auto& p = c.noise.params;
    read(noise, "noise", "gaussian_sigma", p.gaussian_sigma);
    read(noise, "noise", "occlusion_fraction", p.occlusion_fraction);
    read(noise, "noise", "resolution_factor", p.resolution_factor);
    read(noise, "noise", "fog_intensity", p.fog_intensity);
    read(noise, "noise", "fog_decay", p.fog_decay);
    read(noise, "noise", "blur_length", p.blur_length);
    read(noise, "noise", "blur_angle_deg", p.blur_angle_deg);

    const auto& sched = child(root, "schedule");
    check_keys(sched, "schedule", {"tau", "ramp_epochs"});
    c.schedule.tau = c.noise.rate;
    read(sched, "schedule", "tau", c.schedule.tau);
    read(sched, "schedule", "ramp_epochs", c.schedule.ramp_epochs);

    const auto& atk = child(root, "attack");
    check_keys(atk, "attack",
               {"norm", "budget", "steps", "step_size", "random_start", "random_seed", "clamp_min", "clamp_max", "loss"});
    read_enum(atk, "attack", "norm", kNorms, c.attack.norm);
    read(atk, "attack", "budget", c.attack.budget);
    read(atk, "attack", "steps", c.attack.steps);
    if (auto it = atk.find("step_size"); it != atk.end() && !it->is_null()) {
        double v = 0.0;
        read(atk, "attack", "step_size", v);
        c.attack.step_size = v;
    }
    read(atk, "attack", "random_start", c.attack.random_start);
    read(atk, "attack", "random_seed", c.attack.random_seed);
    read(atk, "attack", "clamp_min", c.attack.clamp_min);
    read(atk, "attack", "clamp_max", c.attack.clamp_max);
    read_enum(atk, "attack", "loss", kLosses, c.attack.loss);

    const auto& data = child(root, "data");
    check_keys(data, "data",
               {"classes", "per_class", "test_per_class", "height", "width", "validation_fraction", "ood_pool",
                "ood_families", "style"});
    read(data, "data", "classes", c.data.classes);
    read(data, "data", "per_class", c.data.per_class);
    read(data, "data", "test_per_class", c.data.test_per_class);
    read(data, "data", "height", c.data.image.height);
    read(data, "data", "width", c.data.image.width);
    read(data, "data", "validation_fraction", c.data.validation_fraction);
    read(data, "data", "ood_pool", c.data.ood_pool);
    if (auto it = data.find("ood_families"); it != data.end()) {
        if (!it->is_array()) throw ConfigError("data.ood_families", "expected a list of family names");
        c.data.ood_families.clear();
        for (const auto& f : *it) {
            const auto fam = f.is_string() ? parse_ood_family(f.get<std::string>()) : std::nullopt;
            if (!fam)
                throw ConfigError("data.ood_families",
                                  "unknown family " + f.dump() + " (expected off_angle_bar, blob or texture)");
            c.data.ood_families.push_back(*fam);
        }
    }
    const auto& style = child(data, "style");
    check_keys(style, "data.style", {"background", "amplitude", "bar_width", "max_shift", "jitter"});
    read(style, "data.style", "background", c.data.style.background);
    read(style, "data.style", "amplitude", c.data.style.amplitude);
    read(style, "data.style", "bar_width", c.data.style.bar_width);
    read(style, "data.style", "max_shift", c.data.style.max_shift);
    read(style, "data.style", "jitter", c.data.style.jitter);

    c.validate();
    return c;
}

void apply_override(json& tree, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError(assignment, "override must look like key.path=value");
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::exception&) {
        value = raw;
    }
    if (!tree.is_object()) tree = json::object();
    json* node = &tree;
    std::stringstream ss(path);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        json& next = (*node)[parts[i]];
        if (next.is_null()) next = json::object();
        if (!next.is_object()) throw ConfigError(path, "'" + parts[i] + "' is not a section");
        node = &next;
    }
    (*node)[parts.back()] = std::move(value);
}

ExperimentConfig parse_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    json tree = json::object();
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw ConfigError(path.string(), "cannot open config file");
        try {
            tree = json::parse(in, nullptr, true, /*ignore_comments=*/true);
        } catch (const json::parse_error& e) {
            throw ConfigError(path.string(), std::string("parse error: ") + e.what());
        }
        if (tree.is_null()) tree = json::object();
    }
    for (const auto& o : overrides) apply_override(tree, o);
    return config_from_json(tree);
}

std::string config_hash(const ExperimentConfig& cfg) {
    const std::string canonical = to_json(cfg).dump();
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(canonical.data(), canonical.size(), digest, &len, EVP_sha256(), nullptr);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < 8; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xf];
    }
    return out;
}

}  // namespace inscorr
