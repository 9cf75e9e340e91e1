#include "inscorr/nn.hpp"

#include <algorithm>
#include <cmath>

#include "binary_io.hpp"
#include "inscorr/errors.hpp"
#include "inscorr/rng.hpp"

namespace inscorr {

void ModelSpec::validate() const {
    if (input_dim < 1) throw ContractError("model: input_dim must be >= 1");
    if (num_classes < 2) throw ContractError("model: num_classes must be >= 2");
    for (auto w : hidden_widths)
        if (w < 1) throw ContractError("model: hidden widths must be >= 1");
}

std::vector<Tensor> ModelParams::tensors() const {
    std::vector<Tensor> out;
    out.reserve(layers.size() * 2);
    for (const auto& l : layers) {
        out.push_back(l.weight);
        out.push_back(l.bias);
    }
    return out;
}

void ModelParams::zero_grad() {
    for (auto& l : layers) {
        l.weight.zero_grad();
        l.bias.zero_grad();
    }
}

ModelParams ModelParams::frozen() const {
    ModelParams out{spec, {}, init_seed};
    for (const auto& l : layers) out.layers.push_back({l.weight.detach(false), l.bias.detach(false)});
    return out;
}

ModelParams ModelParams::clone() const {
    ModelParams out{spec, {}, init_seed};
    for (const auto& l : layers)
        out.layers.push_back({l.weight.detach(l.weight.requires_grad()), l.bias.detach(l.bias.requires_grad())});
    return out;
}

std::vector<double> ModelParams::flat() const {
    std::vector<double> out;
    for (const auto& t : tensors()) {
        auto v = t.values();
        out.insert(out.end(), v.begin(), v.end());
    }
    return out;
}

ModelParams init_model(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    ModelParams params{spec, {}, seed};
    auto rng = make_rng(seed, "init");
    std::size_t fan_in = spec.input_dim;
    std::vector<std::size_t> widths = spec.hidden_widths;
    widths.push_back(spec.num_classes);
    for (std::size_t out : widths) {
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
        std::vector<double> w(fan_in * out);
        for (auto& v : w) v = dist(rng);
        params.layers.push_back({Tensor::from({fan_in, out}, std::move(w), true), Tensor::zeros({out}, true)});
        fan_in = out;
    }
    return params;
}

Tensor forward(const ModelParams& params, const Tensor& x) {
    if (x.rank() != 2 || x.dim(1) != params.spec.input_dim)
        throw DimensionError("forward: expected input [b," + std::to_string(params.spec.input_dim) + "], got " +
                             shape_str(x.shape()));
    Tensor h = x;
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        h = add_bias(matmul(h, params.layers[i].weight), params.layers[i].bias);
        if (i + 1 < params.layers.size()) h = relu(h);
    }
    return h;
}

std::vector<double> predict_proba(const ModelParams& params, const Tensor& x) {
    return softmax_rows(forward(params, x));
}

std::vector<int> predict(const ModelParams& params, const Tensor& x) {
    const Tensor logits = forward(params, x);
    const std::size_t b = logits.dim(0), c = logits.dim(1);
    const auto v = logits.values();
    std::vector<int> out(b);
    for (std::size_t i = 0; i < b; ++i) {
        const auto row = v.subspan(i * c, c);
        out[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return out;
}

void adam_step(AdamState& state, std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads) {
    if (params.size() != grads.size())
        throw DimensionError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                             std::to_string(grads.size()) + " gradients");
    for (std::size_t i = 0; i < params.size(); ++i)
        if (params[i].size() != grads[i].size())
            throw DimensionError("adam_step: parameter " + std::to_string(i) + " has " + std::to_string(params[i].size()) +
                                 " values but gradient has " + std::to_string(grads[i].size()));
    if (state.first_moment.empty()) {
        for (const auto& p : params) {
            state.first_moment.emplace_back(p.size(), 0.0);
            state.second_moment.emplace_back(p.size(), 0.0);
        }
    }
    if (state.first_moment.size() != params.size())
        throw DimensionError("adam_step: optimizer state tracks " + std::to_string(state.first_moment.size()) +
                             " parameters, got " + std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i)
        if (state.first_moment[i].size() != params[i].size())
            throw DimensionError("adam_step: moment buffer " + std::to_string(i) + " shape mismatch");

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        auto p = params[i];
        auto g = grads[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

namespace {

// Views over each tensor's values and gradient; missing gradients read as zero.
struct ParamViews {
    std::vector<std::span<double>> values;
    std::vector<std::span<const double>> grads;
    std::vector<std::vector<double>> zero_fill;
};

ParamViews param_views(std::span<Tensor> params) {
    ParamViews pv;
    pv.zero_fill.reserve(params.size());
    for (auto& t : params) {
        pv.values.push_back(t.mutable_values());
        if (t.has_grad()) {
            pv.grads.push_back(t.grad());
        } else {
            pv.zero_fill.emplace_back(t.numel(), 0.0);
            pv.grads.push_back(pv.zero_fill.back());
        }
    }
    return pv;
}

}  // namespace

void adam_step(AdamState& state, std::span<Tensor> params) {
    auto pv = param_views(params);
    adam_step(state, pv.values, pv.grads);
}

void sgd_step(double lr, std::span<Tensor> params) {
    auto pv = param_views(params);
    for (std::size_t i = 0; i < pv.values.size(); ++i)
        for (std::size_t j = 0; j < pv.values[i].size(); ++j) pv.values[i][j] -= lr * pv.grads[i][j];
}

Optimizer::Optimizer(const OptimizerConfig& cfg) : cfg_(cfg) {
    adam_.lr = cfg.lr;
    adam_.beta1 = cfg.beta1;
    adam_.beta2 = cfg.beta2;
    adam_.eps = cfg.eps;
}

void Optimizer::step(ModelParams& params) {
    auto tensors = params.tensors();
    if (cfg_.kind == OptimizerKind::Adam)
        adam_step(adam_, tensors);
    else
        sgd_step(cfg_.lr, tensors);
}

// --- checkpoint --------------------------------------------------------------

namespace {
constexpr std::uint32_t kCheckpointVersion = 1;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    io::ByteWriter w;
    w.magic("ICKP");
    w.u32(kCheckpointVersion);
    w.u64(ckpt.experiment_seed);
    w.u64(ckpt.epoch);
    w.u64(ckpt.params.init_seed);
    const auto& spec = ckpt.params.spec;
    w.u64(spec.input_dim);
    w.u64(spec.num_classes);
    w.u64(spec.hidden_widths.size());
    for (auto h : spec.hidden_widths) w.u64(h);
    for (const auto& t : ckpt.params.tensors()) {
        w.u64(t.numel());
        w.f64s(t.values().data(), t.numel());
    }
    w.f64(ckpt.adam.lr);
    w.f64(ckpt.adam.beta1);
    w.f64(ckpt.adam.beta2);
    w.f64(ckpt.adam.eps);
    w.u64(ckpt.adam.step);
    w.u64(ckpt.adam.first_moment.size());
    for (std::size_t i = 0; i < ckpt.adam.first_moment.size(); ++i) {
        w.u64(ckpt.adam.first_moment[i].size());
        w.f64s(ckpt.adam.first_moment[i].data(), ckpt.adam.first_moment[i].size());
        w.f64s(ckpt.adam.second_moment[i].data(), ckpt.adam.second_moment[i].size());
    }
    w.write_with_crc(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    io::ByteReader r(path);
    r.expect_magic("ICKP");
    r.expect_version(kCheckpointVersion);
    Checkpoint ckpt;
    ckpt.experiment_seed = r.u64();
    ckpt.epoch = r.u64();
    const auto init_seed = r.u64();
    ModelSpec spec;
    spec.input_dim = r.u64();
    spec.num_classes = r.u64();
    const auto depth = r.u64();
    if (depth > r.remaining() / 8) throw TruncatedError(r.name() + ": file truncated");
    spec.hidden_widths.resize(depth);
    for (auto& h : spec.hidden_widths) h = r.u64();
    try {
        r.verify_crc();
    } catch (const ChecksumError&) {
        // a body shorter than the declared tensors is a truncation
        double need = 8.0 * 6 + 4;
        std::size_t fan_in = spec.input_dim;
        auto widths = spec.hidden_widths;
        widths.push_back(spec.num_classes);
        for (auto w : widths) {
            need += 16.0 + 8.0 * (static_cast<double>(fan_in) * static_cast<double>(w) + static_cast<double>(w));
            fan_in = w;
        }
        if (need > static_cast<double>(r.remaining())) throw TruncatedError(r.name() + ": file truncated");
        throw;
    }
    spec.validate();
    ckpt.params = init_model(spec, init_seed);
    for (auto& t : ckpt.params.tensors()) {
        if (r.u64() != t.numel()) throw FormatError(r.name() + ": tensor size does not match the model spec");
        r.f64s(t.mutable_values().data(), t.numel());
    }
    ckpt.adam.lr = r.f64();
    ckpt.adam.beta1 = r.f64();
    ckpt.adam.beta2 = r.f64();
    ckpt.adam.eps = r.f64();
    ckpt.adam.step = r.u64();
    const auto buffers = r.u64();
    for (std::uint64_t i = 0; i < buffers; ++i) {
        const auto n = r.u64();
        if (n > r.remaining()) throw TruncatedError(r.name() + ": file truncated");
        std::vector<double> m(n), v(n);
        r.f64s(m.data(), n);
        r.f64s(v.data(), n);
        ckpt.adam.first_moment.push_back(std::move(m));
        ckpt.adam.second_moment.push_back(std::move(v));
    }
    if (!r.at_end()) throw FormatError(r.name() + ": trailing bytes after checkpoint body");
    return ckpt;
}

}  // namespace inscorr
