#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "inscorr/tensor.hpp"

namespace inscorr {

// Fully connected relu network: d -> hidden_widths... -> c.
struct ModelSpec {
    std::size_t input_dim = 256;
    std::vector<std::size_t> hidden_widths{64};
    std::size_t num_classes = 4;

    void validate() const;
    bool operator==(const ModelSpec&) const = default;
};

struct Layer {
    Tensor weight;  // [in, out]
    Tensor bias;    // [out]
};

struct ModelParams {
    ModelSpec spec;
    std::vector<Layer> layers;
    std::uint64_t init_seed = 0;

    // weight0, bias0, weight1, bias1, ...
    std::vector<Tensor> tensors() const;
    void zero_grad();
    // Independent copy whose tensors never receive gradients.
    ModelParams frozen() const;
    ModelParams clone() const;
    // All parameter values concatenated in tensors() order.
    std::vector<double> flat() const;
};

// He initialisation: weights ~ N(0, 2/fan_in), biases zero.
ModelParams init_model(const ModelSpec& spec, std::uint64_t seed);

// x: [b, d] -> logits [b, c]. Differentiable w.r.t. parameters and x.
Tensor forward(const ModelParams& params, const Tensor& x);

// Row-wise class probabilities, [b, c] row-major.
std::vector<double> predict_proba(const ModelParams& params, const Tensor& x);
std::vector<int> predict(const ModelParams& params, const Tensor& x);

struct AdamState {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;
    std::uint64_t step = 0;
};

// One Adam update with bias correction. Buffers are allocated on first use;
// afterwards their shapes must match.
void adam_step(AdamState& state, std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads);
// Convenience form reading each tensor's accumulated gradient (missing
// gradient = zero).
void adam_step(AdamState& state, std::span<Tensor> params);

void sgd_step(double lr, std::span<Tensor> params);

enum class OptimizerKind { Adam, Sgd };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Adam;
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    bool operator==(const OptimizerConfig&) const = default;
};

class Optimizer {
public:
    explicit Optimizer(const OptimizerConfig& cfg);
    void step(ModelParams& params);
    const AdamState& adam() const { return adam_; }
    AdamState& adam() { return adam_; }
    const OptimizerConfig& config() const { return cfg_; }

private:
    OptimizerConfig cfg_;
    AdamState adam_;
};

// Checkpoint container, little-endian:
//   magic "ICKP" | u32 version(=1)
//   u64 experiment_seed | u64 epoch | u64 init_seed
//   u64 input_dim | u64 num_classes | u64 n_hidden | u64 hidden_widths[n_hidden]
//   per tensor in tensors() order: u64 numel | f64 values[numel]
//   f64 lr | f64 beta1 | f64 beta2 | f64 eps | u64 adam_step
//   u64 n_moment_buffers, then per buffer: u64 numel | f64 m[numel] | f64 v[numel]
//   u32 crc32 of everything above
struct Checkpoint {
    ModelParams params;
    AdamState adam;
    std::uint64_t epoch = 0;
    std::uint64_t experiment_seed = 0;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace inscorr
