#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "inscorr/nn.hpp"

namespace inscorr {

enum class AttackNorm { Linf, L2 };

// Objective minimised over the perturbation.
//   CrossEntropy:        -log p(target | x + delta)
//   NegativeProbability: -p(target | x + delta)
enum class AttackLoss { CrossEntropy, NegativeProbability };

struct AttackConfig {
    AttackNorm norm = AttackNorm::Linf;
    double budget = 8.0 / 255.0;
    std::size_t steps = 40;
    std::optional<double> step_size;  // default 2.5 * budget / steps
    bool random_start = false;
    std::uint64_t random_seed = 0;
    double clamp_min = 0.0;
    double clamp_max = 1.0;
    AttackLoss loss = AttackLoss::CrossEntropy;

    double effective_step_size() const;
    void validate() const;
    bool operator==(const AttackConfig&) const = default;
};

enum class CorrectionFailure { None, InvalidTarget, NonFiniteGradient, BadInstance };

struct CorrectionResult {
    std::vector<double> instance;  // x + delta
    double initial_loss = 0.0;     // at delta = 0
    double loss = 0.0;             // best seen, <= initial_loss
    bool success = false;          // argmax f(instance) == target
    std::size_t iterations = 0;
    CorrectionFailure failure = CorrectionFailure::None;
    std::string error;
};

struct CorrectionRequest {
    std::span<const double> instance;
    int target = 0;
};

// Targeted projected gradient descent on the instance. Returns the best
// iterate (lowest targeted loss, the starting point included).
// Throws LabelError for an invalid target and NumericError for a
// non-finite gradient.
CorrectionResult correct_instance(const ModelParams& params, std::span<const double> x, int target,
                                  const AttackConfig& cfg);

// Element-wise correct_instance in input order. Failures stay in their slot
// (success = false, failure/error set) instead of aborting the batch.
// Parameters are only read.
std::vector<CorrectionResult> correct_set(const ModelParams& params, std::span<const CorrectionRequest> requests,
                                          const AttackConfig& cfg);

// Norm of (a - b) under `norm`.
double perturbation_norm(std::span<const double> a, std::span<const double> b, AttackNorm norm);

// Gradient of the targeted loss w.r.t. the input rows, plus per-row losses.
struct InputGradient {
    std::vector<double> losses;
    std::vector<double> grad;  // [rows, d]
};
InputGradient targeted_input_gradient(const ModelParams& frozen, const Tensor& x, std::span<const int> targets,
                                      AttackLoss loss);

}  // namespace inscorr
