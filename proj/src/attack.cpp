#include "inscorr/attack.hpp"

#include <algorithm>
#include <cmath>

#include "inscorr/errors.hpp"
#include "inscorr/rng.hpp"

namespace inscorr {

double AttackConfig::effective_step_size() const {
    if (step_size) return *step_size;
    return steps == 0 ? budget : 2.5 * budget / static_cast<double>(steps);
}

void AttackConfig::validate() const {
    if (!(budget > 0.0) || !std::isfinite(budget)) throw ParameterError("attack budget must be > 0");
    if (!(effective_step_size() > 0.0)) throw ParameterError("attack step size must be > 0");
    if (!(clamp_min < clamp_max)) throw ParameterError("attack clamp range is empty");
}

double perturbation_norm(std::span<const double> a, std::span<const double> b, AttackNorm norm) {
    if (a.size() != b.size()) throw DimensionError("perturbation_norm: size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc = norm == AttackNorm::Linf ? std::max(acc, std::abs(d)) : acc + d * d;
    }
    return norm == AttackNorm::Linf ? acc : std::sqrt(acc);
}

InputGradient targeted_input_gradient(const ModelParams& frozen, const Tensor& x, std::span<const int> targets,
                                      AttackLoss loss) {
    const Tensor leaf = x.detach(true);
    const Tensor ce = softmax_cross_entropy(forward(frozen, leaf), targets);
    sum(ce).backward();
    InputGradient out;
    out.losses.assign(ce.values().begin(), ce.values().end());
    const auto g = leaf.grad();
    out.grad.assign(g.begin(), g.end());
    if (loss == AttackLoss::NegativeProbability) {
        // d(-p)/dx = p * d(-log p)/dx, row by row.
        const std::size_t d = leaf.dim(1);
        for (std::size_t i = 0; i < out.losses.size(); ++i) {
            const double p = std::exp(-out.losses[i]);
            for (std::size_t j = 0; j < d; ++j) out.grad[i * d + j] *= p;
            out.losses[i] = -p;
        }
    }
    return out;
}

namespace {

constexpr std::size_t kChunkRows = 256;

// PGD over a block of rows that all passed validation.
void attack_block(const ModelParams& frozen, std::span<const CorrectionRequest> reqs,
                  std::span<const std::size_t> slots, const AttackConfig& cfg, std::vector<CorrectionResult>& results) {
    const std::size_t m = slots.size();
    const std::size_t d = frozen.spec.input_dim;
    const double rho = cfg.budget;
    const double alpha = cfg.effective_step_size();

    std::vector<double> x0(m * d), cur(m * d);
    std::vector<int> targets(m);
    for (std::size_t i = 0; i < m; ++i) {
        const auto& rq = reqs[slots[i]];
        std::copy(rq.instance.begin(), rq.instance.end(), x0.begin() + static_cast<std::ptrdiff_t>(i * d));
        targets[i] = rq.target;
    }
    cur = x0;

    std::vector<char> active(m, 1);
    std::vector<double> best_loss(m);
    auto eval = [&](const std::vector<double>& pts) {
        return targeted_input_gradient(frozen, Tensor::from({m, d}, pts), targets, cfg.loss);
    };

    auto g = eval(cur);
    for (std::size_t i = 0; i < m; ++i) {
        auto& r = results[slots[i]];
        r.initial_loss = best_loss[i] = g.losses[i];
        r.instance.assign(cur.begin() + static_cast<std::ptrdiff_t>(i * d), cur.begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
    }

    auto project_and_clamp = [&](std::size_t i, std::vector<double>& delta) {
        if (cfg.norm == AttackNorm::Linf) {
            for (auto& v : delta) v = std::clamp(v, -rho, rho);
        } else {
            double nrm = 0.0;
            for (double v : delta) nrm += v * v;
            nrm = std::sqrt(nrm);
            if (nrm > rho)
                for (auto& v : delta) v *= rho / nrm;
        }
        for (std::size_t j = 0; j < d; ++j)
            cur[i * d + j] = std::clamp(x0[i * d + j] + delta[j], cfg.clamp_min, cfg.clamp_max);
    };

    std::vector<double> delta(d);
    if (cfg.random_start) {
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (std::size_t i = 0; i < m; ++i) {
            // per request, so chunking does not change the start
            auto rng = make_rng(cfg.random_seed, "attack_start", slots[i]);
            for (auto& v : delta) v = u(rng) * rho;
            if (cfg.norm == AttackNorm::L2) {
                // uniform direction scaled into the ball
                double nrm = 0.0;
                for (double v : delta) nrm += v * v;
                nrm = std::sqrt(nrm);
                const double radius = rho * std::pow(std::abs(u(rng)), 1.0 / static_cast<double>(d));
                if (nrm > 0.0)
                    for (auto& v : delta) v *= radius / nrm;
            }
            project_and_clamp(i, delta);
        }
        g = eval(cur);
        for (std::size_t i = 0; i < m; ++i)
            if (g.losses[i] < best_loss[i]) {
                best_loss[i] = g.losses[i];
                results[slots[i]].instance.assign(cur.begin() + static_cast<std::ptrdiff_t>(i * d),
                                                  cur.begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
            }
    }

    for (std::size_t step = 1; step <= cfg.steps; ++step) {
        for (std::size_t i = 0; i < m; ++i) {
            if (!active[i]) continue;
            const double* gi = g.grad.data() + i * d;
            bool finite = std::isfinite(g.losses[i]);
            double gnorm = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                finite = finite && std::isfinite(gi[j]);
                gnorm += gi[j] * gi[j];
            }
            if (!finite) {
                active[i] = 0;
                auto& r = results[slots[i]];
                r.failure = CorrectionFailure::NonFiniteGradient;
                r.error = "non-finite gradient at step " + std::to_string(step);
                continue;
            }
            gnorm = std::sqrt(gnorm);
            for (std::size_t j = 0; j < d; ++j) {
                const double dj = cur[i * d + j] - x0[i * d + j];
                double move;
                if (cfg.norm == AttackNorm::Linf)
                    move = gi[j] > 0.0 ? alpha : gi[j] < 0.0 ? -alpha : 0.0;
                else
                    move = gnorm > 0.0 ? alpha * gi[j] / gnorm : 0.0;
                delta[j] = dj - move;
            }
            project_and_clamp(i, delta);
            results[slots[i]].iterations = step;
        }
        g = eval(cur);
        for (std::size_t i = 0; i < m; ++i) {
            if (!active[i]) continue;
            if (g.losses[i] < best_loss[i]) {
                best_loss[i] = g.losses[i];
                results[slots[i]].instance.assign(cur.begin() + static_cast<std::ptrdiff_t>(i * d),
                                                  cur.begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
            }
        }
    }

    // success is judged at the returned iterate
    std::vector<double> final_pts(m * d);
    for (std::size_t i = 0; i < m; ++i) {
        const auto& inst = results[slots[i]].instance;
        std::copy(inst.begin(), inst.end(), final_pts.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    const auto preds = predict(frozen, Tensor::from({m, d}, std::move(final_pts)));
    for (std::size_t i = 0; i < m; ++i) {
        auto& r = results[slots[i]];
        r.loss = best_loss[i];
        r.success = r.failure == CorrectionFailure::None && preds[i] == targets[i];
    }
}

}  // namespace

std::vector<CorrectionResult> correct_set(const ModelParams& params, std::span<const CorrectionRequest> requests,
                                          const AttackConfig& cfg) {
    cfg.validate();
    std::vector<CorrectionResult> results(requests.size());
    if (requests.empty()) return results;
    const ModelParams frozen = params.frozen();
    const std::size_t d = frozen.spec.input_dim;
    const int c = static_cast<int>(frozen.spec.num_classes);

    std::vector<std::size_t> valid;
    for (std::size_t i = 0; i < requests.size(); ++i) {
        const auto& rq = requests[i];
        auto& r = results[i];
        r.instance.assign(rq.instance.begin(), rq.instance.end());
        if (rq.target < 0 || rq.target >= c) {
            r.failure = CorrectionFailure::InvalidTarget;
            r.error = "target " + std::to_string(rq.target) + " outside [0," + std::to_string(c) + ")";
            continue;
        }
        if (rq.instance.size() != d) {
            r.failure = CorrectionFailure::BadInstance;
            r.error = "instance has " + std::to_string(rq.instance.size()) + " values, model expects " + std::to_string(d);
            continue;
        }
        if (!std::all_of(rq.instance.begin(), rq.instance.end(), [](double v) { return std::isfinite(v); })) {
            r.failure = CorrectionFailure::BadInstance;
            r.error = "instance has non-finite values";
            continue;
        }
        valid.push_back(i);
    }
    for (std::size_t start = 0; start < valid.size(); start += kChunkRows) {
        const std::size_t end = std::min(valid.size(), start + kChunkRows);
        attack_block(frozen, requests, std::span(valid).subspan(start, end - start), cfg, results);
    }
    return results;
}

CorrectionResult correct_instance(const ModelParams& params, std::span<const double> x, int target,
                                  const AttackConfig& cfg) {
    const CorrectionRequest rq{x, target};
    auto results = correct_set(params, std::span(&rq, 1), cfg);
    auto& r = results.front();
    switch (r.failure) {
        case CorrectionFailure::InvalidTarget: throw LabelError("correct_instance: " + r.error, 0);
        case CorrectionFailure::NonFiniteGradient: throw NumericError("correct_instance: " + r.error);
        case CorrectionFailure::BadInstance: throw DimensionError("correct_instance: " + r.error);
        case CorrectionFailure::None: break;
    }
    return std::move(r);
}

}  // namespace inscorr
