#include "inscorr/noise.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "inscorr/errors.hpp"
#include "inscorr/rng.hpp"

namespace inscorr {

const char* noise_kind_name(NoiseKind kind) {
    switch (kind) {
        case NoiseKind::TypeI: return "type1";
        case NoiseKind::Gaussian: return "gaussian";
        case NoiseKind::Occlusion: return "occlusion";
        case NoiseKind::Resolution: return "resolution";
        case NoiseKind::Fog: return "fog";
        case NoiseKind::MotionBlur: return "motion_blur";
    }
    return "unknown";
}

std::optional<NoiseKind> parse_noise_kind(const std::string& name) {
    for (auto k : {NoiseKind::TypeI, NoiseKind::Gaussian, NoiseKind::Occlusion, NoiseKind::Resolution, NoiseKind::Fog,
                   NoiseKind::MotionBlur})
        if (name == noise_kind_name(k)) return k;
    return std::nullopt;
}

bool is_type2(NoiseKind kind) { return kind != NoiseKind::TypeI; }

void CorruptionParams::validate() const {
    if (!(gaussian_sigma >= 0.0)) throw ParameterError("gaussian_sigma must be >= 0");
    if (!(occlusion_fraction >= 0.0 && occlusion_fraction <= 1.0))
        throw ParameterError("occlusion_fraction must be in [0,1]");
    if (resolution_factor < 1) throw ParameterError("resolution_factor must be >= 1");
    if (!(fog_intensity >= 0.0 && fog_intensity <= 1.0)) throw ParameterError("fog_intensity must be in [0,1]");
    if (!(fog_decay >= 0.0)) throw ParameterError("fog_decay must be >= 0");
    if (blur_length < 1) throw ParameterError("blur_length must be >= 1");
    if (!std::isfinite(blur_angle_deg)) throw ParameterError("blur_angle_deg must be finite");
}

void NoiseSpec::validate() const {
    if (!(rate >= 0.0 && rate < 1.0)) throw ParameterError("noise rate must be in [0,1)");
    params.validate();
}

std::size_t noise_count(double rate, std::size_t n) {
    return static_cast<std::size_t>(std::llround(rate * static_cast<double>(n)));
}

namespace {

// Reflect padding without repeating the edge sample: -1 -> 1, n -> n-2.
std::size_t reflect(long i, std::size_t n) {
    if (n == 1) return 0;
    const long period = 2 * (static_cast<long>(n) - 1);
    long m = i % period;
    if (m < 0) m += period;
    return static_cast<std::size_t>(m < static_cast<long>(n) ? m : period - m);
}

}  // namespace

std::vector<double> corruption_transform(std::span<const double> grid, ImageShape shape, NoiseKind kind,
                                         const CorruptionParams& params, std::uint64_t seed) {
    if (!is_type2(kind)) throw ParameterError("corruption_transform: Type I is not a grid corruption");
    if (grid.size() != shape.numel())
        throw DimensionError("corruption_transform: grid has " + std::to_string(grid.size()) + " values, shape needs " +
                             std::to_string(shape.numel()));
    params.validate();
    const std::size_t h = shape.height, w = shape.width;
    std::vector<double> out(grid.begin(), grid.end());
    auto rng = make_rng(seed, "corrupt");

    switch (kind) {
        case NoiseKind::Gaussian: {
            if (params.gaussian_sigma > 0.0) {
                std::normal_distribution<double> noise(0.0, params.gaussian_sigma);
                for (auto& v : out) v += noise(rng);
            }
            break;
        }
        case NoiseKind::Occlusion: {
            const double area = params.occlusion_fraction * static_cast<double>(h * w);
            if (area <= 0.0) break;
            auto rh = std::clamp<std::size_t>(
                static_cast<std::size_t>(std::llround(std::sqrt(params.occlusion_fraction) * static_cast<double>(h))), 1, h);
            auto rw = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(area / static_cast<double>(rh))), 1, w);
            std::uniform_int_distribution<std::size_t> top(0, h - rh), left(0, w - rw);
            const std::size_t r0 = top(rng), c0 = left(rng);
            for (std::size_t r = r0; r < r0 + rh; ++r)
                for (std::size_t c = c0; c < c0 + rw; ++c) out[r * w + c] = 0.5;
            break;
        }
        case NoiseKind::Resolution: {
            const std::size_t k = params.resolution_factor;
            for (std::size_t br = 0; br < h; br += k)
                for (std::size_t bc = 0; bc < w; bc += k) {
                    const std::size_t re = std::min(h, br + k), ce = std::min(w, bc + k);
                    double s = 0.0;
                    for (std::size_t r = br; r < re; ++r)
                        for (std::size_t c = bc; c < ce; ++c) s += grid[r * w + c];
                    const double avg = s / static_cast<double>((re - br) * (ce - bc));
                    for (std::size_t r = br; r < re; ++r)
                        for (std::size_t c = bc; c < ce; ++c) out[r * w + c] = avg;
                }
            break;
        }
        case NoiseKind::Fog: {
            for (std::size_t r = 0; r < h; ++r) {
                const double t =
                    params.fog_intensity * std::exp(-params.fog_decay * static_cast<double>(r) / static_cast<double>(h));
                for (std::size_t c = 0; c < w; ++c) out[r * w + c] = (1.0 - t) * grid[r * w + c] + t * 1.0;
            }
            break;
        }
        case NoiseKind::MotionBlur: {
            const std::size_t len = params.blur_length;
            if (len == 1) break;
            const double theta = params.blur_angle_deg * std::numbers::pi / 180.0;
            // Taps along the line through the origin; coincident taps merge.
            std::vector<std::pair<long, long>> taps;
            for (std::size_t i = 0; i < len; ++i) {
                const double s = static_cast<double>(i) - (static_cast<double>(len) - 1.0) / 2.0;
                taps.emplace_back(std::lround(-s * std::sin(theta)), std::lround(s * std::cos(theta)));
            }
            const double weight = 1.0 / static_cast<double>(len);
            for (std::size_t r = 0; r < h; ++r)
                for (std::size_t c = 0; c < w; ++c) {
                    double acc = 0.0;
                    for (auto [dr, dc] : taps)
                        acc += weight * grid[reflect(static_cast<long>(r) + dr, h) * w +
                                             reflect(static_cast<long>(c) + dc, w)];
                    out[r * w + c] = acc;
                }
            break;
        }
        case NoiseKind::TypeI: break;
    }
    for (auto& v : out) v = std::clamp(v, 0.0, 1.0);
    return out;
}

Dataset inject_type1(const Dataset& ds, const Dataset& ood, const NoiseSpec& spec) {
    if (spec.kind != NoiseKind::TypeI) throw ContractError("inject_type1: spec kind must be type1");
    spec.validate();
    const std::size_t n = ds.size();
    const std::size_t count = noise_count(spec.rate, n);
    Dataset out = ds;
    if (count == 0) return out;
    if (ood.size() < count)
        throw CapacityError("inject_type1: need " + std::to_string(count) + " OOD instances, pool has " +
                            std::to_string(ood.size()));
    if (ood.dim != ds.dim) throw DataError("inject_type1: OOD instances have dimension " + std::to_string(ood.dim));

    // Per-class quotas proportional to class size (largest remainder; ties
    // broken by a seeded class order).
    std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
    for (std::size_t i = 0; i < n; ++i) by_class.at(static_cast<std::size_t>(ds.examples[i].given_label)).push_back(i);
    auto rng = make_rng(spec.seed, "select");
    std::vector<std::size_t> quota(ds.num_classes);
    std::vector<double> remainder(ds.num_classes);
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < ds.num_classes; ++k) {
        const double exact = static_cast<double>(count) * static_cast<double>(by_class[k].size()) / static_cast<double>(n);
        quota[k] = static_cast<std::size_t>(std::floor(exact));
        remainder[k] = exact - static_cast<double>(quota[k]);
        assigned += quota[k];
    }
    std::vector<std::size_t> order(ds.num_classes);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t i = 0; assigned < count; i = (i + 1) % order.size()) {
        const auto k = order[i];
        if (quota[k] < by_class[k].size()) {
            ++quota[k];
            ++assigned;
        }
    }

    std::vector<std::size_t> chosen;
    for (std::size_t k = 0; k < ds.num_classes; ++k) {
        auto members = by_class[k];
        std::shuffle(members.begin(), members.end(), rng);
        chosen.insert(chosen.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(quota[k]));
    }
    std::sort(chosen.begin(), chosen.end());

    std::vector<std::size_t> pool(ood.size());
    std::iota(pool.begin(), pool.end(), 0);
    auto pool_rng = make_rng(spec.seed, "ood_pick");
    std::shuffle(pool.begin(), pool.end(), pool_rng);

    for (std::size_t j = 0; j < chosen.size(); ++j) {
        auto& ex = out.examples[chosen[j]];
        ex.instance = ood.examples[pool[j]].instance;
        ex.provenance = Provenance::OpenSetReplaced;
        ex.true_label.reset();
    }
    return out;
}

Dataset inject_type2(const Dataset& ds, const NoiseSpec& spec) {
    if (!is_type2(spec.kind)) throw ContractError("inject_type2: spec kind must be a Type II corruption");
    if (!ds.image_shape) throw ContractError("inject_type2: dataset has no image shape");
    spec.validate();
    const std::size_t n = ds.size();
    const std::size_t count = noise_count(spec.rate, n);
    Dataset out = ds;
    if (count == 0) return out;

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    auto rng = make_rng(spec.seed, "select");
    std::shuffle(perm.begin(), perm.end(), rng);
    perm.resize(count);
    std::sort(perm.begin(), perm.end());

    for (auto i : perm) {
        auto& ex = out.examples[i];
        ex.instance = corruption_transform(ex.instance, *ds.image_shape, spec.kind, spec.params,
                                           stream_seed(spec.seed, "transform", i));
        ex.provenance = Provenance::Corrupted;
    }
    return out;
}

Dataset inject_noise(const Dataset& ds, const NoiseSpec& spec, const Dataset* ood) {
    if (spec.kind == NoiseKind::TypeI) {
        if (!ood) throw ContractError("inject_noise: Type I needs an OOD source");
        return inject_type1(ds, *ood, spec);
    }
    return inject_type2(ds, spec);
}

}  // namespace inscorr
