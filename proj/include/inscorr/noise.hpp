#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "inscorr/data.hpp"

namespace inscorr {

enum class NoiseKind { TypeI, Gaussian, Occlusion, Resolution, Fog, MotionBlur };

const char* noise_kind_name(NoiseKind kind);
std::optional<NoiseKind> parse_noise_kind(const std::string& name);
bool is_type2(NoiseKind kind);

// Kind-specific corruption parameters. Defaults are the calibrated values
// used by every experiment unless a config overrides them.
struct CorruptionParams {
    double gaussian_sigma = 0.25;     // >= 0
    double occlusion_fraction = 0.25; // [0,1], area share of the grey patch
    std::size_t resolution_factor = 4; // >= 1
    double fog_intensity = 0.8;       // [0,1]
    double fog_decay = 1.0;           // >= 0
    std::size_t blur_length = 5;      // >= 1
    double blur_angle_deg = 0.0;

    void validate() const;
    bool operator==(const CorruptionParams&) const = default;
};

struct NoiseSpec {
    NoiseKind kind = NoiseKind::TypeI;
    double rate = 0.4;  // tau in [0,1)
    std::uint64_t seed = 0;
    CorruptionParams params;

    void validate() const;
    bool operator==(const NoiseSpec&) const = default;
};

// round(rate * n)
std::size_t noise_count(double rate, std::size_t n);

// Type I: replaces round(rate*n) instances, spread over classes in
// proportion to their size, with distinct OOD instances. Labels are kept.
Dataset inject_type1(const Dataset& ds, const Dataset& ood, const NoiseSpec& spec);

// Type II: corrupts round(rate*n) uniformly chosen instances in place.
Dataset inject_type2(const Dataset& ds, const NoiseSpec& spec);

// Dispatches on spec.kind; `ood` is only read for Type I.
Dataset inject_noise(const Dataset& ds, const NoiseSpec& spec, const Dataset* ood);

// Corrupts one h x w grid. Output is clamped to [0,1].
std::vector<double> corruption_transform(std::span<const double> grid, ImageShape shape, NoiseKind kind,
                                         const CorruptionParams& params, std::uint64_t seed);

}  // namespace inscorr
