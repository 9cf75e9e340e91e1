#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "inscorr/tensor.hpp"

namespace inscorr {

// Where an example came from. Only evaluation and diagnostics may look at
// this; training, selection and correction never do.
enum class Provenance : std::uint8_t { Clean = 0, OpenSetReplaced = 1, Corrupted = 2 };

const char* provenance_name(Provenance p);

struct ImageShape {
    std::size_t height = 16;
    std::size_t width = 16;
    std::size_t numel() const { return height * width; }
    bool operator==(const ImageShape&) const = default;
};

struct Example {
    std::vector<double> instance;  // values in [0,1]
    int given_label = 0;
    Provenance provenance = Provenance::Clean;
    std::optional<int> true_label;  // absent for open-set replacements

    bool operator==(const Example&) const = default;
};

struct Dataset {
    std::vector<Example> examples;
    std::size_t dim = 0;
    std::size_t num_classes = 0;
    std::optional<ImageShape> image_shape;

    std::size_t size() const { return examples.size(); }
    bool empty() const { return examples.empty(); }

    // Throws DataError / LabelError on any broken invariant.
    void validate() const;

    // [rows.size(), dim] matrix of the selected instances.
    Tensor instances(std::span<const std::size_t> rows) const;
    Tensor all_instances() const;
    std::vector<int> given_labels(std::span<const std::size_t> rows) const;
    std::vector<std::size_t> label_histogram() const;

    bool operator==(const Dataset&) const = default;
};

// Knobs of the in-distribution generator. Each class is a bar through the
// grid centre at angle pi*k/c, randomly shifted and dimmed per example, plus
// Gaussian pixel jitter.
struct SyntheticStyle {
    double background = 0.15;
    double amplitude = 0.7;
    double bar_width = 1.2;    // Gaussian profile std, in pixels
    double max_shift = 2.0;    // uniform shift of the bar centre, pixels
    double jitter = 0.4;       // per-pixel Gaussian std
    bool operator==(const SyntheticStyle&) const = default;
};

Dataset generate_synthetic(std::size_t classes, std::size_t per_class, ImageShape shape, std::uint64_t seed,
                           const SyntheticStyle& style = {});

// Families of out-of-distribution templates, none of which is a class
// template: bars at the half-step angles pi*(k+1/2)/c, round blobs, and
// checkerboard/stripe textures.
enum class OodFamily { OffAngleBar, Blob, Texture };

const char* ood_family_name(OodFamily f);
std::optional<OodFamily> parse_ood_family(const std::string& name);

inline const std::vector<OodFamily> kDefaultOodFamilies{OodFamily::OffAngleBar, OodFamily::Blob};

// Out-of-distribution instances with no in-scope true label, each drawn from a
// uniformly chosen family. Bars and blobs reuse `style` for brightness and
// jitter. given_label is 0 and provenance OpenSetReplaced; the Type I injector
// assigns the label.
Dataset generate_ood_source(ImageShape shape, std::size_t count, std::uint64_t seed, std::size_t num_classes = 2,
                            const SyntheticStyle& style = {},
                            std::span<const OodFamily> families = kDefaultOodFamilies);

struct SplitSpec {
    double validation_fraction = 0.10;
    std::uint64_t seed = 0;
};

// Returns (train, validation). Validation keeps the noisy given labels.
std::pair<Dataset, Dataset> split_validation(const Dataset& ds, const SplitSpec& spec);

// Per-epoch shuffled index batches; the last batch may be short.
std::vector<std::vector<std::size_t>> minibatches(std::size_t n, std::size_t batch_size, std::uint64_t epoch_seed);
std::vector<std::vector<std::size_t>> minibatches(const Dataset& ds, std::size_t batch_size, std::uint64_t epoch_seed);

// Binary container, little-endian:
//   magic "OSND" | u32 version(=1) | u64 n | u64 d | u64 c | u64 height | u64 width
//     (height = width = 0 when the instances are not grids)
//   f64 instances[n*d] row-major
//   per example: u32 given_label | u8 provenance | u8 has_true_label | u32 true_label
//   u32 crc32 of everything above
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

// One row per example: instance values, then given_label. No header.
void export_csv(const Dataset& ds, const std::filesystem::path& path);

}  // namespace inscorr
