#include "inscorr/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>

#include "binary_io.hpp"
#include "inscorr/errors.hpp"
#include "inscorr/rng.hpp"

namespace inscorr {

const char* provenance_name(Provenance p) {
    switch (p) {
        case Provenance::Clean: return "clean";
        case Provenance::OpenSetReplaced: return "open_set_replaced";
        case Provenance::Corrupted: return "corrupted";
    }
    return "unknown";
}

void Dataset::validate() const {
    if (examples.empty()) throw DataError("dataset is empty");
    if (dim == 0) throw DataError("dataset dimension is zero");
    if (num_classes < 2) throw DataError("dataset needs at least two classes");
    if (image_shape && image_shape->numel() != dim)
        throw DataError("image shape " + std::to_string(image_shape->height) + "x" + std::to_string(image_shape->width) +
                        " does not match dimension " + std::to_string(dim));
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const auto& ex = examples[i];
        if (ex.instance.size() != dim)
            throw DataError("example " + std::to_string(i) + " has " + std::to_string(ex.instance.size()) +
                                " values, expected " + std::to_string(dim),
                            i);
        for (double v : ex.instance)
            if (!(v >= 0.0 && v <= 1.0)) throw DataError("example " + std::to_string(i) + " has a value outside [0,1]", i);
        if (ex.given_label < 0 || static_cast<std::size_t>(ex.given_label) >= num_classes)
            throw LabelError("example " + std::to_string(i) + " has given label " + std::to_string(ex.given_label), i);
        if (ex.provenance == Provenance::OpenSetReplaced && ex.true_label)
            throw DataError("open-set example " + std::to_string(i) + " carries a true label", i);
        if (ex.provenance == Provenance::Clean && ex.true_label != ex.given_label)
            throw DataError("clean example " + std::to_string(i) + " has true label != given label", i);
        if (ex.true_label && (*ex.true_label < 0 || static_cast<std::size_t>(*ex.true_label) >= num_classes))
            throw LabelError("example " + std::to_string(i) + " has true label " + std::to_string(*ex.true_label), i);
    }
}

Tensor Dataset::instances(std::span<const std::size_t> rows) const {
    std::vector<double> buf;
    buf.reserve(rows.size() * dim);
    for (auto r : rows) {
        const auto& inst = examples.at(r).instance;
        buf.insert(buf.end(), inst.begin(), inst.end());
    }
    return Tensor::from({rows.size(), dim}, std::move(buf));
}

Tensor Dataset::all_instances() const {
    std::vector<std::size_t> rows(examples.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    return instances(rows);
}

std::vector<int> Dataset::given_labels(std::span<const std::size_t> rows) const {
    std::vector<int> out;
    out.reserve(rows.size());
    for (auto r : rows) out.push_back(examples.at(r).given_label);
    return out;
}

std::vector<std::size_t> Dataset::label_histogram() const {
    std::vector<std::size_t> h(num_classes, 0);
    for (const auto& ex : examples) ++h.at(static_cast<std::size_t>(ex.given_label));
    return h;
}

namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

Dataset generate_synthetic(std::size_t classes, std::size_t per_class, ImageShape shape, std::uint64_t seed,
                           const SyntheticStyle& style) {
    if (classes < 2) throw ContractError("generate_synthetic: need at least two classes");
    if (per_class < 1) throw ContractError("generate_synthetic: per_class must be >= 1");
    if (shape.numel() == 0) throw ContractError("generate_synthetic: empty image shape");

    Dataset ds;
    ds.dim = shape.numel();
    ds.num_classes = classes;
    ds.image_shape = shape;
    ds.examples.reserve(classes * per_class);

    auto rng = make_rng(seed, "synthetic");
    std::uniform_real_distribution<double> shift(-style.max_shift, style.max_shift);
    std::uniform_real_distribution<double> dim(0.7, 1.0);
    std::normal_distribution<double> jitter(0.0, 1.0);
    const double cy = (static_cast<double>(shape.height) - 1.0) / 2.0;
    const double cx = (static_cast<double>(shape.width) - 1.0) / 2.0;

    // Interleave classes so any prefix is roughly balanced.
    for (std::size_t m = 0; m < per_class; ++m) {
        for (std::size_t k = 0; k < classes; ++k) {
            const double angle = std::numbers::pi * static_cast<double>(k) / static_cast<double>(classes);
            // unit normal of the bar
            const double ny = std::cos(angle), nx = -std::sin(angle);
            const double oy = cy + shift(rng), ox = cx + shift(rng);
            const double amp = style.amplitude * dim(rng);
            Example ex;
            ex.instance.resize(shape.numel());
            for (std::size_t r = 0; r < shape.height; ++r)
                for (std::size_t c = 0; c < shape.width; ++c) {
                    const double dist = (static_cast<double>(r) - oy) * ny + (static_cast<double>(c) - ox) * nx;
                    const double profile = std::exp(-dist * dist / (2.0 * style.bar_width * style.bar_width));
                    const double v = style.background + amp * profile + style.jitter * jitter(rng);
                    ex.instance[r * shape.width + c] = clamp01(v);
                }
            ex.given_label = static_cast<int>(k);
            ex.true_label = static_cast<int>(k);
            ex.provenance = Provenance::Clean;
            ds.examples.push_back(std::move(ex));
        }
    }
    return ds;
}

const char* ood_family_name(OodFamily f) {
    switch (f) {
        case OodFamily::OffAngleBar: return "off_angle_bar";
        case OodFamily::Blob: return "blob";
        case OodFamily::Texture: return "texture";
    }
    return "unknown";
}

std::optional<OodFamily> parse_ood_family(const std::string& name) {
    for (auto f : {OodFamily::OffAngleBar, OodFamily::Blob, OodFamily::Texture})
        if (name == ood_family_name(f)) return f;
    return std::nullopt;
}

Dataset generate_ood_source(ImageShape shape, std::size_t count, std::uint64_t seed, std::size_t num_classes,
                            const SyntheticStyle& style, std::span<const OodFamily> families) {
    if (count < 1) throw ContractError("generate_ood_source: count must be >= 1");
    if (shape.numel() == 0) throw ContractError("generate_ood_source: empty image shape");
    if (families.empty()) throw ContractError("generate_ood_source: no template families");
    Dataset ds;
    ds.dim = shape.numel();
    ds.num_classes = std::max<std::size_t>(num_classes, 2);
    ds.image_shape = shape;
    ds.examples.reserve(count);

    auto rng = make_rng(seed, "ood");
    std::uniform_int_distribution<std::size_t> family(0, families.size() - 1);
    std::uniform_int_distribution<std::size_t> slot(0, ds.num_classes - 1);
    std::uniform_real_distribution<double> shift(-style.max_shift, style.max_shift);
    std::uniform_real_distribution<double> dim(0.7, 1.0);
    std::uniform_real_distribution<double> radius(1.5, 3.5);
    std::uniform_int_distribution<int> period(1, 3);
    std::uniform_int_distribution<int> phase(0, 5);
    std::uniform_real_distribution<double> level(0.35, 0.65);
    std::uniform_real_distribution<double> contrast(0.15, 0.35);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double cy = (static_cast<double>(shape.height) - 1.0) / 2.0;
    const double cx = (static_cast<double>(shape.width) - 1.0) / 2.0;

    for (std::size_t i = 0; i < count; ++i) {
        Example ex;
        ex.instance.resize(shape.numel());
        auto px = [&](std::size_t r, std::size_t c) -> double& { return ex.instance[r * shape.width + c]; };
        switch (families[family(rng)]) {
            case OodFamily::OffAngleBar: {
                const double angle =
                    std::numbers::pi * (static_cast<double>(slot(rng)) + 0.5) / static_cast<double>(ds.num_classes);
                const double ny = std::cos(angle), nx = -std::sin(angle);
                const double oy = cy + shift(rng), ox = cx + shift(rng);
                const double amp = style.amplitude * dim(rng);
                for (std::size_t r = 0; r < shape.height; ++r)
                    for (std::size_t c = 0; c < shape.width; ++c) {
                        const double d = (static_cast<double>(r) - oy) * ny + (static_cast<double>(c) - ox) * nx;
                        const double v = style.background + amp * std::exp(-d * d / (2.0 * style.bar_width * style.bar_width));
                        px(r, c) = clamp01(v + style.jitter * gauss(rng));
                    }
                break;
            }
            case OodFamily::Blob: {
                const double oy = cy + 2.0 * shift(rng), ox = cx + 2.0 * shift(rng);
                const double rad = radius(rng);
                const double amp = style.amplitude * dim(rng);
                for (std::size_t r = 0; r < shape.height; ++r)
                    for (std::size_t c = 0; c < shape.width; ++c) {
                        const double dy = static_cast<double>(r) - oy, dx = static_cast<double>(c) - ox;
                        const double v = style.background + amp * std::exp(-(dy * dy + dx * dx) / (2.0 * rad * rad));
                        px(r, c) = clamp01(v + style.jitter * gauss(rng));
                    }
                break;
            }
            case OodFamily::Texture: {
                const bool checker = phase(rng) % 2 == 0;
                const int p = period(rng);
                const int py = phase(rng), pxs = phase(rng);
                const bool vertical = phase(rng) % 2 == 0;
                const double base = level(rng), con = contrast(rng);
                for (std::size_t r = 0; r < shape.height; ++r)
                    for (std::size_t c = 0; c < shape.width; ++c) {
                        const int cell_r = (static_cast<int>(r) + py) / p;
                        const int cell_c = (static_cast<int>(c) + pxs) / p;
                        const int parity = checker ? (cell_r + cell_c) % 2 : (vertical ? cell_c : cell_r) % 2;
                        px(r, c) = clamp01(base + (parity ? con : -con) + 0.05 * gauss(rng));
                    }
                break;
            }
        }
        ex.given_label = 0;
        ex.provenance = Provenance::OpenSetReplaced;
        ds.examples.push_back(std::move(ex));
    }
    return ds;
}

std::pair<Dataset, Dataset> split_validation(const Dataset& ds, const SplitSpec& spec) {
    if (!(spec.validation_fraction >= 0.0 && spec.validation_fraction < 1.0))
        throw ContractError("split_validation: fraction must be in [0,1)");
    const std::size_t n = ds.size();
    const auto n_val = static_cast<std::size_t>(std::llround(spec.validation_fraction * static_cast<double>(n)));
    if (n_val >= n) throw ContractError("split_validation: split leaves no training examples");

    Dataset train{{}, ds.dim, ds.num_classes, ds.image_shape};
    Dataset val{{}, ds.dim, ds.num_classes, ds.image_shape};
    if (n_val == 0) {
        train.examples = ds.examples;
        return {std::move(train), std::move(val)};
    }
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    auto rng = make_rng(spec.seed, "split");
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t i = 0; i < n; ++i)
        (i < n_val ? val : train).examples.push_back(ds.examples[perm[i]]);
    return {std::move(train), std::move(val)};
}

std::vector<std::vector<std::size_t>> minibatches(std::size_t n, std::size_t batch_size, std::uint64_t epoch_seed) {
    if (batch_size < 1) throw ContractError("minibatches: batch_size must be >= 1");
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    auto rng = make_rng(epoch_seed, "epoch");
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < n; start += batch_size)
        out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start),
                         perm.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch_size)));
    return out;
}

std::vector<std::vector<std::size_t>> minibatches(const Dataset& ds, std::size_t batch_size, std::uint64_t epoch_seed) {
    return minibatches(ds.size(), batch_size, epoch_seed);
}

// --- on-disk format ------------------------------------------------------------

namespace {
constexpr std::uint32_t kDatasetVersion = 1;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
    io::ByteWriter w;
    w.magic("OSND");
    w.u32(kDatasetVersion);
    w.u64(ds.size());
    w.u64(ds.dim);
    w.u64(ds.num_classes);
    w.u64(ds.image_shape ? ds.image_shape->height : 0);
    w.u64(ds.image_shape ? ds.image_shape->width : 0);
    for (const auto& ex : ds.examples) {
        if (ex.instance.size() != ds.dim) throw DataError("save_dataset: instance width mismatch");
        w.f64s(ex.instance.data(), ex.instance.size());
    }
    for (const auto& ex : ds.examples) {
        w.u32(static_cast<std::uint32_t>(ex.given_label));
        w.u8(static_cast<std::uint8_t>(ex.provenance));
        w.u8(ex.true_label ? 1 : 0);
        w.u32(ex.true_label ? static_cast<std::uint32_t>(*ex.true_label) : 0u);
    }
    w.write_with_crc(path);
}

Dataset load_dataset(const std::filesystem::path& path) {
    io::ByteReader r(path);
    r.expect_magic("OSND");
    r.expect_version(kDatasetVersion);
    const auto n = r.u64();
    Dataset ds;
    ds.dim = r.u64();
    ds.num_classes = r.u64();
    const auto h = r.u64(), w = r.u64();
    if (h || w) ds.image_shape = ImageShape{h, w};
    // Size check first so a short file reports truncation rather than a bad checksum.
    const std::size_t per_example = ds.dim * 8 + 10;
    if (ds.dim != 0 && n > r.remaining() / per_example) throw TruncatedError(r.name() + ": file truncated");
    if (r.remaining() < n * per_example + 4) throw TruncatedError(r.name() + ": file truncated");
    r.verify_crc();

    ds.examples.resize(n);
    for (auto& ex : ds.examples) {
        ex.instance.resize(ds.dim);
        r.f64s(ex.instance.data(), ds.dim);
    }
    for (auto& ex : ds.examples) {
        ex.given_label = static_cast<int>(r.u32());
        const auto prov = r.u8();
        if (prov > 2) throw FormatError(r.name() + ": unknown provenance code " + std::to_string(prov));
        ex.provenance = static_cast<Provenance>(prov);
        const bool has_true = r.u8() != 0;
        const auto t = r.u32();
        if (has_true) ex.true_label = static_cast<int>(t);
    }
    if (!r.at_end()) throw FormatError(r.name() + ": trailing bytes after dataset body");
    return ds;
}

void export_csv(const Dataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out << std::setprecision(17);
    for (const auto& ex : ds.examples) {
        for (double v : ex.instance) out << v << ',';
        out << ex.given_label << '\n';
    }
}

}  // namespace inscorr
