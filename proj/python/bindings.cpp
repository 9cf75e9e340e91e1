// Python bindings: data generation, noise, selection, correction and runs.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "inscorr/attack.hpp"
#include "inscorr/config.hpp"
#include "inscorr/errors.hpp"
#include "inscorr/noise.hpp"
#include "inscorr/pipeline.hpp"
#include "inscorr/runner.hpp"
#include "inscorr/select.hpp"

namespace py = pybind11;
using namespace inscorr;

namespace {

NoiseKind kind_from(const std::string& s) {
    const auto k = parse_noise_kind(s);
    if (!k) throw ConfigError("noise.kind", "unknown noise kind '" + s + "'");
    return *k;
}

ExperimentConfig config_from(const std::string& json_text, const std::vector<std::string>& overrides) {
    nlohmann::json tree = json_text.empty() ? nlohmann::json::object() : nlohmann::json::parse(json_text, nullptr, true, true);
    for (const auto& o : overrides) apply_override(tree, o);
    return config_from_json(tree);
}

py::dict metrics_dict(const EpochMetrics& m) {
    py::dict d;
    d["epoch"] = m.epoch;
    d["train_loss"] = m.train_loss;
    d["val_accuracy"] = m.val_accuracy;
    d["test_accuracy"] = m.test_accuracy;
    d["selection_precision"] = m.selection_precision;
    d["attack_success"] = m.attack_success;
    d["keep_fraction"] = m.keep_fraction;
    return d;
}

py::dict result_dict(const RunResult& r) {
    py::dict d;
    py::list metrics;
    for (const auto& m : r.metrics) metrics.append(metrics_dict(m));
    d["metrics"] = metrics;
    d["optimizer_steps"] = r.optimizer_steps;
    if (r.metrics.size() >= 10) {
        const auto s = last_ten_summary(r.metrics);
        d["last_ten_mean"] = s.mean;
        d["last_ten_std"] = s.std;
    } else {
        d["last_ten_mean"] = py::none();
        d["last_ten_std"] = py::none();
    }
    if (r.partition) {
        d["clean"] = r.partition->clean;
        d["mislabeled"] = r.partition->mislabeled;
    }
    return d;
}

}  // namespace

PYBIND11_MODULE(_inscorr, m) {
    m.doc() = "Open-set noisy label experiments";

    auto& base = py::register_exception<Error>(m, "InscorrError", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());

    py::class_<Dataset>(m, "Dataset")
        .def("__len__", &Dataset::size)
        .def_readonly("dim", &Dataset::dim)
        .def_readonly("num_classes", &Dataset::num_classes)
        .def_property_readonly("instances",
                               [](const Dataset& ds) {
                                   std::vector<std::vector<double>> out;
                                   for (const auto& ex : ds.examples) out.push_back(ex.instance);
                                   return out;
                               })
        .def_property_readonly("given_labels",
                               [](const Dataset& ds) {
                                   std::vector<int> out;
                                   for (const auto& ex : ds.examples) out.push_back(ex.given_label);
                                   return out;
                               })
        .def_property_readonly("true_labels",
                               [](const Dataset& ds) {
                                   std::vector<std::optional<int>> out;
                                   for (const auto& ex : ds.examples) out.push_back(ex.true_label);
                                   return out;
                               })
        .def_property_readonly("provenance",
                               [](const Dataset& ds) {
                                   std::vector<std::string> out;
                                   for (const auto& ex : ds.examples) out.emplace_back(provenance_name(ex.provenance));
                                   return out;
                               })
        .def("label_histogram", &Dataset::label_histogram)
        .def("save", [](const Dataset& ds, const std::filesystem::path& p) { save_dataset(ds, p); })
        .def("export_csv", [](const Dataset& ds, const std::filesystem::path& p) { export_csv(ds, p); });

    m.def("load_dataset", &load_dataset, py::arg("path"));
    m.def(
        "generate_synthetic",
        [](std::size_t classes, std::size_t per_class, std::size_t height, std::size_t width, std::uint64_t seed) {
            return generate_synthetic(classes, per_class, ImageShape{height, width}, seed);
        },
        py::arg("classes"), py::arg("per_class"), py::arg("height") = 16, py::arg("width") = 16, py::arg("seed") = 0);
    m.def(
        "generate_ood_source",
        [](std::size_t count, std::size_t classes, std::size_t height, std::size_t width, std::uint64_t seed) {
            return generate_ood_source(ImageShape{height, width}, count, seed, classes);
        },
        py::arg("count"), py::arg("classes") = 2, py::arg("height") = 16, py::arg("width") = 16, py::arg("seed") = 0);
    m.def(
        "inject_noise",
        [](const Dataset& ds, const std::string& kind, double rate, std::uint64_t seed, const Dataset* ood) {
            NoiseSpec spec;
            spec.kind = kind_from(kind);
            spec.rate = rate;
            spec.seed = seed;
            return inject_noise(ds, spec, ood);
        },
        py::arg("dataset"), py::arg("kind"), py::arg("rate"), py::arg("seed") = 0, py::arg("ood") = nullptr);
    m.def("noise_count", &noise_count, py::arg("rate"), py::arg("n"));

    m.def(
        "drop_rate",
        [](double tau, std::size_t ramp_epochs, std::size_t epoch) {
            const SelectionSchedule s{tau, ramp_epochs};
            s.validate();
            return drop_rate(s, epoch);
        },
        py::arg("tau"), py::arg("ramp_epochs"), py::arg("epoch"));
    m.def("kept_count", &kept_count, py::arg("keep_fraction"), py::arg("batch"));
    m.def(
        "select_small_loss",
        [](const std::vector<double>& losses, double keep) {
            auto s = select_small_loss(losses, keep);
            return py::make_tuple(s.kept, s.discarded);
        },
        py::arg("losses"), py::arg("keep_fraction"));

    py::class_<ModelParams>(m, "Model")
        .def_property_readonly("input_dim", [](const ModelParams& p) { return p.spec.input_dim; })
        .def_property_readonly("num_classes", [](const ModelParams& p) { return p.spec.num_classes; })
        .def("flat", &ModelParams::flat)
        .def("predict", [](const ModelParams& p, const std::vector<std::vector<double>>& rows) {
            std::vector<double> buf;
            for (const auto& r : rows) buf.insert(buf.end(), r.begin(), r.end());
            return predict(p, Tensor::from({rows.size(), p.spec.input_dim}, std::move(buf)));
        });
    m.def(
        "init_model",
        [](std::size_t input_dim, std::vector<std::size_t> hidden, std::size_t classes, std::uint64_t seed) {
            return init_model(ModelSpec{input_dim, std::move(hidden), classes}, seed);
        },
        py::arg("input_dim"), py::arg("hidden_widths"), py::arg("num_classes"), py::arg("seed") = 0);
    m.def("load_checkpoint_model", [](const std::filesystem::path& p) { return load_checkpoint(p).params; });

    m.def(
        "correct_instance",
        [](const ModelParams& p, const std::vector<double>& x, int target, double budget, std::size_t steps,
           const std::string& norm, std::optional<double> step_size) {
            AttackConfig cfg;
            cfg.budget = budget;
            cfg.steps = steps;
            cfg.step_size = step_size;
            if (norm == "linf") cfg.norm = AttackNorm::Linf;
            else if (norm == "l2") cfg.norm = AttackNorm::L2;
            else throw ConfigError("attack.norm", "expected linf or l2");
            const auto r = correct_instance(p, x, target, cfg);
            py::dict d;
            d["instance"] = r.instance;
            d["initial_loss"] = r.initial_loss;
            d["loss"] = r.loss;
            d["success"] = r.success;
            d["iterations"] = r.iterations;
            return d;
        },
        py::arg("model"), py::arg("x"), py::arg("target"), py::arg("budget") = 8.0 / 255.0, py::arg("steps") = 40,
        py::arg("norm") = "linf", py::arg("step_size") = py::none());

    m.def(
        "resolve_config",
        [](const std::string& json_text, const std::vector<std::string>& overrides) {
            return to_json(config_from(json_text, overrides)).dump();
        },
        py::arg("config_json") = "", py::arg("overrides") = std::vector<std::string>{},
        "Resolved config (all keys) as a JSON string");
    m.def(
        "config_hash",
        [](const std::string& json_text, const std::vector<std::string>& overrides) {
            return config_hash(config_from(json_text, overrides));
        },
        py::arg("config_json") = "", py::arg("overrides") = std::vector<std::string>{});
    m.def(
        "run_experiment",
        [](const std::string& json_text, const std::vector<std::string>& overrides) {
            const auto cfg = config_from(json_text, overrides);
            RunResult r;
            {
                py::gil_scoped_release release;
                r = run_experiment(cfg);
            }
            auto d = result_dict(r);
            d["config_hash"] = config_hash(cfg);
            return d;
        },
        py::arg("config_json") = "", py::arg("overrides") = std::vector<std::string>{});
    m.def(
        "run_and_record",
        [](const std::string& json_text, const std::vector<std::string>& overrides,
           std::optional<std::filesystem::path> root) {
            const auto cfg = config_from(json_text, overrides);
            const auto rec = run_and_record(cfg, root ? *root : default_output_root());
            auto d = result_dict(rec.result);
            d["config_hash"] = rec.hash;
            d["dir"] = rec.dir;
            return d;
        },
        py::arg("config_json") = "", py::arg("overrides") = std::vector<std::string>{}, py::arg("output_root") = py::none());
}
