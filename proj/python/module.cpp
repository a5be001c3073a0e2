#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <map>

#include "faultclust/cluster.hpp"
#include "faultclust/dimred.hpp"
#include "faultclust/evalmetrics.hpp"
#include "faultclust/pipeline.hpp"
#include "faultclust/preprocess.hpp"
#include "faultclust/spectral.hpp"
#include "faultclust/synthgen.hpp"

namespace py = pybind11;
using namespace faultclust;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const DoubleArray& a) {
    if (a.ndim() != 2) {
        throw InvalidArgument("expected a 2-D array");
    }
    Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
    std::copy(a.data(), a.data() + a.size(), m.data().begin());
    return m;
}

py::array_t<double> to_array(const Matrix& m) {
    py::array_t<double> out({m.rows(), m.cols()});
    std::copy(m.data().begin(), m.data().end(), out.mutable_data());
    return out;
}

template <typename T>
py::array_t<T> to_array(const std::vector<T>& v) {
    py::array_t<T> out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(v.size())});
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

std::vector<double> to_vector(const DoubleArray& a) {
    if (a.ndim() != 1) {
        throw InvalidArgument("expected a 1-D array");
    }
    return {a.data(), a.data() + a.size()};
}

ContingencyTable table_from_counts(const std::vector<std::vector<std::size_t>>& counts) {
    ContingencyTable t;
    t.counts = counts;
    const std::size_t labels = counts.empty() ? 0 : counts.front().size();
    t.col_totals.assign(labels, 0);
    for (std::size_t j = 0; j < labels; ++j) {
        t.label_names.push_back("c" + std::to_string(j));
    }
    for (const auto& row : counts) {
        if (row.size() != labels) {
            throw InvalidArgument("count rows must have equal length");
        }
        std::size_t total = 0;
        for (std::size_t j = 0; j < labels; ++j) {
            total += row[j];
            t.col_totals[j] += row[j];
        }
        t.row_totals.push_back(total);
        t.total += total;
    }
    return t;
}

py::dict label_dict(const LabelRecord& l) {
    py::dict d;
    d["sample_id"] = l.sample_id;
    d["fault_class"] = std::string(to_string(l.fault_class));
    d["fault_type"] = l.fault_type;
    d["phase"] = std::string(to_string(l.phase));
    d["comment"] = l.comment;
    return d;
}

std::vector<LabelRecord> labels_from_json_text(const std::string& text) {
    std::vector<LabelRecord> out;
    for (const auto& j : nlohmann::json::parse(text)) {
        out.push_back(label_from_json(j));
    }
    return out;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Fault waveform clustering core";

    // Translators run most-recent first, so the base class is registered before its subclasses.
    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<InvalidArgument>(m, "InvalidArgument", py::make_tuple(base, py::handle(PyExc_ValueError)));
    py::register_exception<NotFound>(m, "NotFound", py::make_tuple(base, py::handle(PyExc_KeyError)));

    m.def(
        "generate",
        [](const std::map<std::string, std::size_t>& counts, std::size_t timesteps, std::uint64_t seed, double noise) {
            std::map<EventType, std::size_t> c;
            for (const auto& [name, n] : counts) {
                c[parse_event_type(name)] = n;
            }
            DatasetMeta meta;
            meta.timesteps = timesteps;
            GeneratorOptions opts;
            opts.noise_std = noise;
            const auto g = generate_dataset(c, meta, seed, opts);
            const auto n = g.dataset.records.size();
            py::array_t<float> samples({n, kChannels, timesteps});
            float* dst = samples.mutable_data();
            for (const auto& r : g.dataset.records) {
                dst = std::copy(r.samples.begin(), r.samples.end(), dst);
            }
            py::list labels;
            std::vector<std::string> events;
            for (std::size_t i = 0; i < n; ++i) {
                labels.append(label_dict(g.labels[i]));
                events.emplace_back(to_string(g.events[i]));
            }
            return py::make_tuple(samples, labels, events);
        },
        py::arg("counts"), py::arg("timesteps") = 2048, py::arg("seed") = 0, py::arg("noise") = 0.05,
        "Synthetic records as (samples[N, 6, T] float32, labels, event_types).");

    m.def(
        "fft_magnitude",
        [](const DoubleArray& x, double fs) {
            const auto s = fft_magnitude(to_vector(x), fs);
            return py::make_tuple(to_array(s.magnitudes), s.bin_hz);
        },
        py::arg("x"), py::arg("sampling_rate_hz") = 1.0);

    m.def(
        "decompose",
        [](const DoubleArray& y, std::size_t period) {
            auto d = decompose(to_vector(y), period);
            detect_anomalies(d);
            py::dict out;
            out["trend"] = to_array(d.trend);
            out["seasonal"] = to_array(d.seasonal);
            out["residual"] = to_array(d.residual);
            out["zero_indicator"] = std::vector<bool>(d.zero_indicator);
            out["anomaly_mask"] = std::vector<bool>(d.anomaly_mask);
            return out;
        },
        py::arg("y"), py::arg("period"));

    m.def(
        "pca",
        [](const DoubleArray& x, double variance_target) {
            const auto x_m = to_matrix(x);
            const auto model = pca_fit(x_m, variance_target);
            return py::make_tuple(to_array(pca_transform(model, x_m)), to_array(model.explained_variance_ratio));
        },
        py::arg("x"), py::arg("variance_target") = 0.95, "Returns (scores, explained_variance_ratio).");

    m.def(
        "tsne",
        [](const DoubleArray& x, double perplexity, std::size_t iterations, std::uint64_t seed) {
            TsneConfig cfg;
            cfg.perplexity = perplexity;
            cfg.iterations = iterations;
            cfg.seed = seed;
            const auto e = tsne_embed(to_matrix(x), cfg);
            return py::make_tuple(to_array(e.coords), e.final_kl);
        },
        py::arg("x"), py::arg("perplexity") = 30.0, py::arg("iterations") = 1000, py::arg("seed") = 0);

    m.def(
        "kmeans",
        [](const DoubleArray& x, std::size_t k, std::size_t n_init, std::uint64_t seed) {
            KMeansOptions opts;
            opts.k = k;
            opts.n_init = n_init;
            opts.seed = seed;
            const auto model = kmeans_fit(to_matrix(x), opts);
            return py::make_tuple(to_array(model.assignments), to_array(model.centroids), model.inertia);
        },
        py::arg("x"), py::arg("k"), py::arg("n_init") = 10, py::arg("seed") = 0,
        "Returns (assignments, centroids, inertia).");

    m.def(
        "silhouette_score",
        [](const DoubleArray& x, const std::vector<std::size_t>& labels) {
            return silhouette_score(to_matrix(x), labels);
        },
        py::arg("x"), py::arg("labels"));

    m.def(
        "cluster_purity_entropy",
        [](const std::vector<std::size_t>& counts) {
            const auto t = table_from_counts({counts});
            return py::make_tuple(cluster_purity(t, 0), cluster_entropy(t, 0));
        },
        py::arg("counts"), "Purity and entropy (bits) of one cluster's label counts.");

    m.def(
        "purity",
        [](const std::vector<std::vector<std::size_t>>& counts) { return purity(table_from_counts(counts)); },
        py::arg("counts"));

    m.def(
        "size_dispersion",
        [](const std::vector<std::size_t>& sizes) {
            const auto d = size_dispersion(sizes);
            return py::make_tuple(d.std, d.std_percent_of_total);
        },
        py::arg("sizes"));

    m.def(
        "evaluate",
        [](const std::vector<std::int64_t>& ids, const std::vector<std::size_t>& clusters,
           const std::string& labels_json, const std::string& level) {
            const auto labels = labels_from_json_text(labels_json);
            return report_to_json(evaluate(ids, clusters, labels, parse_label_level(level)));
        },
        py::arg("record_ids"), py::arg("clusters"), py::arg("labels_json"), py::arg("level") = "event_type",
        "Metrics report JSON for labels given as a JSON array of label objects.");

    m.def(
        "run_pipeline",
        [](const std::string& config_json) {
            const auto cfg = config_from_json(nlohmann::json::parse(config_json));
            RunSummary s;
            {
                py::gil_scoped_release release;
                s = run_pipeline(cfg);
            }
            py::dict out;
            out["output_dir"] = s.output_dir.string();
            out["artifacts"] = s.artifacts;
            out["records"] = s.records;
            out["feature_dims"] = s.feature_dims;
            out["embedding_dims"] = s.embedding_dims;
            out["inertia"] = s.inertia;
            out["purity"] = s.metrics ? py::cast(s.metrics->global_purity) : py::none();
            return out;
        },
        py::arg("config_json"));

    m.def("sha256_file", [](const std::filesystem::path& p) { return sha256_file(p); }, py::arg("path"));
}
