#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "faultclust/cluster.hpp"
#include "faultclust/dimred.hpp"
#include "faultclust/evalmetrics.hpp"
#include "faultclust/label_api.hpp"
#include "faultclust/labels.hpp"
#include "faultclust/pipeline.hpp"
#include "faultclust/rng.hpp"
#include "faultclust/spectral.hpp"
#include "faultclust/synthgen.hpp"
#include "faultclust/waveform_store.hpp"

namespace fs = std::filesystem;
using namespace faultclust;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitUsage = 2;

LabelServer* g_server = nullptr;

void on_signal(int) {
    if (g_server != nullptr) {
        g_server->stop();
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError(fmt::format("cannot write '{}'", path.string()));
    }
    out << text;
}

struct GenArgs {
    fs::path out = "data/dataset.json";
    fs::path labels;
    std::vector<std::string> classes = {"Normal",   "SC-1P-A",   "SC-LL",     "SC-DLG",
                                        "SC-3PH",   "SwitchOn",  "SwitchOff", "Transient"};
    std::size_t per_class = 50;
    std::size_t timesteps = 2048;
    std::uint64_t seed = 0;
    double noise = 0.05;
};

struct StageArgs {
    fs::path input;
    fs::path output;
    fs::path features = "features.csv";
    fs::path embedding = "embedding.csv";
    fs::path run_dir = "run";
    fs::path labels;
    fs::path config;
    std::string mode = "pca_then_tsne";
    std::string level = "event_type";
    std::string space = "clustering";
    double variance = 0.95;
    double perplexity = 30.0;
    std::size_t iterations = 1000;
    std::size_t k = 15;
    std::size_t n_init = 10;
    std::size_t per_cluster = 7;
    std::size_t truncate = 0;
    bool no_normalize = false;
    std::uint64_t seed = 0;
};

struct ServeArgs {
    fs::path dataset;
    fs::path run_dir;
    fs::path label_log = "labels.jsonl";
    std::string host = "127.0.0.1";
    int port = 8080;
};

int cmd_gen(const GenArgs& a, std::size_t workers) {
    std::map<EventType, std::size_t> counts;
    for (const auto& c : a.classes) {
        counts[parse_event_type(c)] += a.per_class;
    }
    DatasetMeta meta;
    meta.timesteps = a.timesteps;
    GeneratorOptions opts;
    opts.noise_std = a.noise;
    opts.workers = workers;
    const auto g = generate_dataset(counts, meta, a.seed, opts);
    if (a.out.has_parent_path()) {
        fs::create_directories(a.out.parent_path());
    }
    save_dataset(g.dataset, a.out);
    const fs::path labels = a.labels.empty() ? fs::path(a.out).replace_extension(".labels.csv") : a.labels;
    write_labels_csv(g.labels, labels);
    std::cout << fmt::format("wrote {} records to {} and labels to {}\n", g.dataset.records.size(), a.out.string(),
                             labels.string());
    return kExitOk;
}

int cmd_features(const StageArgs& a, std::size_t workers) {
    FeatureConfig cfg;
    cfg.normalize_input = !a.no_normalize;
    cfg.truncate = a.truncate;
    cfg.workers = workers;
    const auto fm = build_features(load_dataset(a.input), cfg);
    write_features_csv(fm, a.output.empty() ? a.features : a.output);
    std::cout << fmt::format("{} records x {} features\n", fm.features.rows(), fm.features.cols());
    return kExitOk;
}

int cmd_reduce(const StageArgs& a, std::size_t workers) {
    const auto fm = read_features_csv(a.features);
    ReductionOptions opts;
    opts.mode = parse_reduction_mode(a.mode);
    opts.variance_target = a.variance;
    opts.tsne.perplexity = a.perplexity;
    opts.tsne.iterations = a.iterations;
    opts.tsne.seed = derive_seed(a.seed, 1);
    opts.tsne.workers = workers;
    const auto red = reduce_for_clustering(fm.features, opts);
    fs::create_directories(a.run_dir);
    write_embedding_csv(fm.record_ids, red.embedding.coords, a.run_dir / artifacts::kEmbedding);
    write_embedding_csv(fm.record_ids, red.pca_scores, a.run_dir / artifacts::kPcaScores);
    if (opts.mode == ReductionMode::PcaThenTsne) {
        write_kl_trace_csv(red.embedding.kl_trace, a.run_dir / artifacts::kKlTrace);
    }
    std::cout << fmt::format("pca kept {} components; embedding has {} dims\n", red.pca.rank,
                             red.embedding.coords.cols());
    return kExitOk;
}

int cmd_cluster(const StageArgs& a, std::size_t workers) {
    const auto emb = read_embedding_csv(a.embedding);
    KMeansOptions opts;
    opts.k = a.k;
    opts.n_init = a.n_init;
    opts.seed = derive_seed(a.seed, 2);
    opts.workers = workers;
    const auto model = kmeans_fit(emb.coords, opts);
    fs::create_directories(a.run_dir);
    write_assignments_csv(emb.record_ids, model.assignments, a.run_dir / artifacts::kAssignments);
    write_model_json(model, a.run_dir / artifacts::kModel);
    write_cluster_sizes_csv(cluster_size_table(model.assignments), a.run_dir / artifacts::kClusterSizes);
    std::cout << fmt::format("k={} inertia={:.6g} iterations={}\n", model.k, model.inertia, model.iterations_run);
    return kExitOk;
}

int cmd_evaluate(const StageArgs& a) {
    const auto labels = load_labels(a.labels);
    const auto report = evaluate_run(a.run_dir, labels, parse_label_level(a.level), parse_silhouette_space(a.space));
    const auto json = report_to_json(report);
    if (a.output.empty()) {
        std::cout << json;
    } else {
        write_text(a.output, json);
    }
    return kExitOk;
}

int cmd_sample(const StageArgs& a) {
    const auto table = read_assignments_csv(a.run_dir / artifacts::kAssignments);
    const auto items = sample_worksheet(table.record_ids, table.clusters, a.per_cluster, a.seed);
    const fs::path out = a.output.empty() ? a.run_dir / artifacts::kWorksheet : a.output;
    write_worksheet_csv(items, out);
    std::cout << fmt::format("{} samples written to {}\n", items.size(), out.string());
    return kExitOk;
}

int cmd_run(const StageArgs& a, CLI::App& sub, std::size_t workers, bool workers_given) {
    PipelineConfig cfg = a.config.empty() ? PipelineConfig{} : load_config(a.config);
    if (sub.count("--input") > 0) {
        cfg.input = a.input;
    }
    if (sub.count("--labels") > 0) {
        cfg.labels = a.labels;
    }
    if (sub.count("--out") > 0) {
        cfg.output_dir = a.run_dir;
    }
    if (sub.count("--seed") > 0) {
        cfg.seed = a.seed;
    }
    if (sub.count("--mode") > 0) {
        cfg.reduction.mode = parse_reduction_mode(a.mode);
    }
    if (sub.count("--k") > 0) {
        cfg.clustering.k = a.k;
    }
    if (sub.count("--iterations") > 0) {
        cfg.reduction.tsne.iterations = a.iterations;
    }
    if (sub.count("--perplexity") > 0) {
        cfg.reduction.tsne.perplexity = a.perplexity;
    }
    if (workers_given) {
        cfg.workers = workers;
    }
    const auto summary = run_pipeline(cfg);
    std::cout << fmt::format("{} records, {} features, {}-d embedding, inertia {:.6g}", summary.records,
                             summary.feature_dims, summary.embedding_dims, summary.inertia);
    if (summary.metrics) {
        std::cout << fmt::format(", purity {:.4f}", summary.metrics->global_purity);
    }
    std::cout << fmt::format("\nartifacts in {}\n", summary.output_dir.string());
    return kExitOk;
}

int cmd_serve(const ServeArgs& a, const StageArgs& s) {
    LabelServiceConfig cfg;
    cfg.dataset = a.dataset;
    cfg.run_dir = a.run_dir;
    cfg.label_log = a.label_log;
    cfg.seed = s.seed;
    cfg.worksheet_per_cluster = s.per_cluster;
    cfg.level = parse_label_level(s.level);
    cfg.silhouette_space = parse_silhouette_space(s.space);
    LabelService service(cfg);
    LabelServer server(service);
    const int port = server.bind(a.host, a.port);
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cout << fmt::format("listening on http://{}:{}\n", a.host, port) << std::flush;
    server.listen();
    g_server = nullptr;
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Unsupervised clustering of power-grid fault waveforms"};
    app.require_subcommand(1);
    std::size_t workers = 1;
    app.add_option("-j,--workers", workers, "Worker threads")->check(CLI::PositiveNumber);

    GenArgs gen;
    auto* g = app.add_subcommand("gen", "Generate a labeled synthetic dataset");
    g->add_option("-o,--out", gen.out, "Manifest path (blob written alongside)");
    g->add_option("--labels", gen.labels, "Labels CSV path");
    g->add_option("--classes", gen.classes, "Event types to generate");
    g->add_option("--per-class", gen.per_class, "Records per event type")->check(CLI::PositiveNumber);
    g->add_option("--timesteps", gen.timesteps, "Samples per channel")->check(CLI::PositiveNumber);
    g->add_option("--seed", gen.seed, "Random seed");
    g->add_option("--noise", gen.noise, "Gaussian noise std (per unit)");

    StageArgs st;
    auto* f = app.add_subcommand("features", "Compute FFT feature vectors");
    f->add_option("-i,--input", st.input, "Dataset manifest")->required();
    f->add_option("-o,--out", st.output, "Features CSV");
    f->add_option("--truncate", st.truncate, "Keep the first N samples (0 = all)");
    f->add_flag("--no-normalize", st.no_normalize, "Skip min-max scaling");

    auto* r = app.add_subcommand("reduce", "PCA and optional t-SNE");
    r->add_option("-f,--features", st.features, "Features CSV")->required();
    r->add_option("-o,--out", st.run_dir, "Output directory");
    r->add_option("--mode", st.mode, "pca or pca_then_tsne");
    r->add_option("--variance", st.variance, "PCA cumulative variance target");
    r->add_option("--perplexity", st.perplexity, "t-SNE perplexity");
    r->add_option("--iterations", st.iterations, "t-SNE iterations");
    r->add_option("--seed", st.seed, "Random seed");

    auto* c = app.add_subcommand("cluster", "K-Means on an embedding");
    c->add_option("-e,--embedding", st.embedding, "Embedding CSV")->required();
    c->add_option("-o,--out", st.run_dir, "Output directory");
    c->add_option("-k,--k", st.k, "Number of clusters")->check(CLI::PositiveNumber);
    c->add_option("--n-init", st.n_init, "Restarts")->check(CLI::PositiveNumber);
    c->add_option("--seed", st.seed, "Random seed");

    auto* e = app.add_subcommand("evaluate", "Purity, entropy and silhouette of a run");
    e->add_option("-r,--run", st.run_dir, "Run directory")->required();
    e->add_option("-l,--labels", st.labels, "Labels (.csv or .jsonl)")->required();
    e->add_option("--level", st.level, "event_type or fault_class");
    e->add_option("--space", st.space, "Silhouette space: clustering or pca");
    e->add_option("-o,--out", st.output, "Write metrics JSON here instead of stdout");

    auto* run = app.add_subcommand("run", "Full pipeline from a config file");
    run->add_option("-c,--config", st.config, "Pipeline config (JSON)");
    run->add_option("-i,--input", st.input, "Dataset manifest");
    run->add_option("-l,--labels", st.labels, "Labels for evaluation");
    run->add_option("-o,--out", st.run_dir, "Output directory");
    run->add_option("--seed", st.seed, "Random seed");
    run->add_option("--mode", st.mode, "pca or pca_then_tsne");
    run->add_option("-k,--k", st.k, "Number of clusters")->check(CLI::PositiveNumber);
    run->add_option("--iterations", st.iterations, "t-SNE iterations");
    run->add_option("--perplexity", st.perplexity, "t-SNE perplexity");

    auto* s = app.add_subcommand("sample", "Draw the labeling worksheet");
    s->add_option("-r,--run", st.run_dir, "Run directory")->required();
    s->add_option("--per-cluster", st.per_cluster, "Samples per cluster")->check(CLI::PositiveNumber);
    s->add_option("--seed", st.seed, "Random seed");
    s->add_option("-o,--out", st.output, "Worksheet CSV");

    ServeArgs sv;
    auto* srv = app.add_subcommand("serve", "Labeling HTTP API");
    srv->add_option("-d,--dataset", sv.dataset, "Dataset manifest")->required();
    srv->add_option("-r,--run", sv.run_dir, "Run directory");
    srv->add_option("--labels-log", sv.label_log, "Append-only label log (.jsonl)");
    srv->add_option("--host", sv.host, "Bind address");
    srv->add_option("--port", sv.port, "Port (0 picks a free one)");
    srv->add_option("--per-cluster", st.per_cluster, "Worksheet samples per cluster");
    srv->add_option("--seed", st.seed, "Worksheet seed");
    srv->add_option("--level", st.level, "event_type or fault_class");
    srv->add_option("--space", st.space, "Silhouette space: clustering or pca");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (g->parsed()) {
            return cmd_gen(gen, workers);
        }
        if (f->parsed()) {
            return cmd_features(st, workers);
        }
        if (r->parsed()) {
            return cmd_reduce(st, workers);
        }
        if (c->parsed()) {
            return cmd_cluster(st, workers);
        }
        if (e->parsed()) {
            return cmd_evaluate(st);
        }
        if (run->parsed()) {
            return cmd_run(st, *run, workers, app.count("--workers") > 0);
        }
        if (s->parsed()) {
            return cmd_sample(st);
        }
        if (srv->parsed()) {
            return cmd_serve(sv, st);
        }
    } catch (const StageError& err) {
        std::cerr << "error: " << err.what() << '\n';
        return err.stage() == "config" ? kExitUsage : kExitInternal;
    } catch (const InvalidArgument& err) {
        std::cerr << "error: " << err.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << '\n';
        return kExitInternal;
    }
    return kExitUsage;
}
