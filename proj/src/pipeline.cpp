#include "faultclust/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <map>
#include <unordered_map>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "faultclust/labels.hpp"
#include "faultclust/rng.hpp"
#include "faultclust/waveform_store.hpp"

namespace faultclust {

namespace fs = std::filesystem;

namespace {

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string_view to_string(KMeansInit i) { return i == KMeansInit::KMeansPlusPlus ? "kmeanspp" : "random"; }

KMeansInit parse_init(std::string_view s) {
    if (s == "kmeanspp") {
        return KMeansInit::KMeansPlusPlus;
    }
    if (s == "random") {
        return KMeansInit::Random;
    }
    throw InvalidArgument(fmt::format("unknown k-means init '{}' (expected kmeanspp or random)", s));
}

// Reads `key` from `j` into `out` when present.
template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
    if (const auto it = j.find(key); it != j.end()) {
        out = it->get<T>();
    }
}

void reject_unknown(const nlohmann::json& j, std::initializer_list<std::string_view> known, std::string_view where) {
    for (const auto& [k, v] : j.items()) {
        if (std::find(known.begin(), known.end(), k) == known.end()) {
            throw InvalidArgument(fmt::format("config: unknown key '{}' in {}", k, where));
        }
    }
}

} // namespace

Matrix align_points(const EmbeddingTable& table, std::span<const std::int64_t> ids) {
    std::unordered_map<std::int64_t, std::size_t> row_of;
    for (std::size_t i = 0; i < table.record_ids.size(); ++i) {
        row_of[table.record_ids[i]] = i;
    }
    Matrix out(ids.size(), table.coords.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto it = row_of.find(ids[i]);
        if (it == row_of.end()) {
            throw InvalidArgument(fmt::format("points are missing record {}", ids[i]));
        }
        const auto src = table.coords.row(it->second);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

std::string_view to_string(ReductionMode m) { return m == ReductionMode::Pca ? "pca" : "pca_then_tsne"; }

ReductionMode parse_reduction_mode(std::string_view s) {
    if (s == "pca") {
        return ReductionMode::Pca;
    }
    if (s == "pca_then_tsne") {
        return ReductionMode::PcaThenTsne;
    }
    throw InvalidArgument(fmt::format("unknown reduction mode '{}' (expected pca or pca_then_tsne)", s));
}

std::string_view to_string(SilhouetteSpace s) { return s == SilhouetteSpace::Clustering ? "clustering" : "pca"; }

SilhouetteSpace parse_silhouette_space(std::string_view s) {
    if (s == "clustering") {
        return SilhouetteSpace::Clustering;
    }
    if (s == "pca") {
        return SilhouetteSpace::Pca;
    }
    throw InvalidArgument(fmt::format("unknown silhouette space '{}' (expected clustering or pca)", s));
}

void PipelineConfig::validate() const {
    if (input.empty()) {
        throw InvalidArgument("config: input dataset path is required");
    }
    if (!fs::exists(input)) {
        throw InvalidArgument(fmt::format("config: input '{}' does not exist", input.string()));
    }
    if (!labels.empty() && !fs::exists(labels)) {
        throw InvalidArgument(fmt::format("config: labels '{}' do not exist", labels.string()));
    }
    if (output_dir.empty()) {
        throw InvalidArgument("config: output_dir is required");
    }
    if (!(reduction.variance_target > 0.0 && reduction.variance_target <= 1.0)) {
        throw InvalidArgument("config: variance_target must lie in (0, 1]");
    }
    if (reduction.tsne_input_components == 0) {
        throw InvalidArgument("config: tsne_input_components must be positive");
    }
    if (clustering.k < 1 || clustering.n_init < 1) {
        throw InvalidArgument("config: k and n_init must be at least 1");
    }
    if (workers < 1) {
        throw InvalidArgument("config: workers must be at least 1");
    }
}

std::uint64_t PipelineConfig::tsne_seed() const { return derive_seed(seed, 1); }
std::uint64_t PipelineConfig::kmeans_seed() const { return derive_seed(seed, 2); }

bool operator==(const PipelineConfig& a, const PipelineConfig& b) { return config_to_json(a) == config_to_json(b); }

nlohmann::ordered_json config_to_json(const PipelineConfig& cfg) {
    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    j["input"] = cfg.input.string();
    j["labels"] = cfg.labels.string();
    j["output_dir"] = cfg.output_dir.string();
    j["seed"] = cfg.seed;
    j["workers"] = cfg.workers;
    j["features"] = {{"normalize_input", cfg.features.normalize_input},
                     {"truncate", cfg.features.truncate},
                     {"pad_to_pow2", cfg.features.pad_to_pow2}};
    const auto& t = cfg.reduction.tsne;
    nlohmann::ordered_json tsne;
    tsne["perplexity"] = t.perplexity;
    tsne["iterations"] = t.iterations;
    tsne["learning_rate"] = t.learning_rate;
    tsne["early_exaggeration"] = t.early_exaggeration;
    tsne["exaggeration_iterations"] = t.exaggeration_iterations;
    nlohmann::ordered_json red;
    red["mode"] = to_string(cfg.reduction.mode);
    red["variance_target"] = cfg.reduction.variance_target;
    red["tsne_input_components"] = cfg.reduction.tsne_input_components;
    red["tsne"] = std::move(tsne);
    j["reduction"] = std::move(red);
    nlohmann::ordered_json cl;
    cl["k"] = cfg.clustering.k;
    cl["init"] = to_string(cfg.clustering.init);
    cl["n_init"] = cfg.clustering.n_init;
    cl["max_iter"] = cfg.clustering.max_iter;
    cl["tol"] = cfg.clustering.tol;
    j["clustering"] = std::move(cl);
    nlohmann::ordered_json met;
    met["level"] = to_string(cfg.level);
    met["silhouette_space"] = to_string(cfg.silhouette_space);
    met["worksheet_per_cluster"] = cfg.worksheet_per_cluster;
    j["metrics"] = std::move(met);
    return j;
}

PipelineConfig config_from_json(const nlohmann::json& j) {
    PipelineConfig cfg;
    try {
        reject_unknown(j,
                       {"schema_version", "input", "labels", "output_dir", "seed", "workers", "features", "reduction",
                        "clustering", "metrics"},
                       "top level");
        if (j.contains("schema_version") && j["schema_version"].get<int>() != 1) {
            throw InvalidArgument("config: unsupported schema_version");
        }
        if (j.contains("input")) {
            cfg.input = j["input"].get<std::string>();
        }
        if (j.contains("labels")) {
            cfg.labels = j["labels"].get<std::string>();
        }
        if (j.contains("output_dir")) {
            cfg.output_dir = j["output_dir"].get<std::string>();
        }
        read_opt(j, "seed", cfg.seed);
        read_opt(j, "workers", cfg.workers);
        if (const auto it = j.find("features"); it != j.end()) {
            reject_unknown(*it, {"normalize_input", "truncate", "pad_to_pow2"}, "features");
            read_opt(*it, "normalize_input", cfg.features.normalize_input);
            read_opt(*it, "truncate", cfg.features.truncate);
            read_opt(*it, "pad_to_pow2", cfg.features.pad_to_pow2);
        }
        if (const auto it = j.find("reduction"); it != j.end()) {
            reject_unknown(*it, {"mode", "variance_target", "tsne_input_components", "tsne"}, "reduction");
            if (it->contains("mode")) {
                cfg.reduction.mode = parse_reduction_mode((*it)["mode"].get<std::string>());
            }
            read_opt(*it, "variance_target", cfg.reduction.variance_target);
            read_opt(*it, "tsne_input_components", cfg.reduction.tsne_input_components);
            if (const auto t = it->find("tsne"); t != it->end()) {
                reject_unknown(*t,
                               {"perplexity", "iterations", "learning_rate", "early_exaggeration",
                                "exaggeration_iterations"},
                               "reduction.tsne");
                read_opt(*t, "perplexity", cfg.reduction.tsne.perplexity);
                read_opt(*t, "iterations", cfg.reduction.tsne.iterations);
                read_opt(*t, "learning_rate", cfg.reduction.tsne.learning_rate);
                read_opt(*t, "early_exaggeration", cfg.reduction.tsne.early_exaggeration);
                read_opt(*t, "exaggeration_iterations", cfg.reduction.tsne.exaggeration_iterations);
            }
        }
        if (const auto it = j.find("clustering"); it != j.end()) {
            reject_unknown(*it, {"k", "init", "n_init", "max_iter", "tol"}, "clustering");
            read_opt(*it, "k", cfg.clustering.k);
            if (it->contains("init")) {
                cfg.clustering.init = parse_init((*it)["init"].get<std::string>());
            }
            read_opt(*it, "n_init", cfg.clustering.n_init);
            read_opt(*it, "max_iter", cfg.clustering.max_iter);
            read_opt(*it, "tol", cfg.clustering.tol);
        }
        if (const auto it = j.find("metrics"); it != j.end()) {
            reject_unknown(*it, {"level", "silhouette_space", "worksheet_per_cluster"}, "metrics");
            if (it->contains("level")) {
                cfg.level = parse_label_level((*it)["level"].get<std::string>());
            }
            if (it->contains("silhouette_space")) {
                cfg.silhouette_space = parse_silhouette_space((*it)["silhouette_space"].get<std::string>());
            }
            read_opt(*it, "worksheet_per_cluster", cfg.worksheet_per_cluster);
        }
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(fmt::format("config: {}", e.what()));
    }
    return cfg;
}

PipelineConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw InvalidArgument(fmt::format("cannot open config '{}'", path.string()));
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(fmt::format("malformed config '{}': {}", path.string(), e.what()));
    }
    return config_from_json(j);
}

void save_config(const PipelineConfig& cfg, const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError(fmt::format("cannot write config '{}'", path.string()));
    }
    out << config_to_json(cfg).dump(2) << '\n';
}

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError(fmt::format("cannot hash '{}'", path.string()));
    }
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw Error("sha256: digest initialisation failed");
    }
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        const auto got = in.gcount();
        if (got > 0) {
            EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(got));
        }
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    std::string hex;
    hex.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        hex += fmt::format("{:02x}", md[i]);
    }
    return hex;
}

std::vector<WorksheetItem> sample_worksheet(std::span<const std::int64_t> record_ids,
                                            std::span<const std::size_t> clusters, std::size_t per_cluster,
                                            std::uint64_t seed) {
    if (record_ids.size() != clusters.size()) {
        throw InvalidArgument("sample_worksheet: ids and clusters differ in length");
    }
    std::map<std::size_t, std::vector<std::int64_t>> members;
    for (std::size_t i = 0; i < record_ids.size(); ++i) {
        members[clusters[i]].push_back(record_ids[i]);
    }
    std::vector<WorksheetItem> out;
    for (auto& [cluster, ids] : members) {
        Rng rng(derive_seed(seed, cluster));
        const std::size_t take = std::min(per_cluster, ids.size());
        for (std::size_t i = 0; i < take; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.below(ids.size() - i));
            std::swap(ids[i], ids[j]);
        }
        std::sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(take));
        for (std::size_t i = 0; i < take; ++i) {
            out.push_back({cluster, ids[i]});
        }
    }
    return out;
}

void write_worksheet_csv(std::span<const WorksheetItem> items, const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError(fmt::format("cannot write '{}'", path.string()));
    }
    out << "cluster,sample_id\n";
    for (const auto& it : items) {
        out << it.cluster << ',' << it.sample_id << '\n';
    }
}

MetricReport evaluate_run(const fs::path& run_dir, std::span<const LabelRecord> labels, LabelLevel level,
                          SilhouetteSpace space) {
    const auto table = read_assignments_csv(run_dir / artifacts::kAssignments);
    const auto model = read_model_json(run_dir / artifacts::kModel);
    const auto points_path =
        run_dir / (space == SilhouetteSpace::Clustering ? artifacts::kEmbedding : artifacts::kPcaScores);
    const Matrix points = align_points(read_embedding_csv(points_path), table.record_ids);
    return evaluate(table.record_ids, table.clusters, labels, level, &points, std::string(to_string(space)), model.k);
}

RunSummary run_pipeline(const PipelineConfig& cfg) {
    try {
        cfg.validate();
    } catch (const Error& e) {
        throw StageError("config", e.what());
    }

    const fs::path out = cfg.output_dir;
    std::vector<fs::path> written;
    std::string stage = "setup";
    RunSummary summary;
    summary.output_dir = out;

    const auto path_of = [&](const char* name) {
        written.push_back(out / name);
        summary.artifacts.emplace_back(name);
        return out / name;
    };

    try {
        fs::create_directories(out);

        stage = "load";
        const Dataset ds = load_dataset(cfg.input);
        summary.records = ds.records.size();

        stage = "features";
        FeatureConfig fcfg = cfg.features;
        fcfg.workers = cfg.workers;
        const FeatureMatrix fm = build_features(ds, fcfg);
        summary.feature_dims = fm.features.cols();
        write_features_csv(fm, path_of(artifacts::kFeatures));

        stage = "reduce";
        ReductionOptions ropts = cfg.reduction;
        ropts.tsne.seed = cfg.tsne_seed();
        ropts.tsne.workers = cfg.workers;
        const Reduction red = reduce_for_clustering(fm.features, ropts);
        summary.embedding_dims = red.embedding.coords.cols();
        write_embedding_csv(fm.record_ids, red.embedding.coords, path_of(artifacts::kEmbedding));
        write_embedding_csv(fm.record_ids, red.pca_scores, path_of(artifacts::kPcaScores));
        if (cfg.reduction.mode == ReductionMode::PcaThenTsne) {
            write_kl_trace_csv(red.embedding.kl_trace, path_of(artifacts::kKlTrace));
            summary.final_kl = red.embedding.final_kl;
        }

        stage = "cluster";
        KMeansOptions kopts = cfg.clustering;
        kopts.seed = cfg.kmeans_seed();
        kopts.workers = cfg.workers;
        const ClusterModel model = kmeans_fit(red.embedding.coords, kopts);
        summary.inertia = model.inertia;
        write_assignments_csv(fm.record_ids, model.assignments, path_of(artifacts::kAssignments));
        write_model_json(model, path_of(artifacts::kModel));
        write_cluster_sizes_csv(cluster_size_table(model.assignments), path_of(artifacts::kClusterSizes));
        write_worksheet_csv(sample_worksheet(fm.record_ids, model.assignments, cfg.worksheet_per_cluster, cfg.seed),
                            path_of(artifacts::kWorksheet));

        if (!cfg.labels.empty()) {
            stage = "evaluate";
            const auto labels = load_labels(cfg.labels);
            const auto report = evaluate_run(out, labels, cfg.level, cfg.silhouette_space);
            AssignmentTable table{fm.record_ids, model.assignments};
            {
                std::ofstream mj(path_of(artifacts::kMetrics), std::ios::binary | std::ios::trunc);
                mj << report_to_json(report);
            }
            {
                std::ofstream md(path_of(artifacts::kMetricsMarkdown), std::ios::binary | std::ios::trunc);
                md << report_to_markdown(report, cfg.reduction.mode == ReductionMode::Pca ? "K-Means PCA"
                                                                                         : "K-Means t-SNE");
            }
            const auto table_counts = contingency(table.record_ids, table.clusters, labels, cfg.level, model.k);
            write_contingency_csv(table_counts, path_of(artifacts::kContingencyCounts), false);
            write_contingency_csv(table_counts, path_of(artifacts::kContingencyPercent), true);
            summary.metrics = report;
        }

        stage = "manifest";
        nlohmann::ordered_json m;
        m["schema_version"] = 1;
        m["tool"] = "faultclust";
        m["created_utc"] = utc_now();
        m["config"] = config_to_json(cfg);
        m["seeds"] = {{"base", cfg.seed}, {"tsne", cfg.tsne_seed()}, {"kmeans", cfg.kmeans_seed()}};
        nlohmann::ordered_json inputs;
        inputs["dataset_manifest"] = {{"path", cfg.input.string()}, {"sha256", sha256_file(cfg.input)}};
        const auto blob = blob_path_for(cfg.input);
        inputs["dataset_blob"] = {{"path", blob.string()}, {"sha256", sha256_file(blob)}};
        if (!cfg.labels.empty()) {
            inputs["labels"] = {{"path", cfg.labels.string()}, {"sha256", sha256_file(cfg.labels)}};
        }
        m["inputs"] = std::move(inputs);
        nlohmann::ordered_json arts;
        for (const auto& name : summary.artifacts) {
            arts[name] = sha256_file(out / name);
        }
        m["artifacts"] = std::move(arts);
        nlohmann::ordered_json sum;
        sum["records"] = summary.records;
        sum["feature_dims"] = summary.feature_dims;
        sum["embedding_dims"] = summary.embedding_dims;
        sum["k"] = model.k;
        sum["inertia"] = summary.inertia;
        sum["final_kl"] = summary.final_kl ? nlohmann::ordered_json(*summary.final_kl) : nlohmann::ordered_json(nullptr);
        sum["purity"] = summary.metrics ? nlohmann::ordered_json(summary.metrics->global_purity)
                                        : nlohmann::ordered_json(nullptr);
        m["summary"] = std::move(sum);
        std::ofstream mf(path_of(artifacts::kManifest), std::ios::binary | std::ios::trunc);
        mf << m.dump(2) << '\n';
        if (!mf) {
            throw IoError("cannot write run manifest");
        }
    } catch (const std::exception& e) {
        std::error_code ec;
        for (const auto& p : written) {
            fs::remove(p, ec);
        }
        throw StageError(stage, e.what());
    }
    return summary;
}

} // namespace faultclust
