#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <fstream>
#include <set>
#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "faultclust/labels.hpp"
#include "faultclust/pipeline.hpp"
#include "faultclust/rng.hpp"
#include "faultclust/synthgen.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace faultclust;
namespace fs = std::filesystem;

namespace {

struct SmallRun {
    testing_support::TempDir dir;
    fs::path manifest;
    fs::path labels;

    SmallRun() {
        DatasetMeta meta;
        meta.timesteps = 512;
        const auto g = generate_dataset({{EventType::Normal, 15},
                                         {EventType::ScThreePhase, 15},
                                         {EventType::SwitchOn, 15},
                                         {EventType::Transient, 15}},
                                        meta, 3);
        manifest = dir / "data" / "ds.json";
        fs::create_directories(manifest.parent_path());
        save_dataset(g.dataset, manifest);
        labels = dir / "data" / "labels.csv";
        write_labels_csv(g.labels, labels);
    }

    PipelineConfig config(const std::string& out) const {
        PipelineConfig cfg;
        cfg.input = manifest;
        cfg.labels = labels;
        cfg.output_dir = dir / out;
        cfg.seed = 11;
        cfg.reduction.tsne.perplexity = 10.0;
        cfg.reduction.tsne.iterations = 300;
        cfg.reduction.tsne.exaggeration_iterations = 100;
        cfg.clustering.k = 4;
        return cfg;
    }
};

#ifdef FAULTCLUST_CLI_PATH
int run_cli(const std::string& args) {
    const std::string cmd = std::string(FAULTCLUST_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}
#endif

} // namespace

TEST_CASE("config json round-trips and rejects unknown keys", "[pipeline]") {
    testing_support::TempDir dir;
    PipelineConfig cfg;
    cfg.input = "data/ds.json";
    cfg.labels = "data/labels.jsonl";
    cfg.seed = 99;
    cfg.reduction.mode = ReductionMode::Pca;
    cfg.reduction.variance_target = 0.9;
    cfg.clustering.k = 6;
    cfg.clustering.init = KMeansInit::Random;
    cfg.silhouette_space = SilhouetteSpace::Pca;
    cfg.level = LabelLevel::FaultClass;
    save_config(cfg, dir / "c.json");
    CHECK(load_config(dir / "c.json") == cfg);
    CHECK(config_from_json(config_to_json(cfg)) == cfg);

    auto j = nlohmann::json(config_to_json(cfg));
    j["clustering"]["kk"] = 3;
    CHECK_THROWS_AS(config_from_json(j), InvalidArgument);
    auto top = nlohmann::json(config_to_json(cfg));
    top["colour"] = "red";
    CHECK_THROWS_AS(config_from_json(top), InvalidArgument);
    CHECK_THROWS_AS(config_from_json(nlohmann::json{{"seed", "abc"}}), InvalidArgument);
    CHECK(config_from_json(nlohmann::json::object()) == PipelineConfig{});
}

TEST_CASE("derived seeds differ from the base seed and each other", "[pipeline]") {
    PipelineConfig cfg;
    cfg.seed = 5;
    CHECK(cfg.tsne_seed() != cfg.kmeans_seed());
    CHECK(cfg.tsne_seed() == derive_seed(5, 1));
    CHECK(cfg.kmeans_seed() == derive_seed(5, 2));
}

TEST_CASE("worksheet sampling caps per cluster and is deterministic", "[pipeline]") {
    std::vector<std::int64_t> ids;
    std::vector<std::size_t> clusters;
    for (std::int64_t i = 0; i < 2000; ++i) {
        ids.push_back(i * 3);
        // Cluster 14 gets only 4 members.
        clusters.push_back(i < 4 ? 14 : static_cast<std::size_t>(i % 14));
    }
    const auto w = sample_worksheet(ids, clusters, 7, 21);
    CHECK(w.size() == 14 * 7 + 4);
    CHECK(w.size() <= 105);
    std::set<std::int64_t> unique;
    std::map<std::size_t, std::size_t> per;
    const std::set<std::int64_t> valid(ids.begin(), ids.end());
    for (std::size_t i = 0; i < w.size(); ++i) {
        unique.insert(w[i].sample_id);
        ++per[w[i].cluster];
        REQUIRE(valid.count(w[i].sample_id) == 1);
        const auto pos = static_cast<std::size_t>(w[i].sample_id / 3);
        REQUIRE(clusters[pos] == w[i].cluster);
        if (i > 0) {
            REQUIRE((w[i - 1].cluster < w[i].cluster ||
                     (w[i - 1].cluster == w[i].cluster && w[i - 1].sample_id < w[i].sample_id)));
        }
    }
    CHECK(unique.size() == w.size());
    CHECK(per.size() == 15);
    CHECK(per[14] == 4);
    const auto again = sample_worksheet(ids, clusters, 7, 21);
    CHECK(std::equal(w.begin(), w.end(), again.begin(), again.end(),
                     [](const WorksheetItem& a, const WorksheetItem& b) {
                         return a.cluster == b.cluster && a.sample_id == b.sample_id;
                     }));
    const auto other = sample_worksheet(ids, clusters, 7, 22);
    CHECK_FALSE(std::equal(w.begin(), w.end(), other.begin(), other.end(),
                           [](const WorksheetItem& a, const WorksheetItem& b) { return a.sample_id == b.sample_id; }));
}

TEST_CASE("sha256 of a known string", "[pipeline]") {
    testing_support::TempDir dir;
    {
        std::ofstream out(dir / "abc.txt", std::ios::binary);
        out << "abc";
    }
    CHECK(sha256_file(dir / "abc.txt") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("run_pipeline writes every artifact and a consistent manifest", "[pipeline]") {
    SmallRun fx;
    const auto cfg = fx.config("run");
    const auto summary = run_pipeline(cfg);
    for (const char* name :
         {artifacts::kFeatures, artifacts::kEmbedding, artifacts::kPcaScores, artifacts::kKlTrace,
          artifacts::kAssignments, artifacts::kModel, artifacts::kClusterSizes, artifacts::kMetrics,
          artifacts::kMetricsMarkdown, artifacts::kContingencyCounts, artifacts::kContingencyPercent,
          artifacts::kWorksheet, artifacts::kManifest}) {
        INFO(name);
        CHECK(fs::exists(cfg.output_dir / name));
    }
    CHECK(summary.records == 60);
    CHECK(summary.embedding_dims == 2);
    REQUIRE(summary.metrics.has_value());
    CHECK(summary.metrics->global_purity >= 0.5);

    const auto m = nlohmann::json::parse(oracle::read_bytes(cfg.output_dir / artifacts::kManifest));
    CHECK(m.at("seeds").at("tsne") == cfg.tsne_seed());
    CHECK(m.at("inputs").at("dataset_manifest").at("sha256") == sha256_file(fx.manifest));
    CHECK(m.at("inputs").at("labels").at("sha256") == sha256_file(fx.labels));
    CHECK(m.at("artifacts").size() == 12);
    for (const auto& [name, hash] : m.at("artifacts").items()) {
        INFO(name);
        CHECK(hash == sha256_file(cfg.output_dir / name));
    }
    CHECK(config_from_json(m.at("config")) == cfg);

    const auto labels = load_labels(fx.labels);
    const auto report = evaluate_run(cfg.output_dir, labels, cfg.level, cfg.silhouette_space);
    CHECK(report_to_json(report) == oracle::read_bytes(cfg.output_dir / artifacts::kMetrics));
}

TEST_CASE("run_pipeline is byte-identical across repeats and worker counts", "[pipeline]") {
    SmallRun fx;
    auto a = fx.config("a");
    auto b = fx.config("b");
    b.workers = 3;
    run_pipeline(a);
    run_pipeline(b);
    for (const char* name : {artifacts::kAssignments, artifacts::kEmbedding, artifacts::kMetrics}) {
        INFO(name);
        CHECK(oracle::read_bytes(a.output_dir / name) == oracle::read_bytes(b.output_dir / name));
    }
}

TEST_CASE("pca mode skips the KL trace", "[pipeline]") {
    SmallRun fx;
    auto cfg = fx.config("pca");
    cfg.reduction.mode = ReductionMode::Pca;
    cfg.labels.clear();
    const auto s = run_pipeline(cfg);
    CHECK_FALSE(fs::exists(cfg.output_dir / artifacts::kKlTrace));
    CHECK_FALSE(fs::exists(cfg.output_dir / artifacts::kMetrics));
    CHECK_FALSE(s.final_kl.has_value());
    CHECK(s.embedding_dims >= 1);
}

TEST_CASE("a failing stage is named and its partial outputs are removed", "[pipeline]") {
    SmallRun fx;
    const auto bad_labels = fx.dir / "data" / "bad.csv";
    const std::vector<LabelRecord> labels{{12345, FaultClass::Normal, "Normal", Phase::NotApplicable, ""}};
    write_labels_csv(labels, bad_labels);
    auto cfg = fx.config("fail");
    cfg.labels = bad_labels;
    try {
        run_pipeline(cfg);
        FAIL("expected a StageError");
    } catch (const StageError& e) {
        CHECK(e.stage() == "evaluate");
    }
    CHECK(fs::is_empty(cfg.output_dir));

    auto bad = fx.config("never");
    bad.clustering.k = 0;
    try {
        run_pipeline(bad);
        FAIL("expected a StageError");
    } catch (const StageError& e) {
        CHECK(e.stage() == "config");
    }
    bad = fx.config("never");
    bad.input = fx.dir / "missing.json";
    CHECK_THROWS_AS(run_pipeline(bad), StageError);
}

TEST_CASE("align_points reorders rows by id", "[pipeline]") {
    EmbeddingTable t;
    t.record_ids = {5, 3, 9};
    t.coords = Matrix(3, 1, std::vector<double>{50, 30, 90});
    const std::vector<std::int64_t> want{9, 5, 3};
    const auto m = align_points(t, want);
    CHECK(m(0, 0) == 90);
    CHECK(m(1, 0) == 50);
    CHECK(m(2, 0) == 30);
    const std::vector<std::int64_t> missing{1};
    CHECK_THROWS_AS(align_points(t, missing), InvalidArgument);
}

#ifdef FAULTCLUST_CLI_PATH
TEST_CASE("command-line exit codes", "[pipeline][cli]") {
    SmallRun fx;
    const auto d = fx.dir.path().string();
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("frobnicate") == 2);
    CHECK(run_cli("run -i " + d + "/nope.json -o " + d + "/x") == 2);
    CHECK(run_cli("run -i " + fx.manifest.string() + " -l " + fx.labels.string() + " -o " + d +
                  "/cli -k 4 --iterations 300 --perplexity 10 --seed 11") == 0);
    CHECK(fs::exists(fs::path(d) / "cli" / artifacts::kManifest));
    CHECK(run_cli("evaluate -r " + d + "/cli") == 2);
    CHECK(run_cli("evaluate -r " + d + "/cli -l " + fx.labels.string() + " -o " + d + "/m.json") == 0);
    CHECK(oracle::read_bytes(fs::path(d) / "m.json") == oracle::read_bytes(fs::path(d) / "cli" / artifacts::kMetrics));
    CHECK(run_cli("sample -r " + d + "/cli --per-cluster 3 -o " + d + "/w.csv") == 0);
    CHECK(run_cli("gen -o " + d + "/g/ds.json --per-class 2 --timesteps 256") == 0);
    CHECK(fs::exists(fs::path(d) / "g" / "ds.labels.csv"));
}
#endif
