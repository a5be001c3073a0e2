#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "faultclust/cluster.hpp"
#include "faultclust/dimred.hpp"
#include "faultclust/error.hpp"
#include "faultclust/evalmetrics.hpp"
#include "faultclust/spectral.hpp"

namespace faultclust {

/// A pipeline stage failed; `stage()` names it.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& what)
        : Error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

enum class SilhouetteSpace { Clustering, Pca };

struct PipelineConfig {
    std::filesystem::path input;
    /// Optional labels (.csv or .jsonl label log).
    std::filesystem::path labels;
    std::filesystem::path output_dir = "run";

    FeatureConfig features;
    ReductionOptions reduction;
    KMeansOptions clustering;
    std::uint64_t seed = 0;

    LabelLevel level = LabelLevel::EventType;
    SilhouetteSpace silhouette_space = SilhouetteSpace::Clustering;
    std::size_t worksheet_per_cluster = 7;
    std::size_t workers = 1;

    /// Throws InvalidArgument for out-of-range values or missing input files.
    void validate() const;

    /// Seeds actually handed to t-SNE and K-Means, derived from `seed`.
    std::uint64_t tsne_seed() const;
    std::uint64_t kmeans_seed() const;

    friend bool operator==(const PipelineConfig& a, const PipelineConfig& b);
};

nlohmann::ordered_json config_to_json(const PipelineConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
PipelineConfig config_from_json(const nlohmann::json& j);
PipelineConfig load_config(const std::filesystem::path& path);
void save_config(const PipelineConfig& cfg, const std::filesystem::path& path);

std::string_view to_string(ReductionMode m);
ReductionMode parse_reduction_mode(std::string_view s);
std::string_view to_string(SilhouetteSpace s);
SilhouetteSpace parse_silhouette_space(std::string_view s);

/// Standard artifact names inside an output directory.
namespace artifacts {
inline constexpr const char* kFeatures = "features.csv";
inline constexpr const char* kEmbedding = "embedding.csv";
inline constexpr const char* kPcaScores = "pca_scores.csv";
inline constexpr const char* kKlTrace = "kl_trace.csv";
inline constexpr const char* kAssignments = "assignments.csv";
inline constexpr const char* kModel = "model.json";
inline constexpr const char* kClusterSizes = "cluster_sizes.csv";
inline constexpr const char* kMetrics = "metrics.json";
inline constexpr const char* kMetricsMarkdown = "metrics.md";
inline constexpr const char* kContingencyCounts = "contingency_counts.csv";
inline constexpr const char* kContingencyPercent = "contingency_percent.csv";
inline constexpr const char* kWorksheet = "worksheet.csv";
inline constexpr const char* kManifest = "run_manifest.json";
} // namespace artifacts

struct RunSummary {
    std::filesystem::path output_dir;
    std::vector<std::string> artifacts;
    std::size_t records = 0;
    std::size_t feature_dims = 0;
    std::size_t embedding_dims = 0;
    double inertia = 0.0;
    std::optional<double> final_kl;
    std::optional<MetricReport> metrics;
};

/// Runs features -> reduction -> clustering -> (evaluation) and writes every
/// artifact plus run_manifest.json. On failure, files written by this run are
/// removed and a StageError naming the stage is thrown.
RunSummary run_pipeline(const PipelineConfig& cfg);

/// Lower-case hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

struct WorksheetItem {
    std::size_t cluster = 0;
    std::int64_t sample_id = 0;
};

/// Up to `per_cluster` distinct random sample ids from each cluster (ascending
/// cluster, ascending id within a cluster). Deterministic for a fixed seed.
std::vector<WorksheetItem> sample_worksheet(std::span<const std::int64_t> record_ids,
                                            std::span<const std::size_t> clusters, std::size_t per_cluster,
                                            std::uint64_t seed);

void write_worksheet_csv(std::span<const WorksheetItem> items, const std::filesystem::path& path);

/// Rows of `table` reordered to follow `ids`. Throws InvalidArgument for an id
/// missing from the table.
Matrix align_points(const EmbeddingTable& table, std::span<const std::int64_t> ids);

/// Evaluates the artifacts of a run directory (assignments.csv, model.json and
/// the points file for `space`) against `labels`. The CLI `evaluate` command,
/// run_pipeline and the label server all go through here, so their metrics.json
/// bytes agree.
MetricReport evaluate_run(const std::filesystem::path& run_dir, std::span<const LabelRecord> labels, LabelLevel level,
                          SilhouetteSpace space);

} // namespace faultclust
