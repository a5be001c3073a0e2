#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "faultclust/labels.hpp"
#include "faultclust/matrix.hpp"

namespace faultclust {

/// Granularity of the label columns in a contingency table.
enum class LabelLevel { EventType, FaultClass };

std::string_view to_string(LabelLevel level);
LabelLevel parse_label_level(std::string_view s);

/// Cluster x label-class counts over the labeled subset.
struct ContingencyTable {
    /// counts[cluster][label]
    std::vector<std::vector<std::size_t>> counts;
    std::vector<std::string> label_names;
    std::vector<std::size_t> row_totals;
    std::vector<std::size_t> col_totals;
    std::size_t total = 0;

    std::size_t clusters() const noexcept { return counts.size(); }
    std::size_t labels() const noexcept { return label_names.size(); }
};

/// Builds the table from per-record cluster assignments and expert labels.
/// `n_clusters` of 0 sizes the rows from the largest assignment. Throws NotFound
/// for a label whose sample id has no assignment.
ContingencyTable contingency(std::span<const std::int64_t> record_ids, std::span<const std::size_t> clusters,
                             std::span<const LabelRecord> labels, LabelLevel level, std::size_t n_clusters = 0);

/// Each non-empty row scaled to sum to 100.
std::vector<std::vector<double>> row_percentages(const ContingencyTable& t);

/// (1/N) sum_k max_j counts[k][j].
double purity(const ContingencyTable& t);
/// max_j counts[k][j] / row_total[k].
double cluster_purity(const ContingencyTable& t, std::size_t cluster);
/// Shannon entropy (bits) of the label distribution within one cluster.
double cluster_entropy(const ContingencyTable& t, std::size_t cluster);

struct ClusterMetrics {
    std::size_t cluster = 0;
    std::size_t count = 0;
    double purity = 0.0;
    double entropy = 0.0;
    std::optional<double> silhouette;
};

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

struct MetricSummary {
    MeanStd purity;
    MeanStd entropy;
    std::optional<MeanStd> silhouette;
};

struct MetricReport {
    std::vector<ClusterMetrics> per_cluster;
    /// Unweighted mean and population std over clusters.
    MetricSummary raw;
    /// Weights N_k / sum N_k; std is the square root of the weighted second central moment.
    MetricSummary weighted;

    double global_purity = 0.0;
    /// Size-weighted mean of cluster entropies.
    double global_entropy = 0.0;
    /// Mean silhouette over all labeled samples.
    std::optional<double> global_silhouette;

    LabelLevel level = LabelLevel::EventType;
    std::string silhouette_space;
    std::size_t labeled_count = 0;
};

/// Raw and size-weighted aggregates of per-cluster metrics. Global fields are
/// left for the caller.
MetricReport aggregate_report(std::span<const ClusterMetrics> per_cluster, std::span<const std::size_t> sizes);

/// Full evaluation over the labeled subset. When `points` is given (rows aligned
/// with record_ids) per-cluster and global silhouettes are computed among the
/// labeled samples in that space, tagged with `silhouette_space`.
MetricReport evaluate(std::span<const std::int64_t> record_ids, std::span<const std::size_t> clusters,
                      std::span<const LabelRecord> labels, LabelLevel level, const Matrix* points = nullptr,
                      std::string silhouette_space = "none", std::size_t n_clusters = 0);

struct ClusterSize {
    std::size_t cluster = 0;
    std::size_t count = 0;
    double percent = 0.0;
};

/// Populated clusters sorted by count (descending), ties by cluster index.
std::vector<ClusterSize> cluster_size_table(std::span<const std::size_t> assignments);

struct SizeDispersion {
    /// Population standard deviation of the sizes.
    double std = 0.0;
    double std_percent_of_total = 0.0;
};

SizeDispersion size_dispersion(std::span<const std::size_t> sizes);

/// JSON with schema_version 1; byte-stable for equal inputs.
std::string report_to_json(const MetricReport& r);
/// Markdown tables laid out as global / aggregate / per-cluster sections.
std::string report_to_markdown(const MetricReport& r, std::string_view method = "K-Means");

/// CSV cluster,<label...>,total with counts, or row percentages when `percent`.
void write_contingency_csv(const ContingencyTable& t, const std::filesystem::path& path, bool percent);
/// CSV cluster,count,percent.
void write_cluster_sizes_csv(std::span<const ClusterSize> sizes, const std::filesystem::path& path);

} // namespace faultclust
