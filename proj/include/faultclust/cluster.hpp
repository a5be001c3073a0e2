#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "faultclust/matrix.hpp"

namespace faultclust {

enum class KMeansInit { KMeansPlusPlus, Random };

struct KMeansOptions {
    std::size_t k = 15;
    KMeansInit init = KMeansInit::KMeansPlusPlus;
    std::size_t n_init = 10;
    std::size_t max_iter = 300;
    /// Converged when the largest centroid shift falls below this.
    double tol = 1e-4;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
};

struct ClusterModel {
    std::size_t k = 0;
    Matrix centroids;
    std::vector<std::size_t> assignments;
    /// Within-cluster sum of squared distances.
    double inertia = 0.0;
    std::vector<std::size_t> sizes;
    std::size_t iterations_run = 0;
    std::uint64_t seed = 0;
    /// Objective after each assignment step of the winning restart.
    std::vector<double> inertia_trace;
};

/// Lloyd's algorithm with `n_init` restarts, keeping the lowest-inertia model.
ClusterModel kmeans_fit(const Matrix& x, const KMeansOptions& opts);

/// Nearest centroid in squared Euclidean distance; ties go to the lowest index.
std::vector<std::size_t> kmeans_assign(const ClusterModel& m, const Matrix& x);

/// (k, inertia) for every k in `ks`, fitted with `base` options (k overridden).
std::vector<std::pair<std::size_t, double>> elbow_curve(const Matrix& x, std::span<const std::size_t> ks,
                                                        const KMeansOptions& base);

/// Per-sample silhouette values. Singletons score 0; a = b = 0 scores 0.
std::vector<double> silhouette_samples(const Matrix& x, std::span<const std::size_t> assignments);

/// Mean silhouette over all samples. Needs at least two distinct clusters and three points.
double silhouette_score(const Matrix& x, std::span<const std::size_t> assignments);

/// JSON {schema_version, k, seed, inertia, centroids, sizes, iterations_run}.
void write_model_json(const ClusterModel& m, const std::filesystem::path& path);
ClusterModel read_model_json(const std::filesystem::path& path);

/// CSV record_id,cluster.
void write_assignments_csv(std::span<const std::int64_t> ids, std::span<const std::size_t> assignments,
                           const std::filesystem::path& path);

struct AssignmentTable {
    std::vector<std::int64_t> record_ids;
    std::vector<std::size_t> clusters;
};
AssignmentTable read_assignments_csv(const std::filesystem::path& path);

} // namespace faultclust
