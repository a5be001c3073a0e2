#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "faultclust/matrix.hpp"

namespace faultclust {

// ---------------------------------------------------------------------------
// PCA
// ---------------------------------------------------------------------------

struct PcaModel {
    std::vector<double> mean;
    /// D x K, orthonormal columns sorted by decreasing explained variance. Each
    /// column's largest-magnitude loading is positive.
    Matrix components;
    std::vector<double> explained_variance;
    std::vector<double> explained_variance_ratio;
    /// Numerical rank of the centred training data.
    std::size_t rank = 0;

    std::size_t n_components() const noexcept { return components.cols(); }
};

/// Keeps the smallest number of components whose cumulative explained-variance
/// ratio reaches `variance_target` (in (0, 1]). Throws when all rows are identical.
PcaModel pca_fit(const Matrix& x, double variance_target = 0.95);

/// Keeps exactly min(n_components, rank) components.
PcaModel pca_fit_components(const Matrix& x, std::size_t n_components);

/// (x - mean) * components.
Matrix pca_transform(const PcaModel& model, const Matrix& x);

// ---------------------------------------------------------------------------
// t-SNE (exact)
// ---------------------------------------------------------------------------

struct TsneConfig {
    std::size_t out_dims = 2;
    double perplexity = 30.0;
    std::size_t iterations = 1000;
    double learning_rate = 200.0;
    double early_exaggeration = 12.0;
    std::uint64_t seed = 0;
    /// Iterations with exaggerated affinities and momentum 0.5. Afterwards momentum is 0.8 and
    /// any step that raises KL is undone with a halved step size, so the KL trace never rises.
    std::size_t exaggeration_iterations = 250;
    std::size_t workers = 1;

    /// Throws InvalidArgument when the config cannot be used for `n_points` inputs.
    void validate(std::size_t n_points) const;
};

struct Embedding {
    Matrix coords;
    /// KL(P || Q) at the returned coordinates; 0 for linear reductions.
    double final_kl = 0.0;
    /// KL(P || Q) before each gradient step (unexaggerated P).
    std::vector<double> kl_trace;
};

/// Symmetric joint probabilities p_ij = (p_{j|i} + p_{i|j}) / 2N with per-row
/// Gaussian bandwidths calibrated to `perplexity` by bisection.
Matrix tsne_p_matrix(const Matrix& x, double perplexity, std::size_t workers = 1);

/// Student-t joint probabilities q_ij of an embedding (zero diagonal, sums to 1).
Matrix tsne_q_matrix(const Matrix& y);

/// KL(P || Q(y)).
double tsne_kl(const Matrix& p, const Matrix& y);

/// Gradient of KL(P || Q(y)) with respect to y.
Matrix tsne_gradient(const Matrix& p, const Matrix& y);

Embedding tsne_embed(const Matrix& x, const TsneConfig& cfg);

// ---------------------------------------------------------------------------
// Combined reduction used ahead of clustering
// ---------------------------------------------------------------------------

enum class ReductionMode { Pca, PcaThenTsne };

struct ReductionOptions {
    ReductionMode mode = ReductionMode::PcaThenTsne;
    double variance_target = 0.95;
    /// PCA dimensions fed to t-SNE (capped at the data rank).
    std::size_t tsne_input_components = 50;
    TsneConfig tsne;
};

struct Reduction {
    Embedding embedding;
    PcaModel pca;
    /// PCA scores (always computed; equal to the embedding for ReductionMode::Pca).
    Matrix pca_scores;
};

Reduction reduce_for_clustering(const Matrix& features, const ReductionOptions& opts);

/// CSV record_id,x,y[,z] for up to three dimensions, record_id,pc1..pcK beyond.
void write_embedding_csv(std::span<const std::int64_t> ids, const Matrix& coords, const std::filesystem::path& path);

struct EmbeddingTable {
    std::vector<std::int64_t> record_ids;
    Matrix coords;
};
EmbeddingTable read_embedding_csv(const std::filesystem::path& path);

/// CSV iteration,kl.
void write_kl_trace_csv(std::span<const double> trace, const std::filesystem::path& path);

} // namespace faultclust
