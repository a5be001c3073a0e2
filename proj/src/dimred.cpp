#include "faultclust/dimred.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "faultclust/csv.hpp"
#include "faultclust/error.hpp"
#include "faultclust/parallel.hpp"
#include "faultclust/rng.hpp"

namespace faultclust {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMatrix> as_eigen(const Matrix& m) {
    return {m.data().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

void require_finite(const Matrix& m, const char* what) {
    for (const double v : m.data()) {
        if (!std::isfinite(v)) {
            throw InvalidArgument(fmt::format("{}: input contains non-finite values", what));
        }
    }
}

// Full SVD-based fit; `pick` chooses K from the explained-variance ratios and rank.
template <typename Pick>
PcaModel pca_fit_impl(const Matrix& x, Pick pick) {
    if (x.rows() < 2) {
        throw InvalidArgument("pca_fit: need at least 2 rows");
    }
    if (x.cols() == 0) {
        throw InvalidArgument("pca_fit: need at least 1 column");
    }
    require_finite(x, "pca_fit");

    const auto xe = as_eigen(x);
    const Eigen::RowVectorXd mean = xe.colwise().mean();
    const Eigen::MatrixXd centred = xe.rowwise() - mean;

    Eigen::BDCSVD<Eigen::MatrixXd> svd(centred, Eigen::ComputeThinV);
    const Eigen::VectorXd& s = svd.singularValues();
    const double s0 = s.size() > 0 ? s(0) : 0.0;
    const double rank_tol =
        s0 * static_cast<double>(std::max(x.rows(), x.cols())) * std::numeric_limits<double>::epsilon();
    std::size_t rank = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s(i) > rank_tol) {
            ++rank;
        }
    }
    if (rank == 0 || s0 == 0.0) {
        throw InvalidArgument("pca_fit: input has rank 0 (all rows identical)");
    }

    double total = 0.0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        total += s(i) * s(i);
    }
    std::vector<double> ratios(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        ratios[i] = s(static_cast<Eigen::Index>(i)) * s(static_cast<Eigen::Index>(i)) / total;
    }
    const std::size_t k = std::clamp<std::size_t>(pick(ratios, rank), 1, rank);

    PcaModel m;
    m.rank = rank;
    m.mean.assign(mean.data(), mean.data() + mean.size());
    m.components = Matrix(x.cols(), k);
    const double dof = static_cast<double>(x.rows() - 1);
    for (std::size_t c = 0; c < k; ++c) {
        const auto v = svd.matrixV().col(static_cast<Eigen::Index>(c));
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        const double sign = v(arg) < 0.0 ? -1.0 : 1.0;
        for (std::size_t d = 0; d < x.cols(); ++d) {
            m.components(d, c) = sign * v(static_cast<Eigen::Index>(d));
        }
        const double sv = s(static_cast<Eigen::Index>(c));
        m.explained_variance.push_back(sv * sv / dof);
        m.explained_variance_ratio.push_back(ratios[c]);
    }
    return m;
}

// Squared Euclidean distance matrix with exact zeros on the diagonal.
Matrix squared_distances(const Matrix& x, std::size_t workers) {
    const std::size_t n = x.rows();
    Matrix d(n, n);
    parallel_for(n, workers, [&](std::size_t i) {
        for (std::size_t j = 0; j < n; ++j) {
            d(i, j) = i == j ? 0.0 : squared_distance(x.row(i), x.row(j));
        }
    });
    return d;
}

constexpr double kProbFloor = 1e-12;

// Row-wise Student-t kernel w_ij = 1 / (1 + |y_i - y_j|^2); returns per-row sums.
std::vector<double> student_kernel(const Matrix& y, Matrix& w, std::size_t workers) {
    const std::size_t n = y.rows();
    std::vector<double> row_sums(n, 0.0);
    parallel_for(n, workers, [&](std::size_t i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double v = i == j ? 0.0 : 1.0 / (1.0 + squared_distance(y.row(i), y.row(j)));
            w(i, j) = v;
            s += v;
        }
        row_sums[i] = s;
    });
    return row_sums;
}

double ordered_sum(const std::vector<double>& v) {
    double s = 0.0;
    for (const double x : v) {
        s += x;
    }
    return s;
}

double kl_from_kernel(const Matrix& p, const Matrix& w, double z, std::size_t workers) {
    const std::size_t n = p.rows();
    std::vector<double> row_kl(n, 0.0);
    parallel_for(n, workers, [&](std::size_t i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) {
                continue;
            }
            const double pij = p(i, j);
            if (pij > 0.0) {
                const double qij = std::max(w(i, j) / z, kProbFloor);
                s += pij * std::log(pij / qij);
            }
        }
        row_kl[i] = s;
    });
    return ordered_sum(row_kl);
}

// grad_i = 4 sum_j (scale * p_ij - q_ij) w_ij (y_i - y_j)
void gradient_from_kernel(const Matrix& p, double p_scale, const Matrix& y, const Matrix& w, double z, Matrix& grad,
                          std::size_t workers) {
    const std::size_t n = y.rows();
    const std::size_t d = y.cols();
    parallel_for(n, workers, [&](std::size_t i) {
        auto g = grad.row(i);
        std::fill(g.begin(), g.end(), 0.0);
        const auto yi = y.row(i);
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) {
                continue;
            }
            const double wij = w(i, j);
            const double mult = 4.0 * (p_scale * p(i, j) - wij / z) * wij;
            const auto yj = y.row(j);
            for (std::size_t k = 0; k < d; ++k) {
                g[k] += mult * (yi[k] - yj[k]);
            }
        }
    });
}

} // namespace

PcaModel pca_fit(const Matrix& x, double variance_target) {
    if (!(variance_target > 0.0 && variance_target <= 1.0)) {
        throw InvalidArgument("pca_fit: variance_target must lie in (0, 1]");
    }
    return pca_fit_impl(x, [variance_target](const std::vector<double>& ratios, std::size_t rank) {
        double cum = 0.0;
        for (std::size_t k = 0; k < ratios.size(); ++k) {
            cum += ratios[k];
            // Slack absorbs rounding in the cumulative sum (target 1.0 on full-rank data).
            if (cum >= variance_target - 1e-12) {
                return k + 1;
            }
        }
        return rank;
    });
}

PcaModel pca_fit_components(const Matrix& x, std::size_t n_components) {
    if (n_components == 0) {
        throw InvalidArgument("pca_fit_components: need at least one component");
    }
    return pca_fit_impl(x, [n_components](const std::vector<double>&, std::size_t rank) {
        return std::min(n_components, rank);
    });
}

Matrix pca_transform(const PcaModel& model, const Matrix& x) {
    if (x.cols() != model.mean.size()) {
        throw InvalidArgument(
            fmt::format("pca_transform: input has {} columns, model expects {}", x.cols(), model.mean.size()));
    }
    const auto xe = as_eigen(x);
    const Eigen::Map<const Eigen::RowVectorXd> mean(model.mean.data(), static_cast<Eigen::Index>(model.mean.size()));
    const auto pe = as_eigen(model.components);
    RowMatrix out = (xe.rowwise() - mean) * pe;
    Matrix result(x.rows(), model.components.cols());
    std::copy(out.data(), out.data() + out.size(), result.data().begin());
    return result;
}

void TsneConfig::validate(std::size_t n_points) const {
    if (out_dims != 2 && out_dims != 3) {
        throw InvalidArgument("tsne: out_dims must be 2 or 3");
    }
    if (!(perplexity > 1.0)) {
        throw InvalidArgument("tsne: perplexity must exceed 1");
    }
    if (n_points < 4) {
        throw InvalidArgument("tsne: need at least 4 points");
    }
    if (!(perplexity < static_cast<double>(n_points - 1) / 3.0)) {
        throw InvalidArgument(fmt::format("tsne: perplexity {} must be below (N-1)/3 = {:.3f} for N = {}", perplexity,
                                          static_cast<double>(n_points - 1) / 3.0, n_points));
    }
    if (!(learning_rate > 0.0) || !(early_exaggeration >= 1.0)) {
        throw InvalidArgument("tsne: learning_rate must be positive and early_exaggeration at least 1");
    }
}

Matrix tsne_p_matrix(const Matrix& x, double perplexity, std::size_t workers) {
    const std::size_t n = x.rows();
    if (n < 4) {
        throw InvalidArgument("tsne_p_matrix: need at least 4 points");
    }
    if (!(perplexity > 1.0)) {
        throw InvalidArgument("tsne_p_matrix: perplexity must exceed 1");
    }
    require_finite(x, "tsne_p_matrix");
    const Matrix dist = squared_distances(x, workers);
    const double target_entropy = std::log(perplexity);

    Matrix cond(n, n);
    parallel_for(n, workers, [&](std::size_t i) {
        const auto di = dist.row(i);
        double dmin = std::numeric_limits<double>::infinity();
        double dmean = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) {
                dmin = std::min(dmin, di[j]);
                dmean += di[j];
            }
        }
        dmean /= static_cast<double>(n - 1);

        // beta = 1 / (2 sigma^2); distances are shifted by the row minimum so the
        // kernel never underflows entirely. The shift cancels on normalization.
        double beta = dmean > dmin ? 1.0 / (dmean - dmin) : 1.0;
        double beta_lo = 0.0;
        double beta_hi = std::numeric_limits<double>::infinity();
        auto row = cond.row(i);
        for (int iter = 0; iter < 50; ++iter) {
            double sum = 0.0;
            double weighted = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) {
                    row[j] = 0.0;
                    continue;
                }
                const double shifted = di[j] - dmin;
                const double v = std::exp(-beta * shifted);
                row[j] = v;
                sum += v;
                weighted += shifted * v;
            }
            const double entropy = std::log(sum) + beta * weighted / sum;
            for (std::size_t j = 0; j < n; ++j) {
                row[j] /= sum;
            }
            if (std::abs(std::exp(entropy) - perplexity) < 1e-4) {
                break;
            }
            if (entropy > target_entropy) {
                beta_lo = beta;
                beta = std::isinf(beta_hi) ? beta * 2.0 : 0.5 * (beta + beta_hi);
            } else {
                beta_hi = beta;
                beta = 0.5 * (beta + beta_lo);
            }
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) {
                row[j] = std::max(row[j], kProbFloor);
                sum += row[j];
            }
        }
        for (auto& v : row) {
            v /= sum;
        }
    });

    Matrix p(n, n);
    const double denom = 2.0 * static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            p(i, j) = (cond(i, j) + cond(j, i)) / denom;
        }
    }
    return p;
}

Matrix tsne_q_matrix(const Matrix& y) {
    Matrix w(y.rows(), y.rows());
    const double z = ordered_sum(student_kernel(y, w, 1));
    for (auto& v : w.data()) {
        v /= z;
    }
    return w;
}

double tsne_kl(const Matrix& p, const Matrix& y) {
    if (p.rows() != y.rows() || p.cols() != y.rows()) {
        throw InvalidArgument("tsne_kl: P and Y sizes disagree");
    }
    Matrix w(y.rows(), y.rows());
    const double z = ordered_sum(student_kernel(y, w, 1));
    return kl_from_kernel(p, w, z, 1);
}

Matrix tsne_gradient(const Matrix& p, const Matrix& y) {
    if (p.rows() != y.rows() || p.cols() != y.rows()) {
        throw InvalidArgument("tsne_gradient: P and Y sizes disagree");
    }
    Matrix w(y.rows(), y.rows());
    const double z = ordered_sum(student_kernel(y, w, 1));
    Matrix grad(y.rows(), y.cols());
    gradient_from_kernel(p, 1.0, y, w, z, grad, 1);
    return grad;
}

Embedding tsne_embed(const Matrix& x, const TsneConfig& cfg) {
    const std::size_t n = x.rows();
    cfg.validate(n);
    const std::size_t dims = cfg.out_dims;
    const std::size_t workers = std::max<std::size_t>(1, cfg.workers);

    const Matrix p = tsne_p_matrix(x, cfg.perplexity, workers);

    Matrix y(n, dims);
    Rng rng(cfg.seed);
    for (auto& v : y.data()) {
        v = 1e-4 * rng.normal();
    }

    Matrix update(n, dims, 0.0);
    Matrix gains(n, dims, 1.0);
    Matrix grad(n, dims);
    Matrix w(n, n);

    Embedding out;
    out.kl_trace.reserve(cfg.iterations);
    Matrix y_prev = y;
    double learning_rate = cfg.learning_rate;
    for (std::size_t iter = 0; iter < cfg.iterations; ++iter) {
        const bool exaggerating = iter < cfg.exaggeration_iterations;
        const double momentum = exaggerating ? 0.5 : 0.8;
        const double p_scale = exaggerating ? cfg.early_exaggeration : 1.0;
        if (iter == cfg.exaggeration_iterations) {
            update = Matrix(n, dims, 0.0);
            gains = Matrix(n, dims, 1.0);
        }

        double z = ordered_sum(student_kernel(y, w, workers));
        double kl = kl_from_kernel(p, w, z, workers);
        if (!std::isfinite(kl) || !(z > 0.0)) {
            throw NumericError(fmt::format("tsne: non-finite objective at iteration {}", iter));
        }
        // After exaggeration a step that raises KL is undone: the previous point is
        // restored, momentum and gains are cleared and the step size is halved.
        if (iter > cfg.exaggeration_iterations) {
            if (kl > out.kl_trace.back()) {
                y = y_prev;
                update = Matrix(n, dims, 0.0);
                gains = Matrix(n, dims, 1.0);
                learning_rate *= 0.5;
                z = ordered_sum(student_kernel(y, w, workers));
                kl = kl_from_kernel(p, w, z, workers);
            } else {
                learning_rate = std::min(cfg.learning_rate, learning_rate * 1.1);
            }
        }
        out.kl_trace.push_back(kl);
        gradient_from_kernel(p, p_scale, y, w, z, grad, workers);
        y_prev = y;

        // Adaptive per-coordinate gains (delta-bar-delta) with a 0.01 floor.
        auto g = grad.data();
        auto u = update.data();
        auto gn = gains.data();
        auto yv = y.data();
        for (std::size_t k = 0; k < g.size(); ++k) {
            if (!std::isfinite(g[k])) {
                throw NumericError(fmt::format("tsne: non-finite gradient at iteration {}", iter));
            }
            gn[k] = (g[k] > 0.0) != (u[k] > 0.0) ? gn[k] + 0.2 : gn[k] * 0.8;
            gn[k] = std::max(gn[k], 0.01);
            u[k] = momentum * u[k] - learning_rate * gn[k] * g[k];
            yv[k] += u[k];
        }
        // Re-centre; the objective is translation invariant.
        for (std::size_t c = 0; c < dims; ++c) {
            double mean = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                mean += y(i, c);
            }
            mean /= static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) {
                y(i, c) -= mean;
            }
        }
    }

    // The last step is kept only if it does not raise KL.
    if (cfg.iterations > cfg.exaggeration_iterations) {
        const double z_last = ordered_sum(student_kernel(y, w, workers));
        if (kl_from_kernel(p, w, z_last, workers) > out.kl_trace.back()) {
            y = y_prev;
        }
    }
    const double z = ordered_sum(student_kernel(y, w, workers));
    out.final_kl = kl_from_kernel(p, w, z, workers);
    if (!std::isfinite(out.final_kl)) {
        throw NumericError(fmt::format("tsne: non-finite objective at iteration {}", cfg.iterations));
    }
    out.coords = std::move(y);
    return out;
}

Reduction reduce_for_clustering(const Matrix& features, const ReductionOptions& opts) {
    Reduction r;
    if (opts.mode == ReductionMode::Pca) {
        r.pca = pca_fit(features, opts.variance_target);
        r.pca_scores = pca_transform(r.pca, features);
        r.embedding.coords = r.pca_scores;
        return r;
    }
    r.pca = pca_fit_components(features, opts.tsne_input_components);
    r.pca_scores = pca_transform(r.pca, features);
    TsneConfig cfg = opts.tsne;
    cfg.out_dims = 2;
    r.embedding = tsne_embed(r.pca_scores, cfg);
    return r;
}

void write_embedding_csv(std::span<const std::int64_t> ids, const Matrix& coords, const std::filesystem::path& path) {
    if (ids.size() != coords.rows()) {
        throw InvalidArgument("write_embedding_csv: id count does not match rows");
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError(fmt::format("cannot write '{}'", path.string()));
    }
    static constexpr const char* kAxes[] = {"x", "y", "z"};
    out << "record_id";
    for (std::size_t c = 0; c < coords.cols(); ++c) {
        if (coords.cols() <= 3) {
            out << ',' << kAxes[c];
        } else {
            out << ",pc" << (c + 1);
        }
    }
    out << '\n';
    for (std::size_t i = 0; i < coords.rows(); ++i) {
        out << ids[i];
        for (const double v : coords.row(i)) {
            out << ',' << csv::format_double(v);
        }
        out << '\n';
    }
    if (!out) {
        throw IoError(fmt::format("write failed for '{}'", path.string()));
    }
}

EmbeddingTable read_embedding_csv(const std::filesystem::path& path) {
    const auto table = csv::read_file(path);
    if (table.header.size() < 2 || table.header.front() != "record_id") {
        throw IoError(fmt::format("'{}' is not an embedding CSV", path.string()));
    }
    const std::size_t d = table.header.size() - 1;
    EmbeddingTable e;
    e.coords = Matrix(table.rows.size(), d);
    e.record_ids.resize(table.rows.size());
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        e.record_ids[i] = csv::parse_int(table.rows[i][0]);
        for (std::size_t j = 0; j < d; ++j) {
            e.coords(i, j) = csv::parse_double(table.rows[i][j + 1]);
        }
    }
    return e;
}

void write_kl_trace_csv(std::span<const double> trace, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError(fmt::format("cannot write '{}'", path.string()));
    }
    out << "iteration,kl\n";
    for (std::size_t i = 0; i < trace.size(); ++i) {
        out << i << ',' << csv::format_double(trace[i]) << '\n';
    }
}

} // namespace faultclust
