#include "faultclust/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "faultclust/csv.hpp"
#include "faultclust/error.hpp"
#include "faultclust/parallel.hpp"
#include "faultclust/rng.hpp"

namespace faultclust {

namespace {

struct AssignResult {
    std::vector<std::size_t> labels;
    std::vector<double> cost;
    double inertia = 0.0;
};

AssignResult assign_points(const Matrix& x, const Matrix& centroids, std::size_t workers) {
    AssignResult r;
    r.labels.resize(x.rows());
    r.cost.resize(x.rows());
    parallel_for(x.rows(), workers, [&](std::size_t i) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < centroids.rows(); ++c) {
            const double d = squared_distance(x.row(i), centroids.row(c));
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        r.labels[i] = best;
        r.cost[i] = best_d;
    });
    for (const double c : r.cost) {
        r.inertia += c;
    }
    return r;
}

Matrix init_kmeanspp(const Matrix& x, std::size_t k, Rng& rng) {
    const std::size_t n = x.rows();
    Matrix centroids(k, x.cols());
    std::size_t first = static_cast<std::size_t>(rng.below(n));
    std::copy(x.row(first).begin(), x.row(first).end(), centroids.row(0).begin());

    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) {
        d2[i] = squared_distance(x.row(i), centroids.row(0));
    }
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (const double v : d2) {
            total += v;
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc > target && d2[i] > 0.0) {
                    pick = i;
                    break;
                }
            }
            // Guard against landing on a zero-weight tail point through rounding.
            while (d2[pick] == 0.0 && pick > 0) {
                --pick;
            }
        } else {
            pick = static_cast<std::size_t>(rng.below(n));
        }
        std::copy(x.row(pick).begin(), x.row(pick).end(), centroids.row(c).begin());
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], squared_distance(x.row(i), centroids.row(c)));
        }
    }
    return centroids;
}

Matrix init_random(const Matrix& x, std::size_t k, Rng& rng) {
    std::vector<std::size_t> idx(x.rows());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        idx[i] = i;
    }
    Matrix centroids(k, x.cols());
    for (std::size_t c = 0; c < k; ++c) {
        const std::size_t j = c + static_cast<std::size_t>(rng.below(idx.size() - c));
        std::swap(idx[c], idx[j]);
        std::copy(x.row(idx[c]).begin(), x.row(idx[c]).end(), centroids.row(c).begin());
    }
    return centroids;
}

// Means of assigned points. An empty cluster takes over the point farthest from
// its current centroid (among points whose cluster keeps at least one member).
Matrix update_centroids(const Matrix& x, AssignResult& a, std::size_t k) {
    std::vector<std::size_t> sizes(k, 0);
    for (const auto l : a.labels) {
        ++sizes[l];
    }
    for (std::size_t c = 0; c < k; ++c) {
        if (sizes[c] != 0) {
            continue;
        }
        std::size_t far = x.rows();
        double far_d = -1.0;
        for (std::size_t i = 0; i < x.rows(); ++i) {
            if (sizes[a.labels[i]] > 1 && a.cost[i] > far_d) {
                far_d = a.cost[i];
                far = i;
            }
        }
        if (far == x.rows()) {
            continue;
        }
        --sizes[a.labels[far]];
        a.labels[far] = c;
        a.cost[far] = 0.0;
        sizes[c] = 1;
    }

    Matrix centroids(k, x.cols(), 0.0);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto dst = centroids.row(a.labels[i]);
        const auto src = x.row(i);
        for (std::size_t d = 0; d < src.size(); ++d) {
            dst[d] += src[d];
        }
    }
    for (std::size_t c = 0; c < k; ++c) {
        if (sizes[c] == 0) {
            continue;
        }
        for (auto& v : centroids.row(c)) {
            v /= static_cast<double>(sizes[c]);
        }
    }
    return centroids;
}

ClusterModel lloyd(const Matrix& x, Matrix centroids, const KMeansOptions& opts) {
    const std::size_t k = centroids.rows();
    ClusterModel m;
    m.k = k;
    AssignResult a = assign_points(x, centroids, opts.workers);
    m.inertia_trace.push_back(a.inertia);

    for (std::size_t it = 1; it <= opts.max_iter; ++it) {
        Matrix next = update_centroids(x, a, k);
        double shift = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            shift = std::max(shift, std::sqrt(squared_distance(next.row(c), centroids.row(c))));
        }
        centroids = std::move(next);
        AssignResult b = assign_points(x, centroids, opts.workers);
        m.inertia_trace.push_back(b.inertia);
        m.iterations_run = it;
        const bool stable = b.labels == a.labels;
        a = std::move(b);
        if (stable || shift < opts.tol) {
            break;
        }
    }

    m.centroids = std::move(centroids);
    m.assignments = std::move(a.labels);
    m.inertia = a.inertia;
    m.sizes.assign(k, 0);
    for (const auto l : m.assignments) {
        ++m.sizes[l];
    }
    return m;
}

} // namespace

ClusterModel kmeans_fit(const Matrix& x, const KMeansOptions& opts) {
    const std::size_t n = x.rows();
    if (opts.k < 1) {
        throw InvalidArgument("kmeans_fit: k must be at least 1");
    }
    if (opts.k > n) {
        throw InvalidArgument(fmt::format("kmeans_fit: k = {} exceeds the number of points {}", opts.k, n));
    }
    if (opts.n_init < 1) {
        throw InvalidArgument("kmeans_fit: n_init must be at least 1");
    }
    for (const double v : x.data()) {
        if (!std::isfinite(v)) {
            throw InvalidArgument("kmeans_fit: input contains non-finite values");
        }
    }

    ClusterModel best;
    bool have_best = false;
    for (std::size_t r = 0; r < opts.n_init; ++r) {
        Rng rng(derive_seed(opts.seed, r));
        Matrix init = opts.init == KMeansInit::KMeansPlusPlus ? init_kmeanspp(x, opts.k, rng) : init_random(x, opts.k, rng);
        ClusterModel m = lloyd(x, std::move(init), opts);
        if (!have_best || m.inertia < best.inertia) {
            best = std::move(m);
            have_best = true;
        }
    }
    best.seed = opts.seed;
    return best;
}

std::vector<std::size_t> kmeans_assign(const ClusterModel& m, const Matrix& x) {
    if (x.cols() != m.centroids.cols()) {
        throw InvalidArgument(
            fmt::format("kmeans_assign: points have {} dims, centroids {}", x.cols(), m.centroids.cols()));
    }
    return assign_points(x, m.centroids, 1).labels;
}

std::vector<std::pair<std::size_t, double>> elbow_curve(const Matrix& x, std::span<const std::size_t> ks,
                                                        const KMeansOptions& base) {
    if (ks.empty()) {
        throw InvalidArgument("elbow_curve: empty k range");
    }
    std::vector<std::pair<std::size_t, double>> out;
    out.reserve(ks.size());
    for (const auto k : ks) {
        KMeansOptions o = base;
        o.k = k;
        out.emplace_back(k, kmeans_fit(x, o).inertia);
    }
    return out;
}

std::vector<double> silhouette_samples(const Matrix& x, std::span<const std::size_t> assignments) {
    const std::size_t n = x.rows();
    if (assignments.size() != n) {
        throw InvalidArgument("silhouette: assignment count does not match points");
    }
    if (n < 3) {
        throw InvalidArgument("silhouette: need at least 3 points");
    }
    const std::size_t k = *std::max_element(assignments.begin(), assignments.end()) + 1;
    std::vector<std::size_t> sizes(k, 0);
    for (const auto a : assignments) {
        ++sizes[a];
    }
    const auto populated = std::count_if(sizes.begin(), sizes.end(), [](std::size_t s) { return s > 0; });
    if (populated < 2) {
        throw InvalidArgument("silhouette: undefined for a single cluster");
    }

    std::vector<double> s(n, 0.0);
    std::vector<double> sums(k);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t own = assignments[i];
        if (sizes[own] == 1) {
            continue;
        }
        std::fill(sums.begin(), sums.end(), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) {
                sums[assignments[j]] += std::sqrt(squared_distance(x.row(i), x.row(j)));
            }
        }
        const double a = sums[own] / static_cast<double>(sizes[own] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
            if (c != own && sizes[c] > 0) {
                b = std::min(b, sums[c] / static_cast<double>(sizes[c]));
            }
        }
        const double denom = std::max(a, b);
        s[i] = denom > 0.0 ? (b - a) / denom : 0.0;
    }
    return s;
}

double silhouette_score(const Matrix& x, std::span<const std::size_t> assignments) {
    const auto s = silhouette_samples(x, assignments);
    double total = 0.0;
    for (const double v : s) {
        total += v;
    }
    return total / static_cast<double>(s.size());
}

void write_model_json(const ClusterModel& m, const std::filesystem::path& path) {
    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    j["k"] = m.k;
    j["seed"] = m.seed;
    j["inertia"] = m.inertia;
    auto cents = nlohmann::ordered_json::array();
    for (std::size_t c = 0; c < m.centroids.rows(); ++c) {
        const auto row = m.centroids.row(c);
        cents.push_back(std::vector<double>(row.begin(), row.end()));
    }
    j["centroids"] = std::move(cents);
    j["sizes"] = m.sizes;
    j["iterations_run"] = m.iterations_run;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError(fmt::format("cannot write '{}'", path.string()));
    }
    out << j.dump(2) << '\n';
}

ClusterModel read_model_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError(fmt::format("cannot open '{}'", path.string()));
    }
    try {
        const auto j = nlohmann::json::parse(in);
        ClusterModel m;
        m.k = j.at("k").get<std::size_t>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.inertia = j.at("inertia").get<double>();
        m.sizes = j.at("sizes").get<std::vector<std::size_t>>();
        m.iterations_run = j.value("iterations_run", std::size_t{0});
        const auto cents = j.at("centroids").get<std::vector<std::vector<double>>>();
        const std::size_t d = cents.empty() ? 0 : cents.front().size();
        m.centroids = Matrix(cents.size(), d);
        for (std::size_t c = 0; c < cents.size(); ++c) {
            if (cents[c].size() != d) {
                throw IoError("model.json: ragged centroid matrix");
            }
            std::copy(cents[c].begin(), cents[c].end(), m.centroids.row(c).begin());
        }
        if (m.centroids.rows() != m.k || m.sizes.size() != m.k) {
            throw IoError("model.json: k disagrees with centroids or sizes");
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(fmt::format("malformed model '{}': {}", path.string(), e.what()));
    }
}

void write_assignments_csv(std::span<const std::int64_t> ids, std::span<const std::size_t> assignments,
                           const std::filesystem::path& path) {
    if (ids.size() != assignments.size()) {
        throw InvalidArgument("write_assignments_csv: id count does not match assignments");
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError(fmt::format("cannot write '{}'", path.string()));
    }
    out << "record_id,cluster\n";
    for (std::size_t i = 0; i < ids.size(); ++i) {
        out << ids[i] << ',' << assignments[i] << '\n';
    }
}

AssignmentTable read_assignments_csv(const std::filesystem::path& path) {
    const auto table = csv::read_file(path);
    const auto c_id = table.column("record_id");
    const auto c_cl = table.column("cluster");
    AssignmentTable t;
    for (const auto& row : table.rows) {
        t.record_ids.push_back(csv::parse_int(row[c_id]));
        const long long c = csv::parse_int(row[c_cl]);
        if (c < 0) {
            throw IoError("assignments: negative cluster index");
        }
        t.clusters.push_back(static_cast<std::size_t>(c));
    }
    return t;
}

} // namespace faultclust
