#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "faultclust/dimred.hpp"
#include "faultclust/error.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace faultclust;
using Catch::Matchers::WithinAbs;

TEST_CASE("pca explained-variance ratios match the covariance eigen-oracle", "[pca]") {
    std::mt19937_64 gen(42);
    auto x = oracle::random_matrix(50, 10, gen);
    // Give the columns different scales so the spectrum is not flat.
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < x.cols(); ++j) {
            x(i, j) *= 1.0 + static_cast<double>(j);
        }
    }
    const auto model = pca_fit(x, 1.0);
    const auto ev = oracle::jacobi_eigenvalues(oracle::covariance(x));
    double total = 0.0;
    for (const double v : ev) {
        total += v;
    }
    REQUIRE(model.explained_variance_ratio.size() == ev.size());
    for (std::size_t i = 0; i < ev.size(); ++i) {
        CHECK_THAT(model.explained_variance_ratio[i], WithinAbs(ev[i] / total, 1e-8));
        CHECK_THAT(model.explained_variance[i], WithinAbs(ev[i], 1e-8 * ev[0]));
    }
}

TEST_CASE("variance of the projected training data equals the explained variance", "[pca]") {
    std::mt19937_64 gen(7);
    const auto x = oracle::random_matrix(80, 6, gen, 3.0);
    const auto model = pca_fit(x, 1.0);
    const auto scores = pca_transform(model, x);
    for (std::size_t k = 0; k < scores.cols(); ++k) {
        double mean = 0.0;
        for (std::size_t i = 0; i < scores.rows(); ++i) {
            mean += scores(i, k) / static_cast<double>(scores.rows());
        }
        double var = 0.0;
        for (std::size_t i = 0; i < scores.rows(); ++i) {
            var += (scores(i, k) - mean) * (scores(i, k) - mean) / static_cast<double>(scores.rows() - 1);
        }
        CHECK_THAT(mean, WithinAbs(0.0, 1e-10));
        CHECK_THAT(var, WithinAbs(model.explained_variance[k], 1e-8 * model.explained_variance[0]));
    }
}

TEST_CASE("pca keeps the smallest prefix reaching the variance target", "[pca]") {
    std::mt19937_64 gen(9);
    auto x = oracle::random_matrix(100, 5, gen);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        x(i, 0) *= 10.0;
        x(i, 1) *= 3.0;
    }
    const auto full = pca_fit(x, 1.0);
    double cum = 0.0;
    std::size_t expect = 0;
    while (cum < 0.9 - 1e-12) {
        cum += full.explained_variance_ratio[expect++];
    }
    const auto model = pca_fit(x, 0.9);
    CHECK(model.n_components() == expect);
    CHECK(model.components.rows() == 5);
}

TEST_CASE("pca components are orthonormal with a positive dominant loading", "[pca]") {
    std::mt19937_64 gen(10);
    const auto x = oracle::random_matrix(40, 7, gen);
    const auto m = pca_fit(x, 1.0);
    for (std::size_t a = 0; a < m.n_components(); ++a) {
        double big = 0.0;
        for (std::size_t r = 0; r < m.components.rows(); ++r) {
            if (std::abs(m.components(r, a)) > std::abs(big)) {
                big = m.components(r, a);
            }
        }
        CHECK(big > 0.0);
        for (std::size_t b = 0; b < m.n_components(); ++b) {
            double dot = 0.0;
            for (std::size_t r = 0; r < m.components.rows(); ++r) {
                dot += m.components(r, a) * m.components(r, b);
            }
            CHECK_THAT(dot, WithinAbs(a == b ? 1.0 : 0.0, 1e-10));
        }
    }
}

TEST_CASE("pca handles wide data and reports rank", "[pca]") {
    std::mt19937_64 gen(11);
    const auto x = oracle::random_matrix(6, 40, gen);
    const auto m = pca_fit(x, 1.0);
    CHECK(m.rank == 5);
    CHECK(m.n_components() == 5);
    const auto fixed = pca_fit_components(x, 3);
    CHECK(fixed.n_components() == 3);
    CHECK(pca_fit_components(x, 50).n_components() == 5);
}

TEST_CASE("pca rejects degenerate input", "[pca]") {
    const Matrix same(5, 3, 2.0);
    CHECK_THROWS_AS(pca_fit(same), InvalidArgument);
    std::mt19937_64 gen(1);
    const auto x = oracle::random_matrix(5, 3, gen);
    CHECK_THROWS_AS(pca_fit(x, 0.0), InvalidArgument);
    CHECK_THROWS_AS(pca_fit(x, 1.5), InvalidArgument);
    const auto m = pca_fit(x, 1.0);
    CHECK_THROWS_AS(pca_transform(m, Matrix(2, 4)), InvalidArgument);
}

TEST_CASE("t-SNE P matrix is symmetric, normalised and separates distant pairs", "[tsne]") {
    Matrix x(8, 2);
    const double pts[8][2] = {{0, 0}, {0.1, 0}, {0, 0.1}, {0.1, 0.1}, {100, 100}, {100.1, 100}, {100, 100.1}, {100.1, 100.1}};
    for (std::size_t i = 0; i < 8; ++i) {
        x(i, 0) = pts[i][0];
        x(i, 1) = pts[i][1];
    }
    const auto p = tsne_p_matrix(x, 2.0);
    double total = 0.0;
    for (std::size_t i = 0; i < 8; ++i) {
        CHECK(p(i, i) == 0.0);
        for (std::size_t j = 0; j < 8; ++j) {
            CHECK_THAT(p(i, j), WithinAbs(p(j, i), 1e-15));
            total += p(i, j);
        }
    }
    CHECK_THAT(total, WithinAbs(1.0, 1e-12));
    CHECK(p(0, 1) / p(0, 5) > 1e3);
}

TEST_CASE("t-SNE conditionals hit the requested perplexity", "[tsne]") {
    std::mt19937_64 gen(21);
    const auto x = oracle::random_matrix(40, 5, gen);
    const double perplexity = 8.0;
    // Symmetrised rows blend two conditionals, so only a loose band is checked.
    const auto p = tsne_p_matrix(x, perplexity);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double row = 0.0;
        double h = 0.0;
        for (std::size_t j = 0; j < x.rows(); ++j) {
            row += p(i, j);
        }
        for (std::size_t j = 0; j < x.rows(); ++j) {
            if (p(i, j) > 0) {
                const double q = p(i, j) / row;
                h -= q * std::log(q);
            }
        }
        const double eff = std::exp(h);
        CHECK(eff > perplexity * 0.5);
        CHECK(eff < perplexity * 3.0);
    }
}

TEST_CASE("t-SNE KL and gradient agree with independent evaluations", "[tsne]") {
    std::mt19937_64 gen(1234);
    for (int trial = 0; trial < 5; ++trial) {
        const auto p = oracle::random_joint_p(10, gen);
        const auto y = oracle::random_matrix(10, 2, gen);
        CHECK_THAT(tsne_kl(p, y), WithinAbs(oracle::tsne_kl(p, y), 1e-12));
        const auto g = tsne_gradient(p, y);
        const auto fd = oracle::tsne_numeric_gradient(p, y);
        double num = 0.0;
        double den = 0.0;
        for (std::size_t i = 0; i < g.data().size(); ++i) {
            num += (g.data()[i] - fd.data()[i]) * (g.data()[i] - fd.data()[i]);
            den += fd.data()[i] * fd.data()[i];
        }
        CHECK(std::sqrt(num / den) <= 1e-4);
    }
}

TEST_CASE("t-SNE Q matrix is a distribution", "[tsne]") {
    std::mt19937_64 gen(3);
    const auto y = oracle::random_matrix(12, 2, gen);
    const auto q = tsne_q_matrix(y);
    double total = 0.0;
    for (std::size_t i = 0; i < 12; ++i) {
        CHECK(q(i, i) == 0.0);
        for (std::size_t j = 0; j < 12; ++j) {
            total += q(i, j);
        }
    }
    CHECK_THAT(total, WithinAbs(1.0, 1e-12));
}

TEST_CASE("t-SNE separates two distant blobs and is seed-deterministic", "[tsne]") {
    std::mt19937_64 gen(77);
    std::vector<std::size_t> truth;
    std::vector<double> far(10, 0.0);
    far[0] = 20.0;
    const auto x = oracle::blobs({std::vector<double>(10, 0.0), far}, 25, 1.0, gen, &truth);
    TsneConfig cfg;
    cfg.perplexity = 10.0;
    cfg.iterations = 500;
    cfg.seed = 5;
    const auto e = tsne_embed(x, cfg);
    // Every point's nearest embedded neighbour comes from its own blob.
    for (std::size_t i = 0; i < x.rows(); ++i) {
        std::size_t nearest = i;
        double best = 1e300;
        for (std::size_t j = 0; j < x.rows(); ++j) {
            const double d = squared_distance(e.coords.row(i), e.coords.row(j));
            if (j != i && d < best) {
                best = d;
                nearest = j;
            }
        }
        REQUIRE(truth[nearest] == truth[i]);
    }
    CHECK(e.kl_trace.size() == cfg.iterations);

    const auto again = tsne_embed(x, cfg);
    CHECK(again.coords == e.coords);
    cfg.workers = 3;
    CHECK(tsne_embed(x, cfg).coords == e.coords);
}

TEST_CASE("t-SNE KL is non-increasing after early exaggeration", "[tsne]") {
    std::mt19937_64 gen(8);
    const auto x = oracle::blobs({{0, 0, 0}, {8, 0, 0}, {0, 8, 0}}, 20, 1.0, gen);
    TsneConfig cfg;
    cfg.perplexity = 10.0;
    cfg.iterations = 600;
    cfg.seed = 2;
    const auto e = tsne_embed(x, cfg);
    const auto& kl = e.kl_trace;
    for (std::size_t i = cfg.exaggeration_iterations; i + 1 < kl.size(); ++i) {
        INFO("iteration " << i);
        REQUIRE(kl[i + 1] <= kl[i] + 1e-6);
    }
    for (std::size_t i = cfg.exaggeration_iterations; i + 50 < kl.size(); ++i) {
        REQUIRE(kl[i + 50] <= kl[i] + 1e-6);
    }
    CHECK(e.final_kl <= kl.back() + 1e-6);
}

TEST_CASE("t-SNE config validation", "[tsne]") {
    TsneConfig cfg;
    cfg.perplexity = 30.0;
    CHECK_THROWS_AS(cfg.validate(50), InvalidArgument);
    CHECK_NOTHROW(cfg.validate(100));
    CHECK_THROWS_AS(cfg.validate(3), InvalidArgument);
    cfg.out_dims = 4;
    CHECK_THROWS_AS(cfg.validate(100), InvalidArgument);
}

TEST_CASE("reduce_for_clustering in both modes", "[dimred]") {
    std::mt19937_64 gen(19);
    const auto x = oracle::blobs({std::vector<double>(30, 0.0), std::vector<double>(30, 5.0)}, 30, 1.0, gen);
    ReductionOptions opts;
    opts.mode = ReductionMode::Pca;
    const auto lin = reduce_for_clustering(x, opts);
    CHECK(lin.embedding.coords == lin.pca_scores);
    CHECK(lin.embedding.final_kl == 0.0);

    opts.mode = ReductionMode::PcaThenTsne;
    opts.tsne.perplexity = 10.0;
    opts.tsne.iterations = 300;
    const auto nl = reduce_for_clustering(x, opts);
    CHECK(nl.embedding.coords.cols() == 2);
    CHECK(nl.embedding.coords.rows() == 60);
    CHECK(nl.embedding.final_kl > 0.0);
}

TEST_CASE("embedding csv headers and round trip", "[dimred]") {
    testing_support::TempDir dir;
    std::mt19937_64 gen(4);
    const std::vector<std::int64_t> ids{10, 11, 12};
    const auto two = oracle::random_matrix(3, 2, gen);
    write_embedding_csv(ids, two, dir / "e2.csv");
    CHECK(oracle::read_bytes(dir / "e2.csv").rfind("record_id,x,y\n", 0) == 0);
    const auto back = read_embedding_csv(dir / "e2.csv");
    CHECK(back.record_ids == ids);
    CHECK(back.coords == two);

    const auto five = oracle::random_matrix(3, 5, gen);
    write_embedding_csv(ids, five, dir / "e5.csv");
    CHECK(oracle::read_bytes(dir / "e5.csv").rfind("record_id,pc1,pc2,pc3,pc4,pc5\n", 0) == 0);
    CHECK(read_embedding_csv(dir / "e5.csv").coords == five);
}
