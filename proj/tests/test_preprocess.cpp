#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "faultclust/error.hpp"
#include "faultclust/preprocess.hpp"

using namespace faultclust;
using Catch::Matchers::WithinAbs;

namespace {

std::vector<double> sinusoid(std::size_t n, std::size_t period, double amp = 1.0) {
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = amp * std::sin(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(period));
    }
    return y;
}

} // namespace

TEST_CASE("normalize maps random data onto [-1, 1] per the min-max formula", "[preprocess]") {
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> u(-50.0, 250.0);
    std::vector<double> x(1000);
    for (auto& v : x) {
        v = u(gen);
    }
    const auto r = normalize(x);
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    CHECK(*std::min_element(r.values.begin(), r.values.end()) == -1.0);
    CHECK(*std::max_element(r.values.begin(), r.values.end()) == 1.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double expect = 2.0 * (x[i] - *lo) / (*hi - *lo) - 1.0;
        REQUIRE_THAT(r.values[i], WithinAbs(expect, 1e-12));
    }
    CHECK_FALSE(r.degenerate);
}

TEST_CASE("normalize flags constant input", "[preprocess]") {
    const std::vector<double> x(16, 4.2);
    const auto r = normalize(x);
    CHECK(r.degenerate);
    CHECK(std::all_of(r.values.begin(), r.values.end(), [](double v) { return v == 0.0; }));
    CHECK_THROWS_AS(normalize(std::vector<double>{}), InvalidArgument);
}

TEST_CASE("decomposition is additive and the seasonal part is periodic", "[preprocess]") {
    std::mt19937_64 gen(11);
    std::normal_distribution<double> nd(0.0, 0.3);
    for (const std::size_t period : {8UL, 16UL, 31UL, 128UL}) {
        auto y = sinusoid(1000, period, 2.0);
        for (std::size_t i = 0; i < y.size(); ++i) {
            y[i] += 0.001 * static_cast<double>(i) + nd(gen);
        }
        const auto d = decompose(y, period);
        constexpr double eps = std::numeric_limits<double>::epsilon();
        for (std::size_t i = 0; i < y.size(); ++i) {
            REQUIRE(y[i] - d.trend[i] - d.seasonal[i] == d.residual[i]);
            const double scale = std::abs(y[i]) + std::abs(d.trend[i]) + std::abs(d.seasonal[i]);
            REQUIRE(std::abs(d.trend[i] + d.seasonal[i] + d.residual[i] - y[i]) <= 2.0 * eps * scale);
        }
        for (std::size_t i = period; i < y.size(); ++i) {
            REQUIRE(d.seasonal[i] == d.seasonal[i - period]);
        }
        double mean = 0.0;
        for (std::size_t i = 0; i < period; ++i) {
            mean += d.seasonal[i];
        }
        CHECK_THAT(mean / static_cast<double>(period), WithinAbs(0.0, 1e-12));
    }
}

TEST_CASE("moving-average trend recovers a linear ramp on interior samples", "[preprocess]") {
    const std::size_t n = 2048;
    const std::size_t period = 128;
    const double a = 0.05;
    auto y = sinusoid(n, period);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] += a * static_cast<double>(i);
    }
    const auto d = decompose(y, period);
    const double tol = 1e-3 * std::abs(a * static_cast<double>(n));
    REQUIRE(d.edge == period / 2);
    for (std::size_t i = d.edge; i + d.edge < n; ++i) {
        REQUIRE_THAT(d.trend[i], WithinAbs(a * static_cast<double>(i), tol));
    }
}

TEST_CASE("decompose rejects bad periods", "[preprocess]") {
    const auto y = sinusoid(100, 10);
    CHECK_THROWS_AS(decompose(y, 1), InvalidArgument);
    CHECK_THROWS_AS(decompose(y, 60), InvalidArgument);
}

TEST_CASE("zero indicator is true exactly on a long zeroed gap", "[preprocess]") {
    auto y = sinusoid(4000, 128);
    const std::size_t g0 = 1500;
    const std::size_t g1 = 2000;
    std::fill(y.begin() + g0, y.begin() + g1, 0.0);
    const auto z = zero_indicator(y, 0.01, 128);

    // Brute-force scan: any run of |y| <= 0.01 * peak of length >= 128.
    std::vector<bool> expect(y.size(), false);
    for (std::size_t i = 0; i < y.size();) {
        if (std::abs(y[i]) > 0.01) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < y.size() && std::abs(y[j]) <= 0.01) {
            ++j;
        }
        if (j - i >= 128) {
            for (std::size_t k = i; k < j; ++k) {
                expect[k] = true;
            }
        }
        i = j;
    }
    CHECK(z == expect);
    for (std::size_t i = g0; i < g1; ++i) {
        REQUIRE(z[i]);
    }
    CHECK(std::count(z.begin(), z.end(), true) == static_cast<long>(g1 - g0));
}

TEST_CASE("zero indicator ignores short zero crossings", "[preprocess]") {
    const auto y = sinusoid(2048, 128);
    const auto z = zero_indicator(y, 0.01, 32);
    CHECK(std::none_of(z.begin(), z.end(), [](bool b) { return b; }));
}

TEST_CASE("anomaly detection flags an injected residual spike", "[preprocess]") {
    std::mt19937_64 gen(5);
    std::normal_distribution<double> nd(0.0, 0.01);
    auto y = sinusoid(2048, 128);
    for (auto& v : y) {
        v += nd(gen);
    }
    const std::size_t spike = 1000;
    y[spike] += 20.0 * 0.01;
    auto d = decompose(y, 128);
    const auto mask = detect_anomalies(d, 3.0);

    // Oracle: direct 3-sigma threshold on the residual.
    double mean = 0.0;
    for (const double e : d.residual) {
        mean += e / static_cast<double>(d.residual.size());
    }
    double var = 0.0;
    for (const double e : d.residual) {
        var += (e - mean) * (e - mean) / static_cast<double>(d.residual.size());
    }
    REQUIRE(std::abs(d.residual[spike] - mean) > 3.0 * std::sqrt(var));
    CHECK(mask[spike]);
    CHECK(d.anomaly_mask == mask);
    CHECK(std::count(mask.begin(), mask.end(), true) < 60);
}

TEST_CASE("anomaly mask includes zero-indicator samples", "[preprocess]") {
    auto y = sinusoid(2048, 128);
    std::fill(y.begin() + 600, y.begin() + 900, 0.0);
    auto d = decompose(y, 128);
    const auto mask = detect_anomalies(d);
    for (std::size_t i = 600; i < 900; ++i) {
        REQUIRE(mask[i]);
    }
}
