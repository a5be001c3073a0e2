#include "faultclust/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "faultclust/error.hpp"

namespace faultclust {

namespace {

void require_finite(std::span<const double> x, const char* what) {
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i])) {
            throw InvalidArgument(fmt::format("{}: non-finite value at index {}", what, i));
        }
    }
}

double median_of(std::vector<double> v) {
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double hi = v[mid];
    if (v.size() % 2 == 1) {
        return hi;
    }
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

// Relative floor applied to spreads so exact signals (zero residual up to rounding)
// do not flag rounding noise.
constexpr double kSpreadFloor = 1e-9;

} // namespace

NormalizedSignal normalize(std::span<const double> x) {
    if (x.empty()) {
        throw InvalidArgument("normalize: empty input");
    }
    require_finite(x, "normalize");
    const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
    const double lo = *lo_it;
    const double hi = *hi_it;

    NormalizedSignal out;
    out.values.resize(x.size());
    if (hi == lo) {
        out.degenerate = true;
        std::fill(out.values.begin(), out.values.end(), 0.0);
        return out;
    }
    const double range = hi - lo;
    for (std::size_t i = 0; i < x.size(); ++i) {
        out.values[i] = 2.0 * ((x[i] - lo) / range) - 1.0;
    }
    return out;
}

Decomposition decompose(std::span<const double> y, std::size_t period, ZeroIndicatorOptions zero_opts) {
    if (period < 2) {
        throw InvalidArgument("decompose: period must be at least 2");
    }
    if (y.size() < 2 * period) {
        throw InvalidArgument(
            fmt::format("decompose: series of {} samples is shorter than two periods ({})", y.size(), 2 * period));
    }
    require_finite(y, "decompose");

    const std::size_t n = y.size();
    const std::size_t half = period / 2;
    const bool even = period % 2 == 0;

    Decomposition d;
    d.period = period;
    d.edge = half;
    d.trend.assign(n, 0.0);

    const double inv_p = 1.0 / static_cast<double>(period);
    for (std::size_t i = half; i + half < n; ++i) {
        double s = 0.0;
        if (even) {
            s = 0.5 * (y[i - half] + y[i + half]);
            for (std::size_t j = i - half + 1; j < i + half; ++j) {
                s += y[j];
            }
        } else {
            for (std::size_t j = i - half; j <= i + half; ++j) {
                s += y[j];
            }
        }
        d.trend[i] = s * inv_p;
    }
    const std::size_t first = half;
    const std::size_t last = n - 1 - half;
    for (std::size_t i = 0; i < first; ++i) {
        d.trend[i] = d.trend[first];
    }
    for (std::size_t i = last + 1; i < n; ++i) {
        d.trend[i] = d.trend[last];
    }

    // Per-phase means of the detrended series over samples with a full window.
    std::vector<double> phase_sum(period, 0.0);
    std::vector<std::size_t> phase_count(period, 0);
    for (std::size_t i = first; i <= last; ++i) {
        phase_sum[i % period] += y[i] - d.trend[i];
        ++phase_count[i % period];
    }
    std::vector<double> phase_mean(period);
    double centre = 0.0;
    for (std::size_t p = 0; p < period; ++p) {
        phase_mean[p] = phase_sum[p] / static_cast<double>(phase_count[p]);
        centre += phase_mean[p];
    }
    centre /= static_cast<double>(period);
    for (auto& m : phase_mean) {
        m -= centre;
    }

    d.seasonal.resize(n);
    d.residual.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        d.seasonal[i] = phase_mean[i % period];
        d.residual[i] = y[i] - d.trend[i] - d.seasonal[i];
    }

    const std::size_t min_run = zero_opts.min_run == 0 ? std::max<std::size_t>(1, period / 4) : zero_opts.min_run;
    d.zero_indicator = zero_indicator(y, zero_opts.epsilon, min_run);
    d.anomaly_mask.assign(n, false);
    return d;
}

std::vector<bool> zero_indicator(std::span<const double> x, double epsilon, std::size_t min_run) {
    if (x.empty()) {
        throw InvalidArgument("zero_indicator: empty input");
    }
    if (!(epsilon > 0.0)) {
        throw InvalidArgument("zero_indicator: epsilon must be positive");
    }
    if (min_run < 1) {
        throw InvalidArgument("zero_indicator: min_run must be at least 1");
    }
    double peak = 0.0;
    for (const double v : x) {
        peak = std::max(peak, std::abs(v));
    }
    const double threshold = peak > 0.0 ? epsilon * peak : epsilon;

    std::vector<bool> out(x.size(), false);
    std::size_t run_start = 0;
    std::size_t run_len = 0;
    auto close_run = [&](std::size_t end) {
        if (run_len >= min_run) {
            std::fill(out.begin() + static_cast<std::ptrdiff_t>(run_start), out.begin() + static_cast<std::ptrdiff_t>(end),
                      true);
        }
        run_len = 0;
    };
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (std::abs(x[i]) <= threshold) {
            if (run_len == 0) {
                run_start = i;
            }
            ++run_len;
        } else {
            close_run(i);
        }
    }
    close_run(x.size());
    return out;
}

std::vector<bool> detect_anomalies(Decomposition& d, double k_sigma) {
    if (!(k_sigma > 0.0)) {
        throw InvalidArgument("detect_anomalies: k_sigma must be positive");
    }
    const std::size_t n = d.residual.size();
    if (n == 0 || d.trend.size() != n || d.seasonal.size() != n) {
        throw InvalidArgument("detect_anomalies: malformed decomposition");
    }

    double scale = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        scale = std::max(scale, std::abs(d.trend[i] + d.seasonal[i] + d.residual[i]));
    }
    const double floor = kSpreadFloor * scale;

    double mean = 0.0;
    for (const double e : d.residual) {
        mean += e;
    }
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (const double e : d.residual) {
        var += (e - mean) * (e - mean);
    }
    const double res_std = std::max(std::sqrt(var / static_cast<double>(n)), floor);

    const double trend_median = median_of(d.trend);
    std::vector<double> abs_dev(n);
    for (std::size_t i = 0; i < n; ++i) {
        abs_dev[i] = std::abs(d.trend[i] - trend_median);
    }
    // 1.4826 makes the MAD a consistent estimator of a Gaussian standard deviation.
    const double trend_robust_std = std::max(1.4826 * median_of(abs_dev), floor);

    std::vector<bool> mask(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        const bool residual_outlier = std::abs(d.residual[i] - mean) > k_sigma * res_std;
        const bool trend_outlier = abs_dev[i] > k_sigma * trend_robust_std;
        const bool zero = i < d.zero_indicator.size() && d.zero_indicator[i];
        mask[i] = residual_outlier || trend_outlier || zero;
    }
    d.anomaly_mask = mask;
    return mask;
}

} // namespace faultclust
