#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace faultclust {

struct NormalizedSignal {
    std::vector<double> values;
    /// True when the input was constant; values are then all zero.
    bool degenerate = false;
};

/// Min-max scaling to [-1, 1]: 2 (x - min) / (max - min) - 1.
NormalizedSignal normalize(std::span<const double> x);

struct ZeroIndicatorOptions {
    /// Threshold relative to the channel's peak absolute value.
    double epsilon = 0.01;
    /// Minimum run length; 0 means period / 4.
    std::size_t min_run = 0;
};

/// Additive decomposition y = trend + seasonal + residual of one channel.
struct Decomposition {
    std::vector<double> trend;
    std::vector<double> seasonal;
    std::vector<double> residual;
    std::size_t period = 0;
    std::vector<bool> zero_indicator;
    std::vector<bool> anomaly_mask;
    /// Number of samples at each end where the centred window was incomplete and
    /// the trend was extended from the nearest defined value.
    std::size_t edge = 0;
};

/// Centred moving-average trend (half-weighted ends for even periods), per-phase
/// mean seasonal component centred to zero mean, and residual defined as the exact
/// remainder. Also fills zero_indicator using `zero_opts`.
Decomposition decompose(std::span<const double> y, std::size_t period, ZeroIndicatorOptions zero_opts = {});

/// True on samples that belong to a run of at least `min_run` consecutive samples
/// with |x| <= epsilon * max|x| (epsilon absolute when the signal is all zero).
std::vector<bool> zero_indicator(std::span<const double> x, double epsilon, std::size_t min_run);

/// Flags residual outliers (k_sigma standard deviations), trend outliers (k_sigma
/// robust deviations around the median, MAD-scaled) and zero-indicator samples.
/// The result is also stored into d.anomaly_mask.
std::vector<bool> detect_anomalies(Decomposition& d, double k_sigma = 3.0);

} // namespace faultclust
