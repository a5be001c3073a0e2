#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "faultclust/matrix.hpp"
#include "faultclust/waveform_store.hpp"

namespace faultclust {

/// Full complex DFT X[k] = sum_n x[n] exp(-j 2 pi k n / N) for k = 0..N-1.
/// Radix-2 for powers of two, Bluestein's chirp-z otherwise.
std::vector<std::complex<double>> dft(std::span<const std::complex<double>> x);
std::vector<std::complex<double>> dft(std::span<const double> x);

/// Positive-frequency magnitude spectrum of one channel.
struct Spectrum {
    std::vector<double> magnitudes;
    /// Frequency spacing of the bins: sampling_rate / transform length.
    double bin_hz = 0.0;
    /// Length of the transform (after any zero padding).
    std::size_t length = 0;
    bool degenerate = false;
};

/// |X[k]| for k = 0 .. floor(N/2) - 1.
Spectrum fft_magnitude(std::span<const double> x, double sampling_rate_hz = 1.0);

/// Divides each magnitude by the spectrum maximum. An all-zero spectrum is
/// returned unchanged with degenerate = true.
Spectrum normalize_spectrum(Spectrum s);

std::size_t next_pow2(std::size_t n);

struct FeatureConfig {
    /// Apply min-max normalization to each channel before the transform.
    bool normalize_input = true;
    /// Use only the first `truncate` samples of each record; 0 keeps the full record.
    std::size_t truncate = 0;
    /// Zero-pad to the next power of two; otherwise use the exact-length transform.
    bool pad_to_pow2 = true;
    std::size_t workers = 1;
};

struct FeatureMatrix {
    std::vector<std::int64_t> record_ids;
    /// record_count x (6 * bins); channel blocks in V1,V2,V3,I1,I2,I3 order.
    Matrix features;
    std::size_t fft_length = 0;
    std::size_t bins_per_channel = 0;
    double bin_hz = 0.0;
    /// Bit c set when channel c of that record had an all-zero spectrum.
    std::vector<std::uint8_t> degenerate_channels;
};

FeatureMatrix build_features(const Dataset& ds, const FeatureConfig& cfg = {});

/// CSV with header record_id,f0,...,f{D-1}.
void write_features_csv(const FeatureMatrix& fm, const std::filesystem::path& path);
FeatureMatrix read_features_csv(const std::filesystem::path& path);

} // namespace faultclust
