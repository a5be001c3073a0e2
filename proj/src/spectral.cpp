#include "faultclust/spectral.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>

#include <fmt/format.h>

#include "faultclust/csv.hpp"
#include "faultclust/error.hpp"
#include "faultclust/parallel.hpp"
#include "faultclust/preprocess.hpp"

namespace faultclust {

namespace {

using cd = std::complex<double>;

// In-place iterative radix-2 transform. `inverse` flips the twiddle sign but does not scale.
void fft_pow2(std::vector<cd>& a, bool inverse) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) {
            j ^= bit;
        }
        j ^= bit;
        if (i < j) {
            std::swap(a[i], a[j]);
        }
    }
    const double sign = inverse ? 1.0 : -1.0;
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len / 2;
        // Twiddles evaluated directly rather than by repeated multiplication to avoid drift.
        std::vector<cd> w(half);
        for (std::size_t k = 0; k < half; ++k) {
            const double ang = sign * 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(len);
            w[k] = {std::cos(ang), std::sin(ang)};
        }
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t k = 0; k < half; ++k) {
                const cd u = a[i + k];
                const cd v = a[i + k + half] * w[k];
                a[i + k] = u + v;
                a[i + k + half] = u - v;
            }
        }
    }
}

std::vector<cd> bluestein(std::span<const cd> x) {
    const std::size_t n = x.size();
    const std::size_t m = next_pow2(2 * n - 1);
    // chirp[k] = exp(-j pi k^2 / n); k^2 reduced mod 2n keeps the angle small.
    std::vector<cd> chirp(n);
    const std::uint64_t two_n = 2 * static_cast<std::uint64_t>(n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::uint64_t kk = (static_cast<std::uint64_t>(k) * k) % two_n;
        const double ang = -std::numbers::pi * static_cast<double>(kk) / static_cast<double>(n);
        chirp[k] = {std::cos(ang), std::sin(ang)};
    }
    std::vector<cd> a(m, cd{});
    std::vector<cd> b(m, cd{});
    for (std::size_t k = 0; k < n; ++k) {
        a[k] = x[k] * chirp[k];
    }
    b[0] = std::conj(chirp[0]);
    for (std::size_t k = 1; k < n; ++k) {
        b[k] = b[m - k] = std::conj(chirp[k]);
    }
    fft_pow2(a, false);
    fft_pow2(b, false);
    for (std::size_t i = 0; i < m; ++i) {
        a[i] *= b[i];
    }
    fft_pow2(a, true);
    const double scale = 1.0 / static_cast<double>(m);
    std::vector<cd> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        out[k] = a[k] * scale * chirp[k];
    }
    return out;
}

} // namespace

std::size_t next_pow2(std::size_t n) { return n <= 1 ? 1 : std::bit_ceil(n); }

std::vector<cd> dft(std::span<const cd> x) {
    if (x.empty()) {
        return {};
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i].real()) || !std::isfinite(x[i].imag())) {
            throw InvalidArgument(fmt::format("dft: non-finite input at index {}", i));
        }
    }
    if (std::has_single_bit(x.size())) {
        std::vector<cd> a(x.begin(), x.end());
        fft_pow2(a, false);
        return a;
    }
    return bluestein(x);
}

std::vector<cd> dft(std::span<const double> x) {
    std::vector<cd> c(x.begin(), x.end());
    return dft(std::span<const cd>(c));
}

Spectrum fft_magnitude(std::span<const double> x, double sampling_rate_hz) {
    if (x.size() < 2) {
        throw InvalidArgument("fft_magnitude: need at least 2 samples");
    }
    const auto full = dft(x);
    Spectrum s;
    s.length = x.size();
    s.bin_hz = sampling_rate_hz / static_cast<double>(x.size());
    s.magnitudes.resize(x.size() / 2);
    for (std::size_t k = 0; k < s.magnitudes.size(); ++k) {
        s.magnitudes[k] = std::abs(full[k]);
    }
    return s;
}

Spectrum normalize_spectrum(Spectrum s) {
    const double peak = s.magnitudes.empty() ? 0.0 : *std::max_element(s.magnitudes.begin(), s.magnitudes.end());
    if (peak == 0.0) {
        s.degenerate = true;
        return s;
    }
    for (auto& m : s.magnitudes) {
        m /= peak;
    }
    return s;
}

FeatureMatrix build_features(const Dataset& ds, const FeatureConfig& cfg) {
    const std::size_t timesteps = ds.meta.timesteps;
    for (const auto& rec : ds.records) {
        if (rec.samples.size() != ds.meta.channels * timesteps) {
            throw InvalidArgument(fmt::format("build_features: record {} has inconsistent length", rec.id));
        }
    }
    const std::size_t used = cfg.truncate == 0 ? timesteps : std::min(cfg.truncate, timesteps);
    if (used < 2) {
        throw InvalidArgument("build_features: fewer than 2 samples per channel");
    }
    const std::size_t length = cfg.pad_to_pow2 ? next_pow2(used) : used;
    const std::size_t bins = length / 2;

    FeatureMatrix fm;
    fm.fft_length = length;
    fm.bins_per_channel = bins;
    fm.bin_hz = ds.meta.sampling_rate_hz / static_cast<double>(length);
    fm.features = Matrix(ds.records.size(), kChannels * bins);
    fm.record_ids.resize(ds.records.size());
    fm.degenerate_channels.assign(ds.records.size(), 0);

    parallel_for(ds.records.size(), cfg.workers, [&](std::size_t r) {
        const auto& rec = ds.records[r];
        fm.record_ids[r] = rec.id;
        auto row = fm.features.row(r);
        std::vector<double> buf(length, 0.0);
        for (std::size_t c = 0; c < kChannels; ++c) {
            const auto ch = rec.channel(c, timesteps).first(used);
            std::fill(buf.begin(), buf.end(), 0.0);
            std::copy(ch.begin(), ch.end(), buf.begin());
            if (cfg.normalize_input) {
                const auto norm = normalize(std::span<const double>(buf.data(), used));
                std::copy(norm.values.begin(), norm.values.end(), buf.begin());
            }
            const auto spec = normalize_spectrum(fft_magnitude(buf, ds.meta.sampling_rate_hz));
            if (spec.degenerate) {
                fm.degenerate_channels[r] |= static_cast<std::uint8_t>(1u << c);
            }
            std::copy(spec.magnitudes.begin(), spec.magnitudes.end(), row.begin() + static_cast<std::ptrdiff_t>(c * bins));
        }
    });
    return fm;
}

void write_features_csv(const FeatureMatrix& fm, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError(fmt::format("cannot write '{}'", path.string()));
    }
    out << "record_id";
    for (std::size_t j = 0; j < fm.features.cols(); ++j) {
        out << ",f" << j;
    }
    out << '\n';
    for (std::size_t i = 0; i < fm.features.rows(); ++i) {
        out << fm.record_ids[i];
        for (const double v : fm.features.row(i)) {
            out << ',' << csv::format_double(v);
        }
        out << '\n';
    }
    if (!out) {
        throw IoError(fmt::format("write failed for '{}'", path.string()));
    }
}

FeatureMatrix read_features_csv(const std::filesystem::path& path) {
    const auto table = csv::read_file(path);
    if (table.header.empty() || table.header.front() != "record_id") {
        throw IoError(fmt::format("'{}' is not a feature CSV (first column must be record_id)", path.string()));
    }
    const std::size_t d = table.header.size() - 1;
    FeatureMatrix fm;
    fm.features = Matrix(table.rows.size(), d);
    fm.record_ids.resize(table.rows.size());
    fm.degenerate_channels.assign(table.rows.size(), 0);
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        fm.record_ids[i] = csv::parse_int(table.rows[i][0]);
        for (std::size_t j = 0; j < d; ++j) {
            fm.features(i, j) = csv::parse_double(table.rows[i][j + 1]);
        }
    }
    fm.bins_per_channel = d / kChannels;
    fm.fft_length = 2 * fm.bins_per_channel;
    return fm;
}

} // namespace faultclust
