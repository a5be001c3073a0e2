#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace faultclust {

inline constexpr std::size_t kChannels = 6;

/// Channel order inside every record.
enum class Channel : std::size_t { V1 = 0, V2, V3, I1, I2, I3 };

inline constexpr std::array<std::string_view, kChannels> kChannelNames = {"V1", "V2", "V3", "I1", "I2", "I3"};

struct DatasetMeta {
    std::size_t record_count = 0;
    std::size_t channels = kChannels;
    std::size_t timesteps = 0;
    double sampling_rate_hz = 6400.0;
    double nominal_freq_hz = 50.0;
    // 16-bit quantization steps of the recorder; informational only.
    double voltage_step_v = 18.310;
    double current_step_a = 4.314;

    /// Samples per fundamental cycle, the decomposition period.
    std::size_t period() const;

    /// Throws InvalidArgument when any invariant is violated.
    void validate() const;

    friend bool operator==(const DatasetMeta&, const DatasetMeta&) = default;
};

/// One fault event. Samples are stored channel-major, time-minor, as float32 to
/// match the on-disk blob bit for bit.
struct WaveformRecord {
    std::int64_t id = 0;
    std::vector<float> samples;

    std::span<const float> channel(std::size_t c, std::size_t timesteps) const {
        return std::span<const float>(samples).subspan(c * timesteps, timesteps);
    }
    std::span<float> channel(std::size_t c, std::size_t timesteps) {
        return std::span<float>(samples).subspan(c * timesteps, timesteps);
    }

    friend bool operator==(const WaveformRecord&, const WaveformRecord&) = default;
};

struct Dataset {
    DatasetMeta meta;
    std::vector<WaveformRecord> records;

    /// Checks shape, id uniqueness and finiteness. Throws InvalidArgument.
    void validate() const;

    /// Index of the record with the given id, or throws NotFound.
    std::size_t index_of(std::int64_t id) const;

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Path of the float32 blob paired with a manifest path (same stem, ".f32").
std::filesystem::path blob_path_for(const std::filesystem::path& manifest);

/// Reads a manifest + blob pair. Record ids are positional (0-based blob order).
Dataset load_dataset(const std::filesystem::path& manifest);

/// Writes `manifest` and its ".f32" sibling. Record ids must be positional.
void save_dataset(const Dataset& ds, const std::filesystem::path& manifest);

/// Imports a long-format CSV with header id,channel,t,value. Channel is either an
/// index 0..5 or a name V1..I3. Ids must cover 0..n-1; every (id, channel, t) cell
/// must be present exactly once.
Dataset import_csv(const std::filesystem::path& csv, const DatasetMeta& base_meta = {});

} // namespace faultclust
