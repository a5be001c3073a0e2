#include "faultclust/waveform_store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <unordered_map>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "faultclust/csv.hpp"
#include "faultclust/error.hpp"

namespace faultclust {

namespace {

static_assert(sizeof(float) == 4);

std::uint32_t to_little_endian(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::little) {
        return v;
    } else {
        return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
    }
}

std::size_t channel_from_string(std::string_view s) {
    for (std::size_t c = 0; c < kChannels; ++c) {
        if (s == kChannelNames[c]) {
            return c;
        }
    }
    const long long idx = csv::parse_int(s);
    if (idx < 0 || idx >= static_cast<long long>(kChannels)) {
        throw IoError(fmt::format("csv import: channel '{}' out of range", s));
    }
    return static_cast<std::size_t>(idx);
}

} // namespace

std::size_t DatasetMeta::period() const {
    return static_cast<std::size_t>(std::lround(sampling_rate_hz / nominal_freq_hz));
}

void DatasetMeta::validate() const {
    if (channels != kChannels) {
        throw InvalidArgument(fmt::format("dataset must have {} channels, got {}", kChannels, channels));
    }
    if (timesteps == 0) {
        throw InvalidArgument("dataset timesteps must be positive");
    }
    if (!(std::isfinite(sampling_rate_hz) && std::isfinite(nominal_freq_hz) && nominal_freq_hz > 0.0)) {
        throw InvalidArgument("sampling and nominal frequencies must be finite and positive");
    }
    if (!(sampling_rate_hz > 2.0 * nominal_freq_hz)) {
        throw InvalidArgument("sampling rate must exceed twice the nominal frequency");
    }
    if (period() < 2) {
        throw InvalidArgument("decomposition period must be at least 2 samples");
    }
}

void Dataset::validate() const {
    meta.validate();
    if (meta.record_count != records.size()) {
        throw InvalidArgument(
            fmt::format("record_count {} does not match {} records", meta.record_count, records.size()));
    }
    std::set<std::int64_t> ids;
    const std::size_t expected = meta.channels * meta.timesteps;
    for (const auto& r : records) {
        if (r.samples.size() != expected) {
            throw InvalidArgument(fmt::format("record {} has {} samples, expected {}", r.id, r.samples.size(), expected));
        }
        if (!ids.insert(r.id).second) {
            throw InvalidArgument(fmt::format("duplicate record id {}", r.id));
        }
        for (const float v : r.samples) {
            if (!std::isfinite(v)) {
                throw InvalidArgument(fmt::format("record {} contains a non-finite sample", r.id));
            }
        }
    }
}

std::size_t Dataset::index_of(std::int64_t id) const {
    // Ids are positional for stored datasets; fall back to a scan otherwise.
    if (id >= 0 && static_cast<std::size_t>(id) < records.size() && records[static_cast<std::size_t>(id)].id == id) {
        return static_cast<std::size_t>(id);
    }
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].id == id) {
            return i;
        }
    }
    throw NotFound(fmt::format("unknown sample id {}", id));
}

std::filesystem::path blob_path_for(const std::filesystem::path& manifest) {
    auto blob = manifest;
    blob.replace_extension(".f32");
    return blob;
}

Dataset load_dataset(const std::filesystem::path& manifest) {
    std::ifstream in(manifest);
    if (!in) {
        throw IoError(fmt::format("cannot open manifest '{}'", manifest.string()));
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(fmt::format("malformed manifest '{}': {}", manifest.string(), e.what()));
    }

    Dataset ds;
    try {
        ds.meta.record_count = j.at("record_count").get<std::size_t>();
        ds.meta.channels = j.at("channels").get<std::size_t>();
        ds.meta.timesteps = j.at("timesteps").get<std::size_t>();
        ds.meta.sampling_rate_hz = j.at("sampling_rate_hz").get<double>();
        ds.meta.nominal_freq_hz = j.at("nominal_freq_hz").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError(fmt::format("manifest '{}' is missing a field: {}", manifest.string(), e.what()));
    }
    try {
        ds.meta.validate();
    } catch (const InvalidArgument& e) {
        throw IoError(fmt::format("manifest '{}': {}", manifest.string(), e.what()));
    }

    const auto blob = blob_path_for(manifest);
    std::error_code ec;
    const auto blob_bytes = std::filesystem::file_size(blob, ec);
    if (ec) {
        throw IoError(fmt::format("cannot stat blob '{}'", blob.string()));
    }
    const std::size_t per_record = ds.meta.channels * ds.meta.timesteps;
    const std::uintmax_t expected_bytes = static_cast<std::uintmax_t>(ds.meta.record_count) * per_record * 4;
    if (blob_bytes != expected_bytes) {
        throw IoError(fmt::format("shape mismatch: manifest implies {} bytes, blob '{}' has {}", expected_bytes,
                                  blob.string(), blob_bytes));
    }

    std::ifstream bin(blob, std::ios::binary);
    if (!bin) {
        throw IoError(fmt::format("cannot open blob '{}'", blob.string()));
    }
    std::vector<std::uint32_t> raw(per_record);
    ds.records.resize(ds.meta.record_count);
    for (std::size_t r = 0; r < ds.meta.record_count; ++r) {
        bin.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(per_record * 4));
        if (!bin) {
            throw IoError(fmt::format("short read in blob '{}'", blob.string()));
        }
        auto& rec = ds.records[r];
        rec.id = static_cast<std::int64_t>(r);
        rec.samples.resize(per_record);
        for (std::size_t i = 0; i < per_record; ++i) {
            const std::uint32_t bits = to_little_endian(raw[i]);
            float v;
            std::memcpy(&v, &bits, 4);
            if (!std::isfinite(v)) {
                throw IoError(fmt::format("record {} contains a non-finite value at offset {}", r, i));
            }
            rec.samples[i] = v;
        }
    }
    return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& manifest) {
    ds.validate();
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        if (ds.records[i].id != static_cast<std::int64_t>(i)) {
            throw InvalidArgument("save_dataset: record ids must be positional (0..n-1 in order)");
        }
    }

    nlohmann::ordered_json j;
    j["record_count"] = ds.meta.record_count;
    j["channels"] = ds.meta.channels;
    j["timesteps"] = ds.meta.timesteps;
    j["sampling_rate_hz"] = ds.meta.sampling_rate_hz;
    j["nominal_freq_hz"] = ds.meta.nominal_freq_hz;

    {
        std::ofstream out(manifest, std::ios::trunc);
        if (!out) {
            throw IoError(fmt::format("cannot write manifest '{}'", manifest.string()));
        }
        out << j.dump(2) << '\n';
        if (!out) {
            throw IoError(fmt::format("write failed for '{}'", manifest.string()));
        }
    }

    const auto blob = blob_path_for(manifest);
    std::ofstream bout(blob, std::ios::binary | std::ios::trunc);
    if (!bout) {
        throw IoError(fmt::format("cannot write blob '{}'", blob.string()));
    }
    std::vector<std::uint32_t> raw;
    for (const auto& rec : ds.records) {
        raw.resize(rec.samples.size());
        for (std::size_t i = 0; i < rec.samples.size(); ++i) {
            std::uint32_t bits;
            std::memcpy(&bits, &rec.samples[i], 4);
            raw[i] = to_little_endian(bits);
        }
        bout.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
    }
    if (!bout) {
        throw IoError(fmt::format("write failed for '{}'", blob.string()));
    }
}

Dataset import_csv(const std::filesystem::path& path, const DatasetMeta& base_meta) {
    const auto table = csv::read_file(path);
    const auto c_id = table.column("id");
    const auto c_ch = table.column("channel");
    const auto c_t = table.column("t");
    const auto c_v = table.column("value");

    long long max_id = -1;
    long long max_t = -1;
    struct Cell {
        std::size_t id, ch, t;
        float v;
    };
    std::vector<Cell> cells;
    cells.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        const long long id = csv::parse_int(row[c_id]);
        const long long t = csv::parse_int(row[c_t]);
        if (id < 0 || t < 0) {
            throw IoError("csv import: negative id or t");
        }
        max_id = std::max(max_id, id);
        max_t = std::max(max_t, t);
        cells.push_back({static_cast<std::size_t>(id), channel_from_string(row[c_ch]), static_cast<std::size_t>(t),
                         static_cast<float>(csv::parse_double(row[c_v]))});
    }

    Dataset ds;
    ds.meta = base_meta;
    ds.meta.channels = kChannels;
    ds.meta.record_count = static_cast<std::size_t>(max_id + 1);
    ds.meta.timesteps = static_cast<std::size_t>(max_t + 1);
    const std::size_t per_record = kChannels * ds.meta.timesteps;
    if (cells.size() != ds.meta.record_count * per_record) {
        throw IoError(fmt::format("csv import: expected {} cells for {} records x {} timesteps, found {}",
                                  ds.meta.record_count * per_record, ds.meta.record_count, ds.meta.timesteps,
                                  cells.size()));
    }
    ds.records.resize(ds.meta.record_count);
    std::vector<bool> seen(ds.meta.record_count * per_record, false);
    for (std::size_t r = 0; r < ds.records.size(); ++r) {
        ds.records[r].id = static_cast<std::int64_t>(r);
        ds.records[r].samples.assign(per_record, 0.0f);
    }
    for (const auto& cell : cells) {
        const std::size_t offset = cell.ch * ds.meta.timesteps + cell.t;
        const std::size_t flat = cell.id * per_record + offset;
        if (seen[flat]) {
            throw IoError(fmt::format("csv import: duplicate cell id={} channel={} t={}", cell.id, cell.ch, cell.t));
        }
        seen[flat] = true;
        ds.records[cell.id].samples[offset] = cell.v;
    }
    ds.validate();
    return ds;
}

} // namespace faultclust
