#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace faultclust {

enum class FaultClass { Normal, ShortCircuit, Switching, Transients, Other };
enum class Phase { A, B, C, NotApplicable, Multi };

std::string_view to_string(FaultClass c);
std::string_view to_string(Phase p);
/// Throws InvalidArgument for names outside the vocabulary.
FaultClass parse_fault_class(std::string_view s);
Phase parse_phase(std::string_view s);

/// All fault classes in vocabulary order.
std::span<const FaultClass> all_fault_classes();
/// Fault types allowed under a class, in vocabulary order.
std::span<const std::string_view> fault_types_for(FaultClass c);
/// True when the fault type names a specific phase or phase group.
bool is_phase_specific(std::string_view fault_type);
/// Phases accepted for a fault type.
std::vector<Phase> allowed_phases(std::string_view fault_type);

/// One expert annotation.
struct LabelRecord {
    std::int64_t sample_id = 0;
    FaultClass fault_class = FaultClass::Normal;
    std::string fault_type = "Normal";
    Phase phase = Phase::NotApplicable;
    std::string comment;

    friend bool operator==(const LabelRecord&, const LabelRecord&) = default;
};

/// Throws InvalidArgument when type/class/phase are inconsistent.
void validate_label(const LabelRecord& label);

nlohmann::json label_to_json(const LabelRecord& label);
/// Parses and validates {sample_id, fault_class, fault_type, phase, comment}.
LabelRecord label_from_json(const nlohmann::json& j);

/// CSV sample_id,fault_class,fault_type,phase,comment.
void write_labels_csv(std::span<const LabelRecord> labels, const std::filesystem::path& path);
std::vector<LabelRecord> read_labels_csv(const std::filesystem::path& path);

/// Append-only JSON-lines label log. Every append gets the next revision; the
/// current view keeps the latest revision per sample id.
class LabelLog {
public:
    struct Entry {
        std::uint64_t revision = 0;
        std::string timestamp;
        LabelRecord label;
    };

    /// Opens (and replays) `path`; the file is created on first append.
    explicit LabelLog(std::filesystem::path path);

    Entry append(const LabelRecord& label);
    /// Latest label per sample id, ordered by sample id.
    std::vector<LabelRecord> current() const;
    std::optional<Entry> latest(std::int64_t sample_id) const;
    std::uint64_t revision() const;
    const std::filesystem::path& path() const noexcept { return path_; }

    /// Replays a log file into its current view without opening it for writing.
    static std::vector<LabelRecord> replay(const std::filesystem::path& path);

private:
    std::filesystem::path path_;
    mutable std::mutex mutex_;
    std::uint64_t revision_ = 0;
    std::map<std::int64_t, Entry> view_;
};

/// Loads labels from a .jsonl log (replayed) or a .csv table.
std::vector<LabelRecord> load_labels(const std::filesystem::path& path);

} // namespace faultclust
