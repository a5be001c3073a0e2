#include "faultclust/labels.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <ctime>
#include <fstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "faultclust/csv.hpp"
#include "faultclust/error.hpp"

namespace faultclust {

namespace {

constexpr std::array kClasses = {FaultClass::Normal, FaultClass::ShortCircuit, FaultClass::Switching,
                                 FaultClass::Transients, FaultClass::Other};

constexpr std::array<std::string_view, 1> kNormalTypes = {"Normal"};
constexpr std::array<std::string_view, 4> kShortCircuitTypes = {"1-P-SC", "2-P-SC", "2-P-G-SC", "3-P-SC"};
constexpr std::array<std::string_view, 2> kSwitchingTypes = {"Switch On", "Switch Off"};
constexpr std::array<std::string_view, 1> kTransientTypes = {"Transients"};
constexpr std::array<std::string_view, 3> kOtherTypes = {"Off - No Switch", "Open Circuit", "Other"};

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%S", &tm);
    return fmt::format("{}.{:03d}Z", buf, static_cast<int>(ms));
}

} // namespace

std::string_view to_string(FaultClass c) {
    switch (c) {
    case FaultClass::Normal:
        return "Normal";
    case FaultClass::ShortCircuit:
        return "Short-circuit";
    case FaultClass::Switching:
        return "Switching";
    case FaultClass::Transients:
        return "Transients";
    case FaultClass::Other:
        return "Other";
    }
    return "Other";
}

std::string_view to_string(Phase p) {
    switch (p) {
    case Phase::A:
        return "A";
    case Phase::B:
        return "B";
    case Phase::C:
        return "C";
    case Phase::NotApplicable:
        return "N/A";
    case Phase::Multi:
        return "multi";
    }
    return "N/A";
}

FaultClass parse_fault_class(std::string_view s) {
    for (const auto c : kClasses) {
        if (to_string(c) == s) {
            return c;
        }
    }
    throw InvalidArgument(fmt::format("unknown fault class '{}'", s));
}

Phase parse_phase(std::string_view s) {
    for (const auto p : {Phase::A, Phase::B, Phase::C, Phase::NotApplicable, Phase::Multi}) {
        if (to_string(p) == s) {
            return p;
        }
    }
    throw InvalidArgument(fmt::format("unknown phase '{}'", s));
}

std::span<const FaultClass> all_fault_classes() { return kClasses; }

std::span<const std::string_view> fault_types_for(FaultClass c) {
    switch (c) {
    case FaultClass::Normal:
        return kNormalTypes;
    case FaultClass::ShortCircuit:
        return kShortCircuitTypes;
    case FaultClass::Switching:
        return kSwitchingTypes;
    case FaultClass::Transients:
        return kTransientTypes;
    case FaultClass::Other:
        return kOtherTypes;
    }
    return {};
}

bool is_phase_specific(std::string_view fault_type) {
    return std::find(kShortCircuitTypes.begin(), kShortCircuitTypes.end(), fault_type) != kShortCircuitTypes.end();
}

std::vector<Phase> allowed_phases(std::string_view fault_type) {
    if (fault_type == "1-P-SC") {
        return {Phase::A, Phase::B, Phase::C};
    }
    if (is_phase_specific(fault_type)) {
        return {Phase::Multi};
    }
    return {Phase::NotApplicable};
}

void validate_label(const LabelRecord& label) {
    const auto types = fault_types_for(label.fault_class);
    if (std::find(types.begin(), types.end(), label.fault_type) == types.end()) {
        throw InvalidArgument(fmt::format("fault type '{}' is not valid for class '{}'", label.fault_type,
                                          to_string(label.fault_class)));
    }
    const auto phases = allowed_phases(label.fault_type);
    if (std::find(phases.begin(), phases.end(), label.phase) == phases.end()) {
        throw InvalidArgument(
            fmt::format("phase '{}' is not valid for fault type '{}'", to_string(label.phase), label.fault_type));
    }
}

nlohmann::json label_to_json(const LabelRecord& label) {
    nlohmann::ordered_json j;
    j["sample_id"] = label.sample_id;
    j["fault_class"] = to_string(label.fault_class);
    j["fault_type"] = label.fault_type;
    j["phase"] = to_string(label.phase);
    j["comment"] = label.comment;
    return j;
}

LabelRecord label_from_json(const nlohmann::json& j) {
    LabelRecord l;
    try {
        l.sample_id = j.at("sample_id").get<std::int64_t>();
        l.fault_class = parse_fault_class(j.at("fault_class").get<std::string>());
        l.fault_type = j.at("fault_type").get<std::string>();
        l.phase = parse_phase(j.value("phase", std::string("N/A")));
        l.comment = j.value("comment", std::string());
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(fmt::format("malformed label: {}", e.what()));
    }
    validate_label(l);
    return l;
}

void write_labels_csv(std::span<const LabelRecord> labels, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError(fmt::format("cannot write '{}'", path.string()));
    }
    csv::write_row(out, {"sample_id", "fault_class", "fault_type", "phase", "comment"});
    for (const auto& l : labels) {
        csv::write_row(out, {std::to_string(l.sample_id), std::string(to_string(l.fault_class)), l.fault_type,
                             std::string(to_string(l.phase)), l.comment});
    }
}

std::vector<LabelRecord> read_labels_csv(const std::filesystem::path& path) {
    const auto t = csv::read_file(path);
    const auto c_id = t.column("sample_id");
    const auto c_class = t.column("fault_class");
    const auto c_type = t.column("fault_type");
    const auto c_phase = t.column("phase");
    const auto c_comment = t.column("comment");
    std::vector<LabelRecord> out;
    out.reserve(t.rows.size());
    for (const auto& row : t.rows) {
        LabelRecord l;
        l.sample_id = csv::parse_int(row[c_id]);
        l.fault_class = parse_fault_class(row[c_class]);
        l.fault_type = row[c_type];
        l.phase = parse_phase(row[c_phase]);
        l.comment = row[c_comment];
        validate_label(l);
        out.push_back(std::move(l));
    }
    return out;
}

LabelLog::LabelLog(std::filesystem::path path) : path_(std::move(path)) {
    std::ifstream in(path_);
    if (!in) {
        return;
    }
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        try {
            const auto j = nlohmann::json::parse(line);
            Entry e;
            e.revision = j.at("revision").get<std::uint64_t>();
            e.timestamp = j.value("timestamp", std::string());
            e.label = label_from_json(j);
            revision_ = std::max(revision_, e.revision);
            auto it = view_.find(e.label.sample_id);
            if (it == view_.end() || it->second.revision < e.revision) {
                view_[e.label.sample_id] = std::move(e);
            }
        } catch (const std::exception& ex) {
            throw IoError(fmt::format("label log '{}' line {}: {}", path_.string(), lineno, ex.what()));
        }
    }
}

LabelLog::Entry LabelLog::append(const LabelRecord& label) {
    validate_label(label);
    std::scoped_lock lock(mutex_);
    Entry e;
    e.revision = revision_ + 1;
    e.timestamp = utc_timestamp();
    e.label = label;

    nlohmann::ordered_json j;
    j["revision"] = e.revision;
    j["timestamp"] = e.timestamp;
    const auto fields = label_to_json(label);
    for (const auto& [k, v] : fields.items()) {
        j[k] = v;
    }
    std::ofstream out(path_, std::ios::app);
    if (!out) {
        throw IoError(fmt::format("cannot append to label log '{}'", path_.string()));
    }
    out << j.dump() << '\n';
    out.flush();
    if (!out) {
        throw IoError(fmt::format("write failed for label log '{}'", path_.string()));
    }
    revision_ = e.revision;
    view_[label.sample_id] = e;
    return e;
}

std::vector<LabelRecord> LabelLog::current() const {
    std::scoped_lock lock(mutex_);
    std::vector<LabelRecord> out;
    out.reserve(view_.size());
    for (const auto& [id, e] : view_) {
        out.push_back(e.label);
    }
    return out;
}

std::optional<LabelLog::Entry> LabelLog::latest(std::int64_t sample_id) const {
    std::scoped_lock lock(mutex_);
    const auto it = view_.find(sample_id);
    if (it == view_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::uint64_t LabelLog::revision() const {
    std::scoped_lock lock(mutex_);
    return revision_;
}

std::vector<LabelRecord> LabelLog::replay(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw IoError(fmt::format("label log '{}' does not exist", path.string()));
    }
    return LabelLog(path).current();
}

std::vector<LabelRecord> load_labels(const std::filesystem::path& path) {
    if (path.extension() == ".jsonl") {
        return LabelLog::replay(path);
    }
    return read_labels_csv(path);
}

} // namespace faultclust
