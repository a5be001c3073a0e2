#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "faultclust/labels.hpp"
#include "faultclust/waveform_store.hpp"

namespace faultclust {

enum class EventType {
    Normal,
    ScSinglePhaseA,
    ScSinglePhaseB,
    ScSinglePhaseC,
    ScLineLine,
    ScDoubleLineGround,
    ScThreePhase,
    SwitchOn,
    SwitchOff,
    Transient,
    OpenCircuit,
};

std::string_view to_string(EventType e);
EventType parse_event_type(std::string_view s);
std::span<const EventType> all_event_types();

/// Waveform model (per-unit amplitudes, 50 Hz-class fundamental at 120 degree offsets):
///  - short circuits scale the affected phase voltages by (1 - severity) and the
///    matching currents by (1 + 9 severity), plus a decaying DC offset in those currents;
///    line-line faults hit phases A and B, double-line-to-ground faults phases B and C;
///  - SwitchOn holds all currents at zero before inception, SwitchOff after it;
///  - Transient adds a damped burst at >= 10x the fundamental to every channel;
///  - OpenCircuit zeroes one current channel (phase `open_phase`) during the window.
struct FaultSpec {
    EventType event_type = EventType::Normal;
    std::size_t inception_sample = 0;
    std::size_t duration_samples = 0;
    double severity = 0.9;
    double noise_std = 0.0;
    std::uint64_t seed = 0;
    /// Phase whose current is interrupted for OpenCircuit.
    Phase open_phase = Phase::B;
    /// Frequency of the Transient burst; must be at least 10x the fundamental.
    double transient_freq_hz = 1000.0;

    /// Throws InvalidArgument for a spec that does not fit `meta`.
    void validate(const DatasetMeta& meta) const;
};

struct GeneratedRecord {
    WaveformRecord record;
    LabelRecord label;
};

/// Synthesises one labeled record. Noise is the only random component.
GeneratedRecord generate(const FaultSpec& spec, const DatasetMeta& meta, std::int64_t id = 0);

/// Ranges from which generate_dataset draws per-record parameters.
struct GeneratorOptions {
    double noise_std = 0.05;
    double severity_min = 0.6;
    double severity_max = 0.95;
    /// Inception drawn uniformly in [lo, hi] x timesteps.
    double inception_lo = 0.25;
    double inception_hi = 0.5;
    /// Fault duration in fundamental cycles.
    double duration_cycles_min = 2.0;
    double duration_cycles_max = 4.0;
    double transient_freq_min_hz = 800.0;
    double transient_freq_max_hz = 1600.0;
    std::size_t workers = 1;
};

struct GeneratedDataset {
    Dataset dataset;
    std::vector<LabelRecord> labels;
    /// Event type of each record, aligned with dataset.records.
    std::vector<EventType> events;
};

/// Deterministic for a fixed seed: record r of the (shuffled) output is generated
/// from derive_seed(seed, r) regardless of worker count.
GeneratedDataset generate_dataset(const std::map<EventType, std::size_t>& class_counts, const DatasetMeta& meta,
                                  std::uint64_t seed, const GeneratorOptions& opts = {});

} // namespace faultclust
