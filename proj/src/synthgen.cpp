#include "faultclust/synthgen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "faultclust/error.hpp"
#include "faultclust/parallel.hpp"
#include "faultclust/rng.hpp"

namespace faultclust {

namespace {

constexpr std::array kEvents = {EventType::Normal,         EventType::ScSinglePhaseA,     EventType::ScSinglePhaseB,
                                EventType::ScSinglePhaseC, EventType::ScLineLine,         EventType::ScDoubleLineGround,
                                EventType::ScThreePhase,   EventType::SwitchOn,           EventType::SwitchOff,
                                EventType::Transient,      EventType::OpenCircuit};

constexpr double kCurrentLag = std::numbers::pi / 6.0;

// Phases (0 = A, 1 = B, 2 = C) hit by each short-circuit type.
std::vector<std::size_t> affected_phases(EventType e) {
    switch (e) {
    case EventType::ScSinglePhaseA:
        return {0};
    case EventType::ScSinglePhaseB:
        return {1};
    case EventType::ScSinglePhaseC:
        return {2};
    case EventType::ScLineLine:
        return {0, 1};
    case EventType::ScDoubleLineGround:
        return {1, 2};
    case EventType::ScThreePhase:
        return {0, 1, 2};
    default:
        return {};
    }
}

std::size_t phase_index(Phase p) {
    switch (p) {
    case Phase::A:
        return 0;
    case Phase::B:
        return 1;
    case Phase::C:
        return 2;
    default:
        throw InvalidArgument("open_phase must be A, B or C");
    }
}

LabelRecord label_for(const FaultSpec& spec, std::int64_t id) {
    LabelRecord l;
    l.sample_id = id;
    switch (spec.event_type) {
    case EventType::Normal:
        l = {id, FaultClass::Normal, "Normal", Phase::NotApplicable, ""};
        break;
    case EventType::ScSinglePhaseA:
        l = {id, FaultClass::ShortCircuit, "1-P-SC", Phase::A, ""};
        break;
    case EventType::ScSinglePhaseB:
        l = {id, FaultClass::ShortCircuit, "1-P-SC", Phase::B, ""};
        break;
    case EventType::ScSinglePhaseC:
        l = {id, FaultClass::ShortCircuit, "1-P-SC", Phase::C, ""};
        break;
    case EventType::ScLineLine:
        l = {id, FaultClass::ShortCircuit, "2-P-SC", Phase::Multi, ""};
        break;
    case EventType::ScDoubleLineGround:
        l = {id, FaultClass::ShortCircuit, "2-P-G-SC", Phase::Multi, ""};
        break;
    case EventType::ScThreePhase:
        l = {id, FaultClass::ShortCircuit, "3-P-SC", Phase::Multi, ""};
        break;
    case EventType::SwitchOn:
        l = {id, FaultClass::Switching, "Switch On", Phase::NotApplicable, ""};
        break;
    case EventType::SwitchOff:
        l = {id, FaultClass::Switching, "Switch Off", Phase::NotApplicable, ""};
        break;
    case EventType::Transient:
        l = {id, FaultClass::Transients, "Transients", Phase::NotApplicable, ""};
        break;
    case EventType::OpenCircuit:
        l = {id, FaultClass::Other, "Open Circuit", Phase::NotApplicable, ""};
        break;
    }
    l.comment = fmt::format("synthetic {} severity={:.3f} inception={} duration={}", to_string(spec.event_type),
                            spec.severity, spec.inception_sample, spec.duration_samples);
    if (spec.event_type == EventType::OpenCircuit) {
        l.comment += fmt::format(" open_phase={}", to_string(spec.open_phase));
    }
    return l;
}

} // namespace

std::string_view to_string(EventType e) {
    switch (e) {
    case EventType::Normal:
        return "Normal";
    case EventType::ScSinglePhaseA:
        return "SC-1P-A";
    case EventType::ScSinglePhaseB:
        return "SC-1P-B";
    case EventType::ScSinglePhaseC:
        return "SC-1P-C";
    case EventType::ScLineLine:
        return "SC-LL";
    case EventType::ScDoubleLineGround:
        return "SC-DLG";
    case EventType::ScThreePhase:
        return "SC-3PH";
    case EventType::SwitchOn:
        return "SwitchOn";
    case EventType::SwitchOff:
        return "SwitchOff";
    case EventType::Transient:
        return "Transient";
    case EventType::OpenCircuit:
        return "OpenCircuit";
    }
    return "Normal";
}

EventType parse_event_type(std::string_view s) {
    for (const auto e : kEvents) {
        if (to_string(e) == s) {
            return e;
        }
    }
    throw InvalidArgument(fmt::format("unknown event type '{}'", s));
}

std::span<const EventType> all_event_types() { return kEvents; }

void FaultSpec::validate(const DatasetMeta& meta) const {
    meta.validate();
    if (inception_sample + duration_samples > meta.timesteps) {
        throw InvalidArgument(fmt::format("fault window [{}, {}) exceeds {} timesteps", inception_sample,
                                          inception_sample + duration_samples, meta.timesteps));
    }
    if (!(severity > 0.0 && severity <= 1.0)) {
        throw InvalidArgument("severity must lie in (0, 1]");
    }
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) {
        throw InvalidArgument("noise_std must be finite and non-negative");
    }
    if (event_type == EventType::Transient && !(transient_freq_hz >= 10.0 * meta.nominal_freq_hz)) {
        throw InvalidArgument("transient frequency must be at least 10x the nominal frequency");
    }
    if (event_type == EventType::Transient && !(transient_freq_hz < 0.5 * meta.sampling_rate_hz)) {
        throw InvalidArgument("transient frequency must be below the Nyquist frequency");
    }
    if (event_type == EventType::OpenCircuit) {
        phase_index(open_phase);
    }
}

GeneratedRecord generate(const FaultSpec& spec, const DatasetMeta& meta, std::int64_t id) {
    spec.validate(meta);
    const std::size_t n = meta.timesteps;
    const double omega = 2.0 * std::numbers::pi * meta.nominal_freq_hz / meta.sampling_rate_hz;
    const double cycle = meta.sampling_rate_hz / meta.nominal_freq_hz;
    const std::size_t t0 = spec.inception_sample;
    const std::size_t t1 = t0 + spec.duration_samples;

    GeneratedRecord out;
    out.record.id = id;
    out.record.samples.assign(kChannels * n, 0.0f);
    std::array<std::vector<double>, kChannels> ch;
    for (std::size_t p = 0; p < 3; ++p) {
        ch[p].resize(n);
        ch[p + 3].resize(n);
        const double shift = 2.0 * std::numbers::pi * static_cast<double>(p) / 3.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double ph = omega * static_cast<double>(i) - shift;
            ch[p][i] = std::sin(ph);
            ch[p + 3][i] = std::sin(ph - kCurrentLag);
        }
    }

    switch (spec.event_type) {
    case EventType::Normal:
        break;
    case EventType::SwitchOn:
        for (std::size_t p = 3; p < kChannels; ++p) {
            std::fill(ch[p].begin(), ch[p].begin() + static_cast<std::ptrdiff_t>(t0), 0.0);
        }
        break;
    case EventType::SwitchOff:
        for (std::size_t p = 3; p < kChannels; ++p) {
            std::fill(ch[p].begin() + static_cast<std::ptrdiff_t>(t0), ch[p].end(), 0.0);
        }
        break;
    case EventType::Transient: {
        const double w = 2.0 * std::numbers::pi * spec.transient_freq_hz / meta.sampling_rate_hz;
        const double tau = std::max(1.0, static_cast<double>(spec.duration_samples) / 4.0);
        for (std::size_t i = t0; i < t1; ++i) {
            const double dt = static_cast<double>(i - t0);
            const double burst = spec.severity * std::exp(-dt / tau) * std::sin(w * dt);
            for (auto& c : ch) {
                c[i] += burst;
            }
        }
        break;
    }
    case EventType::OpenCircuit: {
        auto& cur = ch[3 + phase_index(spec.open_phase)];
        std::fill(cur.begin() + static_cast<std::ptrdiff_t>(t0), cur.begin() + static_cast<std::ptrdiff_t>(t1), 0.0);
        break;
    }
    default: {
        const double v_scale = 1.0 - spec.severity;
        const double i_scale = 1.0 + 9.0 * spec.severity;
        const double tau = 2.0 * cycle;
        for (const auto p : affected_phases(spec.event_type)) {
            for (std::size_t i = t0; i < t1; ++i) {
                ch[p][i] *= v_scale;
                const double dc = 0.5 * i_scale * std::exp(-static_cast<double>(i - t0) / tau);
                ch[p + 3][i] = i_scale * ch[p + 3][i] + dc;
            }
        }
        break;
    }
    }

    Rng noise(spec.seed);
    for (std::size_t c = 0; c < kChannels; ++c) {
        auto dst = out.record.channel(c, n);
        for (std::size_t i = 0; i < n; ++i) {
            double v = ch[c][i];
            if (spec.noise_std > 0.0) {
                v += spec.noise_std * noise.normal();
            }
            dst[i] = static_cast<float>(v);
        }
    }
    out.label = label_for(spec, id);
    validate_label(out.label);
    return out;
}

GeneratedDataset generate_dataset(const std::map<EventType, std::size_t>& class_counts, const DatasetMeta& meta,
                                  std::uint64_t seed, const GeneratorOptions& opts) {
    meta.validate();
    std::vector<EventType> events;
    for (const auto& [type, count] : class_counts) {
        events.insert(events.end(), count, type);
    }
    if (events.empty()) {
        throw InvalidArgument("generate_dataset: total record count is zero");
    }
    if (!(opts.severity_min > 0.0 && opts.severity_min <= opts.severity_max && opts.severity_max <= 1.0)) {
        throw InvalidArgument("generate_dataset: severity range must lie in (0, 1]");
    }
    if (!(opts.inception_lo >= 0.0 && opts.inception_lo <= opts.inception_hi && opts.inception_hi < 1.0)) {
        throw InvalidArgument("generate_dataset: inception range must lie in [0, 1)");
    }

    Rng shuffler(derive_seed(seed, ~std::uint64_t{0}));
    for (std::size_t i = events.size() - 1; i > 0; --i) {
        std::swap(events[i], events[static_cast<std::size_t>(shuffler.below(i + 1))]);
    }

    GeneratedDataset out;
    out.dataset.meta = meta;
    out.dataset.meta.record_count = events.size();
    out.dataset.records.resize(events.size());
    out.labels.resize(events.size());
    out.events = events;
    const double cycle = meta.sampling_rate_hz / meta.nominal_freq_hz;
    const std::size_t n = meta.timesteps;

    parallel_for(events.size(), opts.workers, [&](std::size_t r) {
        Rng rng(derive_seed(seed, r));
        FaultSpec spec;
        spec.event_type = events[r];
        spec.noise_std = opts.noise_std;
        spec.severity = rng.uniform(opts.severity_min, opts.severity_max);
        spec.inception_sample =
            std::min(n - 1, static_cast<std::size_t>(rng.uniform(opts.inception_lo, opts.inception_hi) *
                                                      static_cast<double>(n)));
        const auto cycles = rng.uniform(opts.duration_cycles_min, opts.duration_cycles_max);
        spec.duration_samples = static_cast<std::size_t>(std::lround(cycles * cycle));
        spec.transient_freq_hz = rng.uniform(opts.transient_freq_min_hz, opts.transient_freq_max_hz);
        spec.open_phase = std::array{Phase::A, Phase::B, Phase::C}[rng.below(3)];
        spec.seed = rng.next_u64();
        if (spec.event_type == EventType::SwitchOn || spec.event_type == EventType::SwitchOff) {
            spec.duration_samples = n - spec.inception_sample;
        }
        spec.duration_samples = std::min(spec.duration_samples, n - spec.inception_sample);

        auto rec = generate(spec, meta, static_cast<std::int64_t>(r));
        out.dataset.records[r] = std::move(rec.record);
        out.labels[r] = std::move(rec.label);
    });
    return out;
}

} // namespace faultclust
