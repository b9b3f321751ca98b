#include "cangraph/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "cangraph/linalg.hpp"

namespace cangraph {

namespace {

constexpr double kJitterFraction = 0.01;
constexpr double kTargetedFollowUpDelay = 1e-4;  // 0.1 ms after the trigger frame

std::mt19937_64 seeded_rng(std::uint64_t a, std::uint64_t b) {
    std::seed_seq seq{a, b};
    return std::mt19937_64(seq);
}

void merge_sorted(std::vector<RawCanFrame>& frames, std::vector<RawCanFrame>&& injected) {
    std::sort(injected.begin(), injected.end(),
              [](const RawCanFrame& a, const RawCanFrame& b) { return a.timestamp < b.timestamp; });
    std::vector<RawCanFrame> merged;
    merged.reserve(frames.size() + injected.size());
    std::merge(std::make_move_iterator(frames.begin()), std::make_move_iterator(frames.end()),
               std::make_move_iterator(injected.begin()), std::make_move_iterator(injected.end()),
               std::back_inserter(merged),
               [](const RawCanFrame& a, const RawCanFrame& b) { return a.timestamp < b.timestamp; });
    frames = std::move(merged);
}

double benign_rate(const std::vector<RawCanFrame>& frames) {
    if (frames.size() < 2) return 0.0;
    const double span = frames.back().timestamp - frames.front().timestamp;
    if (span <= 0.0) return 0.0;
    std::size_t benign = 0;
    for (const auto& f : frames) benign += f.label.value_or(0) == 0;
    return static_cast<double>(benign) / span;
}

std::vector<std::uint8_t> random_payload(std::mt19937_64& rng, std::size_t dlc) {
    std::vector<std::uint8_t> payload(dlc);
    for (auto& b : payload) b = static_cast<std::uint8_t>(rng() & 0xFF);
    return payload;
}

void validate_interval(const AttackSpec& spec) {
    if (!(spec.start < spec.end) && spec.start != spec.end)
        throw ConfigError("attack: start must not exceed end");
}

// Frames injected at rate_multiplier x the benign rate, evenly spaced over
// the interval. Shared by the DoS and fuzzy injectors.
std::vector<RawCanFrame> rate_injection(const std::vector<RawCanFrame>& frames,
                                        const AttackSpec& spec, bool random_id) {
    validate_interval(spec);
    std::vector<RawCanFrame> injected;
    const double rate = benign_rate(frames) * spec.rate_multiplier;
    const double span = spec.end - spec.start;
    const auto count = static_cast<std::size_t>(std::llround(rate * span));
    if (count == 0) return injected;

    auto rng = seeded_rng(spec.seed, static_cast<std::uint64_t>(spec.kind));
    const double dt = span / static_cast<double>(count);
    injected.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        RawCanFrame frame;
        frame.timestamp = spec.start + (static_cast<double>(i) + 0.5) * dt;
        frame.can_id = random_id ? static_cast<std::uint16_t>(rng() % (kMaxStandardId + 1)) : 0;
        frame.dlc = 8;
        frame.payload = random_payload(rng, 8);
        frame.label = spec.attack_class;
        injected.push_back(std::move(frame));
    }
    return injected;
}

}  // namespace

std::vector<RawCanFrame> gen_normal_traffic(const TrafficSpec& spec) {
    if (spec.ecus.empty()) throw ConfigError("traffic: at least one ECU profile required");
    if (spec.duration <= 0.0) throw ConfigError("traffic: duration must be positive");
    std::set<std::uint16_t> seen;
    for (const auto& ecu : spec.ecus) {
        if (ecu.period <= 0.0) throw ConfigError("traffic: ECU period must be positive");
        if (ecu.dlc > 8) throw ConfigError("traffic: DLC exceeds 8");
        if (!seen.insert(ecu.id).second)
            throw ConfigError("traffic: duplicate ECU id " + std::to_string(ecu.id));
    }

    std::vector<RawCanFrame> frames;
    for (std::size_t p = 0; p < spec.ecus.size(); ++p) {
        const EcuProfile& ecu = spec.ecus[p];
        auto rng = seeded_rng(spec.seed, static_cast<std::uint64_t>(p));

        std::vector<std::uint8_t> state = ecu.base_payload;
        state.resize(ecu.dlc);
        if (ecu.base_payload.empty())
            for (auto& b : state) b = static_cast<std::uint8_t>(64 + rng() % 128);

        for (std::size_t k = 0;; ++k) {
            const double jitter = uniform_symmetric(rng, kJitterFraction * ecu.period);
            const double t = static_cast<double>(k) * ecu.period + jitter;
            if (t >= spec.duration) break;

            RawCanFrame frame;
            frame.timestamp = std::max(0.0, t);
            frame.can_id = ecu.id;
            frame.dlc = ecu.dlc;
            frame.label = 0;
            switch (ecu.mode) {
                case PayloadMode::kConstant:
                    frame.payload = state;
                    break;
                case PayloadMode::kCounter:
                    frame.payload = state;
                    if (!frame.payload.empty())
                        frame.payload[0] = static_cast<std::uint8_t>((state[0] + k) & 0xFF);
                    break;
                case PayloadMode::kBoundedRandomWalk:
                    for (auto& b : state) {
                        const int step = uniform01(rng) < 0.5 ? -1 : 1;
                        b = static_cast<std::uint8_t>(std::clamp(static_cast<int>(b) + step, 0, 255));
                    }
                    frame.payload = state;
                    break;
            }
            frames.push_back(std::move(frame));
        }
    }
    std::stable_sort(frames.begin(), frames.end(),
                     [](const RawCanFrame& a, const RawCanFrame& b) {
                         return a.timestamp < b.timestamp;
                     });
    return frames;
}

std::vector<RawCanFrame> inject_dos(std::vector<RawCanFrame> frames, const AttackSpec& spec) {
    merge_sorted(frames, rate_injection(frames, spec, /*random_id=*/false));
    return frames;
}

std::vector<RawCanFrame> inject_fuzzy(std::vector<RawCanFrame> frames, const AttackSpec& spec) {
    merge_sorted(frames, rate_injection(frames, spec, /*random_id=*/true));
    return frames;
}

std::vector<RawCanFrame> inject_targeted_id(std::vector<RawCanFrame> frames,
                                            const AttackSpec& spec) {
    validate_interval(spec);
    std::vector<RawCanFrame> injected;
    for (const auto& frame : frames) {
        if (frame.can_id != spec.target_id || frame.label.value_or(0) != 0) continue;
        if (frame.timestamp < spec.start || frame.timestamp > spec.end) continue;
        RawCanFrame forged;
        forged.timestamp = frame.timestamp + kTargetedFollowUpDelay;
        forged.can_id = spec.target_id;
        forged.payload = spec.forged_payload;
        forged.dlc = static_cast<std::uint8_t>(spec.forged_payload.size());
        forged.label = spec.attack_class;
        injected.push_back(std::move(forged));
    }
    merge_sorted(frames, std::move(injected));
    return frames;
}

std::vector<RawCanFrame> apply_suspension(std::vector<RawCanFrame> frames,
                                          const AttackSpec& spec) {
    validate_interval(spec);
    std::erase_if(frames, [&](const RawCanFrame& frame) {
        return frame.can_id == spec.target_id && frame.label.value_or(0) == 0 &&
               frame.timestamp >= spec.start && frame.timestamp <= spec.end;
    });
    return frames;
}

std::vector<RawCanFrame> apply_masquerade(std::vector<RawCanFrame> frames,
                                          const AttackSpec& spec) {
    validate_interval(spec);
    for (auto& frame : frames) {
        if (frame.can_id != spec.target_id || frame.label.value_or(0) != 0) continue;
        if (frame.timestamp < spec.start || frame.timestamp > spec.end) continue;
        frame.payload = spec.forged_payload;
        frame.dlc = static_cast<std::uint8_t>(spec.forged_payload.size());
        frame.label = spec.attack_class;
    }
    return frames;
}

ScenarioOutput generate_scenario(const Scenario& scenario) {
    ScenarioOutput out;
    out.frames = gen_normal_traffic(scenario.traffic);

    for (const auto& attack : scenario.attacks) {
        switch (attack.kind) {
            case AttackKind::kDos:
                for (const auto& ecu : scenario.traffic.ecus)
                    if (ecu.id == 0)
                        throw ConfigError("scenario: DoS injection clashes with a benign ID 0");
                out.frames = inject_dos(std::move(out.frames), attack);
                out.intervals.entries.push_back(
                    {attack.attack_class, std::uint16_t{0}, attack.start, attack.end});
                break;
            case AttackKind::kFuzzy:
                out.frames = inject_fuzzy(std::move(out.frames), attack);
                break;
            case AttackKind::kTargetedId:
                out.frames = inject_targeted_id(std::move(out.frames), attack);
                break;
            case AttackKind::kSuspension:
                out.frames = apply_suspension(std::move(out.frames), attack);
                break;
            case AttackKind::kMasquerade:
                out.frames = apply_masquerade(std::move(out.frames), attack);
                out.intervals.entries.push_back(
                    {attack.attack_class, attack.target_id, attack.start, attack.end});
                break;
        }
    }
    // Wildcard suspension markers go last so ID-bound entries match first.
    for (const auto& attack : scenario.attacks)
        if (attack.kind == AttackKind::kSuspension)
            out.intervals.entries.push_back(
                {attack.attack_class, std::nullopt, attack.start, attack.end});

    for (const auto& frame : out.frames) ++out.class_counts[frame.label.value_or(0)];
    return out;
}

}  // namespace cangraph
