#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cangraph/types.hpp"

namespace cangraph {

enum class PayloadMode { kConstant, kCounter, kBoundedRandomWalk };

struct EcuProfile {
    std::uint16_t id = 0;
    double period = 0.0;  // seconds between frames
    PayloadMode mode = PayloadMode::kConstant;
    std::uint8_t dlc = 8;
    std::vector<std::uint8_t> base_payload;  // drawn from the seed when empty
};

struct TrafficSpec {
    std::vector<EcuProfile> ecus;
    double duration = 0.0;
    std::uint64_t seed = 0;
};

enum class AttackKind { kDos, kFuzzy, kTargetedId, kSuspension, kMasquerade };

struct AttackSpec {
    AttackKind kind = AttackKind::kDos;
    int attack_class = 1;
    double start = 0.0;
    double end = 0.0;
    std::uint16_t target_id = 0;           // targeted-id / suspension / masquerade
    double rate_multiplier = 1.0;          // dos / fuzzy
    std::vector<std::uint8_t> forged_payload;
    std::uint64_t seed = 0;
};

/// Periodic frames per profile with uniform jitter of +-1% of the period,
/// merged by timestamp. All labels 0.
std::vector<RawCanFrame> gen_normal_traffic(const TrafficSpec& spec);

/// Floods ID 0x000 with random payloads at rate_multiplier times the
/// aggregate benign rate during [start, end].
std::vector<RawCanFrame> inject_dos(std::vector<RawCanFrame> frames, const AttackSpec& spec);

/// Injects frames with uniform random IDs and payloads during [start, end].
std::vector<RawCanFrame> inject_fuzzy(std::vector<RawCanFrame> frames, const AttackSpec& spec);

/// Follows every benign target-ID frame in the interval with a forged frame
/// of the same ID shortly after it.
std::vector<RawCanFrame> inject_targeted_id(std::vector<RawCanFrame> frames,
                                            const AttackSpec& spec);

/// Removes benign target-ID frames inside the interval. Affected regions are
/// labeled downstream via the scenario's interval spec, not per frame.
std::vector<RawCanFrame> apply_suspension(std::vector<RawCanFrame> frames,
                                          const AttackSpec& spec);

/// Replaces each benign target-ID frame inside the interval in place (same
/// timestamp and ID, forged payload), preserving the timing statistics.
std::vector<RawCanFrame> apply_masquerade(std::vector<RawCanFrame> frames,
                                          const AttackSpec& spec);

struct Scenario {
    std::string name = "scenario";
    TrafficSpec traffic;
    std::vector<AttackSpec> attacks;
};

struct ScenarioOutput {
    std::vector<RawCanFrame> frames;
    LabelIntervalSpec intervals;  // side channel for re-labeling after CSV round trips
    std::map<int, std::size_t> class_counts;
};

/// Generates traffic, applies the attacks in order, and emits interval
/// entries for the attacks whose frames intervals can identify exactly
/// (DoS by ID 0, masquerade by target ID) plus wildcard entries for
/// suspension regions.
ScenarioOutput generate_scenario(const Scenario& scenario);

}  // namespace cangraph
