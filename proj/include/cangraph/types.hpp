#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cangraph {

// Exit-code-bearing error categories. The CLI maps ConfigError -> 1,
// DataError -> 2, InternalError -> 3.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InternalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

constexpr int kMaxStandardId = 0x7FF;  // 11-bit arbitration ID
constexpr int kPayloadSlots = 8;

/// One frame as it appears in a capture file, before preprocessing.
struct RawCanFrame {
    double timestamp = 0.0;
    std::uint16_t can_id = 0;             // 11-bit, [0, 2047]
    std::uint8_t dlc = 0;                 // declared payload length, [0, 8]
    std::vector<std::uint8_t> payload;    // 0..8 bytes
    std::optional<int> label;             // class index; absent for unlabeled logs

    bool operator==(const RawCanFrame&) const = default;
};

/// One preprocessed message: CAN ID plus the padded 8-byte payload, all in
/// decimal, with the per-message class label kept alongside.
struct MessageRecord {
    std::uint16_t can_id = 0;                       // d0
    std::array<std::uint8_t, kPayloadSlots> data{}; // d1..d8 after padding
    int label = 0;                                  // 0 = normal

    bool operator==(const MessageRecord&) const = default;
};

/// N consecutive MessageRecords; the unit of graph construction.
struct Window {
    std::size_t index = 0;
    std::vector<MessageRecord> records;
    int window_label = 0;     // 0 iff all records normal, else majority attack class
    std::uint32_t source_file = 0;
};

/// Derives the window-level class: 0 iff every record is normal, otherwise
/// the majority class among nonzero labels, ties going to the lowest index.
int majority_attack_label(const std::vector<int>& labels);

struct DatasetSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;
    std::uint64_t seed = 0;
    std::vector<std::string> warnings;
};

struct LabelIntervalEntry {
    int attack_class = 0;
    std::optional<std::uint16_t> id;  // nullopt = wildcard
    double start = 0.0;
    double end = 0.0;
};

struct LabelIntervalSpec {
    std::vector<LabelIntervalEntry> entries;
};

struct ParseError {
    std::size_t line = 0;
    std::string message;
};

}  // namespace cangraph
