#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cangraph/types.hpp"

namespace cangraph {

/// Frames plus the record-level errors encountered while reading them.
struct ParseResult {
    std::vector<RawCanFrame> frames;
    std::vector<ParseError> errors;
};

/// Reads the hacking-lab CSV dialect: timestamp, 4-hex-digit ID, DLC,
/// DLC hex data bytes, and a trailing R/T flag. Frames flagged 'T' are
/// labeled with `attack_class`, 'R' with 0. Malformed lines are skipped
/// and reported with their line number.
ParseResult parse_car_hacking_csv(std::istream& in, int attack_class = 1);

/// Reads candump-style "(timestamp) iface ID#HEXDATA" lines. Labels are
/// left absent; DLC is the number of hex byte pairs.
ParseResult parse_candump_log(std::istream& in);

void write_car_hacking_csv(std::ostream& out, std::span<const RawCanFrame> frames);
void write_candump_log(std::ostream& out, std::span<const RawCanFrame> frames,
                       const std::string& iface = "can0");

/// Labels each frame with the class of the first interval entry whose time
/// range contains it and whose ID matches (or is the wildcard); frames
/// matching no entry get label 0.
std::vector<RawCanFrame> apply_label_intervals(std::vector<RawCanFrame> frames,
                                               const LabelIntervalSpec& spec);

LabelIntervalSpec read_interval_spec(std::istream& in);
void write_interval_spec(std::ostream& out, const LabelIntervalSpec& spec);

/// Converts a frame into the fixed 10-value decimal form. Payload slots past
/// the DLC are padded with 0 when the DLC is one of the regular lengths
/// {2, 5, 8} and with 255 otherwise.
MessageRecord preprocess(const RawCanFrame& frame);

/// Splits records into floor(len/N) consecutive windows, dropping the
/// trailing partial window. `first_index` offsets Window::index so windows
/// from several captures share one index space.
std::vector<Window> segment_windows(std::span<const MessageRecord> records,
                                    std::size_t window_size,
                                    std::size_t first_index = 0,
                                    std::uint32_t source_file = 0);

/// Shuffles normal-capture windows by seed and splits them 80/20 into
/// train/validation; attack-capture windows with a nonzero label are split
/// 70/20/10 into train/validation/test, and attack-capture windows that are
/// entirely normal all go to test.
DatasetSplit split_dataset(std::span<const Window> normal_windows,
                           std::span<const Window> attack_windows,
                           std::uint64_t seed);

}  // namespace cangraph
