#include "cangraph/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "cangraph/linalg.hpp"

namespace cangraph {
namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

bool parse_double(std::string_view s, double& out) {
    s = trim(s);
    if (s.empty()) return false;
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc{} && ptr == end;
}

bool parse_uint(std::string_view s, unsigned long& out, int base) {
    s = trim(s);
    if (s.empty()) return false;
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out, base);
    return ec == std::errc{} && ptr == end;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

}  // namespace

int majority_attack_label(const std::vector<int>& labels) {
    std::map<int, std::size_t> counts;
    for (int l : labels)
        if (l != 0) ++counts[l];
    if (counts.empty()) return 0;
    int best = 0;
    std::size_t best_count = 0;
    for (const auto& [cls, count] : counts) {
        if (count > best_count) {  // ties keep the lowest class index
            best = cls;
            best_count = count;
        }
    }
    return best;
}

ParseResult parse_car_hacking_csv(std::istream& in, int attack_class) {
    ParseResult result;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view view = trim(line);
        if (view.empty()) continue;

        auto fields = split(view, ',');
        if (fields.size() < 4) {
            result.errors.push_back({line_no, "expected timestamp,id,dlc,...,flag"});
            continue;
        }

        RawCanFrame frame;
        unsigned long id = 0, dlc = 0;
        if (!parse_double(fields[0], frame.timestamp)) {
            result.errors.push_back({line_no, "bad timestamp"});
            continue;
        }
        if (!parse_uint(fields[1], id, 16) || id > kMaxStandardId) {
            result.errors.push_back({line_no, "bad CAN id"});
            continue;
        }
        if (!parse_uint(fields[2], dlc, 10) || dlc > 8) {
            result.errors.push_back({line_no, "bad DLC"});
            continue;
        }
        if (fields.size() != 3 + dlc + 1) {
            result.errors.push_back({line_no, "DLC/payload-count mismatch"});
            continue;
        }
        frame.can_id = static_cast<std::uint16_t>(id);
        frame.dlc = static_cast<std::uint8_t>(dlc);
        bool bad_byte = false;
        for (unsigned long i = 0; i < dlc; ++i) {
            unsigned long byte = 0;
            if (!parse_uint(fields[3 + i], byte, 16) || byte > 0xFF) {
                bad_byte = true;
                break;
            }
            frame.payload.push_back(static_cast<std::uint8_t>(byte));
        }
        if (bad_byte) {
            result.errors.push_back({line_no, "bad payload byte"});
            continue;
        }
        std::string_view flag = trim(fields.back());
        if (flag == "R") {
            frame.label = 0;
        } else if (flag == "T") {
            frame.label = attack_class;
        } else {
            result.errors.push_back({line_no, "bad flag (expected R or T)"});
            continue;
        }
        result.frames.push_back(std::move(frame));
    }
    return result;
}

ParseResult parse_candump_log(std::istream& in) {
    ParseResult result;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view view = trim(line);
        if (view.empty()) continue;

        std::size_t sp1 = view.find(' ');
        std::size_t sp2 = (sp1 == std::string_view::npos) ? std::string_view::npos
                                                          : view.find(' ', sp1 + 1);
        if (sp1 == std::string_view::npos || sp2 == std::string_view::npos) {
            result.errors.push_back({line_no, "expected \"(ts) iface id#data\""});
            continue;
        }
        std::string_view ts_tok = view.substr(0, sp1);
        std::string_view frame_tok = trim(view.substr(sp2 + 1));

        RawCanFrame frame;
        if (ts_tok.size() < 3 || ts_tok.front() != '(' || ts_tok.back() != ')' ||
            !parse_double(ts_tok.substr(1, ts_tok.size() - 2), frame.timestamp)) {
            result.errors.push_back({line_no, "bad timestamp"});
            continue;
        }
        std::size_t hash = frame_tok.find('#');
        if (hash == std::string_view::npos) {
            result.errors.push_back({line_no, "missing '#'"});
            continue;
        }
        unsigned long id = 0;
        if (!parse_uint(frame_tok.substr(0, hash), id, 16) || id > kMaxStandardId) {
            result.errors.push_back({line_no, "bad CAN id"});
            continue;
        }
        frame.can_id = static_cast<std::uint16_t>(id);
        std::string_view hex = frame_tok.substr(hash + 1);
        if (hex.size() % 2 != 0 || hex.size() > 16) {
            result.errors.push_back({line_no, "odd or oversized hex payload"});
            continue;
        }
        bool bad_byte = false;
        for (std::size_t i = 0; i < hex.size(); i += 2) {
            unsigned long byte = 0;
            if (!parse_uint(hex.substr(i, 2), byte, 16)) {
                bad_byte = true;
                break;
            }
            frame.payload.push_back(static_cast<std::uint8_t>(byte));
        }
        if (bad_byte) {
            result.errors.push_back({line_no, "bad payload byte"});
            continue;
        }
        frame.dlc = static_cast<std::uint8_t>(frame.payload.size());
        result.frames.push_back(std::move(frame));
    }
    return result;
}

void write_car_hacking_csv(std::ostream& out, std::span<const RawCanFrame> frames) {
    char buf[32];
    for (const auto& f : frames) {
        std::snprintf(buf, sizeof(buf), "%.6f", f.timestamp);
        out << buf;
        std::snprintf(buf, sizeof(buf), ",%04x,%u", f.can_id, static_cast<unsigned>(f.dlc));
        out << buf;
        for (std::uint8_t b : f.payload) {
            std::snprintf(buf, sizeof(buf), ",%02x", b);
            out << buf;
        }
        out << ',' << (f.label.value_or(0) != 0 ? 'T' : 'R') << '\n';
    }
}

void write_candump_log(std::ostream& out, std::span<const RawCanFrame> frames,
                       const std::string& iface) {
    char buf[32];
    for (const auto& f : frames) {
        std::snprintf(buf, sizeof(buf), "(%.6f) ", f.timestamp);
        out << buf << iface << ' ';
        std::snprintf(buf, sizeof(buf), "%03X#", f.can_id);
        out << buf;
        for (std::uint8_t b : f.payload) {
            std::snprintf(buf, sizeof(buf), "%02X", b);
            out << buf;
        }
        out << '\n';
    }
}

std::vector<RawCanFrame> apply_label_intervals(std::vector<RawCanFrame> frames,
                                               const LabelIntervalSpec& spec) {
    for (auto& frame : frames) {
        int label = 0;
        for (const auto& entry : spec.entries) {
            if (frame.timestamp < entry.start || frame.timestamp > entry.end) continue;
            if (entry.id && *entry.id != frame.can_id) continue;
            label = entry.attack_class;  // first match wins
            break;
        }
        frame.label = label;
    }
    return frames;
}

LabelIntervalSpec read_interval_spec(std::istream& in) {
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("interval spec: ") + e.what());
    }
    LabelIntervalSpec spec;
    for (const auto& item : doc.at("entries")) {
        LabelIntervalEntry entry;
        entry.attack_class = item.at("class").get<int>();
        std::string id = item.at("id").get<std::string>();
        if (id != "*") {
            unsigned long value = 0;
            if (!parse_uint(id, value, 16) || value > kMaxStandardId)
                throw DataError("interval spec: bad id \"" + id + "\"");
            entry.id = static_cast<std::uint16_t>(value);
        }
        entry.start = item.at("start").get<double>();
        entry.end = item.at("end").get<double>();
        if (!(entry.start < entry.end))
            throw DataError("interval spec: start must precede end");
        spec.entries.push_back(entry);
    }
    return spec;
}

void write_interval_spec(std::ostream& out, const LabelIntervalSpec& spec) {
    nlohmann::json entries = nlohmann::json::array();
    char buf[8];
    for (const auto& entry : spec.entries) {
        nlohmann::json item;
        item["class"] = entry.attack_class;
        if (entry.id) {
            std::snprintf(buf, sizeof(buf), "%03x", *entry.id);
            item["id"] = buf;
        } else {
            item["id"] = "*";
        }
        item["start"] = entry.start;
        item["end"] = entry.end;
        entries.push_back(item);
    }
    out << nlohmann::json{{"entries", entries}}.dump(2) << '\n';
}

MessageRecord preprocess(const RawCanFrame& frame) {
    if (frame.dlc > 8)
        throw DataError("preprocess: DLC " + std::to_string(frame.dlc) + " exceeds 8");
    if (frame.payload.size() > 8)
        throw DataError("preprocess: payload longer than 8 bytes");

    MessageRecord rec;
    rec.can_id = frame.can_id;
    const bool regular_length = frame.dlc == 2 || frame.dlc == 5 || frame.dlc == 8;
    const std::uint8_t fill = regular_length ? 0 : 255;
    for (std::size_t i = 0; i < kPayloadSlots; ++i)
        rec.data[i] = i < frame.payload.size() ? frame.payload[i] : fill;
    rec.label = frame.label.value_or(0);
    return rec;
}

std::vector<Window> segment_windows(std::span<const MessageRecord> records,
                                    std::size_t window_size, std::size_t first_index,
                                    std::uint32_t source_file) {
    if (window_size == 0) throw DataError("segment_windows: window size must be positive");

    std::vector<Window> windows;
    const std::size_t count = records.size() / window_size;
    windows.reserve(count);
    std::vector<int> labels(window_size);
    for (std::size_t k = 0; k < count; ++k) {
        Window w;
        w.index = first_index + k;
        w.source_file = source_file;
        w.records.assign(records.begin() + k * window_size,
                         records.begin() + (k + 1) * window_size);
        for (std::size_t i = 0; i < window_size; ++i) labels[i] = w.records[i].label;
        w.window_label = majority_attack_label(labels);
        windows.push_back(std::move(w));
    }
    return windows;
}

DatasetSplit split_dataset(std::span<const Window> normal_windows,
                           std::span<const Window> attack_windows, std::uint64_t seed) {
    DatasetSplit split;
    split.seed = seed;
    std::mt19937_64 rng(seed);

    std::vector<std::size_t> normals;
    for (const auto& w : normal_windows) normals.push_back(w.index);
    seeded_shuffle(normals, rng);
    const std::size_t n_train = normals.size() * 8 / 10;
    split.train.assign(normals.begin(), normals.begin() + n_train);
    split.validation.assign(normals.begin() + n_train, normals.end());

    std::vector<std::size_t> attacked;
    for (const auto& w : attack_windows) {
        if (w.window_label != 0)
            attacked.push_back(w.index);
        else
            split.test.push_back(w.index);  // all normal windows in attack captures
    }
    seeded_shuffle(attacked, rng);
    const std::size_t a_train = attacked.size() * 7 / 10;
    const std::size_t a_val = attacked.size() * 2 / 10;
    split.train.insert(split.train.end(), attacked.begin(), attacked.begin() + a_train);
    split.validation.insert(split.validation.end(), attacked.begin() + a_train,
                            attacked.begin() + a_train + a_val);
    split.test.insert(split.test.end(), attacked.begin() + a_train + a_val, attacked.end());

    std::sort(split.train.begin(), split.train.end());
    std::sort(split.validation.begin(), split.validation.end());
    std::sort(split.test.begin(), split.test.end());

    if (split.train.empty()) split.warnings.push_back("train bucket is empty");
    if (split.validation.empty()) split.warnings.push_back("validation bucket is empty");
    if (split.test.empty()) split.warnings.push_back("test bucket is empty");
    return split;
}

}  // namespace cangraph
