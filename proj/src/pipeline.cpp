#include "cangraph/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace cangraph {

namespace {

constexpr std::uint32_t kStoreMagic = 0x53574743;  // "CGWS"
constexpr std::uint32_t kStoreVersion = 1;

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    try {
        json doc;
        in >> doc;
        return doc;
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

std::uint16_t parse_hex_id(const std::string& text) {
    unsigned long value = 0;
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value, 16);
    if (ec != std::errc{} || ptr != end || value > kMaxStandardId)
        throw ConfigError("bad CAN id \"" + text + "\"");
    return static_cast<std::uint16_t>(value);
}

std::vector<std::uint8_t> parse_hex_bytes(const std::string& text) {
    if (text.size() % 2 != 0) throw ConfigError("hex payload needs an even digit count");
    std::vector<std::uint8_t> bytes;
    for (std::size_t i = 0; i < text.size(); i += 2) {
        unsigned value = 0;
        auto [ptr, ec] = std::from_chars(text.data() + i, text.data() + i + 2, value, 16);
        if (ec != std::errc{} || ptr != text.data() + i + 2)
            throw ConfigError("bad hex payload \"" + text + "\"");
        bytes.push_back(static_cast<std::uint8_t>(value));
    }
    return bytes;
}

std::string file_label(const CaptureFile& file) {
    return file.name.empty() ? fs::path(file.path).stem().string() : file.name;
}

struct ParsedCapture {
    std::vector<MessageRecord> records;
    std::size_t frame_count = 0;
    std::size_t error_count = 0;
};

ParsedCapture parse_capture(const CaptureFile& file, double error_threshold) {
    std::ifstream in(file.path, std::ios::binary);
    if (!in) throw ConfigError("cannot open capture: " + file.path);

    ParseResult parsed = file.format == CaptureFormat::kCarHackingCsv
                             ? parse_car_hacking_csv(in, file.attack_class)
                             : parse_candump_log(in);

    const std::size_t attempted = parsed.frames.size() + parsed.errors.size();
    if (attempted > 0) {
        const double rate =
            static_cast<double>(parsed.errors.size()) / static_cast<double>(attempted);
        if (rate > error_threshold) {
            std::ostringstream msg;
            msg << file.path << ": parse-error rate " << rate << " exceeds threshold "
                << error_threshold;
            for (std::size_t i = 0; i < std::min<std::size_t>(parsed.errors.size(), 5); ++i)
                msg << "\n  line " << parsed.errors[i].line << ": " << parsed.errors[i].message;
            throw DataError(msg.str());
        }
    }

    if (!file.interval_spec_path.empty()) {
        std::ifstream spec_in(file.interval_spec_path);
        if (!spec_in) throw ConfigError("cannot open interval spec: " + file.interval_spec_path);
        parsed.frames = apply_label_intervals(std::move(parsed.frames),
                                              read_interval_spec(spec_in));
    }

    ParsedCapture capture;
    capture.frame_count = parsed.frames.size();
    capture.error_count = parsed.errors.size();
    capture.records.reserve(parsed.frames.size());
    for (const auto& frame : parsed.frames) capture.records.push_back(preprocess(frame));
    return capture;
}

void ensure_output_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output dir " + dir + ": " + ec.message());
}

std::string store_path(const RunConfig& c) { return c.output_dir + "/windows.bin"; }
std::string manifest_path(const RunConfig& c) { return c.output_dir + "/manifest.json"; }

template <typename T>
void write_pod(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(value));
}

template <typename T>
T read_pod(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(value));
    if (!in) throw DataError("window store truncated");
    return value;
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
    const json doc = load_json(path);
    RunConfig config;
    try {
        config.window_size = doc.value("window_size", std::size_t{50});
        config.architecture.num_layers = doc.value("num_layers", 4);
        config.architecture.hidden_units = doc.value("hidden_units", 32);
        config.architecture.num_classes = doc.value("num_classes", 5);
        config.architecture.dropout_rate = doc.value("dropout", 0.5);
        config.training.batch_size = doc.value("batch_size", 40);
        config.training.learning_rate = doc.value("learning_rate", 5e-4);
        config.training.weight_decay = doc.value("weight_decay", 5e-4);
        config.training.max_epochs = doc.value("max_epochs", 100);
        config.training.early_stop_patience = doc.value("patience", 10);
        config.training.seed = doc.value("seed", std::uint64_t{1});
        config.parse_error_threshold = doc.value("parse_error_threshold", 0.01);
        config.output_dir = doc.value("output_dir", std::string("out"));
        config.graph_dump_path = doc.value("graph_dump", std::string());
        if (doc.contains("chisq")) {
            const json& chisq = doc.at("chisq");
            config.chisq.window_size = chisq.value("window_size", std::size_t{1200});
            config.chisq.alpha = chisq.value("alpha", 0.05);
            config.chisq.df = chisq.value("df", 5);
        }
        for (const json& item : doc.value("files", json::array())) {
            CaptureFile file;
            file.path = item.at("path").get<std::string>();
            file.name = item.value("name", std::string());
            const std::string format = item.value("format", std::string("car_hacking_csv"));
            if (format == "car_hacking_csv")
                file.format = CaptureFormat::kCarHackingCsv;
            else if (format == "candump")
                file.format = CaptureFormat::kCandump;
            else
                throw ConfigError("unknown capture format \"" + format + "\"");
            file.attack_class = item.value("attack_class", 1);
            file.interval_spec_path = item.value("interval_spec", std::string());
            const std::string role = item.value("role", std::string("attack"));
            if (role == "normal")
                file.role = CaptureRole::kNormal;
            else if (role == "attack")
                file.role = CaptureRole::kAttack;
            else
                throw ConfigError("unknown capture role \"" + role + "\"");
            config.files.push_back(std::move(file));
        }
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return config;
}

Scenario load_scenario(const std::string& path) {
    const json doc = load_json(path);
    Scenario scenario;
    try {
        scenario.name = doc.value("name", std::string("scenario"));
        scenario.traffic.duration = doc.at("duration").get<double>();
        scenario.traffic.seed = doc.value("seed", std::uint64_t{0});
        for (const json& item : doc.at("ecus")) {
            EcuProfile ecu;
            ecu.id = parse_hex_id(item.at("id").get<std::string>());
            ecu.period = item.at("period").get<double>();
            ecu.dlc = static_cast<std::uint8_t>(item.value("dlc", 8));
            const std::string mode = item.value("payload_mode", std::string("constant"));
            if (mode == "constant")
                ecu.mode = PayloadMode::kConstant;
            else if (mode == "counter")
                ecu.mode = PayloadMode::kCounter;
            else if (mode == "bounded_random_walk")
                ecu.mode = PayloadMode::kBoundedRandomWalk;
            else
                throw ConfigError("unknown payload mode \"" + mode + "\"");
            if (item.contains("base_payload"))
                ecu.base_payload = parse_hex_bytes(item.at("base_payload").get<std::string>());
            scenario.traffic.ecus.push_back(std::move(ecu));
        }
        for (const json& item : doc.value("attacks", json::array())) {
            AttackSpec attack;
            const std::string kind = item.at("kind").get<std::string>();
            if (kind == "dos")
                attack.kind = AttackKind::kDos;
            else if (kind == "fuzzy")
                attack.kind = AttackKind::kFuzzy;
            else if (kind == "targeted_id")
                attack.kind = AttackKind::kTargetedId;
            else if (kind == "suspension")
                attack.kind = AttackKind::kSuspension;
            else if (kind == "masquerade")
                attack.kind = AttackKind::kMasquerade;
            else
                throw ConfigError("unknown attack kind \"" + kind + "\"");
            attack.attack_class = item.at("class").get<int>();
            attack.start = item.at("start").get<double>();
            attack.end = item.at("end").get<double>();
            if (item.contains("target_id"))
                attack.target_id = parse_hex_id(item.at("target_id").get<std::string>());
            attack.rate_multiplier = item.value("rate_multiplier", 1.0);
            if (item.contains("forged_payload"))
                attack.forged_payload = parse_hex_bytes(item.at("forged_payload").get<std::string>());
            attack.seed = item.value("seed", std::uint64_t{0});
            scenario.attacks.push_back(std::move(attack));
        }
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return scenario;
}

void save_window_store(const std::string& path, const WindowStore& store) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot open window store for writing: " + path);

    write_pod(out, kStoreMagic);
    write_pod(out, kStoreVersion);
    write_pod(out, static_cast<std::uint64_t>(store.window_size));
    write_pod(out, static_cast<std::uint32_t>(store.file_names.size()));
    for (const auto& name : store.file_names) {
        write_pod(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
    }
    write_pod(out, static_cast<std::uint64_t>(store.windows.size()));
    for (const auto& window : store.windows) {
        write_pod(out, static_cast<std::uint64_t>(window.index));
        write_pod(out, window.source_file);
        write_pod(out, static_cast<std::int32_t>(window.window_label));
        for (const auto& rec : window.records) {
            write_pod(out, rec.can_id);
            out.write(reinterpret_cast<const char*>(rec.data.data()), kPayloadSlots);
            write_pod(out, static_cast<std::int32_t>(rec.label));
        }
    }
    if (!out) throw DataError("failed writing window store: " + path);
}

WindowStore load_window_store(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open window store: " + path);

    if (read_pod<std::uint32_t>(in) != kStoreMagic)
        throw DataError("not a window store (bad magic): " + path);
    if (const auto version = read_pod<std::uint32_t>(in); version != kStoreVersion)
        throw DataError("unsupported window store version " + std::to_string(version));

    WindowStore store;
    store.window_size = read_pod<std::uint64_t>(in);
    const auto file_count = read_pod<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < file_count; ++i) {
        const auto len = read_pod<std::uint32_t>(in);
        std::string name(len, '\0');
        in.read(name.data(), len);
        if (!in) throw DataError("window store truncated");
        store.file_names.push_back(std::move(name));
    }
    const auto window_count = read_pod<std::uint64_t>(in);
    store.windows.reserve(window_count);
    for (std::uint64_t k = 0; k < window_count; ++k) {
        Window window;
        window.index = read_pod<std::uint64_t>(in);
        window.source_file = read_pod<std::uint32_t>(in);
        window.window_label = read_pod<std::int32_t>(in);
        window.records.resize(store.window_size);
        for (auto& rec : window.records) {
            rec.can_id = read_pod<std::uint16_t>(in);
            in.read(reinterpret_cast<char*>(rec.data.data()), kPayloadSlots);
            if (!in) throw DataError("window store truncated");
            rec.label = read_pod<std::int32_t>(in);
        }
        store.windows.push_back(std::move(window));
    }
    return store;
}

void save_manifest(const std::string& path, const Manifest& manifest) {
    json doc;
    doc["seed"] = manifest.split.seed;
    doc["window_size"] = manifest.window_size;
    doc["num_classes"] = manifest.num_classes;
    doc["files"] = manifest.file_names;
    doc["buckets"] = {{"train", manifest.split.train},
                      {"validation", manifest.split.validation},
                      {"test", manifest.split.test}};
    doc["warnings"] = manifest.split.warnings;

    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ConfigError("cannot open manifest for writing: " + path);
    out << doc.dump(2) << '\n';
}

Manifest load_manifest(const std::string& path) {
    const json doc = load_json(path);
    Manifest manifest;
    try {
        manifest.split.seed = doc.at("seed").get<std::uint64_t>();
        manifest.window_size = doc.at("window_size").get<std::size_t>();
        manifest.num_classes = doc.at("num_classes").get<int>();
        manifest.file_names = doc.at("files").get<std::vector<std::string>>();
        manifest.split.train = doc.at("buckets").at("train").get<std::vector<std::size_t>>();
        manifest.split.validation =
            doc.at("buckets").at("validation").get<std::vector<std::size_t>>();
        manifest.split.test = doc.at("buckets").at("test").get<std::vector<std::size_t>>();
        manifest.split.warnings = doc.value("warnings", std::vector<std::string>());
    } catch (const json::exception& e) {
        throw DataError(path + ": " + e.what());
    }
    return manifest;
}

int cmd_simulate(const Scenario& scenario, const std::string& output_dir) {
    ensure_output_dir(output_dir);
    const ScenarioOutput output = generate_scenario(scenario);

    const std::string csv_path = output_dir + "/" + scenario.name + ".csv";
    {
        std::ofstream out(csv_path, std::ios::trunc);
        if (!out) throw ConfigError("cannot write " + csv_path);
        write_car_hacking_csv(out, output.frames);
    }
    const std::string spec_path = output_dir + "/" + scenario.name + ".intervals.json";
    {
        std::ofstream out(spec_path, std::ios::trunc);
        if (!out) throw ConfigError("cannot write " + spec_path);
        write_interval_spec(out, output.intervals);
    }

    std::cout << "wrote " << csv_path << " and " << spec_path << "\n";
    std::cout << "frames per class:\n";
    for (const auto& [cls, count] : output.class_counts)
        std::cout << "  class " << cls << ": " << count << "\n";
    return 0;
}

int cmd_prepare(const RunConfig& config) {
    if (config.files.empty()) throw ConfigError("prepare: no capture files configured");
    if (config.window_size == 0) throw ConfigError("prepare: window_size must be positive");
    ensure_output_dir(config.output_dir);

    WindowStore store;
    store.window_size = config.window_size;

    std::vector<Window> normal_windows, attack_windows;
    std::size_t next_index = 0;
    for (std::size_t fi = 0; fi < config.files.size(); ++fi) {
        const CaptureFile& file = config.files[fi];
        const ParsedCapture capture = parse_capture(file, config.parse_error_threshold);
        std::vector<Window> windows =
            segment_windows(capture.records, config.window_size, next_index,
                            static_cast<std::uint32_t>(fi));
        next_index += windows.size();
        store.file_names.push_back(file_label(file));

        std::cout << file_label(file) << ": " << capture.frame_count << " frames, "
                  << capture.error_count << " parse errors, " << windows.size() << " windows\n";

        auto& bucket = file.role == CaptureRole::kNormal ? normal_windows : attack_windows;
        for (auto& w : windows) {
            if (w.window_label >= config.architecture.num_classes)
                throw DataError(file.path + ": window label " +
                                std::to_string(w.window_label) + " outside the configured " +
                                std::to_string(config.architecture.num_classes) + " classes");
            store.windows.push_back(w);
            bucket.push_back(std::move(w));
        }
    }
    if (store.windows.empty()) throw DataError("prepare: no complete windows in the input");

    Manifest manifest;
    manifest.split = split_dataset(normal_windows, attack_windows, config.training.seed);
    manifest.window_size = config.window_size;
    manifest.num_classes = config.architecture.num_classes;
    manifest.file_names = store.file_names;

    save_window_store(store_path(config), store);
    save_manifest(manifest_path(config), manifest);

    if (!config.graph_dump_path.empty()) {
        std::ofstream dump(config.graph_dump_path, std::ios::trunc);
        if (!dump) throw ConfigError("cannot write " + config.graph_dump_path);
        for (const auto& window : store.windows) {
            const TimingCorrelationGraph tcg = build_tcg(window);
            write_graph_dump(dump, window, tcg, tcg_stats(tcg), build_crg(window));
        }
        std::cout << "wrote graph dump to " << config.graph_dump_path << "\n";
    }

    std::cout << "windows: " << store.windows.size() << " (train " << manifest.split.train.size()
              << ", validation " << manifest.split.validation.size() << ", test "
              << manifest.split.test.size() << ")\n";
    for (const auto& warning : manifest.split.warnings)
        std::cout << "warning: " << warning << "\n";
    std::cout << "wrote " << store_path(config) << " and " << manifest_path(config) << "\n";
    return 0;
}

namespace {

std::vector<WindowGraph> graphs_for(const WindowStore& store,
                                    const std::vector<std::size_t>& indices) {
    std::vector<WindowGraph> graphs;
    graphs.reserve(indices.size());
    for (std::size_t index : indices) {
        if (index >= store.windows.size() || store.windows[index].index != index)
            throw InternalError("window store out of sync with manifest");
        graphs.push_back(build_window_graph(store.windows[index]));
    }
    return graphs;
}

}  // namespace

int cmd_train(const RunConfig& config) {
    const WindowStore store = load_window_store(store_path(config));
    const Manifest manifest = load_manifest(manifest_path(config));
    if (manifest.window_size != config.window_size)
        throw ConfigError("train: manifest window size " + std::to_string(manifest.window_size) +
                          " does not match configured " + std::to_string(config.window_size));
    if (manifest.num_classes != config.architecture.num_classes)
        throw ConfigError("train: manifest classes do not match configured architecture");

    const std::vector<WindowGraph> train_items = graphs_for(store, manifest.split.train);
    const std::vector<WindowGraph> val_items = graphs_for(store, manifest.split.validation);

    const TrainResult result = train(train_items, val_items, config.architecture, config.training);

    const std::string ckpt_path = config.output_dir + "/model.ckpt";
    save_checkpoint(result.checkpoint, ckpt_path);

    const std::string log_path = config.output_dir + "/train.log";
    {
        std::ofstream out(log_path, std::ios::trunc);
        if (!out) throw ConfigError("cannot write " + log_path);
        for (const auto& rec : result.log) {
            json line;
            line["epoch"] = rec.epoch;
            line["train_loss"] = rec.train_loss;
            line["val_accuracy"] = rec.val_accuracy;
            line["val_macro_f1"] = rec.val_macro_f1;
            out << line.dump() << '\n';
        }
    }

    const EpochRecord& last = result.log.back();
    std::cout << "trained " << result.log.size() << " epochs ("
              << (result.early_stopped ? "early stop" : "full run") << "), best epoch "
              << result.best_epoch << ", final val macro-F1 " << last.val_macro_f1 << "\n";
    std::cout << "wrote " << ckpt_path << " and " << log_path << "\n";
    return 0;
}

EvaluationResult evaluate_checkpoint(const RunConfig& config, const ModelCheckpoint& model) {
    const WindowStore store = load_window_store(store_path(config));
    const Manifest manifest = load_manifest(manifest_path(config));
    if (manifest.split.test.empty()) throw DataError("no test windows");
    check_architecture(model, config.architecture);

    struct ScopeData {
        std::vector<int> preds, labels;
        std::vector<WindowScore> scores;
    };
    std::map<std::string, ScopeData> scopes;  // per file plus "mixed"

    for (std::size_t index : manifest.split.test) {
        if (index >= store.windows.size() || store.windows[index].index != index)
            throw InternalError("window store out of sync with manifest");
        const Window& window = store.windows[index];
        const WindowGraph wg = build_window_graph(window);
        const std::vector<int> preds =
            predict(model, wg.features.values, wg.adjacency.matrix);
        std::vector<int> labels(wg.features.labels.data(),
                                wg.features.labels.data() + wg.features.labels.size());
        const WindowScore score = score_window(window.index, preds, labels);

        const std::string& file_name = store.file_names.at(window.source_file);
        for (const std::string& scope_name : {file_name, std::string("mixed")}) {
            ScopeData& scope = scopes[scope_name];
            scope.preds.insert(scope.preds.end(), preds.begin(), preds.end());
            scope.labels.insert(scope.labels.end(), labels.begin(), labels.end());
            scope.scores.push_back(score);
        }
    }

    EvaluationResult result;
    for (auto& [name, data] : scopes) {
        EvaluationScope scope;
        scope.name = name;
        scope.confusion_matrix =
            confusion(data.preds, data.labels, config.architecture.num_classes);
        scope.report = metrics(scope.confusion_matrix);
        scope.ig = identification_granularity(data.scores, config.window_size);
        scope.window_count = data.scores.size();
        result.scopes.push_back(std::move(scope));
    }
    return result;
}

int cmd_evaluate(const RunConfig& config, const std::string& checkpoint_path) {
    const ModelCheckpoint model = load_checkpoint(checkpoint_path);
    const EvaluationResult result = evaluate_checkpoint(config, model);
    ensure_output_dir(config.output_dir);

    const std::string window_per_label =
        std::to_string(config.window_size) + "/1";  // one identified label per message
    std::map<std::string, int> class_of_file;
    for (const auto& file : config.files) class_of_file[file_label(file)] = file.attack_class;

    json report;
    report["window_size"] = config.window_size;
    report["latency_class"] = to_string(latency_class(config.window_size));
    report["window_size_per_identified_label"] = window_per_label;

    std::vector<MetricsTableRow> rows;
    for (const auto& scope : result.scopes) {
        json scope_json;
        scope_json["windows"] = scope.window_count;
        scope_json["accuracy"] = scope.report.accuracy;
        scope_json["macro_precision"] = scope.report.macro_precision;
        scope_json["macro_recall"] = scope.report.macro_recall;
        scope_json["macro_f1"] = scope.report.macro_f1;
        scope_json["identification_granularity"] = scope.ig;
        json per_class = json::array();
        for (std::size_t c = 0; c < scope.report.per_class.size(); ++c) {
            const ClassMetrics& m = scope.report.per_class[c];
            per_class.push_back({{"class", c},
                                 {"precision", m.precision},
                                 {"recall", m.recall},
                                 {"f1", m.f1},
                                 {"precision_defined", m.precision_defined},
                                 {"recall_defined", m.recall_defined},
                                 {"f1_defined", m.f1_defined},
                                 {"tp", m.tp},
                                 {"fp", m.fp},
                                 {"tn", m.tn},
                                 {"fn", m.fn}});
        }
        scope_json["per_class"] = per_class;
        report["scopes"][scope.name] = scope_json;

        MetricsTableRow row;
        row.dataset = "capture";
        row.attack = scope.name;
        row.method = "graph-gcn";
        row.accuracy = scope.report.accuracy;
        row.window_per_label = window_per_label;
        if (scope.name == "mixed") {
            row.precision = scope.report.macro_precision;
            row.recall = scope.report.macro_recall;
            row.f1 = scope.report.macro_f1;
        } else {
            // Single-attack scopes use the file's attack class as positive.
            int cls = 0;
            if (auto it = class_of_file.find(scope.name); it != class_of_file.end())
                cls = it->second;
            if (cls > 0 && cls < static_cast<int>(scope.report.per_class.size())) {
                const ClassMetrics& m = scope.report.per_class[static_cast<std::size_t>(cls)];
                row.precision = m.precision;
                row.recall = m.recall;
                row.f1 = m.f1;
            } else {
                row.precision = scope.report.macro_precision;
                row.recall = scope.report.macro_recall;
                row.f1 = scope.report.macro_f1;
            }
        }
        rows.push_back(row);

        std::ofstream cm_out(config.output_dir + "/confusion_" + scope.name + ".csv",
                             std::ios::trunc);
        write_confusion_csv(cm_out, scope.confusion_matrix);
    }

    {
        std::ofstream out(config.output_dir + "/report.json", std::ios::trunc);
        if (!out) throw ConfigError("cannot write report.json");
        out << report.dump(2) << '\n';
    }
    {
        std::ofstream out(config.output_dir + "/metrics.csv", std::ios::trunc);
        if (!out) throw ConfigError("cannot write metrics.csv");
        write_metrics_table(out, rows);
    }

    for (const auto& scope : result.scopes)
        std::cout << scope.name << ": accuracy " << scope.report.accuracy << ", macro-F1 "
                  << scope.report.macro_f1 << ", IG " << scope.ig << " over "
                  << scope.window_count << " windows\n";
    std::cout << "wrote " << config.output_dir << "/report.json and metrics.csv\n";
    return 0;
}

int cmd_gradcheck(int models, std::uint64_t seed) {
    const GradientCheckReport report = gradient_check(models, seed);
    for (std::size_t m = 0; m < report.per_model.size(); ++m)
        std::cout << "model " << m << ": max relative error " << report.per_model[m] << "\n";
    std::cout << "overall max relative error: " << report.max_relative_error << "\n";
    if (report.max_relative_error >= 1e-4) {
        std::cout << "gradient check FAILED (threshold 1e-4)\n";
        return 3;
    }
    std::cout << "gradient check passed (threshold 1e-4)\n";
    return 0;
}

ChiSquareBaselineResult run_chi_square_baseline(const RunConfig& config) {
    if (config.files.empty()) throw ConfigError("baseline-chisq: no capture files configured");

    struct CaptureWindows {
        const CaptureFile* file;
        std::vector<Window> windows;
    };
    std::vector<CaptureWindows> captures;
    for (const auto& file : config.files) {
        const ParsedCapture capture = parse_capture(file, config.parse_error_threshold);
        captures.push_back(
            {&file, segment_windows(capture.records, config.chisq.window_size)});
    }

    // Reference population: windows from attack-free captures, or failing
    // that, the label-0 windows of the attack captures.
    ChiSquareBaselineResult result;
    IdHistogram reference;
    const auto add_reference = [&](const Window& w) {
        for (const auto& rec : w.records) ++reference[rec.can_id];
        ++result.reference_windows;
    };
    for (const auto& capture : captures)
        if (capture.file->role == CaptureRole::kNormal)
            for (const auto& w : capture.windows) add_reference(w);
    if (result.reference_windows == 0)
        for (const auto& capture : captures)
            for (const auto& w : capture.windows)
                if (w.window_label == 0) add_reference(w);
    if (result.reference_windows == 0)
        throw DataError("baseline-chisq: no attack-free windows to build the reference");

    for (const auto& capture : captures) {
        if (capture.file->role == CaptureRole::kNormal) continue;
        ChiSquareScope scope;
        scope.name = file_label(*capture.file);
        scope.window_count = capture.windows.size();

        std::vector<int> alarms, truths;
        std::map<int, std::size_t> class_windows, class_alarms;
        for (const auto& w : capture.windows) {
            const ChiSquareResult r = chi_square_detect(reference, id_histogram(w.records),
                                                        config.chisq.alpha, config.chisq.df);
            alarms.push_back(r.alarm ? 1 : 0);
            truths.push_back(w.window_label != 0 ? 1 : 0);
            if (w.window_label != 0) {
                ++class_windows[w.window_label];
                if (r.alarm) ++class_alarms[w.window_label];
            }
        }
        if (!alarms.empty()) scope.window_metrics = metrics(confusion(alarms, truths, 2));
        for (const auto& [cls, total] : class_windows)
            scope.per_class_recall[cls] =
                static_cast<double>(class_alarms[cls]) / static_cast<double>(total);
        result.scopes.push_back(std::move(scope));
    }
    return result;
}

int cmd_baseline_chisq(const RunConfig& config) {
    const ChiSquareBaselineResult result = run_chi_square_baseline(config);
    ensure_output_dir(config.output_dir);

    const std::string window_per_label =
        std::to_string(config.chisq.window_size) + "/1";  // one label per window

    json report;
    report["window_size"] = config.chisq.window_size;
    report["alpha"] = config.chisq.alpha;
    report["df"] = config.chisq.df;
    report["window_size_per_identified_label"] = window_per_label;
    report["reference_windows"] = result.reference_windows;

    std::vector<MetricsTableRow> rows;
    for (const auto& scope : result.scopes) {
        json scope_json;
        scope_json["windows"] = scope.window_count;
        scope_json["accuracy"] = scope.window_metrics.accuracy;
        const bool has_attack_class = scope.window_metrics.per_class.size() > 1;
        const ClassMetrics attack =
            has_attack_class ? scope.window_metrics.per_class[1] : ClassMetrics{};
        scope_json["precision"] = attack.precision;
        scope_json["recall"] = attack.recall;
        scope_json["f1"] = attack.f1;
        json recalls;
        for (const auto& [cls, recall] : scope.per_class_recall)
            recalls[std::to_string(cls)] = recall;
        scope_json["per_class_window_recall"] = recalls;
        report["scopes"][scope.name] = scope_json;

        rows.push_back({"capture", scope.name, "chi-square", scope.window_metrics.accuracy,
                        attack.precision, attack.recall, attack.f1, window_per_label});

        std::cout << scope.name << ": window accuracy " << scope.window_metrics.accuracy
                  << ", attack recall " << attack.recall << " over " << scope.window_count
                  << " windows\n";
    }

    {
        std::ofstream out(config.output_dir + "/chisq_report.json", std::ios::trunc);
        if (!out) throw ConfigError("cannot write chisq_report.json");
        out << report.dump(2) << '\n';
    }
    {
        std::ofstream out(config.output_dir + "/chisq_metrics.csv", std::ios::trunc);
        if (!out) throw ConfigError("cannot write chisq_metrics.csv");
        write_metrics_table(out, rows);
    }
    std::cout << "wrote " << config.output_dir << "/chisq_report.json\n";
    return 0;
}

}  // namespace cangraph
