#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "cangraph/pipeline.hpp"

using namespace cangraph;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

Scenario small_scenario() {
    Scenario scenario;
    scenario.name = "mini";
    scenario.traffic.duration = 24.0;
    scenario.traffic.seed = 11;
    scenario.traffic.ecus.push_back({0x101, 0.01, PayloadMode::kBoundedRandomWalk, 8, {}});
    scenario.traffic.ecus.push_back({0x202, 0.02, PayloadMode::kCounter, 8, {}});

    AttackSpec dos;
    dos.kind = AttackKind::kDos;
    dos.attack_class = 1;
    dos.start = 4.0;
    dos.end = 8.0;
    dos.rate_multiplier = 1.0;
    dos.seed = 2;
    scenario.attacks.push_back(dos);

    AttackSpec masq;
    masq.kind = AttackKind::kMasquerade;
    masq.attack_class = 2;
    masq.start = 12.0;
    masq.end = 20.0;
    masq.target_id = 0x101;
    masq.forged_payload = std::vector<std::uint8_t>(8, 0xFF);
    scenario.attacks.push_back(masq);
    return scenario;
}

RunConfig small_config(const std::string& out_dir) {
    RunConfig config;
    config.window_size = 25;
    config.architecture.num_layers = 2;
    config.architecture.hidden_units = 16;
    config.architecture.num_classes = 3;
    config.architecture.dropout_rate = 0.5;
    config.training.batch_size = 8;
    config.training.learning_rate = 5e-4;
    config.training.weight_decay = 5e-4;
    config.training.max_epochs = 6;
    config.training.early_stop_patience = 6;
    config.training.seed = 21;
    config.output_dir = out_dir;

    CaptureFile file;
    file.name = "mini";
    file.path = out_dir + "/mini.csv";
    file.format = CaptureFormat::kCarHackingCsv;
    file.role = CaptureRole::kAttack;
    file.attack_class = 1;
    file.interval_spec_path = out_dir + "/mini.intervals.json";
    config.files.push_back(file);
    return config;
}

}  // namespace

TEST_CASE("run config file carries the documented defaults") {
    TempDir dir("cangraph_test_config");
    const fs::path config_path = dir.path / "run.json";
    {
        std::ofstream out(config_path);
        out << R"({"files": [{"path": "x.csv", "attack_class": 2}]})";
    }
    const RunConfig config = load_run_config(config_path.string());
    CHECK(config.window_size == 50);
    CHECK(config.training.batch_size == 40);
    CHECK(config.architecture.num_layers == 4);
    CHECK(config.architecture.hidden_units == 32);
    CHECK(config.architecture.num_classes == 5);
    CHECK(config.architecture.dropout_rate == 0.5);
    CHECK(config.training.learning_rate == 5e-4);
    CHECK(config.training.weight_decay == 5e-4);
    CHECK(config.chisq.window_size == 1200);
    CHECK(config.chisq.df == 5);
    REQUIRE(config.files.size() == 1);
    CHECK(config.files[0].attack_class == 2);
    CHECK(config.files[0].role == CaptureRole::kAttack);

    SUBCASE("missing file is a config error") {
        CHECK_THROWS_AS(load_run_config((dir.path / "absent.json").string()), ConfigError);
    }
    SUBCASE("bad format string is a config error") {
        std::ofstream out(config_path);
        out << R"({"files": [{"path": "x.csv", "format": "pcap"}]})";
        out.close();
        CHECK_THROWS_AS(load_run_config(config_path.string()), ConfigError);
    }
}

TEST_CASE("scenario json round trip") {
    TempDir dir("cangraph_test_scenario");
    const fs::path path = dir.path / "scenario.json";
    {
        std::ofstream out(path);
        out << R"({
            "name": "demo", "duration": 5.0, "seed": 3,
            "ecus": [{"id": "101", "period": 0.01, "payload_mode": "counter", "dlc": 8}],
            "attacks": [{"kind": "dos", "class": 1, "start": 1.0, "end": 2.0,
                         "rate_multiplier": 2.0}]
        })";
    }
    const Scenario scenario = load_scenario(path.string());
    CHECK(scenario.name == "demo");
    CHECK(scenario.traffic.ecus.size() == 1);
    CHECK(scenario.traffic.ecus[0].id == 0x101);
    CHECK(scenario.traffic.ecus[0].mode == PayloadMode::kCounter);
    REQUIRE(scenario.attacks.size() == 1);
    CHECK(scenario.attacks[0].kind == AttackKind::kDos);
    CHECK(scenario.attacks[0].rate_multiplier == 2.0);
}

TEST_CASE("window store round trips") {
    TempDir dir("cangraph_test_store");
    WindowStore store;
    store.window_size = 2;
    store.file_names = {"a", "b"};
    for (std::size_t k = 0; k < 3; ++k) {
        Window w;
        w.index = k;
        w.source_file = static_cast<std::uint32_t>(k % 2);
        w.window_label = static_cast<int>(k);
        for (int i = 0; i < 2; ++i) {
            MessageRecord rec;
            rec.can_id = static_cast<std::uint16_t>(100 + k);
            rec.data.fill(static_cast<std::uint8_t>(k));
            rec.label = static_cast<int>(k);
            w.records.push_back(rec);
        }
        store.windows.push_back(w);
    }
    const std::string path = (dir.path / "windows.bin").string();
    save_window_store(path, store);
    const WindowStore back = load_window_store(path);
    CHECK(back.window_size == store.window_size);
    CHECK(back.file_names == store.file_names);
    REQUIRE(back.windows.size() == store.windows.size());
    for (std::size_t k = 0; k < store.windows.size(); ++k) {
        CHECK(back.windows[k].index == store.windows[k].index);
        CHECK(back.windows[k].window_label == store.windows[k].window_label);
        CHECK(back.windows[k].records == store.windows[k].records);
    }
    CHECK_THROWS_AS(load_window_store((dir.path / "absent.bin").string()), ConfigError);
}

TEST_CASE("simulate creates missing output directories") {
    TempDir dir("cangraph_test_mkdir");
    const fs::path nested = dir.path / "a" / "b";
    REQUIRE(cmd_simulate(small_scenario(), nested.string()) == 0);
    CHECK(fs::exists(nested / "mini.csv"));
}

TEST_CASE("gradcheck subcommand reports success") {
    CHECK(cmd_gradcheck(3, 5) == 0);
}

TEST_CASE("simulate prepare train evaluate end to end") {
    TempDir dir("cangraph_test_e2e");
    const Scenario scenario = small_scenario();
    REQUIRE(cmd_simulate(scenario, dir.str()) == 0);
    CHECK(fs::exists(dir.path / "mini.csv"));
    CHECK(fs::exists(dir.path / "mini.intervals.json"));

    SUBCASE("simulate is rerunnable with identical output") {
        const std::string csv = slurp(dir.path / "mini.csv");
        const std::string spec = slurp(dir.path / "mini.intervals.json");
        REQUIRE(cmd_simulate(scenario, dir.str()) == 0);
        CHECK(slurp(dir.path / "mini.csv") == csv);
        CHECK(slurp(dir.path / "mini.intervals.json") == spec);
    }

    SUBCASE("pipeline stages chain and rerun deterministically") {
        const RunConfig config = small_config(dir.str());
        REQUIRE(cmd_prepare(config) == 0);
        REQUIRE(fs::exists(dir.path / "manifest.json"));
        const std::string manifest_bytes = slurp(dir.path / "manifest.json");

        const Manifest manifest = load_manifest((dir.path / "manifest.json").string());
        CHECK(manifest.num_classes == 3);
        CHECK(!manifest.split.train.empty());
        CHECK(!manifest.split.test.empty());

        REQUIRE(cmd_prepare(config) == 0);  // rerun without input change
        CHECK(slurp(dir.path / "manifest.json") == manifest_bytes);

        REQUIRE(cmd_train(config) == 0);
        REQUIRE(fs::exists(dir.path / "model.ckpt"));
        const std::string checkpoint_bytes = slurp(dir.path / "model.ckpt");
        const std::string log_bytes = slurp(dir.path / "train.log");

        REQUIRE(cmd_train(config) == 0);
        CHECK(slurp(dir.path / "model.ckpt") == checkpoint_bytes);
        CHECK(slurp(dir.path / "train.log") == log_bytes);

        SUBCASE("a different seed changes the checkpoint") {
            RunConfig reseeded = config;
            reseeded.training.seed = 22;
            REQUIRE(cmd_train(reseeded) == 0);
            CHECK(slurp(dir.path / "model.ckpt") != checkpoint_bytes);
        }

        SUBCASE("evaluate writes reports") {
            REQUIRE(cmd_evaluate(config, (dir.path / "model.ckpt").string()) == 0);
            CHECK(fs::exists(dir.path / "report.json"));
            CHECK(fs::exists(dir.path / "metrics.csv"));
            CHECK(fs::exists(dir.path / "confusion_mixed.csv"));
            const std::string report = slurp(dir.path / "report.json");
            CHECK(report.find("identification_granularity") != std::string::npos);
            CHECK(report.find("\"window_size_per_identified_label\": \"25/1\"") !=
                  std::string::npos);

            SUBCASE("architecture mismatch is rejected") {
                RunConfig wrong = config;
                wrong.architecture.hidden_units = 8;
                CHECK_THROWS_AS(cmd_evaluate(wrong, (dir.path / "model.ckpt").string()),
                                DataError);
            }
        }

        SUBCASE("chi-square baseline reports per-class window recall") {
            RunConfig chisq_config = config;
            chisq_config.chisq.window_size = 100;
            chisq_config.chisq.df = 1;  // two ids in this capture
            const ChiSquareBaselineResult result = run_chi_square_baseline(chisq_config);
            REQUIRE(result.scopes.size() == 1);
            CHECK(result.scopes[0].window_count > 0);
            REQUIRE(result.scopes[0].per_class_recall.count(1) == 1);
            CHECK(result.scopes[0].per_class_recall.at(1) > 0.5);  // DoS shifts the histogram
            REQUIRE(cmd_baseline_chisq(chisq_config) == 0);
            const std::string report = slurp(dir.path / "chisq_report.json");
            // One label per chi-square window, at the baseline's own window size.
            CHECK(report.find("\"window_size_per_identified_label\": \"100/1\"") !=
                  std::string::npos);
        }
    }
}

TEST_CASE("multi-file captures with per-file attack classes") {
    // The shape of the public capture bundle: one attack-free recording plus
    // one file per attack, labeled only by the R/T flag.
    TempDir dir("cangraph_test_multifile");

    TrafficSpec traffic;
    traffic.duration = 20.0;
    traffic.seed = 31;
    traffic.ecus.push_back({0x101, 0.01, PayloadMode::kBoundedRandomWalk, 8, {}});
    traffic.ecus.push_back({0x202, 0.02, PayloadMode::kCounter, 8, {}});
    traffic.ecus.push_back({0x3A0, 0.05, PayloadMode::kConstant, 8, {}});

    const auto write_file = [&](const std::string& name,
                                const std::vector<RawCanFrame>& frames) {
        std::ofstream out(dir.path / name);
        write_car_hacking_csv(out, frames);
    };
    write_file("normal.csv", gen_normal_traffic(traffic));

    TrafficSpec attack_traffic = traffic;
    attack_traffic.duration = 10.0;
    attack_traffic.seed = 32;
    const auto benign = gen_normal_traffic(attack_traffic);

    AttackSpec dos;
    dos.kind = AttackKind::kDos;
    dos.attack_class = 1;
    dos.start = 2.0;
    dos.end = 6.0;
    dos.rate_multiplier = 1.0;
    dos.seed = 1;
    write_file("dos.csv", inject_dos(benign, dos));

    AttackSpec fuzzy = dos;
    fuzzy.kind = AttackKind::kFuzzy;
    fuzzy.attack_class = 2;
    fuzzy.seed = 2;
    write_file("fuzzy.csv", inject_fuzzy(benign, fuzzy));

    AttackSpec gear;
    gear.kind = AttackKind::kTargetedId;
    gear.attack_class = 3;
    gear.start = 2.0;
    gear.end = 8.0;
    gear.target_id = 0x202;
    gear.forged_payload = std::vector<std::uint8_t>(8, 0xEE);
    write_file("gear.csv", inject_targeted_id(benign, gear));

    AttackSpec rpm = gear;
    rpm.attack_class = 4;
    rpm.target_id = 0x101;
    rpm.forged_payload = std::vector<std::uint8_t>(8, 0xDD);
    write_file("rpm.csv", inject_targeted_id(benign, rpm));

    RunConfig config;
    config.window_size = 50;
    config.architecture.num_layers = 4;
    config.architecture.hidden_units = 32;
    config.architecture.num_classes = 5;
    config.training.batch_size = 40;
    config.training.max_epochs = 3;
    config.training.early_stop_patience = 3;
    config.training.seed = 2;
    config.output_dir = dir.str();

    const auto add_file = [&](const std::string& name, CaptureRole role, int cls) {
        CaptureFile file;
        file.name = fs::path(name).stem().string();
        file.path = (dir.path / name).string();
        file.role = role;
        file.attack_class = cls;
        config.files.push_back(file);
    };
    add_file("normal.csv", CaptureRole::kNormal, 0);
    add_file("dos.csv", CaptureRole::kAttack, 1);
    add_file("fuzzy.csv", CaptureRole::kAttack, 2);
    add_file("gear.csv", CaptureRole::kAttack, 3);
    add_file("rpm.csv", CaptureRole::kAttack, 4);

    REQUIRE(cmd_prepare(config) == 0);
    const Manifest manifest = load_manifest((dir.path / "manifest.json").string());
    CHECK(manifest.num_classes == 5);
    CHECK(manifest.file_names.size() == 5);

    // Per-file classes survive windowing: each attack file contributes
    // windows of its own class.
    const WindowStore store = load_window_store((dir.path / "windows.bin").string());
    std::set<int> window_classes;
    for (const auto& w : store.windows) window_classes.insert(w.window_label);
    CHECK(window_classes == std::set<int>{0, 1, 2, 3, 4});

    REQUIRE(cmd_train(config) == 0);
    const ModelCheckpoint model =
        load_checkpoint((dir.path / "model.ckpt").string());
    const EvaluationResult result = evaluate_checkpoint(config, model);

    std::set<std::string> scope_names;
    for (const auto& scope : result.scopes) scope_names.insert(scope.name);
    CHECK(scope_names ==
          std::set<std::string>{"dos", "fuzzy", "gear", "rpm", "mixed"});
    for (const auto& scope : result.scopes) {
        CHECK(scope.window_count > 0);
        CHECK(scope.report.accuracy >= 0.0);
    }
}

TEST_CASE("prepare aborts when the parse-error rate is too high") {
    TempDir dir("cangraph_test_badcsv");
    {
        std::ofstream out(dir.path / "bad.csv");
        out << "1.0,0101,8,00,00,00,00,00,00,00,00,R\n";
        for (int i = 0; i < 10; ++i) out << "garbage line\n";
    }
    RunConfig config;
    config.window_size = 1;
    config.output_dir = dir.str();
    CaptureFile file;
    file.path = (dir.path / "bad.csv").string();
    config.files.push_back(file);
    CHECK_THROWS_WITH_AS(cmd_prepare(config), doctest::Contains("parse-error rate"), DataError);

    SUBCASE("a looser threshold lets it pass") {
        config.parse_error_threshold = 0.99;
        CHECK(cmd_prepare(config) == 0);
    }
}

TEST_CASE("candump captures flow through prepare with interval labels") {
    TempDir dir("cangraph_test_candump");

    TrafficSpec traffic;
    traffic.duration = 10.0;
    traffic.seed = 5;
    traffic.ecus.push_back({0x0D0, 0.01, PayloadMode::kBoundedRandomWalk, 8, {}});
    traffic.ecus.push_back({0x1A5, 0.02, PayloadMode::kCounter, 8, {}});

    AttackSpec masq;
    masq.kind = AttackKind::kMasquerade;
    masq.attack_class = 2;
    masq.start = 3.0;
    masq.end = 7.0;
    masq.target_id = 0x0D0;
    masq.forged_payload = std::vector<std::uint8_t>(8, 0xFF);
    const auto frames = apply_masquerade(gen_normal_traffic(traffic), masq);

    {
        std::ofstream out(dir.path / "road.log");
        write_candump_log(out, frames);  // labels are not part of the format
    }
    {
        LabelIntervalSpec spec;
        spec.entries.push_back({2, std::uint16_t{0x0D0}, 3.0, 7.0});
        std::ofstream out(dir.path / "road.intervals.json");
        write_interval_spec(out, spec);
    }

    RunConfig config;
    config.window_size = 20;
    config.architecture.num_classes = 6;
    config.architecture.num_layers = 1;
    config.output_dir = dir.str();
    CaptureFile file;
    file.name = "road";
    file.path = (dir.path / "road.log").string();
    file.format = CaptureFormat::kCandump;
    file.role = CaptureRole::kAttack;
    file.interval_spec_path = (dir.path / "road.intervals.json").string();
    config.files = {file};

    REQUIRE(cmd_prepare(config) == 0);
    CHECK(load_manifest((dir.path / "manifest.json").string()).num_classes == 6);
    const WindowStore store = load_window_store((dir.path / "windows.bin").string());
    std::size_t masq_windows = 0, masq_records = 0;
    for (const auto& w : store.windows) {
        masq_windows += w.window_label == 2;
        for (const auto& rec : w.records) masq_records += rec.label == 2;
    }
    CHECK(masq_windows > 10);   // ~30 windows overlap [3, 7]
    CHECK(masq_records > 300);  // ~400 replaced frames
}

#ifdef CANGRAPH_CLI_PATH
TEST_CASE("cli maps error categories to exit codes") {
    TempDir dir("cangraph_test_exitcodes");
    const std::string cli = CANGRAPH_CLI_PATH;
    const auto run = [&](const std::string& args) {
        const int status = std::system((cli + " " + args + " >/dev/null 2>&1").c_str());
        REQUIRE(status != -1);
        return WEXITSTATUS(status);
    };

    CHECK(run("prepare --config " + (dir.path / "absent.json").string()) == 1);
    CHECK(run("definitely-not-a-subcommand") == 1);
    CHECK(run("--help") == 0);

    {
        std::ofstream out(dir.path / "bad.csv");
        for (int i = 0; i < 10; ++i) out << "garbage\n";
        std::ofstream cfg(dir.path / "config.json");
        cfg << R"({"output_dir": ")" << dir.str() << R"(", "files": [{"path": ")"
            << (dir.path / "bad.csv").string() << R"("}]})";
    }
    CHECK(run("prepare --config " + (dir.path / "config.json").string()) == 2);
}
#endif

TEST_CASE("evaluate with no test windows fails loudly") {
    TempDir dir("cangraph_test_notest");
    // A normal-role capture only: every window lands in train/validation.
    TrafficSpec traffic;
    traffic.duration = 5.0;
    traffic.seed = 1;
    traffic.ecus.push_back({0x10, 0.005, PayloadMode::kConstant, 8, {}});
    {
        std::ofstream out(dir.path / "normal.csv");
        write_car_hacking_csv(out, gen_normal_traffic(traffic));
    }
    RunConfig config = small_config(dir.str());
    config.files.clear();
    CaptureFile file;
    file.name = "normal";
    file.path = (dir.path / "normal.csv").string();
    file.role = CaptureRole::kNormal;
    file.attack_class = 0;
    config.files = {file};

    REQUIRE(cmd_prepare(config) == 0);
    const ModelCheckpoint model = init_checkpoint(config.architecture, 1);
    CHECK_THROWS_WITH_AS(evaluate_checkpoint(config, model), doctest::Contains("no test windows"),
                         DataError);
}
