#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cangraph/eval.hpp"
#include "cangraph/gcn.hpp"
#include "cangraph/ingest.hpp"
#include "cangraph/synth.hpp"

namespace cangraph {

enum class CaptureFormat { kCarHackingCsv, kCandump };
enum class CaptureRole { kNormal, kAttack };

struct CaptureFile {
    std::string name;
    std::string path;
    CaptureFormat format = CaptureFormat::kCarHackingCsv;
    CaptureRole role = CaptureRole::kAttack;
    int attack_class = 1;            // class assigned to 'T'-flagged frames
    std::string interval_spec_path;  // when set, labels come from the interval spec
};

struct ChiSquareSettings {
    std::size_t window_size = 1200;
    double alpha = 0.05;
    int df = 5;
};

/// Everything a run needs; one config file drives all stages.
struct RunConfig {
    std::vector<CaptureFile> files;
    std::size_t window_size = 50;
    GcnArchitecture architecture;
    TrainConfig training;
    double parse_error_threshold = 0.01;
    ChiSquareSettings chisq;
    std::string output_dir = "out";
    std::string graph_dump_path;  // when set, prepare writes per-window graph dumps here
};

RunConfig load_run_config(const std::string& path);
Scenario load_scenario(const std::string& path);

/// Preprocessed windows cached between prepare and the later stages.
struct WindowStore {
    std::size_t window_size = 0;
    std::vector<std::string> file_names;
    std::vector<Window> windows;  // global index order
};

void save_window_store(const std::string& path, const WindowStore& store);
WindowStore load_window_store(const std::string& path);

struct Manifest {
    DatasetSplit split;
    std::size_t window_size = 0;
    int num_classes = 0;
    std::vector<std::string> file_names;
};

void save_manifest(const std::string& path, const Manifest& manifest);
Manifest load_manifest(const std::string& path);

// Subcommand entry points. They throw ConfigError / DataError /
// InternalError; the CLI maps those to exit codes 1 / 2 / 3.
int cmd_simulate(const Scenario& scenario, const std::string& output_dir);
int cmd_prepare(const RunConfig& config);
int cmd_train(const RunConfig& config);
int cmd_evaluate(const RunConfig& config, const std::string& checkpoint_path);
int cmd_gradcheck(int models, std::uint64_t seed);
int cmd_baseline_chisq(const RunConfig& config);

/// Per-scope results assembled by cmd_evaluate, also returned for callers
/// that want the numbers without re-reading report.json.
struct EvaluationScope {
    std::string name;
    MetricsReport report;
    ConfusionMatrix confusion_matrix;
    double ig = 0.0;
    std::size_t window_count = 0;
};

struct EvaluationResult {
    std::vector<EvaluationScope> scopes;  // one per attack file plus "mixed"
};

EvaluationResult evaluate_checkpoint(const RunConfig& config, const ModelCheckpoint& model);

struct ChiSquareScope {
    std::string name;
    MetricsReport window_metrics;            // binary: alarm vs any-attack truth
    std::map<int, double> per_class_recall;  // window-level recall per attack class
    std::size_t window_count = 0;
};

struct ChiSquareBaselineResult {
    std::vector<ChiSquareScope> scopes;
    std::size_t reference_windows = 0;
};

ChiSquareBaselineResult run_chi_square_baseline(const RunConfig& config);

}  // namespace cangraph
