#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cangraph/pipeline.hpp"

namespace {

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> window_size;
    std::optional<int> max_epochs;
    std::optional<int> batch_size;
    std::optional<double> learning_rate;
    std::optional<std::string> output_dir;
    std::optional<std::string> graph_dump;

    void apply(cangraph::RunConfig& config) const {
        if (seed) config.training.seed = *seed;
        if (window_size) config.window_size = *window_size;
        if (max_epochs) config.training.max_epochs = *max_epochs;
        if (batch_size) config.training.batch_size = *batch_size;
        if (learning_rate) config.training.learning_rate = *learning_rate;
        if (output_dir) config.output_dir = *output_dir;
        if (graph_dump) config.graph_dump_path = *graph_dump;
    }
};

void add_override_flags(CLI::App* cmd, Overrides& overrides) {
    cmd->add_option("--seed", overrides.seed, "Override the configured seed");
    cmd->add_option("--window-size", overrides.window_size, "Override the window size N");
    cmd->add_option("--epochs", overrides.max_epochs, "Override max training epochs");
    cmd->add_option("--batch-size", overrides.batch_size, "Override the batch size B");
    cmd->add_option("--learning-rate", overrides.learning_rate, "Override the learning rate");
    cmd->add_option("--output-dir", overrides.output_dir, "Override the output directory");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CAN intrusion detection via per-window statistical graphs and a GCN"};
    app.require_subcommand(1);

    std::string config_path, scenario_path, checkpoint_path, output_dir = "out";
    int gradcheck_models = 20;
    std::uint64_t gradcheck_seed = 1;
    Overrides overrides;

    CLI::App* simulate = app.add_subcommand("simulate", "Generate labeled synthetic traffic");
    simulate->add_option("scenario", scenario_path, "Scenario JSON file")->required();
    simulate->add_option("--output-dir", output_dir, "Directory for the CSV and interval spec");

    CLI::App* prepare =
        app.add_subcommand("prepare", "Parse captures, window them, and write the split");
    prepare->add_option("--config", config_path, "Run configuration JSON")->required();
    prepare->add_option("--dump-graphs", overrides.graph_dump,
                        "Also write per-window TCG/CRG dumps to this file");
    add_override_flags(prepare, overrides);

    CLI::App* train = app.add_subcommand("train", "Train the classifier on prepared windows");
    train->add_option("--config", config_path, "Run configuration JSON")->required();
    add_override_flags(train, overrides);

    CLI::App* evaluate = app.add_subcommand("evaluate", "Score the test split and write reports");
    evaluate->add_option("--config", config_path, "Run configuration JSON")->required();
    evaluate->add_option("--checkpoint", checkpoint_path,
                         "Checkpoint path (default <output-dir>/model.ckpt)");
    add_override_flags(evaluate, overrides);

    CLI::App* gradcheck =
        app.add_subcommand("gradcheck", "Finite-difference check of the analytic gradients");
    gradcheck->add_option("--models", gradcheck_models, "Number of random small models");
    gradcheck->add_option("--seed", gradcheck_seed, "Seed for the random models");

    CLI::App* baseline = app.add_subcommand(
        "baseline-chisq", "Window-level chi-square goodness-of-fit baseline detector");
    baseline->add_option("--config", config_path, "Run configuration JSON")->required();
    add_override_flags(baseline, overrides);

    try {
        app.parse(argc, argv);

        if (simulate->parsed())
            return cangraph::cmd_simulate(cangraph::load_scenario(scenario_path), output_dir);

        if (gradcheck->parsed()) return cangraph::cmd_gradcheck(gradcheck_models, gradcheck_seed);

        cangraph::RunConfig config = cangraph::load_run_config(config_path);
        overrides.apply(config);

        if (prepare->parsed()) return cangraph::cmd_prepare(config);
        if (train->parsed()) return cangraph::cmd_train(config);
        if (evaluate->parsed()) {
            if (checkpoint_path.empty()) checkpoint_path = config.output_dir + "/model.ckpt";
            return cangraph::cmd_evaluate(config, checkpoint_path);
        }
        if (baseline->parsed()) return cangraph::cmd_baseline_chisq(config);
        return 1;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const cangraph::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const cangraph::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
}
