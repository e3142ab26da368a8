// hijacklab: config-driven runner for the model-selection hijacking lab.
//
// Usage: hijacklab <command> --config <path> [--jobs N] [--seed S] [--out DIR]
//                  [--format text|json]
//
// Exit codes: 0 success, 1 invalid configuration or arguments, 2 runtime
// failure (missing artifacts, numeric divergence, I/O).

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "hijacklab/config.hpp"
#include "hijacklab/errors.hpp"
#include "hijacklab/pipeline.hpp"

namespace {

using hijacklab::Pipeline;
using hijacklab::StageOutcome;

void print_outcomes(const std::vector<StageOutcome>& outcomes, const std::string& format) {
    if (format == "json") {
        nlohmann::ordered_json j = nlohmann::ordered_json::array();
        for (const StageOutcome& o : outcomes)
            j.push_back({{"stage", o.stage},
                         {"status", o.skipped ? "up to date" : "done"},
                         {"outputs", o.outputs.size()}});
        std::cout << j.dump(2) << "\n";
        return;
    }
    for (const StageOutcome& o : outcomes) {
        if (o.skipped)
            std::cout << "[" << o.stage << "] up to date\n";
        else
            std::cout << "[" << o.stage << "] done (" << o.outputs.size() << " outputs)\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"model-selection hijacking laboratory"};
    app.require_subcommand(1);
    app.fallthrough();  // global options may follow the subcommand

    std::string config_path;
    std::string out_override;
    std::string format = "text";
    std::optional<std::uint64_t> seed_override;
    int jobs = 1;

    app.add_option("--config", config_path, "experiment config JSON")
        ->required()
        ->check(CLI::ExistingFile);
    app.add_option("--jobs", jobs, "worker threads for grid/matrix stages");
    app.add_option("--seed", seed_override, "master seed overriding every config seed");
    app.add_option("--out", out_override, "output directory override");
    app.add_option("--format", format, "output format")
        ->check(CLI::IsMember({"text", "json"}));

    const std::vector<std::string> commands = {"gen-data", "train-grid", "metrics",
                                               "train-hvae", "attack", "report", "run-all"};
    for (const std::string& name : commands) app.add_subcommand(name);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 1;
    }

    try {
        hijacklab::ExperimentConfig config =
            hijacklab::ExperimentConfig::from_json_file(config_path);
        if (seed_override) config.override_seeds(*seed_override);
        if (!out_override.empty()) config.output_dir = out_override;
        config.validate();

        Pipeline pipeline(config, config.output_dir, jobs);
        const std::string command = app.get_subcommands().front()->get_name();

        std::vector<StageOutcome> outcomes;
        if (command == "gen-data") outcomes.push_back(pipeline.gen_data());
        else if (command == "train-grid") outcomes.push_back(pipeline.train_grid());
        else if (command == "metrics") outcomes.push_back(pipeline.metrics());
        else if (command == "train-hvae") outcomes.push_back(pipeline.train_hvae());
        else if (command == "attack") outcomes.push_back(pipeline.attack());
        else if (command == "report") outcomes.push_back(pipeline.report());
        else outcomes = pipeline.run_all();

        print_outcomes(outcomes, format);
        return 0;
    } catch (const hijacklab::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
