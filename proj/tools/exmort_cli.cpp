// exmort: command line driver for the excess-mortality pipeline.
//
//   exmort <command> --config run.json [--jobs N] [--seed S] [--out DIR]
//
// Exit codes: 0 ok, 2 configuration, 3 data, 4 numerical, 1 anything else.

#include "exmort/errors.hpp"
#include "exmort/pipeline.hpp"
#include "exmort/simulate.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

namespace {

struct Overrides {
    std::string config;
    std::optional<int> jobs;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    bool print_config = false;
};

exmort::RunConfig resolve(const Overrides &o) {
    exmort::RunConfig cfg = exmort::load_config(o.config);
    if (o.jobs) cfg.jobs = *o.jobs;
    if (o.seed) cfg.seed = *o.seed;
    if (o.out) cfg.output_dir = *o.out;
    cfg.validate();
    return cfg;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Bayesian spatio-temporal excess mortality"};
    app.set_version_flag("--version", exmort::library_version());
    app.require_subcommand(1);

    Overrides o;
    const char *pipeline[][2] = {{"prepare", "Build per-stratum model frames and the spatial graph"},
                                 {"fit", "Fit each stratum on the reference years"},
                                 {"predict", "Draw posterior predictive counts for the prediction year"},
                                 {"excess", "Summarize excess deaths at every aggregation level"},
                                 {"validate", "Leave-one-year-out cross-validation"},
                                 {"export-bundle", "Write the dashboard bundle and region geometry"},
                                 {"all", "Run every stage in order"}};
    for (const auto &[name, help] : pipeline) {
        auto *sub = app.add_subcommand(name, help);
        sub->add_option("--config", o.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--seed", o.seed, "Override the config seed");
        sub->add_option("--out", o.out, "Override the output directory");
        sub->add_flag("--print-config", o.print_config, "Print the resolved config and exit");
    }

    std::string demo_dir;
    std::uint64_t demo_seed = 1;
    auto *demo = app.add_subcommand("demo", "Write a small synthetic dataset and config");
    demo->add_option("dir", demo_dir, "Target directory")->required();
    demo->add_option("--seed", demo_seed, "Simulation seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (demo->parsed()) {
            exmort::write_demo_dataset(demo_dir, demo_seed);
            std::cout << "wrote demo dataset to " << demo_dir << '\n';
            return 0;
        }
        const std::string command = app.get_subcommands().front()->get_name();
        const exmort::RunConfig cfg = resolve(o);
        if (o.print_config) {
            std::cout << cfg.to_json().dump(2) << '\n';
            return 0;
        }
        if (command == "all") {
            exmort::run_all(cfg);
        } else {
            exmort::run_command(command, cfg);
        }
        std::cerr << command << ": done (" << exmort::provenance_line(cfg) << ")\n";
        return 0;
    } catch (const exmort::ConfigError &e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const exmort::DataError &e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const exmort::NumericalError &e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
