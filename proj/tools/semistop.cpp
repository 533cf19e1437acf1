#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "semistop/harness.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;

struct Flags {
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> max_iters;
    std::optional<std::string> early_stop;
    bool dump_matrix = false;
    bool deterministic = false;
};

void add_flags(CLI::App& cmd, Flags& f) {
    cmd.add_option("--out", f.out, "Output directory");
    cmd.add_option("--seed", f.seed, "Seed for noise and trace probes");
    cmd.add_option("--max-iters", f.max_iters, "Iteration budget");
    cmd.add_option("--early-stop", f.early_stop, "End the run when this rule fires");
    cmd.add_flag("--dump-matrix", f.dump_matrix, "Write the system matrix (binary)");
    cmd.add_flag("--deterministic", f.deterministic, "Require bitwise reproducible output");
}

void apply(semistop::ExperimentConfig& cfg, const Flags& f) {
    if (f.out) cfg.output = *f.out;
    if (f.seed) {
        cfg.noise_seed = *f.seed;
        cfg.trace_seed = *f.seed;
    }
    if (f.max_iters) cfg.max_iters = *f.max_iters;
    if (f.early_stop) {
        try {
            cfg.early_stop = semistop::parse_rule(*f.early_stop);
        } catch (const std::invalid_argument& e) {
            throw semistop::ConfigError(e.what(), 0, "early_stop");
        }
    }
    cfg.dump_matrix = cfg.dump_matrix || f.dump_matrix;
    cfg.deterministic = cfg.deterministic || f.deterministic;
    cfg.validate();
}

void print_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    std::cout << in.rdbuf();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semi-convergence stopping rules for iterative tomographic reconstruction"};
    app.require_subcommand(1);

    Flags flags;
    std::string config_path;
    std::string tag;

    auto* run_cmd = app.add_subcommand("run", "Run one experiment from a config file");
    run_cmd->add_option("config", config_path, "Config file (key = value)")->required();
    add_flags(*run_cmd, flags);

    auto* grid_cmd = app.add_subcommand("grid", "Run a parameter grid from a config file");
    grid_cmd->add_option("config", config_path, "Grid config file")->required();
    add_flags(*grid_cmd, flags);

    auto* repro_cmd = app.add_subcommand("reproduce", "Run a canned reference experiment");
    std::string tag_help = "One of:";
    for (const auto& t : semistop::reproduce_tags()) tag_help += " " + t;
    repro_cmd->add_option("tag", tag, tag_help)->required();
    add_flags(*repro_cmd, flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (run_cmd->parsed()) {
            auto cfg = semistop::load_config(config_path);
            apply(cfg, flags);
            const auto result = semistop::run_experiment(cfg);
            print_file(result.artifacts.summary);
            std::cout << "artifacts written to " << result.artifacts.dir.string() << '\n';
        } else if (grid_cmd->parsed()) {
            auto grid = semistop::load_grid_config(config_path);
            apply(grid.base, flags);
            const auto result = semistop::run_grid(grid);
            print_file(result.summary);
            std::cout << "grid summary written to " << result.summary.string() << '\n';
        } else {
            if (flags.early_stop) {
                throw semistop::ConfigError("--early-stop is not available for reproduce", 0,
                                            "early_stop");
            }
            semistop::ReproduceOverrides o;
            if (flags.out) o.output = *flags.out;
            o.seed = flags.seed;
            o.max_iters = flags.max_iters;
            o.dump_matrix = flags.dump_matrix;
            o.deterministic = flags.deterministic;
            const auto dir = semistop::reproduce(tag, o);
            print_file(dir / "note.txt");
            std::cout << "artifacts written to " << dir.string() << '\n';
        }
    } catch (const semistop::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const semistop::DivergenceError& e) {
        std::cerr << "diverged: " << e.what() << '\n';
        return kExitDivergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
