// qge: command-line driver for the solution-structure library.
//
//   qge <scenario> --config <path> [--out <dir>] [--seed <int>]
//
// The scenario (eigen, solve, branch, timemap, verify_suite) must match the
// one declared in the JSON config. Artifacts (CSV tables and report.json)
// land in the output directory and are byte-identical across repeated runs
// with the same config and seed; the measured wall time is printed to
// stderr only, to keep the artifacts deterministic.
//
// Exit codes: 0 all declared assertions passed; 1 usage error; 2 config or
// data validation error; 3 solver failure; 4 at least one assertion failed.

#include <chrono>
#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "qge/config.hpp"
#include "qge/run.hpp"
#include "qge/version.hpp"

int main(int argc, char** argv) {
    CLI::App app{"solution-structure runner for the quadratic-gradient reaction problem"};
    app.set_version_flag("--version", std::string(qge::version_string));
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    long long seed_override = -1;

    const std::pair<const char*, const char*> scenarios[] = {
        {"eigen", "principal eigenpair and coercivity margin"},
        {"solve", "existence or certified absence at one reaction coefficient"},
        {"branch", "parameter continuation: folds, ordered pairs, amplitude sweeps"},
        {"timemap", "interval phase-plane analysis: transit times and solution counts"},
        {"verify_suite", "run a list of fixture configs and require their assertions"},
    };
    for (const auto& [name, desc] : scenarios) {
        CLI::App* sub = app.add_subcommand(name, desc);
        sub->add_option("--config", config_path, "JSON run configuration")->required();
        sub->add_option("--out", out_dir, "output directory (overrides the config)");
        sub->add_option("--seed", seed_override, "RNG seed (overrides the config)")
            ->check(CLI::NonNegativeNumber);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1; // help/version exit clean; everything else is a usage error
    }

    const std::string selected = app.get_subcommands().front()->get_name();
    try {
        qge::RunConfig cfg = qge::parse_config(config_path);
        if (std::string(qge::to_string(cfg.scenario)) != selected)
            throw qge::config_error("scenario: config declares '" + std::string(qge::to_string(cfg.scenario)) +
                                    "' but the command line selected '" + selected + "'");
        if (!out_dir.empty()) cfg.output_dir = out_dir;
        if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);

        const auto t0 = std::chrono::steady_clock::now();
        qge::RunReport rep = qge::run(cfg);
        rep.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

        for (const qge::Assertion& a : rep.assertions)
            std::printf("%s %s: %s\n", a.pass ? "PASS" : "FAIL", a.name.c_str(), a.detail.c_str());
        std::fprintf(stderr, "qge %s: %s wrote %s in %.1f ms (%s)\n", qge::version_string, selected.c_str(),
                     cfg.output_dir.c_str(), rep.wall_ms, rep.all_passed ? "all assertions passed" : "ASSERTIONS FAILED");
        return rep.all_passed ? 0 : 4;
    } catch (const qge::solver_error& e) {
        std::fprintf(stderr, "qge: solver error: %s\n", e.what());
        return 3;
    } catch (const qge::validation_error& e) {
        std::fprintf(stderr, "qge: validation error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "qge: internal error: %s\n", e.what());
        return 3;
    }
}
