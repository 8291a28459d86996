// Command-line front end: simulate, certify, sweep, meanfield.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "hkdelay/cli_app.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Opinion-dynamics simulator and consensus certifier for systems with "
                 "time-variable pointwise and distributed delays"};
    app.require_subcommand(1);

    hkdelay::cli::RunConfig cfg;
    const struct {
        const char* name;
        const char* description;
    } subs[] = {
        {"simulate", "integrate the scenario and write the trajectory CSV"},
        {"certify", "integrate, compute the decay certificate, and verify every inequality"},
        {"sweep", "one certificate per value of the swept scalar parameter"},
        {"meanfield", "N-ladder run checking N-independence of the certified decay"},
    };
    for (const auto& s : subs) {
        CLI::App* sub = app.add_subcommand(s.name, s.description);
        sub->add_option("--scenario", cfg.scenario_path,
                        "scenario JSON file (relative paths also resolve against "
                        "HKDELAY_SEED_DIR)")
            ->required();
        sub->add_option("--out", cfg.out_dir, "output directory (created if missing)");
        sub->add_option("--step", cfg.step_override, "override the integration step");
        sub->add_option("--horizon", cfg.horizon_override, "override the simulated horizon");
        sub->add_option("--jobs", cfg.jobs, "max concurrent sweep/ladder workers (0 = auto)");
        sub->add_flag("--plots", cfg.emit_plots, "also emit SVG diagnostic plots");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : hkdelay::cli::kExitConfigError;
    }

    for (const auto& s : subs)
        if (app.got_subcommand(s.name))
            return hkdelay::cli::run(s.name, cfg, std::cout, std::cerr);
    return hkdelay::cli::kExitConfigError;
}
