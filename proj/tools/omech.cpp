// omech: spectra, coupling sweeps, pulse propagation and fits for red-detuned cavity electromechanics.
//
//   omech critical [--config PATH]
//   omech spectrum [--config PATH] [--out DIR] [--points N]
//   omech sweep-g  [--config PATH] [--out DIR] [--points N]
//   omech pulse    [--config PATH] [--out DIR]
//   omech fit       --config PATH  [--out DIR] [--seed N]
//
// Exit codes: 0 ok, 2 config error, 3 numerical error, 4 IO error.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "omech/cli.hpp"

int main(int argc, char **argv)
{
    CLI::App app{"Red-detuned cavity electromechanics: anti-lasing, phase singularity and group delay"};
    app.require_subcommand(1);
    app.fallthrough();

    omech::cli::CliOptions opt;
    std::string config, out;
    std::size_t points = 0;
    app.add_option("--config", config, "run configuration (JSON or key = value)");
    app.add_option("--out", out, "output directory");
    app.add_option("--seed", opt.seed, "Monte-Carlo seed");
    app.add_option("--points", points, "override the number of sweep points")->check(CLI::Range(2, 100000000));

    app.add_subcommand("critical", "print G_c, G_b, regime and delay at the configured coupling");
    app.add_subcommand("spectrum", "transmission versus probe detuning at fixed G");
    app.add_subcommand("sweep-g", "on-resonance transmission versus coupling");
    app.add_subcommand("pulse", "Gaussian pulse through the device, FFT and time-domain delays");
    app.add_subcommand("fit", "fit a measured spectrum or coupling sweep");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::CallForHelp &e)
    {
        return app.exit(e);
    }
    catch (const CLI::ParseError &e)
    {
        app.exit(e);
        return omech::cli::kExitConfig;
    }

    if (!config.empty())
        opt.config = config;
    if (!out.empty())
        opt.out = out;
    if (points != 0)
        opt.points = points;
    const std::string command = app.get_subcommands().front()->get_name();
    return omech::cli::run_command(command, opt, std::cout, std::cerr);
}
