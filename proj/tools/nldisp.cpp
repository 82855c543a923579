#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "nld/app.hpp"

int main(int argc, char** argv) {
    CLI::App cli{"Non-local dispersion operator laboratory"};
    cli.require_subcommand(1);
    cli.set_version_flag("--version", nld::app::kVersion);

    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool force = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "run configuration (section.key = value lines)")->required();
        sub->add_option("--out", out_dir, "output directory (overrides output.dir)");
        sub->add_option("--seed", seed, "seed for every stochastic choice (overrides seed)");
        sub->add_flag("--force", force, "iterate the steady-state map without a positive contraction certificate");
    };
    for (const auto& name : nld::app::scenarios()) add_common(cli.add_subcommand(name, "run the " + name + " scenario"));
    add_common(cli.add_subcommand("validate", "check a configuration without running it"));

    try {
        cli.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = cli.exit(e);
        return code == 0 ? 0 : nld::app::kExitConfig;
    }

    const std::string scenario = cli.get_subcommands().front()->get_name();
    nld::app::RunOptions opt;
    opt.force = force;
    if (!out_dir.empty()) opt.out = out_dir;
    if (cli.get_subcommands().front()->count("--seed")) opt.seed = seed;

    return nld::app::run_guarded([&] {
        const auto config = nld::Config::parse_file(config_path);
        if (scenario == "validate") {
            std::cout << nld::app::validate(config, opt).str();
            return nld::app::kExitOk;
        }
        return nld::app::run(scenario, config, opt);
    });
}
