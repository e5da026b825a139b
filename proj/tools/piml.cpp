#include <piml/cli.hpp>

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

int main(int argc, char** argv) {
    using namespace piml;
    CLI::App app{"Probabilistic climb trajectory generation pipeline"};
    app.set_version_flag("--version", cli::kVersion);

    std::string command, config_file, aircraft, model, out;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> sets;
    bool dump = false;
    app.add_option("command", command, "synth, prep, basis, features, train, generate, evaluate, fi, report or all")
        ->required()
        ->check(CLI::IsMember(cli::command_names()));
    app.add_option("--config", config_file, "key = value configuration file")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "run seed");
    app.add_option("--aircraft", aircraft, "aircraft type");
    app.add_option("--model", model, "baseline, gp or de");
    app.add_option("--out", out, "output directory");
    app.add_option("--set", sets, "override one config key (key=value), repeatable");
    app.add_flag("--dump-config", dump, "print the effective configuration and exit");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    cli::RunConfig cfg;
    try {
        if (!config_file.empty()) cli::apply_config_text(cfg, io::read_file(config_file), config_file);
        if (seed) cfg.seed = *seed;
        if (!aircraft.empty()) cfg.aircraft = aircraft;
        if (!model.empty()) cfg.model = model;
        if (!out.empty()) cfg.out_dir = out;
        for (const auto& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw cli::ConfigError("--set expects key=value, got '" + s + "'");
            cli::set_key(cfg, s.substr(0, eq), s.substr(eq + 1));
        }
        cli::validate(cfg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    if (dump) {
        std::cout << "# config_hash=" << cli::config_hash(cfg) << '\n' << cli::dump_config(cfg);
        return 0;
    }
    return cli::run_pipeline(command, cfg);
}
