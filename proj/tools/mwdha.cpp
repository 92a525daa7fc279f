#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "mwdha/cli.hpp"

using mwdha::json;

int main(int argc, char** argv) {
    CLI::App app{"mwdha: matrix-weighted dyadic harmonic analysis experiments"};
    std::string sub, config_path;
    std::string subs;
    for (const auto& s : mwdha::subcommands()) subs += (subs.empty() ? "" : ", ") + s;
    app.add_option("subcommand", sub, "one of: " + subs)->required();
    app.add_option("--config", config_path, "JSON config file");

    // one kebab-case flag per config key; values are parsed as JSON when
    // possible and taken as plain strings otherwise
    std::map<std::string, std::string> flags;
    for (auto& [k, v] : mwdha::default_config().items())
        app.add_option("--" + k, flags[k], "default: " + v.dump());

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        json cfg = json::object();
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) throw mwdha::ValidationError("config: cannot open " + config_path);
            try {
                in >> cfg;
            } catch (const json::exception& e) {
                throw mwdha::ValidationError("config: " + std::string(e.what()));
            }
        }
        for (auto& [k, raw] : flags) {
            if (app.count("--" + k) == 0) continue;
            json v = json::parse(raw, nullptr, false);
            cfg[k] = v.is_discarded() ? json(raw) : v;
        }
        json report = mwdha::run(sub, cfg);
        return mwdha::emit_report(report);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        if (mwdha::ValidationError const* v = dynamic_cast<const mwdha::ValidationError*>(&e);
            v && std::string(e.what()).rfind("unknown subcommand", 0) == 0) {
            std::fprintf(stderr, "%s", app.help().c_str());
        }
        return 1;
    }
}
