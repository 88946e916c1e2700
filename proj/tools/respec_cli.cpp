#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "respec/config.hpp"
#include "respec/scenarios.hpp"

namespace {

// Config file first, then CLI flags override individual fields.
respec::ExperimentConfig load_config(const std::string & path) {
    if (path.empty()) {
        return respec::ExperimentConfig{};
    }
    std::ifstream f(path);
    if (!f) {
        throw CLI::ValidationError("--config", "cannot open '" + path + "'");
    }
    nlohmann::json j;
    f >> j;
    return respec::ExperimentConfig::from_json(j);
}

} // namespace

int main(int argc, char ** argv) {
    CLI::App app{"speculative-decoding RL training simulator"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<uint64_t> seed;
    std::string out_dir;
    std::string scenario;

    auto add_common = [&](CLI::App * cmd, bool seed_required) {
        cmd->add_option("--config", config_path, "JSON config file");
        auto * s = cmd->add_option("--seed", seed, "RNG seed (overrides config)");
        if (seed_required) {
            s->required();
        }
        cmd->add_option("--out", out_dir, "output directory (overrides config)");
    };

    CLI::App * profile = app.add_subcommand("profile", "build the offline SD profile table");
    add_common(profile, true);

    CLI::App * train = app.add_subcommand("train", "run a training scenario");
    add_common(train, true);
    train->add_option("--scenario", scenario, "scenario name (overrides config)");

    CLI::App * verify = app.add_subcommand("verify", "run enumeration oracles and gradient checks");
    add_common(verify, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError & e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2; // usage errors exit 2
    }

    try {
        respec::ExperimentConfig cfg = load_config(config_path);
        if (seed) {
            cfg.seed = *seed;
        }
        if (!out_dir.empty()) {
            cfg.out_dir = out_dir;
        }
        if (!scenario.empty()) {
            cfg.scenario = scenario;
        }

        if (profile->parsed()) {
            return respec::cmd_profile(cfg);
        }
        if (train->parsed()) {
            return respec::cmd_train(cfg);
        }
        return respec::cmd_verify(cfg);
    } catch (const CLI::Error & e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception & e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
