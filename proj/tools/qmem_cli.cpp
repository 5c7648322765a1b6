#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "qmem/errors.hpp"
#include "qmem/experiments.hpp"

namespace ex = qmem::experiments;

int main(int argc, char** argv) {
    CLI::App app{"qmem: thermal stability studies for stabilizer and Ising memories"};
    app.require_subcommand(1);

    std::string config_path, out;
    std::uint64_t seed = 0;
    int threads = 0;
    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "YAML experiment config")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out, "output directory (overrides output_dir)");
        sub->add_option("--seed", seed, "master seed (overrides seed)");
        sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    };

    auto* run = app.add_subcommand("run", "run the experiment named in the config");
    add_common(run);
    std::vector<std::pair<CLI::App*, ex::ExperimentKind>> named;
    for (auto k : {ex::ExperimentKind::BathAudit, ex::ExperimentKind::KitaevGap, ex::ExperimentKind::IsingLifetime,
                   ex::ExperimentKind::KitaevLifetime, ex::ExperimentKind::DaviesProperties,
                   ex::ExperimentKind::ErrormapAudit}) {
        auto* sub = app.add_subcommand(ex::to_string(k), "run " + ex::to_string(k) + " with the given config");
        add_common(sub);
        named.emplace_back(sub, k);
    }
    std::string kind_name = "bath-audit";
    auto* dflt = app.add_subcommand("default-config", "print the default config for an experiment");
    dflt->add_option("experiment", kind_name, "experiment kind");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    if (dflt->parsed()) {
        try {
            ex::ExperimentConfig cfg;
            cfg.experiment = ex::experiment_from_string(kind_name);
            std::cout << ex::dump_config(cfg);
            return 0;
        } catch (const qmem::Error& e) {
            std::cerr << "error: " << e.what() << "\n";
            return 2;
        }
    }

    ex::ExperimentConfig cfg;
    try {
        cfg = ex::load_config(config_path);
    } catch (const qmem::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    for (const auto& [sub, k] : named) {
        if (sub->parsed() && cfg.experiment != k) {
            std::cerr << "error: experiment: config names '" << ex::to_string(cfg.experiment)
                      << "' but subcommand is '" << ex::to_string(k) << "'\n";
            return 2;
        }
    }
    if (!out.empty()) cfg.output_dir = out;
    for (auto* sub : app.get_subcommands()) {
        if (sub->count("--seed")) cfg.seed = seed;
        if (sub->count("--threads")) cfg.threads = threads;
    }

    const auto res = ex::run(cfg);
    if (res.exit_code == 0) {
        std::cout << res.message << "\n";
    } else {
        std::cerr << "error: " << res.message << "\n";
    }
    return res.exit_code;
}
