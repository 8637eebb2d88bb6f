#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"
#include "config.hpp"
#include "motionsurv/errors.hpp"

namespace {

constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;

struct Subcommand {
    const char* name;
    const char* help;
};

constexpr Subcommand kSubcommands[] = {
    {"generate", "Write a seeded synthetic cohort (motion, survival, covariates)"},
    {"train", "Fit the autoencoder survival model"},
    {"tune", "Particle-swarm hyperparameter search with a cross-validated objective"},
    {"validate", "Bootstrap optimism-corrected validation and the conventional benchmark"},
    {"predict", "Score subjects with a trained model"},
    {"interpret", "Latent-space embedding and vertex saliency map"},
    {"km", "Kaplan-Meier curves and log-rank test for a median risk split"},
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Survival prediction from mesh motion"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::uint64_t seed = 0;
    std::size_t jobs = 0;
    motionsurv::cli::Overrides overrides;
    auto* seed_opt = app.add_option("--seed", seed, "Master seed (overrides the config)");
    auto* jobs_opt = app.add_option("--jobs", jobs, "Worker threads for replicates and particles")->check(CLI::PositiveNumber);
    app.add_option("--config", config_path, "Configuration file (INI key = value)")->check(CLI::ExistingFile);
    app.add_flag("--fast-validation", overrides.fast_validation, "Reuse one hyperparameter set in every bootstrap replicate");
    app.add_flag("--strict", overrides.strict, "Treat recoverable warnings as errors");
    app.add_option("--set", overrides.assignments, "Override a config key: section.key=value");

    for (const auto& sc : kSubcommands) app.add_subcommand(sc.name, sc.help);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitInput;
    }
    if (*seed_opt) overrides.seed = seed;
    if (*jobs_opt) overrides.jobs = jobs;
    const std::string command = app.get_subcommands().front()->get_name();

    try {
        const auto config = motionsurv::cli::load_config(config_path, overrides);
        motionsurv::cli::run_command(command, config, std::cout, std::cerr);
        return 0;
    } catch (const motionsurv::InputError& e) {
        std::cerr << "error (" << command << "): " << e.what() << '\n';
        return kExitInput;
    } catch (const motionsurv::ContractError& e) {
        std::cerr << "error (" << command << "): invalid input: " << e.what() << '\n';
        return kExitInput;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error (" << command << "): " << e.what() << '\n';
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "error (" << command << "): numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    }
}
