#pragma once

// Experiment configuration: one INI-style key = value file, sections per
// subcommand, optional command-line overrides. Every resolved value
// (including defaults) is recorded so the run manifest can hash it.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "motionsurv/autoenc_net.hpp"
#include "motionsurv/hyperopt.hpp"
#include "motionsurv/motion_features.hpp"

namespace motionsurv::cli {

struct Paths {
    std::filesystem::path output_dir = "out";
    std::filesystem::path motion_file;     // defaults below are relative to output_dir
    std::filesystem::path survival_file;
    std::filesystem::path covariate_file;
    std::filesystem::path model_file;
    std::filesystem::path risk_file;
    std::filesystem::path tune_result;
};

struct ValidateBlock {
    std::size_t replicates = 50;
    bool fast_validation = false;
    std::vector<std::string> covariates = {"rvedv", "rvesv", "rvef"};
    std::size_t permutations = 10000;
};

struct InterpretBlock {
    std::size_t neighbors = 10;
    bool log_display = true;
};

struct ExperimentConfig {
    std::uint64_t seed = 1;
    std::size_t jobs = 1;
    bool strict = false;
    Paths paths;
    SyntheticCohortConfig generate;
    bool binary_motion = false;
    NetworkSpec network;
    TrainConfig training;
    SearchSpace search = SearchSpace::network_defaults();
    SwarmConfig swarm;
    TrainConfig tune_training{.epochs = 20, .batch_size = 16, .seed = 0};
    ValidateBlock validate;
    InterpretBlock interpret;

    /// key -> canonical value text for every setting, sorted by key.
    std::map<std::string, std::string> resolved;

    std::string canonical_text() const;
    std::uint64_t hash() const;
};

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> jobs;
    bool fast_validation = false;
    bool strict = false;
    std::vector<std::string> assignments;  // "section.key=value"
};

/// Reads `path` (empty path means all defaults), applies overrides and
/// validates. Throws InputError naming the offending key.
ExperimentConfig load_config(const std::filesystem::path& path, const Overrides& overrides);

}  // namespace motionsurv::cli
