#pragma once

/// Bootstrap internal validation with optimism correction, risk-group
/// stratification and the ridge-Cox benchmark on conventional covariates.
///
///   corrected C = apparent C - mean_b (C_boot,b - C_test,b)
///
/// where C_boot,b scores the replicate-b model on its own resample and
/// C_test,b scores it on the untouched original sample.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "motionsurv/autoenc_net.hpp"
#include "motionsurv/hyperopt.hpp"
#include "motionsurv/risk_model.hpp"
#include "motionsurv/survival_core.hpp"

namespace motionsurv {

struct BootstrapReplicate {
    std::size_t index = 0;
    double bootstrap_performance = 0.0;
    double test_performance = 0.0;
    bool excluded = false;
    std::string failure;
    std::size_t redraws = 0;
    std::uint64_t resample_hash = 0;    // identifies the resampled index multiset
    std::uint64_t evaluation_hash = 0;  // hash of the data the test performance was computed on

    double optimism() const noexcept { return bootstrap_performance - test_performance; }
};

struct ValidationReport {
    std::string label;
    std::string protocol;   // "full-pipeline" or "fast-validation ..."
    std::string ci_method;
    std::uint64_t seed = 0;
    std::size_t B = 0;
    double apparent_c = 0.0;
    std::vector<BootstrapReplicate> replicates;
    std::size_t excluded = 0;
    double mean_optimism = 0.0;
    double corrected_c = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::uint64_t original_hash = 0;
    std::vector<std::string> warnings;

    /// apparent_c - optimism_b for each included replicate.
    std::vector<double> corrected_per_replicate() const;
};

struct BootstrapOptions {
    std::size_t replicates = 50;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
    std::string label = "model";
    std::string protocol = "full-pipeline";
};

/// Seeded resample of n subjects with replacement for replicate `replicate`.
/// Draws are repeated (up to 100 times) until the resample contains an
/// informative pair; `redraws` reports how many were rejected.
std::vector<std::size_t> bootstrap_indices(Outcomes outcomes, std::uint64_t seed, std::size_t replicate,
                                           std::size_t* redraws = nullptr);

std::uint64_t hash_indices(std::span<const std::size_t> indices) noexcept;
std::uint64_t hash_dataset(const Eigen::MatrixXd& features, Outcomes outcomes) noexcept;

ValidationReport bootstrap_optimism(const TrainerProtocol& trainer, const Eigen::MatrixXd& features,
                                    Outcomes outcomes, const BootstrapOptions& options);

struct RiskGroups {
    std::vector<std::size_t> low_index;
    std::vector<std::size_t> high_index;
    std::vector<SurvivalRecord> low;
    std::vector<SurvivalRecord> high;
    double median = 0.0;
};

/// Risk strictly above the sample median goes to the high group, the rest
/// (including median ties) to the low group. Throws UndefinedResultError when
/// either group would be empty.
RiskGroups stratify_by_median_risk(std::span<const double> risks, Outcomes outcomes);

struct ConventionalModel {
    double lambda = 0.0;
    CoxFit fit;               // on standardized covariates
    Eigen::VectorXd center;
    Eigen::VectorXd scale;
    std::vector<double> lambda_grid;
    std::vector<double> cv_scores;  // cross-validated partial log-likelihood per grid value

    Eigen::VectorXd score(const Eigen::MatrixXd& covariates) const;
};

struct BenchmarkOptions {
    std::vector<double> lambda_grid = {0.01, 0.0316, 0.1, 0.316, 1.0, 3.16, 10.0, 31.6, 100.0, 316.0, 1000.0};
    std::size_t folds = 5;
};

/// Ridge Cox on standardized covariates; lambda maximizes the
/// cross-validated partial log-likelihood (ties go to the larger lambda).
ConventionalModel fit_conventional(const Eigen::MatrixXd& covariates, Outcomes outcomes, std::uint64_t seed,
                                   const BenchmarkOptions& options = {});

RiskScorer benchmark_conventional(const Eigen::MatrixXd& covariates, Outcomes outcomes, std::uint64_t seed);
TrainerProtocol conventional_trainer(const BenchmarkOptions& options = {});

/// Autoencoder trained with fixed hyperparameters (input_dim is taken from the data).
TrainerProtocol fixed_network_trainer(const NetworkSpec& hyperparameters, const TrainConfig& config);

/// Full pipeline: PSO over `space` with a k-fold CV objective, then a final
/// fit on all rows with the best position.
TrainerProtocol tuned_network_trainer(const SearchSpace& space, const SwarmConfig& swarm, const TrainConfig& config);

struct ComparisonOptions {
    std::size_t permutations = 10000;
    std::uint64_t seed = 0;
};

struct ComparisonSummary {
    std::size_t pairs = 0;
    double mean_difference = 0.0;  // a - b
    double ci_low = 0.0;
    double ci_high = 0.0;
    double p_value = 1.0;
    bool exhaustive = false;
    std::size_t permutations = 0;
};

/// Two-sided sign-flip permutation test on paired per-replicate corrected
/// concordance differences. Enumerates all 2^B sign patterns when that is no
/// more than `permutations`. Throws ContractError unless both reports used
/// the same resamples.
ComparisonSummary compare_models(const ValidationReport& a, const ValidationReport& b,
                                 const ComparisonOptions& options = {});

/// Sign-flip p-value for a vector of paired differences.
ComparisonSummary sign_flip_test(std::span<const double> differences, const ComparisonOptions& options);

nlohmann::json report_to_json(const ValidationReport& report);
ValidationReport report_from_json(const nlohmann::json& j);
nlohmann::json comparison_to_json(const ComparisonSummary& summary);

}  // namespace motionsurv
