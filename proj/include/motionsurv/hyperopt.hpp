#pragma once

/// Global-best particle swarm optimization and the cross-validated
/// concordance objective used to tune the network.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "motionsurv/autoenc_net.hpp"
#include "motionsurv/risk_model.hpp"
#include "motionsurv/survival_core.hpp"

namespace motionsurv {

enum class AxisScale { Linear, Log10 };

struct SearchAxis {
    std::string name;
    double lower = 0.0;
    double upper = 1.0;
    AxisScale scale = AxisScale::Linear;
    bool integer = false;  // continuous relaxation, rounded when evaluated
};

struct SearchSpace {
    std::vector<SearchAxis> axes;

    /// dropout [0.1, 0.9], hidden_units [75, 250], latent_dim [5, 20],
    /// alpha [0.3, 0.7], learning_rate [1e-6, 10^-4.5] (log),
    /// l1_penalty [1e-7, 1e-4] (log).
    static SearchSpace network_defaults();

    std::size_t dimension() const noexcept { return axes.size(); }
    void validate() const;

    /// Optimizer coordinates: log10 of the value on log axes, the value itself otherwise.
    double internal_lower(std::size_t axis) const;
    double internal_upper(std::size_t axis) const;
    /// Map optimizer coordinates to hyperparameter values (rounds integer axes).
    std::vector<double> decode(std::span<const double> internal) const;
};

struct SwarmConfig {
    std::size_t n_particles = 20;
    std::size_t n_iterations = 50;
    double inertia = 0.729;
    double cognitive = 1.494;
    double social = 1.494;
    std::uint64_t seed = 0;
    std::size_t cv_folds = 6;
    std::size_t jobs = 1;

    void validate() const;
};

/// Objective to MAXIMIZE. Receives decoded hyperparameter values and a seed
/// derived from (swarm seed, particle, iteration) for any internal randomness.
using SwarmObjective = std::function<double(std::span<const double> position, std::uint64_t eval_seed)>;

struct SwarmTraceRow {
    std::size_t iteration = 0;  // 1-based
    std::size_t particle = 0;   // 0-based
    std::vector<double> position;           // decoded values
    std::vector<double> internal_position;  // optimizer coordinates
    double score = 0.0;
    double gbest_score = 0.0;
};

struct SwarmResult {
    std::vector<double> best_position;  // decoded values
    double best_score = 0.0;
    std::vector<double> gbest_by_iteration;
    std::vector<SwarmTraceRow> trace;
    std::vector<std::string> warnings;
};

struct ParticleState {
    std::vector<double> position;  // optimizer coordinates
    std::vector<double> velocity;
};

/// Initial swarm: positions uniform in optimizer coordinates (so log-uniform
/// on log axes); velocity is half the step towards a second uniform point,
/// which keeps the first move inside the box.
std::vector<ParticleState> initialize_swarm(const SearchSpace& space, const SwarmConfig& config);

SwarmResult pso_optimize(const SwarmObjective& objective, const SearchSpace& space, const SwarmConfig& config);

/// Builds a scorer for one CV fold from training rows and a position.
using FoldTrainer = std::function<RiskScorer(const Eigen::MatrixXd& features, Outcomes outcomes,
                                             std::span<const double> position, std::uint64_t seed)>;

/// Seeded k-fold partition. Each fold must contain at least one informative
/// pair (hence at least one event); the partition is redrawn up to 100 times.
/// Throws InputError when no valid partition is found.
std::vector<std::vector<std::size_t>> make_folds(Outcomes outcomes, std::size_t folds, std::uint64_t seed);

/// Mean held-out concordance over a fixed seeded k-fold partition.
SwarmObjective cv_objective(Eigen::MatrixXd features, std::vector<SurvivalRecord> outcomes, std::size_t folds,
                            std::uint64_t seed, FoldTrainer trainer);

/// Network spec from a position in SearchSpace::network_defaults() order.
NetworkSpec spec_from_position(std::span<const double> position, std::size_t input_dim);

/// Fold trainer that fits the autoencoder with `base` epochs/batch size.
FoldTrainer network_fold_trainer(const TrainConfig& base);

}  // namespace motionsurv
