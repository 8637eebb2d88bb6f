#include "motionsurv/hyperopt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>

#include "motionsurv/errors.hpp"
#include "motionsurv/parallel.hpp"
#include "motionsurv/rng.hpp"

namespace motionsurv {

SearchSpace SearchSpace::network_defaults() {
    return SearchSpace{{
        {"dropout", 0.1, 0.9, AxisScale::Linear, false},
        {"hidden_units", 75.0, 250.0, AxisScale::Linear, true},
        {"latent_dim", 5.0, 20.0, AxisScale::Linear, true},
        {"alpha", 0.3, 0.7, AxisScale::Linear, false},
        {"learning_rate", 1e-6, std::pow(10.0, -4.5), AxisScale::Log10, false},
        {"l1_penalty", 1e-7, 1e-4, AxisScale::Log10, false},
    }};
}

void SearchSpace::validate() const {
    if (axes.empty()) throw InputError("search space: no axes");
    for (const auto& a : axes) {
        if (!(a.lower < a.upper) || !std::isfinite(a.lower) || !std::isfinite(a.upper)) {
            throw InputError("search space: axis '" + a.name + "' needs lower < upper");
        }
        if (a.scale == AxisScale::Log10 && !(a.lower > 0.0)) {
            throw InputError("search space: log axis '" + a.name + "' needs positive bounds");
        }
    }
}

double SearchSpace::internal_lower(std::size_t axis) const {
    const auto& a = axes.at(axis);
    return a.scale == AxisScale::Log10 ? std::log10(a.lower) : a.lower;
}

double SearchSpace::internal_upper(std::size_t axis) const {
    const auto& a = axes.at(axis);
    return a.scale == AxisScale::Log10 ? std::log10(a.upper) : a.upper;
}

std::vector<double> SearchSpace::decode(std::span<const double> internal) const {
    if (internal.size() != axes.size()) throw ContractError("search space: position has wrong dimension");
    std::vector<double> out(axes.size());
    for (std::size_t i = 0; i < axes.size(); ++i) {
        double v = axes[i].scale == AxisScale::Log10 ? std::pow(10.0, internal[i]) : internal[i];
        v = std::clamp(v, axes[i].lower, axes[i].upper);
        if (axes[i].integer) v = std::round(v);
        out[i] = v;
    }
    return out;
}

void SwarmConfig::validate() const {
    if (n_particles < 2) throw InputError("swarm config: n_particles must be >= 2");
    if (n_iterations < 1) throw InputError("swarm config: n_iterations must be >= 1");
    if (cv_folds < 2) throw InputError("swarm config: cv_folds must be >= 2");
    if (!std::isfinite(inertia) || !std::isfinite(cognitive) || !std::isfinite(social)) {
        throw InputError("swarm config: non-finite coefficient");
    }
}

std::vector<ParticleState> initialize_swarm(const SearchSpace& space, const SwarmConfig& config) {
    space.validate();
    config.validate();
    const std::size_t dim = space.dimension();
    std::vector<ParticleState> swarm(config.n_particles);
    for (std::size_t p = 0; p < swarm.size(); ++p) {
        Engine eng = make_engine(derive_seed(config.seed, hash_name("pso-init"), p));
        swarm[p].position.resize(dim);
        swarm[p].velocity.resize(dim);
        for (std::size_t a = 0; a < dim; ++a) {
            const double lo = space.internal_lower(a);
            const double hi = space.internal_upper(a);
            swarm[p].position[a] = lo + (hi - lo) * uniform01(eng);
            swarm[p].velocity[a] = 0.5 * (lo + (hi - lo) * uniform01(eng) - swarm[p].position[a]);
        }
    }
    return swarm;
}

SwarmResult pso_optimize(const SwarmObjective& objective, const SearchSpace& space, const SwarmConfig& config) {
    std::vector<ParticleState> swarm = initialize_swarm(space, config);
    const std::size_t dim = space.dimension();
    const std::size_t n = swarm.size();
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();

    std::vector<std::vector<double>> pbest_pos(n);
    std::vector<double> pbest_score(n, kNegInf);
    std::vector<double> gbest_pos;
    double gbest_score = kNegInf;

    SwarmResult result;
    std::vector<double> scores(n);

    for (std::size_t iter = 1; iter <= config.n_iterations; ++iter) {
        if (iter > 1) {
            for (std::size_t p = 0; p < n; ++p) {
                Engine eng = make_engine(derive_seed(config.seed, hash_name("pso-move"), p, iter));
                auto& s = swarm[p];
                for (std::size_t a = 0; a < dim; ++a) {
                    const double r1 = uniform01(eng);
                    const double r2 = uniform01(eng);
                    s.velocity[a] = config.inertia * s.velocity[a] +
                                    config.cognitive * r1 * (pbest_pos[p][a] - s.position[a]) +
                                    config.social * r2 * (gbest_pos[a] - s.position[a]);
                    s.position[a] += s.velocity[a];
                    const double lo = space.internal_lower(a);
                    const double hi = space.internal_upper(a);
                    if (s.position[a] < lo || s.position[a] > hi) {
                        s.position[a] = std::clamp(s.position[a], lo, hi);
                        s.velocity[a] = 0.0;
                    }
                }
            }
        }

        // Evaluations are independent; results land in per-particle slots.
        parallel_for(n, config.jobs, [&](std::size_t p) {
            const auto decoded = space.decode(swarm[p].position);
            scores[p] = objective(decoded, derive_seed(config.seed, hash_name("pso-eval"), p, iter));
        });

        for (std::size_t p = 0; p < n; ++p) {
            if (std::isnan(scores[p])) {
                std::ostringstream msg;
                msg << "particle " << p << " iteration " << iter << ": objective returned NaN, scored as -inf";
                result.warnings.push_back(msg.str());
                scores[p] = kNegInf;
            }
            if (pbest_pos[p].empty() || scores[p] > pbest_score[p]) {
                pbest_score[p] = scores[p];
                pbest_pos[p] = swarm[p].position;
            }
            if (gbest_pos.empty() || scores[p] > gbest_score) {
                gbest_score = scores[p];
                gbest_pos = swarm[p].position;
            }
        }
        for (std::size_t p = 0; p < n; ++p) {
            result.trace.push_back({iter, p, space.decode(swarm[p].position), swarm[p].position, scores[p], gbest_score});
        }
        result.gbest_by_iteration.push_back(gbest_score);
    }

    result.best_position = space.decode(gbest_pos);
    result.best_score = gbest_score;
    return result;
}

namespace {

bool has_informative_pair(Outcomes outcomes, std::span<const std::size_t> idx) {
    for (std::size_t i : idx) {
        if (outcomes[i].event != 1) continue;
        for (std::size_t j : idx) {
            if (outcomes[i].time < outcomes[j].time) return true;
        }
    }
    return false;
}

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& m, std::span<const std::size_t> idx) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = m.row(static_cast<Eigen::Index>(idx[k]));
    return out;
}

}  // namespace

std::vector<std::vector<std::size_t>> make_folds(Outcomes outcomes, std::size_t folds, std::uint64_t seed) {
    constexpr int kMaxAttempts = 100;
    const std::size_t n = outcomes.size();
    if (folds < 2) throw InputError("cross-validation: need at least 2 folds");
    if (n < folds) throw InputError("cross-validation: fewer subjects than folds");

    std::vector<std::size_t> order(n);
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Engine eng = make_engine(derive_seed(seed, hash_name("folds"), static_cast<std::uint64_t>(attempt)));
        shuffle(std::span<std::size_t>(order), eng);
        std::vector<std::vector<std::size_t>> out(folds);
        for (std::size_t k = 0; k < n; ++k) out[k % folds].push_back(order[k]);
        for (auto& f : out) std::sort(f.begin(), f.end());
        const bool ok = std::ranges::all_of(out, [&](const auto& f) { return has_informative_pair(outcomes, f); });
        if (ok) return out;
    }
    throw InputError("cross-validation: cannot form folds that each contain an informative pair");
}

SwarmObjective cv_objective(Eigen::MatrixXd features, std::vector<SurvivalRecord> outcomes, std::size_t folds,
                            std::uint64_t seed, FoldTrainer trainer) {
    if (features.rows() != static_cast<Eigen::Index>(outcomes.size())) {
        throw ContractError("cv_objective: feature rows do not match outcome count");
    }
    struct Shared {
        Eigen::MatrixXd features;
        std::vector<SurvivalRecord> outcomes;
        std::vector<std::vector<std::size_t>> folds;
        FoldTrainer trainer;
    };
    auto shared = std::make_shared<Shared>();
    shared->folds = make_folds(outcomes, folds, seed);
    shared->features = std::move(features);
    shared->outcomes = std::move(outcomes);
    shared->trainer = std::move(trainer);

    return [shared](std::span<const double> position, std::uint64_t eval_seed) {
        const std::size_t n = shared->outcomes.size();
        double total = 0.0;
        for (std::size_t f = 0; f < shared->folds.size(); ++f) {
            const auto& held_out = shared->folds[f];
            std::vector<char> in_fold(n, 0);
            for (std::size_t i : held_out) in_fold[i] = 1;
            std::vector<std::size_t> train_idx;
            for (std::size_t i = 0; i < n; ++i) {
                if (!in_fold[i]) train_idx.push_back(i);
            }
            const RiskScorer scorer = shared->trainer(rows_of(shared->features, train_idx),
                                                      take(shared->outcomes, train_idx), position,
                                                      derive_seed(eval_seed, hash_name("fold"), f));
            const Eigen::VectorXd risks = scorer(rows_of(shared->features, held_out));
            if (!risks.allFinite()) return std::numeric_limits<double>::quiet_NaN();
            const auto held_outcomes = take(shared->outcomes, held_out);
            total += concordance_index(std::span<const double>(risks.data(), static_cast<std::size_t>(risks.size())),
                                       held_outcomes);
        }
        return total / static_cast<double>(shared->folds.size());
    };
}

NetworkSpec spec_from_position(std::span<const double> position, std::size_t input_dim) {
    if (position.size() != 6) throw ContractError("spec_from_position: expected 6 hyperparameters");
    NetworkSpec spec;
    spec.input_dim = input_dim;
    spec.dropout_rate = position[0];
    spec.hidden_units = static_cast<std::size_t>(std::llround(position[1]));
    spec.latent_dim = static_cast<std::size_t>(std::llround(position[2]));
    spec.alpha = position[3];
    spec.learning_rate = position[4];
    spec.l1_penalty = position[5];
    return spec;
}

FoldTrainer network_fold_trainer(const TrainConfig& base) {
    return [base](const Eigen::MatrixXd& features, Outcomes outcomes, std::span<const double> position,
                  std::uint64_t seed) -> RiskScorer {
        const NetworkSpec spec = spec_from_position(position, static_cast<std::size_t>(features.cols()));
        TrainConfig cfg = base;
        cfg.seed = seed;
        auto model = std::make_shared<const NetworkModel>(train(spec, features, outcomes, cfg).model);
        return [model](const Eigen::MatrixXd& x) { return predict_risks(*model, x); };
    };
}

}  // namespace motionsurv
