#include "motionsurv/validation.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>

#include "motionsurv/errors.hpp"
#include "motionsurv/parallel.hpp"
#include "motionsurv/rng.hpp"

namespace motionsurv {
namespace {

constexpr double kZ95 = 1.959963984540054;

std::span<const double> as_span(const Eigen::VectorXd& v) {
    return {v.data(), static_cast<std::size_t>(v.size())};
}

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& m, std::span<const std::size_t> idx) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) {
        out.row(static_cast<Eigen::Index>(k)) = m.row(static_cast<Eigen::Index>(idx[k]));
    }
    return out;
}

bool has_informative_pair(Outcomes outcomes, std::span<const std::size_t> idx) {
    double min_event_time = std::numeric_limits<double>::infinity();
    double max_time = -std::numeric_limits<double>::infinity();
    for (std::size_t i : idx) {
        if (outcomes[i].event == 1) min_event_time = std::min(min_event_time, outcomes[i].time);
        max_time = std::max(max_time, outcomes[i].time);
    }
    return min_event_time < max_time;
}

std::uint64_t hash_bytes(std::uint64_t h, const void* data, std::size_t len) noexcept {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

double sample_sd(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

std::vector<double> ValidationReport::corrected_per_replicate() const {
    std::vector<double> out;
    for (const auto& r : replicates) {
        if (!r.excluded) out.push_back(apparent_c - r.optimism());
    }
    return out;
}

std::uint64_t hash_indices(std::span<const std::size_t> indices) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i : indices) {
        const auto v = static_cast<std::uint64_t>(i);
        h = hash_bytes(h, &v, sizeof v);
    }
    return h;
}

std::uint64_t hash_dataset(const Eigen::MatrixXd& features, Outcomes outcomes) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const std::int64_t dims[2] = {features.rows(), features.cols()};
    h = hash_bytes(h, dims, sizeof dims);
    h = hash_bytes(h, features.data(), static_cast<std::size_t>(features.size()) * sizeof(double));
    for (const auto& r : outcomes) {
        h = hash_bytes(h, r.subject_id.data(), r.subject_id.size());
        h = hash_bytes(h, &r.time, sizeof r.time);
        h = hash_bytes(h, &r.event, sizeof r.event);
    }
    return h;
}

std::vector<std::size_t> bootstrap_indices(Outcomes outcomes, std::uint64_t seed, std::size_t replicate,
                                           std::size_t* redraws) {
    constexpr std::size_t kMaxRedraws = 100;
    const std::size_t n = outcomes.size();
    std::vector<std::size_t> idx(n);
    for (std::size_t attempt = 0; attempt <= kMaxRedraws; ++attempt) {
        Engine eng = make_engine(derive_seed(seed, hash_name("bootstrap"), replicate, attempt));
        for (auto& i : idx) i = static_cast<std::size_t>(uniform_index(eng, n));
        if (has_informative_pair(outcomes, idx)) {
            if (redraws) *redraws = attempt;
            return idx;
        }
    }
    throw NumericalError("bootstrap: no resample with an event found after 100 redraws");
}

ValidationReport bootstrap_optimism(const TrainerProtocol& trainer, const Eigen::MatrixXd& features,
                                    Outcomes outcomes, const BootstrapOptions& options) {
    const std::size_t n = outcomes.size();
    if (n < 2) throw ContractError("bootstrap_optimism: need at least 2 subjects");
    if (options.replicates < 1) throw ContractError("bootstrap_optimism: need B >= 1");
    if (features.rows() != static_cast<Eigen::Index>(n)) {
        throw ContractError("bootstrap_optimism: feature rows do not match outcome count");
    }
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    if (!has_informative_pair(outcomes, all)) {
        throw UndefinedResultError("bootstrap_optimism: sample has no informative pair");
    }

    ValidationReport report;
    report.label = options.label;
    report.protocol = options.protocol;
    report.ci_method = "normal approximation: corrected_c +/- 1.96 * sd(per-replicate corrected C)";
    report.seed = options.seed;
    report.B = options.replicates;
    report.original_hash = hash_dataset(features, outcomes);

    // Step 1: apparent performance of the full-sample model.
    const RiskScorer full_model = trainer(features, outcomes, derive_seed(options.seed, hash_name("apparent")));
    report.apparent_c = concordance_index(as_span(full_model(features)), outcomes);

    // Steps 2-4: independent replicates, each writing only its own slot.
    report.replicates.resize(options.replicates);
    parallel_for(options.replicates, options.jobs, [&](std::size_t b) {
        BootstrapReplicate& rep = report.replicates[b];
        rep.index = b;
        try {
            const auto idx = bootstrap_indices(outcomes, options.seed, b, &rep.redraws);
            rep.resample_hash = hash_indices(idx);
            const Eigen::MatrixXd boot_x = rows_of(features, idx);
            const auto boot_y = take(outcomes, idx);
            const RiskScorer model = trainer(boot_x, boot_y, derive_seed(options.seed, hash_name("replicate"), b));
            rep.bootstrap_performance = concordance_index(as_span(model(boot_x)), boot_y);
            rep.evaluation_hash = hash_dataset(features, outcomes);
            rep.test_performance = concordance_index(as_span(model(features)), outcomes);
        } catch (const std::exception& e) {
            rep.excluded = true;
            rep.failure = e.what();
        }
    });

    std::vector<double> optimism;
    for (const auto& rep : report.replicates) {
        if (rep.redraws > 0) {
            std::ostringstream msg;
            msg << "replicate " << rep.index << ": redrew " << rep.redraws << " resample(s) without an informative pair";
            report.warnings.push_back(msg.str());
        }
        if (rep.excluded) {
            ++report.excluded;
            report.warnings.push_back("replicate " + std::to_string(rep.index) + " excluded: " + rep.failure);
        } else {
            optimism.push_back(rep.optimism());
        }
    }
    if (optimism.empty() || 10 * report.excluded > options.replicates) {
        std::ostringstream msg;
        msg << "bootstrap_optimism: " << report.excluded << " of " << options.replicates
            << " replicates failed (limit 10%)";
        if (!report.warnings.empty()) msg << "; " << report.warnings.back();
        throw NumericalError(msg.str());
    }

    // Step 5.
    report.mean_optimism = std::accumulate(optimism.begin(), optimism.end(), 0.0) / static_cast<double>(optimism.size());
    report.corrected_c = report.apparent_c - report.mean_optimism;
    const double sd = sample_sd(report.corrected_per_replicate());
    report.ci_low = report.corrected_c - kZ95 * sd;
    report.ci_high = report.corrected_c + kZ95 * sd;
    return report;
}

RiskGroups stratify_by_median_risk(std::span<const double> risks, Outcomes outcomes) {
    if (risks.size() != outcomes.size()) throw ContractError("stratify_by_median_risk: length mismatch");
    if (risks.size() < 2) throw ContractError("stratify_by_median_risk: need at least 2 subjects");
    std::vector<double> sorted(risks.begin(), risks.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    RiskGroups g;
    g.median = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    for (std::size_t i = 0; i < n; ++i) {
        if (risks[i] > g.median) {
            g.high_index.push_back(i);
        } else {
            g.low_index.push_back(i);
        }
    }
    if (g.high_index.empty() || g.low_index.empty()) {
        throw UndefinedResultError("stratify_by_median_risk: risks do not split at the median");
    }
    g.low = take(outcomes, g.low_index);
    g.high = take(outcomes, g.high_index);
    return g;
}

Eigen::VectorXd ConventionalModel::score(const Eigen::MatrixXd& covariates) const {
    if (covariates.cols() != center.size()) throw ContractError("conventional model: covariate count mismatch");
    const Eigen::MatrixXd z = (covariates.rowwise() - center.transpose()).array().rowwise() / scale.transpose().array();
    return z * fit.coefficients;
}

namespace {

struct Standardized {
    Eigen::MatrixXd z;
    Eigen::VectorXd center;
    Eigen::VectorXd scale;
};

Standardized standardize(const Eigen::MatrixXd& x) {
    Standardized s;
    const auto n = static_cast<double>(x.rows());
    s.center = x.colwise().mean().transpose();
    s.scale.resize(x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const double var = (x.col(c).array() - s.center(c)).square().sum() / std::max(1.0, n - 1.0);
        s.scale(c) = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    s.z = (x.rowwise() - s.center.transpose()).array().rowwise() / s.scale.transpose().array();
    return s;
}

}  // namespace

ConventionalModel fit_conventional(const Eigen::MatrixXd& covariates, Outcomes outcomes, std::uint64_t seed,
                                   const BenchmarkOptions& options) {
    if (covariates.cols() < 1) throw ContractError("benchmark: need at least one covariate");
    if (covariates.rows() != static_cast<Eigen::Index>(outcomes.size())) {
        throw ContractError("benchmark: covariate rows do not match outcome count");
    }
    if (!covariates.allFinite()) throw InputError("benchmark: covariates must be finite");
    if (options.lambda_grid.empty()) throw InputError("benchmark: empty lambda grid");

    const Standardized s = standardize(covariates);
    ConventionalModel model;
    model.center = s.center;
    model.scale = s.scale;
    model.lambda_grid = options.lambda_grid;

    // Cross-validated partial likelihood: sum_k [ l(beta_-k) - l_-k(beta_-k) ].
    const auto folds = make_folds(outcomes, std::min<std::size_t>(options.folds, outcomes.size()),
                                  derive_seed(seed, hash_name("benchmark-cv")));
    const std::size_t n = outcomes.size();
    model.cv_scores.assign(options.lambda_grid.size(), 0.0);
    for (std::size_t g = 0; g < options.lambda_grid.size(); ++g) {
        const double lambda = options.lambda_grid[g];
        double total = 0.0;
        for (const auto& fold : folds) {
            std::vector<char> held(n, 0);
            for (std::size_t i : fold) held[i] = 1;
            std::vector<std::size_t> train_idx;
            for (std::size_t i = 0; i < n; ++i) {
                if (!held[i]) train_idx.push_back(i);
            }
            const Eigen::MatrixXd zt = rows_of(s.z, train_idx);
            const auto yt = take(outcomes, train_idx);
            const CoxFit f = fit_cox_l2(zt, yt, lambda);
            total += cox_penalized_log_likelihood(s.z, outcomes, f.coefficients, 0.0) -
                     cox_penalized_log_likelihood(zt, yt, f.coefficients, 0.0);
        }
        model.cv_scores[g] = total;
    }
    std::size_t best = 0;
    for (std::size_t g = 1; g < model.cv_scores.size(); ++g) {
        const bool better = model.cv_scores[g] > model.cv_scores[best] ||
                            (model.cv_scores[g] == model.cv_scores[best] &&
                             options.lambda_grid[g] > options.lambda_grid[best]);
        if (better) best = g;
    }
    model.lambda = options.lambda_grid[best];
    model.fit = fit_cox_l2(s.z, outcomes, model.lambda);
    if (!model.fit.coefficients.allFinite()) throw NumericalError("benchmark: ridge Cox fit diverged");
    return model;
}

RiskScorer benchmark_conventional(const Eigen::MatrixXd& covariates, Outcomes outcomes, std::uint64_t seed) {
    auto model = std::make_shared<const ConventionalModel>(fit_conventional(covariates, outcomes, seed));
    return [model](const Eigen::MatrixXd& x) { return model->score(x); };
}

TrainerProtocol conventional_trainer(const BenchmarkOptions& options) {
    return [options](const Eigen::MatrixXd& x, Outcomes y, std::uint64_t seed) -> RiskScorer {
        auto model = std::make_shared<const ConventionalModel>(fit_conventional(x, y, seed, options));
        return [model](const Eigen::MatrixXd& z) { return model->score(z); };
    };
}

TrainerProtocol fixed_network_trainer(const NetworkSpec& hyperparameters, const TrainConfig& config) {
    return [hyperparameters, config](const Eigen::MatrixXd& x, Outcomes y, std::uint64_t seed) -> RiskScorer {
        NetworkSpec spec = hyperparameters;
        spec.input_dim = static_cast<std::size_t>(x.cols());
        TrainConfig cfg = config;
        cfg.seed = seed;
        auto model = std::make_shared<const NetworkModel>(train(spec, x, y, cfg).model);
        return [model](const Eigen::MatrixXd& z) { return predict_risks(*model, z); };
    };
}

TrainerProtocol tuned_network_trainer(const SearchSpace& space, const SwarmConfig& swarm, const TrainConfig& config) {
    return [space, swarm, config](const Eigen::MatrixXd& x, Outcomes y, std::uint64_t seed) -> RiskScorer {
        SwarmConfig sc = swarm;
        sc.seed = derive_seed(seed, hash_name("tune"));
        const auto objective = cv_objective(x, std::vector<SurvivalRecord>(y.begin(), y.end()), sc.cv_folds,
                                            derive_seed(seed, hash_name("tune-folds")), network_fold_trainer(config));
        const SwarmResult best = pso_optimize(objective, space, sc);
        NetworkSpec spec = spec_from_position(best.best_position, static_cast<std::size_t>(x.cols()));
        TrainConfig cfg = config;
        cfg.seed = derive_seed(seed, hash_name("final"));
        auto model = std::make_shared<const NetworkModel>(train(spec, x, y, cfg).model);
        return [model](const Eigen::MatrixXd& z) { return predict_risks(*model, z); };
    };
}

ComparisonSummary sign_flip_test(std::span<const double> d, const ComparisonOptions& options) {
    ComparisonSummary s;
    s.pairs = d.size();
    if (d.empty()) throw ContractError("sign_flip_test: no paired differences");
    const double b = static_cast<double>(d.size());
    const double observed = std::accumulate(d.begin(), d.end(), 0.0);
    s.mean_difference = observed / b;
    const double half_width = kZ95 * sample_sd(d) / std::sqrt(b);
    s.ci_low = s.mean_difference - half_width;
    s.ci_high = s.mean_difference + half_width;

    double abs_scale = 0.0;
    for (double x : d) abs_scale += std::abs(x);
    const double threshold = std::abs(observed) - 1e-12 * std::max(1.0, abs_scale);

    const bool exhaustive = d.size() < 63 && (std::uint64_t{1} << d.size()) <= options.permutations;
    std::uint64_t hits = 0;
    if (exhaustive) {
        const std::uint64_t patterns = std::uint64_t{1} << d.size();
        for (std::uint64_t mask = 0; mask < patterns; ++mask) {
            double sum = 0.0;
            for (std::size_t i = 0; i < d.size(); ++i) sum += ((mask >> i) & 1U) ? -d[i] : d[i];
            if (std::abs(sum) >= threshold) ++hits;
        }
        s.exhaustive = true;
        s.permutations = static_cast<std::size_t>(patterns);
        s.p_value = static_cast<double>(hits) / static_cast<double>(patterns);
    } else {
        Engine eng = make_engine(derive_seed(options.seed, hash_name("sign-flip")));
        for (std::size_t k = 0; k < options.permutations; ++k) {
            double sum = 0.0;
            for (double x : d) sum += (eng() >> 63) ? -x : x;
            if (std::abs(sum) >= threshold) ++hits;
        }
        s.permutations = options.permutations;
        s.p_value = static_cast<double>(hits + 1) / static_cast<double>(options.permutations + 1);
    }
    return s;
}

ComparisonSummary compare_models(const ValidationReport& a, const ValidationReport& b,
                                 const ComparisonOptions& options) {
    if (a.replicates.size() != b.replicates.size()) {
        throw ContractError("compare_models: reports have different replicate counts");
    }
    std::vector<double> diff;
    for (std::size_t r = 0; r < a.replicates.size(); ++r) {
        const auto& ra = a.replicates[r];
        const auto& rb = b.replicates[r];
        if (ra.resample_hash != rb.resample_hash) {
            throw ContractError("compare_models: replicate " + std::to_string(r) + " used different resamples");
        }
        if (ra.excluded || rb.excluded) continue;
        diff.push_back((a.apparent_c - ra.optimism()) - (b.apparent_c - rb.optimism()));
    }
    return sign_flip_test(diff, options);
}

nlohmann::json report_to_json(const ValidationReport& r) {
    nlohmann::json reps = nlohmann::json::array();
    for (const auto& rep : r.replicates) {
        nlohmann::json j = {{"index", rep.index},
                            {"bootstrap_performance", rep.bootstrap_performance},
                            {"test_performance", rep.test_performance},
                            {"optimism", rep.optimism()},
                            {"excluded", rep.excluded},
                            {"redraws", rep.redraws},
                            {"resample_hash", rep.resample_hash},
                            {"evaluation_hash", rep.evaluation_hash}};
        if (rep.excluded) j["failure"] = rep.failure;
        reps.push_back(std::move(j));
    }
    return {{"label", r.label},
            {"protocol", r.protocol},
            {"ci_method", r.ci_method},
            {"seed", r.seed},
            {"B", r.B},
            {"apparent_c", r.apparent_c},
            {"mean_optimism", r.mean_optimism},
            {"corrected_c", r.corrected_c},
            {"ci_95", {r.ci_low, r.ci_high}},
            {"excluded", r.excluded},
            {"original_hash", r.original_hash},
            {"warnings", r.warnings},
            {"replicates", reps}};
}

ValidationReport report_from_json(const nlohmann::json& j) {
    try {
        ValidationReport r;
        r.label = j.at("label").get<std::string>();
        r.protocol = j.at("protocol").get<std::string>();
        r.ci_method = j.at("ci_method").get<std::string>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.B = j.at("B").get<std::size_t>();
        r.apparent_c = j.at("apparent_c").get<double>();
        r.mean_optimism = j.at("mean_optimism").get<double>();
        r.corrected_c = j.at("corrected_c").get<double>();
        r.ci_low = j.at("ci_95").at(0).get<double>();
        r.ci_high = j.at("ci_95").at(1).get<double>();
        r.excluded = j.at("excluded").get<std::size_t>();
        r.original_hash = j.at("original_hash").get<std::uint64_t>();
        r.warnings = j.at("warnings").get<std::vector<std::string>>();
        for (const auto& rj : j.at("replicates")) {
            BootstrapReplicate rep;
            rep.index = rj.at("index").get<std::size_t>();
            rep.bootstrap_performance = rj.at("bootstrap_performance").get<double>();
            rep.test_performance = rj.at("test_performance").get<double>();
            rep.excluded = rj.at("excluded").get<bool>();
            rep.redraws = rj.at("redraws").get<std::size_t>();
            rep.resample_hash = rj.at("resample_hash").get<std::uint64_t>();
            rep.evaluation_hash = rj.at("evaluation_hash").get<std::uint64_t>();
            if (rj.contains("failure")) rep.failure = rj.at("failure").get<std::string>();
            r.replicates.push_back(std::move(rep));
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("validation report: ") + e.what());
    }
}

nlohmann::json comparison_to_json(const ComparisonSummary& s) {
    return {{"pairs", s.pairs},
            {"mean_difference", s.mean_difference},
            {"ci_95", {s.ci_low, s.ci_high}},
            {"p_value", s.p_value},
            {"test", "paired sign-flip permutation"},
            {"exhaustive", s.exhaustive},
            {"permutations", s.permutations}};
}

}  // namespace motionsurv
