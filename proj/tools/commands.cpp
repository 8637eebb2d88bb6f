#include "commands.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "motionsurv/errors.hpp"
#include "motionsurv/interpret.hpp"
#include "motionsurv/io.hpp"
#include "motionsurv/model_io.hpp"
#include "motionsurv/rng.hpp"
#include "motionsurv/validation.hpp"

#ifndef MOTIONSURV_VERSION
#define MOTIONSURV_VERSION "unknown"
#endif

namespace motionsurv::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Cohort {
    std::vector<MotionSample> samples;
    std::vector<std::string> ids;
    std::vector<SurvivalRecord> outcomes;
    Eigen::MatrixXd features;
};

struct Run {
    const ExperimentConfig& config;
    std::ostream& out;
    std::ostream& err;
    std::vector<fs::path> artifacts;

    void wrote(const fs::path& p) { artifacts.push_back(p); }
};

std::span<const double> as_span(const Eigen::VectorXd& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

void ensure_parent(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void write_json(Run& run, const fs::path& path, const json& doc) {
    ensure_parent(path);
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw InputError("cannot write '" + path.string() + "'");
    f << doc.dump(2) << '\n';
    if (!f) throw InputError("failed writing '" + path.string() + "'");
    run.wrote(path);
}

std::ofstream open_csv(Run& run, const fs::path& path) {
    ensure_parent(path);
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw InputError("cannot write '" + path.string() + "'");
    run.wrote(path);
    return f;
}

Cohort load_cohort(const ExperimentConfig& c, bool with_outcomes) {
    Cohort cohort;
    cohort.samples = load_motion_file(c.paths.motion_file);
    cohort.ids = subject_ids_of(cohort.samples);
    if (with_outcomes) cohort.outcomes = align_outcomes(cohort.ids, load_survival_file(c.paths.survival_file));
    cohort.features = build_feature_matrix(cohort.samples);
    return cohort;
}

void report_warnings(Run& run, const std::vector<std::string>& warnings) {
    for (const auto& w : warnings) run.err << "warning: " << w << '\n';
}

void cmd_generate(Run& run) {
    const auto& c = run.config;
    SyntheticCohortConfig g = c.generate;
    g.seed = named_seed(c.seed, "generate");
    const SyntheticCohort cohort = generate_synthetic_cohort(g);

    ensure_parent(c.paths.motion_file);
    save_motion_file(c.paths.motion_file, cohort.samples, c.binary_motion);
    run.wrote(c.paths.motion_file);
    ensure_parent(c.paths.survival_file);
    save_survival_file(c.paths.survival_file, cohort.outcomes);
    run.wrote(c.paths.survival_file);

    CovariateTable cov{subject_ids_of(cohort.samples), cohort.volumetric_names, cohort.volumetric};
    ensure_parent(c.paths.covariate_file);
    save_covariate_file(c.paths.covariate_file, cov);
    run.wrote(c.paths.covariate_file);

    std::vector<std::size_t> one_based;
    for (std::size_t v : cohort.signal_vertices) one_based.push_back(v + 1);
    write_json(run, c.paths.output_dir / "planted_signal.json",
               {{"signal_vertices", one_based},
                {"planted_risk", cohort.planted_risk},
                {"realized_event_fraction", cohort.realized_event_fraction},
                {"censoring_window_days", cohort.censoring_window_days}});

    run.out << "generated " << cohort.samples.size() << " subjects, " << g.vertex_count << " vertices x "
            << g.frame_count << " frames (feature length " << feature_length(g.vertex_count, g.frame_count) << ")\n"
            << "realized event fraction: " << format_double(cohort.realized_event_fraction) << '\n';
}

void cmd_train(Run& run) {
    const auto& c = run.config;
    const Cohort cohort = load_cohort(c, true);
    NetworkSpec spec = c.network;
    spec.input_dim = static_cast<std::size_t>(cohort.features.cols());
    TrainConfig tc = c.training;
    tc.seed = named_seed(c.seed, "train");
    const TrainResult result = train(spec, cohort.features, cohort.outcomes, tc);

    ensure_parent(c.paths.model_file);
    save_model(c.paths.model_file, result.model);
    run.wrote(c.paths.model_file);
    auto loss = open_csv(run, c.paths.output_dir / "train_loss.csv");
    loss << "epoch,loss\n";
    for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
        loss << e + 1 << ',' << format_double(result.epoch_loss[e]) << '\n';
    }

    const Eigen::VectorXd risks = predict_risks(result.model, cohort.features);
    run.out << "trained " << result.model.params.parameter_count() << " parameters for " << tc.epochs << " epochs\n";
    run.out << "final epoch loss: " << format_double(result.epoch_loss.back()) << '\n'
            << "apparent C-index: " << format_double(concordance_index(as_span(risks), cohort.outcomes)) << '\n';
}

void cmd_tune(Run& run) {
    const auto& c = run.config;
    const Cohort cohort = load_cohort(c, true);
    SwarmConfig sc = c.swarm;
    sc.seed = named_seed(c.seed, "tune");
    const auto objective = cv_objective(cohort.features, cohort.outcomes, sc.cv_folds,
                                        derive_seed(sc.seed, hash_name("folds")),
                                        network_fold_trainer(c.tune_training));
    const SwarmResult result = pso_optimize(objective, c.search, sc);
    report_warnings(run, result.warnings);

    auto trace = open_csv(run, c.paths.output_dir / "tune_trace.csv");
    trace << "iteration,particle";
    for (const auto& axis : c.search.axes) trace << ',' << axis.name;
    trace << ",score,gbest_score\n";
    for (const auto& row : result.trace) {
        trace << row.iteration << ',' << row.particle;
        for (double v : row.position) trace << ',' << format_double(v);
        trace << ',' << format_double(row.score) << ',' << format_double(row.gbest_score) << '\n';
    }

    json best = json::object();
    for (std::size_t a = 0; a < c.search.dimension(); ++a) best[c.search.axes[a].name] = result.best_position[a];
    write_json(run, c.paths.tune_result,
               {{"best_position", best},
                {"best_score", result.best_score},
                {"gbest_by_iteration", result.gbest_by_iteration},
                {"warnings", result.warnings}});
    run.out << "best cross-validated C-index: " << format_double(result.best_score) << '\n';
    for (const auto& [k, v] : best.items()) run.out << "  " << k << " = " << v.dump() << '\n';
}

NetworkSpec spec_from_tune_result(const fs::path& path, std::size_t input_dim) {
    std::ifstream f(path);
    if (!f) throw InputError("cannot read '" + path.string() + "'");
    try {
        const json doc = json::parse(f);
        const auto& b = doc.at("best_position");
        const SearchSpace space = SearchSpace::network_defaults();
        std::vector<double> position;
        for (const auto& axis : space.axes) position.push_back(b.at(axis.name).get<double>());
        return spec_from_position(position, input_dim);
    } catch (const json::exception& e) {
        throw InputError("tune result '" + path.string() + "': " + e.what());
    }
}

Eigen::MatrixXd select_covariates(const CovariateTable& table, const std::vector<std::string>& ids,
                                  const std::vector<std::string>& names) {
    const Eigen::MatrixXd aligned = align_covariates(ids, table);
    Eigen::MatrixXd out(aligned.rows(), static_cast<Eigen::Index>(names.size()));
    for (std::size_t k = 0; k < names.size(); ++k) {
        const auto it = std::find(table.names.begin(), table.names.end(), names[k]);
        if (it == table.names.end()) throw InputError("validate.covariates: no column '" + names[k] + "'");
        out.col(static_cast<Eigen::Index>(k)) = aligned.col(it - table.names.begin());
    }
    return out;
}

void cmd_validate(Run& run) {
    const auto& c = run.config;
    const Cohort cohort = load_cohort(c, true);

    BootstrapOptions opts;
    opts.replicates = c.validate.replicates;
    opts.seed = named_seed(c.seed, "validate");
    opts.jobs = c.jobs;
    opts.label = "deep";

    TrainerProtocol deep;
    if (c.validate.fast_validation) {
        NetworkSpec spec = c.network;
        std::string source = "[train] hyperparameters";
        if (fs::exists(c.paths.tune_result)) {
            spec = spec_from_tune_result(c.paths.tune_result, static_cast<std::size_t>(cohort.features.cols()));
            source = "tuned hyperparameters from " + c.paths.tune_result.filename().string();
        }
        opts.protocol = "fast-validation: " + source +
                        " reused in every replicate (no per-replicate tuning; deviates from the full protocol)";
        deep = fixed_network_trainer(spec, c.training);
    } else {
        opts.protocol = "full-pipeline: hyperparameters re-tuned inside every replicate";
        deep = tuned_network_trainer(c.search, c.swarm, c.tune_training);
    }
    const ValidationReport deep_report = bootstrap_optimism(deep, cohort.features, cohort.outcomes, opts);
    report_warnings(run, deep_report.warnings);
    write_json(run, c.paths.output_dir / "validation_deep.json", report_to_json(deep_report));
    run.out << "deep model: apparent C " << format_double(deep_report.apparent_c) << ", optimism "
            << format_double(deep_report.mean_optimism) << ", corrected C " << format_double(deep_report.corrected_c)
            << " [" << format_double(deep_report.ci_low) << ", " << format_double(deep_report.ci_high) << "]\n";

    if (c.validate.covariates.empty() || !fs::exists(c.paths.covariate_file)) return;
    const Eigen::MatrixXd cov =
        select_covariates(load_covariate_file(c.paths.covariate_file), cohort.ids, c.validate.covariates);
    BootstrapOptions copts = opts;
    copts.label = "conventional";
    copts.protocol = "full-pipeline: ridge penalty re-selected inside every replicate";
    const ValidationReport conv_report = bootstrap_optimism(conventional_trainer(), cov, cohort.outcomes, copts);
    report_warnings(run, conv_report.warnings);
    write_json(run, c.paths.output_dir / "validation_conventional.json", report_to_json(conv_report));

    const ComparisonSummary cmp = compare_models(
        deep_report, conv_report, {.permutations = c.validate.permutations, .seed = named_seed(c.seed, "compare")});
    write_json(run, c.paths.output_dir / "comparison.json", comparison_to_json(cmp));
    run.out << "conventional model: corrected C " << format_double(conv_report.corrected_c) << '\n'
            << "difference (deep - conventional): " << format_double(cmp.mean_difference)
            << ", p = " << format_double(cmp.p_value) << '\n';
}

void cmd_predict(Run& run) {
    const auto& c = run.config;
    const NetworkModel model = load_model(c.paths.model_file);
    const Cohort cohort = load_cohort(c, false);
    const Eigen::VectorXd risks = predict_risks(model, cohort.features);
    ensure_parent(c.paths.risk_file);
    save_risk_file(c.paths.risk_file, {cohort.ids, std::vector<double>(risks.begin(), risks.end())});
    run.wrote(c.paths.risk_file);
    run.out << "wrote " << risks.size() << " risk scores to " << c.paths.risk_file.string() << '\n';
}

void cmd_interpret(Run& run) {
    const auto& c = run.config;
    const NetworkModel model = load_model(c.paths.model_file);
    const Cohort cohort = load_cohort(c, true);

    const Embedding2D emb = laplacian_eigenmaps(encode(model, cohort.features),
                                                {.neighbors = c.interpret.neighbors, .strict = c.strict});
    report_warnings(run, emb.warnings);
    const fs::path emb_path = c.paths.output_dir / "embedding.csv";
    ensure_parent(emb_path);
    save_embedding_csv(emb_path, emb, cohort.ids, cohort.outcomes);
    run.wrote(emb_path);

    const SaliencyMap sal = saliency_map(model, cohort.samples);
    const fs::path sal_path = c.paths.output_dir / "saliency.csv";
    save_saliency_csv(sal_path, sal, c.interpret.log_display);
    run.wrote(sal_path);

    std::size_t flagged = 0;
    for (bool z : sal.zero_variance) flagged += z ? 1 : 0;
    run.out << "embedding: " << emb.coordinates.rows() << " subjects, k = " << emb.neighbor_count
            << (emb.degenerate ? " (degenerate eigenvalues)" : "") << '\n'
            << "saliency: " << sal.abs_coefficient.size() << " vertices, " << flagged << " with zero variance\n";
}

void cmd_km(Run& run) {
    const auto& c = run.config;
    const RiskTable risks = load_risk_file(c.paths.risk_file);
    const auto outcomes = align_outcomes(risks.subject_ids, load_survival_file(c.paths.survival_file));
    const RiskGroups groups = stratify_by_median_risk(risks.risks, outcomes);

    auto km = open_csv(run, c.paths.output_dir / "km.csv");
    km << "group,time,at_risk,events,censored,survival,ci_low,ci_high\n";
    for (const auto& [name, members] : {std::pair{"low", &groups.low}, std::pair{"high", &groups.high}}) {
        const KaplanMeierCurve curve = kaplan_meier(*members);
        for (const auto& s : curve.steps()) {
            km << name << ',' << format_double(s.time) << ',' << s.at_risk << ',' << s.events << ',' << s.censored
               << ',' << format_double(s.survival) << ',' << format_double(s.ci_low) << ','
               << format_double(s.ci_high) << '\n';
        }
    }

    const LogRankResult lr = logrank_test(groups.high, groups.low);
    auto out = open_csv(run, c.paths.output_dir / "logrank.csv");
    out << "statistic,df,p_value,observed_high,expected_high,variance,n_low,n_high,median_risk\n"
        << format_double(lr.statistic) << ',' << lr.df << ',' << format_double(lr.p_value) << ','
        << format_double(lr.observed_a) << ',' << format_double(lr.expected_a) << ',' << format_double(lr.variance)
        << ',' << groups.low.size() << ',' << groups.high.size() << ',' << format_double(groups.median) << '\n';
    run.out << "median split: " << groups.low.size() << " low / " << groups.high.size() << " high risk\n"
            << "log-rank chi2 = " << format_double(lr.statistic) << ", p = " << format_double(lr.p_value) << '\n';
}

std::string hex64(std::uint64_t v) {
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << v;
    return s.str();
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream s;
    s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return s.str();
}

}  // namespace

void run_command(const std::string& name, const ExperimentConfig& config, std::ostream& out, std::ostream& err) {
    const auto start = std::chrono::steady_clock::now();
    Run run{config, out, err, {}};
    fs::create_directories(config.paths.output_dir);

    if (name == "generate") {
        cmd_generate(run);
    } else if (name == "train") {
        cmd_train(run);
    } else if (name == "tune") {
        cmd_tune(run);
    } else if (name == "validate") {
        cmd_validate(run);
    } else if (name == "predict") {
        cmd_predict(run);
    } else if (name == "interpret") {
        cmd_interpret(run);
    } else if (name == "km") {
        cmd_km(run);
    } else {
        throw InputError("unknown subcommand '" + name + "'");
    }

    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::vector<std::string> artifacts;
    for (const auto& p : run.artifacts) artifacts.push_back(p.string());
    json manifest = {{"command", name},
                     {"config_hash", hex64(config.hash())},
                     {"seed", config.seed},
                     {"version", MOTIONSURV_VERSION},
                     {"eigen_version", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                           "." + std::to_string(EIGEN_MINOR_VERSION)},
                     {"compiler", __VERSION__},
                     {"jobs", config.jobs},
                     {"artifacts", artifacts},
                     {"config", config.resolved},
                     {"wall_time_seconds", seconds},
                     {"timestamp", utc_timestamp()}};
    const fs::path path = config.paths.output_dir / ("manifest_" + name + ".json");
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw InputError("cannot write '" + path.string() + "'");
    f << manifest.dump(2) << '\n';
}

}  // namespace motionsurv::cli
