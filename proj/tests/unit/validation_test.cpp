#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "motionsurv/errors.hpp"
#include "motionsurv/motion_features.hpp"
#include "motionsurv/validation.hpp"
#include "test_support.hpp"

using namespace motionsurv;
using namespace motionsurv::testing;

namespace {

struct Data {
    Eigen::MatrixXd x;
    std::vector<SurvivalRecord> y;
    std::vector<double> planted;
};

// Outcomes from the synthetic generator with a small motion mesh.
Data cohort(std::uint64_t seed, std::size_t n = 300, double signal = 1.0) {
    SyntheticCohortConfig cfg;
    cfg.n_subjects = n;
    cfg.vertex_count = 4;
    cfg.frame_count = 3;
    cfg.signal_strength = signal;
    cfg.seed = seed;
    auto c = generate_synthetic_cohort(cfg);
    return {c.volumetric, c.outcomes, c.planted_risk};
}

Eigen::MatrixXd noise(Engine& eng, Eigen::Index n, Eigen::Index p) {
    Eigen::MatrixXd m(n, p);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = standard_normal(eng);
    return m;
}

}  // namespace

TEST(BootstrapIndices, SeededAndInRange) {
    const auto d = cohort(1, 50);
    const auto a = bootstrap_indices(d.y, 9, 3);
    EXPECT_EQ(a, bootstrap_indices(d.y, 9, 3));
    EXPECT_NE(a, bootstrap_indices(d.y, 9, 4));
    EXPECT_NE(a, bootstrap_indices(d.y, 10, 3));
    ASSERT_EQ(a.size(), 50u);
    for (std::size_t i : a) EXPECT_LT(i, 50u);
    // With replacement: a resample of 50 almost surely repeats someone.
    std::vector<std::size_t> sorted = a;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_NE(std::adjacent_find(sorted.begin(), sorted.end()), sorted.end());
}

TEST(BootstrapIndices, RedrawsUntilAnInformativePairExists) {
    // Only subject 0 has an event; a resample without it has no informative pair.
    const auto y = records({1, 2, 3, 4, 5}, {1, 0, 0, 0, 0});
    std::size_t total_redraws = 0;
    for (std::size_t b = 0; b < 40; ++b) {
        std::size_t redraws = 0;
        const auto idx = bootstrap_indices(y, 1, b, &redraws);
        total_redraws += redraws;
        EXPECT_NE(std::find(idx.begin(), idx.end(), 0u), idx.end());
    }
    EXPECT_GT(total_redraws, 0u);
    EXPECT_THROW(bootstrap_indices(records({1, 2}, {0, 0}), 1, 0), NumericalError);
}

TEST(Bootstrap, ReportIdentitiesHoldExactly) {
    const auto d = cohort(2, 120);
    BootstrapOptions opt;
    opt.replicates = 25;
    opt.seed = 5;
    const auto r = bootstrap_optimism(conventional_trainer(), d.x, d.y, opt);
    ASSERT_EQ(r.replicates.size(), 25u);
    EXPECT_EQ(r.B, 25u);
    double sum = 0.0;
    for (const auto& rep : r.replicates) sum += rep.bootstrap_performance - rep.test_performance;
    EXPECT_EQ(r.mean_optimism, sum / 25.0);
    EXPECT_EQ(r.corrected_c, r.apparent_c - r.mean_optimism);
    const auto per = r.corrected_per_replicate();
    const double mean = std::accumulate(per.begin(), per.end(), 0.0) / 25.0;
    double ss = 0.0;
    for (double v : per) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / 24.0);
    EXPECT_NEAR(r.ci_low, r.corrected_c - 1.959963984540054 * sd, 1e-15);
    EXPECT_NEAR(r.ci_high, r.corrected_c + 1.959963984540054 * sd, 1e-15);
    EXPECT_FALSE(r.ci_method.empty());
    // The apparent model is trained on everything and scored in-sample.
    const auto full = conventional_trainer()(d.x, d.y, derive_seed(5, hash_name("apparent")));
    const Eigen::VectorXd risks = full(d.x);
    EXPECT_EQ(r.apparent_c, concordance_index(std::span<const double>(risks.data(), 120), d.y));
}

TEST(Bootstrap, TestPerformanceUsesTheUntouchedSample) {
    const auto d = cohort(3, 80);
    BootstrapOptions opt;
    opt.replicates = 10;
    const auto r = bootstrap_optimism(fixed_scorer_trainer(), d.x, d.y, opt);
    EXPECT_EQ(r.original_hash, hash_dataset(d.x, d.y));
    const double full_c = concordance_index(
        std::span<const double>(Eigen::VectorXd(d.x.col(0)).data(), 80), d.y);
    for (const auto& rep : r.replicates) {
        EXPECT_EQ(rep.evaluation_hash, r.original_hash);
        EXPECT_EQ(rep.test_performance, full_c);
        EXPECT_EQ(rep.resample_hash, hash_indices(bootstrap_indices(d.y, opt.seed, rep.index)));
    }
}

TEST(Bootstrap, JobsDoNotChangeTheReport) {
    const auto d = cohort(4, 100);
    BootstrapOptions opt;
    opt.replicates = 12;
    opt.seed = 3;
    const auto one = bootstrap_optimism(conventional_trainer(), d.x, d.y, opt);
    opt.jobs = 4;
    const auto four = bootstrap_optimism(conventional_trainer(), d.x, d.y, opt);
    EXPECT_EQ(report_to_json(one).dump(), report_to_json(four).dump());
}

TEST(Bootstrap, DataIgnoringTrainerHasNoOptimism) {
    const auto d = cohort(5, 300);
    BootstrapOptions opt;
    opt.replicates = 200;
    opt.seed = 11;
    const auto r = bootstrap_optimism(fixed_scorer_trainer(), d.x, d.y, opt);
    EXPECT_LT(std::abs(r.mean_optimism), 0.02);
    EXPECT_NEAR(r.corrected_c, r.apparent_c, 0.02);
}

TEST(Bootstrap, MemorizingTrainerIsOptimistic) {
    Engine eng = make_engine(6);
    const auto d = cohort(6, 150);
    const Eigen::MatrixXd x = noise(eng, 150, 3);
    BootstrapOptions opt;
    opt.replicates = 30;
    const auto r = bootstrap_optimism(memorizing_trainer(), x, d.y, opt);
    EXPECT_GT(r.mean_optimism, 0.05);
    EXPECT_LT(r.corrected_c, r.apparent_c);
}

TEST(Bootstrap, FailingReplicatesAreExcludedUpToTenPercent) {
    const auto d = cohort(7, 60);
    BootstrapOptions opt;
    opt.replicates = 20;
    opt.seed = 2;
    auto failing_on = [&](std::vector<std::size_t> bad) -> TrainerProtocol {
        std::vector<std::uint64_t> bad_seeds;
        for (std::size_t b : bad) bad_seeds.push_back(derive_seed(opt.seed, hash_name("replicate"), b));
        return [bad_seeds](const Eigen::MatrixXd& x, Outcomes y, std::uint64_t seed) -> RiskScorer {
            if (std::find(bad_seeds.begin(), bad_seeds.end(), seed) != bad_seeds.end()) {
                throw NumericalError("diverged");
            }
            return fixed_scorer_trainer()(x, y, seed);
        };
    };
    const auto r = bootstrap_optimism(failing_on({4, 13}), d.x, d.y, opt);
    EXPECT_EQ(r.excluded, 2u);
    EXPECT_TRUE(r.replicates[4].excluded);
    EXPECT_EQ(r.replicates[4].failure, "diverged");
    EXPECT_EQ(r.corrected_per_replicate().size(), 18u);
    EXPECT_FALSE(r.warnings.empty());
    EXPECT_THROW(bootstrap_optimism(failing_on({1, 2, 3}), d.x, d.y, opt), NumericalError);
}

TEST(Bootstrap, RejectsBadInput) {
    const auto d = cohort(8, 20);
    BootstrapOptions opt;
    opt.replicates = 0;
    EXPECT_THROW(bootstrap_optimism(fixed_scorer_trainer(), d.x, d.y, opt), ContractError);
    opt.replicates = 2;
    EXPECT_THROW(bootstrap_optimism(fixed_scorer_trainer(), d.x.topRows(10), d.y, opt), ContractError);
    const auto censored = records({1, 2, 3}, {0, 0, 0});
    EXPECT_THROW(bootstrap_optimism(fixed_scorer_trainer(), Eigen::MatrixXd::Zero(3, 1), censored, opt),
                 UndefinedResultError);
}

TEST(Stratify, MedianSplits) {
    const auto y4 = records({1, 2, 3, 4}, {1, 1, 1, 1});
    const std::vector<double> r4{1, 2, 3, 4};
    auto g = stratify_by_median_risk(r4, y4);
    EXPECT_EQ(g.low_index, (std::vector<std::size_t>{0, 1}));
    EXPECT_EQ(g.high_index, (std::vector<std::size_t>{2, 3}));
    EXPECT_EQ(g.median, 2.5);
    EXPECT_EQ(g.high[0].subject_id, "S3");

    const auto y3 = records({1, 2, 3}, {1, 1, 1});
    const std::vector<double> r3{3, 1, 2};
    g = stratify_by_median_risk(r3, y3);
    EXPECT_EQ(g.low_index, (std::vector<std::size_t>{1, 2}));
    EXPECT_EQ(g.high_index, (std::vector<std::size_t>{0}));

    const std::vector<double> same{5, 5, 5};
    EXPECT_THROW(stratify_by_median_risk(same, y3), UndefinedResultError);
}

TEST(Stratify, MedianTiesGoLow) {
    const auto y = records({1, 2, 3, 4, 5}, {1, 0, 1, 0, 1});
    const std::vector<double> r{1, 2, 2, 2, 3};
    const auto g = stratify_by_median_risk(r, y);
    EXPECT_EQ(g.high_index, (std::vector<std::size_t>{4}));
    EXPECT_EQ(g.low.size(), 4u);
}

TEST(Benchmark, DuplicatedCovariatesShareTheCoefficient) {
    const auto d = cohort(9, 200);
    Eigen::MatrixXd x(200, 2);
    x.col(0) = d.x.col(0);
    x.col(1) = d.x.col(0);
    const auto m = fit_conventional(x, d.y, 1);
    EXPECT_GT(m.lambda, 0.0);
    EXPECT_NEAR(m.fit.coefficients(0), m.fit.coefficients(1), 1e-10);
    EXPECT_EQ(m.cv_scores.size(), m.lambda_grid.size());
}

TEST(Benchmark, SelectedLambdaMaximizesCrossValidatedLikelihood) {
    const auto d = cohort(10, 200);
    const auto m = fit_conventional(d.x, d.y, 4);
    const auto best = std::max_element(m.cv_scores.begin(), m.cv_scores.end());
    EXPECT_EQ(m.lambda, m.lambda_grid[static_cast<std::size_t>(best - m.cv_scores.begin())]);
    EXPECT_EQ(fit_conventional(d.x, d.y, 4).fit.coefficients, m.fit.coefficients);
    // Scoring standardizes with the training center and scale.
    const Eigen::VectorXd s = m.score(d.x);
    const Eigen::MatrixXd z = (d.x.rowwise() - m.center.transpose()).array().rowwise() / m.scale.transpose().array();
    EXPECT_TRUE(s.isApprox(z * m.fit.coefficients, 1e-13));
}

TEST(Benchmark, PlantedCovariateRecoversPlantedConcordance) {
    const auto d = cohort(11, 300);
    Engine eng = make_engine(11);
    Eigen::MatrixXd x(300, 1);
    for (Eigen::Index i = 0; i < 300; ++i) x(i, 0) = d.planted[static_cast<std::size_t>(i)] + 0.05 * standard_normal(eng);
    const double planted_c = concordance_index(d.planted, d.y);
    BootstrapOptions opt;
    opt.replicates = 50;
    const auto r = bootstrap_optimism(conventional_trainer(), x, d.y, opt);
    EXPECT_NEAR(r.corrected_c, planted_c, 0.05);
}

TEST(Benchmark, NoiseCovariatesStayNearChance) {
    double total = 0.0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto d = cohort(100 + seed, 300);
        Engine eng = make_engine(seed);
        BootstrapOptions opt;
        opt.replicates = 50;
        opt.seed = seed;
        const auto r = bootstrap_optimism(conventional_trainer(), noise(eng, 300, 3), d.y, opt);
        total += r.corrected_c;
    }
    EXPECT_NEAR(total / 10.0, 0.5, 0.05);
}

TEST(SignFlip, ExhaustiveMatchesEnumerationOracle) {
    Engine eng = make_engine(12);
    for (std::size_t b = 1; b <= 12; ++b) {
        std::vector<double> d(b);
        for (double& v : d) v = 0.02 + 0.05 * standard_normal(eng);
        const auto s = sign_flip_test(d, {});
        EXPECT_TRUE(s.exhaustive);
        EXPECT_EQ(s.permutations, std::size_t{1} << b);
        EXPECT_DOUBLE_EQ(s.p_value, brute_sign_flip_p(d)) << "B = " << b;
    }
}

TEST(SignFlip, MonteCarloAgreesWithEnumeration) {
    Engine eng = make_engine(13);
    for (int rep = 0; rep < 5; ++rep) {
        std::vector<double> d(12);
        for (double& v : d) v = 0.01 + 0.03 * standard_normal(eng);
        ComparisonOptions opt;
        opt.permutations = 4000;  // below 2^12, forces sampling
        opt.seed = static_cast<std::uint64_t>(rep);
        const auto s = sign_flip_test(d, opt);
        EXPECT_FALSE(s.exhaustive);
        const double exact = brute_sign_flip_p(d);
        // Binomial sd at 4000 draws is at most 0.008.
        EXPECT_NEAR(s.p_value, exact, 0.03);
    }
}

TEST(SignFlip, SummaryStatistics) {
    const std::vector<double> d{0.1, 0.2, 0.3, 0.4};
    const auto s = sign_flip_test(d, {});
    EXPECT_DOUBLE_EQ(s.mean_difference, 0.25);
    const double half = 1.959963984540054 * std::sqrt((0.0225 + 0.0025 + 0.0025 + 0.0225) / 3.0) / 2.0;
    EXPECT_NEAR(s.ci_low, 0.25 - half, 1e-15);
    EXPECT_NEAR(s.ci_high, 0.25 + half, 1e-15);
    // Only all-positive and all-negative patterns reach |sum| = 1.0.
    EXPECT_DOUBLE_EQ(s.p_value, 2.0 / 16.0);
    EXPECT_THROW(sign_flip_test(std::vector<double>{}, {}), ContractError);
}

TEST(Compare, ModelAgainstItself) {
    const auto d = cohort(14, 100);
    BootstrapOptions opt;
    opt.replicates = 20;
    const auto r = bootstrap_optimism(conventional_trainer(), d.x, d.y, opt);
    const auto s = compare_models(r, r);
    EXPECT_EQ(s.mean_difference, 0.0);
    EXPECT_EQ(s.p_value, 1.0);
    EXPECT_EQ(s.pairs, 20u);
}

TEST(Compare, ContractChecks) {
    const auto d = cohort(15, 80);
    BootstrapOptions opt;
    opt.replicates = 6;
    opt.seed = 1;
    const auto a = bootstrap_optimism(fixed_scorer_trainer(), d.x, d.y, opt);
    opt.replicates = 5;
    EXPECT_THROW(compare_models(a, bootstrap_optimism(fixed_scorer_trainer(), d.x, d.y, opt)), ContractError);
    opt.replicates = 6;
    opt.seed = 2;
    EXPECT_THROW(compare_models(a, bootstrap_optimism(fixed_scorer_trainer(), d.x, d.y, opt)), ContractError);
    opt.seed = 1;
    auto b = bootstrap_optimism(conventional_trainer(), d.x, d.y, opt);
    b.replicates[2].excluded = true;
    EXPECT_EQ(compare_models(a, b).pairs, 5u);
}

TEST(Compare, PairedDifferencesOfCorrectedConcordance) {
    const auto d = cohort(16, 100);
    BootstrapOptions opt;
    opt.replicates = 8;
    const auto a = bootstrap_optimism(conventional_trainer(), d.x, d.y, opt);
    const auto b = bootstrap_optimism(fixed_scorer_trainer(), d.x, d.y, opt);
    std::vector<double> diff;
    const auto ca = a.corrected_per_replicate(), cb = b.corrected_per_replicate();
    for (std::size_t i = 0; i < 8; ++i) diff.push_back(ca[i] - cb[i]);
    const auto s = compare_models(a, b);
    EXPECT_DOUBLE_EQ(s.mean_difference, std::accumulate(diff.begin(), diff.end(), 0.0) / 8.0);
    EXPECT_DOUBLE_EQ(s.p_value, brute_sign_flip_p(diff));
}

TEST(ReportJson, RoundTrip) {
    const auto d = cohort(17, 60);
    BootstrapOptions opt;
    opt.replicates = 4;
    opt.label = "benchmark";
    auto r = bootstrap_optimism(conventional_trainer(), d.x, d.y, opt);
    r.replicates[1].excluded = true;
    r.replicates[1].failure = "x";
    const auto back = report_from_json(report_to_json(r));
    EXPECT_EQ(report_to_json(back), report_to_json(r));
    EXPECT_EQ(back.corrected_c, r.corrected_c);
    EXPECT_EQ(back.replicates[1].failure, "x");
    EXPECT_EQ(back.label, "benchmark");
    auto broken = report_to_json(r);
    broken.erase("apparent_c");
    EXPECT_THROW(report_from_json(broken), InputError);
}
