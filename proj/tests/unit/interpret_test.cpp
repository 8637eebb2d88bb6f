#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <Eigen/QR>

#include "motionsurv/errors.hpp"
#include "motionsurv/interpret.hpp"
#include "motionsurv/io.hpp"
#include "test_support.hpp"

using namespace motionsurv;
using namespace motionsurv::testing;
namespace fs = std::filesystem;

namespace {

Eigen::MatrixXd random_rotation(Engine& eng, Eigen::Index d) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian(eng, d, d));
    return qr.householderQ() * Eigen::MatrixXd::Identity(d, d);
}

double spread(const Eigen::MatrixXd& c, Eigen::Index begin, Eigen::Index count, Eigen::RowVector2d& centroid) {
    centroid = c.middleRows(begin, count).colwise().mean();
    double s = 0.0;
    for (Eigen::Index i = begin; i < begin + count; ++i) s += (c.row(i) - centroid).norm();
    return s / static_cast<double>(count);
}

class TempDir {
public:
    TempDir() : path_(fs::temp_directory_path() / ("motionsurv_interp_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()))) {
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    fs::path operator/(const std::string& n) const { return path_ / n; }

private:
    fs::path path_;
};

std::vector<std::string> lines_of(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::string> out;
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

}  // namespace

TEST(KnnGraph, MatchesDefinition) {
    Engine eng = make_engine(1);
    for (int rep = 0; rep < 10; ++rep) {
        const auto p = gaussian(eng, 15, 4);
        for (std::size_t k : {1u, 3u, 7u}) {
            const auto w = knn_adjacency(p, k);
            EXPECT_TRUE(w == brute_knn(p, k));
            EXPECT_TRUE(w == w.transpose());
            EXPECT_TRUE(w.diagonal().isZero(0.0));
            EXPECT_GE(w.rowwise().sum().minCoeff(), static_cast<double>(k));
        }
    }
    EXPECT_THROW(knn_adjacency(gaussian(eng, 5, 2), 5), ContractError);
}

TEST(Laplacian, SpectrumBoundsAndConstantGeneralizedVector) {
    Engine eng = make_engine(2);
    const auto w = knn_adjacency(gaussian(eng, 30, 5), 5);
    const auto comp = connected_components(w);
    ASSERT_EQ(*std::max_element(comp.begin(), comp.end()), 0u);
    const auto lap = normalized_laplacian(w);
    Eigen::VectorXd values;
    Eigen::MatrixXd vectors;
    jacobi_eigen(lap, values, vectors);
    EXPECT_NEAR(values(0), 0.0, 1e-10);
    EXPECT_GE(values.minCoeff(), -1e-10);
    EXPECT_LE(values.maxCoeff(), 2.0 + 1e-10);
    // g_0 is proportional to D^{1/2} 1, so D^{-1/2} g_0 is constant.
    const Eigen::VectorXd degree = w.rowwise().sum();
    const Eigen::VectorXd f0 = vectors.col(0).array() / degree.array().sqrt();
    EXPECT_LT((f0.array() - f0.mean()).abs().maxCoeff(), 1e-10 * std::abs(f0.mean()));
}

TEST(Eigenmaps, SmallGraphsMatchJacobiOracle) {
    Engine eng = make_engine(3);
    int checked = 0;
    while (checked < 20) {
        const auto n = static_cast<Eigen::Index>(4 + uniform_index(eng, 5));
        const auto p = gaussian(eng, n, 3);
        const std::size_t k = 2 + uniform_index(eng, static_cast<std::uint64_t>(n - 3));
        const auto w = brute_knn(p, k);
        const auto comp = connected_components(w);
        if (*std::max_element(comp.begin(), comp.end()) != 0) continue;
        Eigen::VectorXd values;
        Eigen::MatrixXd vectors;
        // Oracle Laplacian from the formula, independent of normalized_laplacian.
        Eigen::MatrixXd lap(n, n);
        const Eigen::VectorXd deg = w.rowwise().sum();
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) lap(i, j) = (i == j ? 1.0 : 0.0) - w(i, j) / std::sqrt(deg(i) * deg(j));
        }
        jacobi_eigen(lap, values, vectors);
        if (values(2) - values(1) < 1e-6 || (n > 3 && values(3) - values(2) < 1e-6)) continue;  // basis not unique
        ++checked;

        EigenmapOptions opt;
        opt.neighbors = k;
        const auto emb = laplacian_eigenmaps(p, opt);
        ASSERT_EQ(emb.eigenvalues.size(), n);
        for (Eigen::Index i = 0; i < n; ++i) EXPECT_NEAR(emb.eigenvalues(i), values(i), 1e-8);
        EXPECT_FALSE(emb.degenerate);
        for (int c = 0; c < 2; ++c) {
            Eigen::VectorXd f = vectors.col(c + 1).array() / deg.array().sqrt();
            f /= std::sqrt((f.array().square() * deg.array()).sum());
            const double sign = emb.coordinates.col(c).dot(f) >= 0 ? 1.0 : -1.0;
            EXPECT_LT((emb.coordinates.col(c) - sign * f).cwiseAbs().maxCoeff(), 1e-8);
        }
    }
}

TEST(Eigenmaps, SignConventionAndDOrthogonality) {
    Engine eng = make_engine(4);
    const auto p = gaussian(eng, 25, 4);
    const auto emb = laplacian_eigenmaps(p, {.neighbors = 6});
    const Eigen::VectorXd deg = knn_adjacency(p, 6).rowwise().sum();
    for (int c = 0; c < 2; ++c) {
        const auto col = emb.coordinates.col(c);
        Eigen::Index first = 0;
        while (std::abs(col(first)) <= 1e-12) ++first;
        EXPECT_GT(col(first), 0.0);
        EXPECT_NEAR(col.dot(deg), 0.0, 1e-10);                        // orthogonal to the constant vector
        EXPECT_NEAR(col.cwiseProduct(deg).dot(col), 1.0, 1e-10);       // unit D-norm
    }
    EXPECT_NEAR(emb.coordinates.col(0).cwiseProduct(deg).dot(emb.coordinates.col(1)), 0.0, 1e-10);
    EXPECT_EQ(emb.neighbor_count, 6u);
    EXPECT_TRUE(emb.coordinates.allFinite());
}

TEST(Eigenmaps, EquilateralTriangle) {
    Eigen::MatrixXd p(3, 2);
    p << 0, 0, 1, 0, 0.5, std::sqrt(3.0) / 2;
    const auto emb = laplacian_eigenmaps(p, {.neighbors = 2});
    const auto& c = emb.coordinates;
    const double d01 = (c.row(0) - c.row(1)).norm();
    const double d02 = (c.row(0) - c.row(2)).norm();
    const double d12 = (c.row(1) - c.row(2)).norm();
    EXPECT_NEAR(d01, d02, 1e-8);
    EXPECT_NEAR(d01, d12, 1e-8);
    EXPECT_GT(d01, 0.1);
    EXPECT_TRUE(emb.degenerate);  // eigenvalues 0, 1.5, 1.5
    EXPECT_NEAR(emb.eigenvalues(1), 1.5, 1e-12);
}

TEST(Eigenmaps, RotationInvariant) {
    Engine eng = make_engine(5);
    for (int rep = 0; rep < 5; ++rep) {
        const auto p = gaussian(eng, 40, 6);
        const auto a = laplacian_eigenmaps(p, {.neighbors = 8});
        if (a.degenerate) continue;
        const auto b = laplacian_eigenmaps(p * random_rotation(eng, 6), {.neighbors = 8});
        EXPECT_LT((a.coordinates - b.coordinates).cwiseAbs().maxCoeff(), 1e-8);
    }
}

TEST(Eigenmaps, SeparatesBridgedClustersAlongLeadingAxis) {
    // Clusters 4 sd apart with k large enough that the kNN graph stays
    // connected through a few bridging edges. The second coordinate then
    // describes structure inside the clusters, so separation is measured on
    // the leading coordinate.
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        Engine eng = make_engine(seed);
        Eigen::MatrixXd p = gaussian(eng, 60, 5);
        p.topRows(30).col(0).array() += 4.0;
        const auto emb = laplacian_eigenmaps(p, {.neighbors = 10});
        ASSERT_EQ(emb.components, 1u) << "seed " << seed;
        const Eigen::VectorXd d1 = emb.coordinates.col(0);
        const double ma = d1.head(30).mean(), mb = d1.tail(30).mean();
        const double sa = (d1.head(30).array() - ma).abs().mean();
        const double sb = (d1.tail(30).array() - mb).abs().mean();
        EXPECT_GT(std::abs(ma - mb), 3.0 * 0.5 * (sa + sb)) << "seed " << seed;
    }
}

TEST(Eigenmaps, SeparatesWellSeparatedClustersInThePlane) {
    // Far apart the kNN graph falls into two components; the per-component
    // embedding must still keep the clusters apart in both coordinates.
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Engine eng = make_engine(seed);
        Eigen::MatrixXd p = gaussian(eng, 60, 5);
        p.topRows(30).col(0).array() += 12.0;
        const auto emb = laplacian_eigenmaps(p, {.neighbors = 10});
        EXPECT_EQ(emb.components, 2u) << "seed " << seed;
        EXPECT_FALSE(emb.warnings.empty());
        Eigen::RowVector2d ca, cb;
        const double sa = spread(emb.coordinates, 0, 30, ca);
        const double sb = spread(emb.coordinates, 30, 30, cb);
        EXPECT_GT((ca - cb).norm(), 3.0 * 0.5 * (sa + sb)) << "seed " << seed;
    }
}

TEST(Eigenmaps, DisconnectedGraphWarnsOrFails) {
    Engine eng = make_engine(6);
    Eigen::MatrixXd p = gaussian(eng, 40, 3, 0.1);
    p.topRows(20).col(0).array() += 100.0;
    const auto emb = laplacian_eigenmaps(p, {.neighbors = 5});
    EXPECT_EQ(emb.components, 2u);
    ASSERT_FALSE(emb.warnings.empty());
    EXPECT_NE(emb.warnings.front().find("disconnected"), std::string::npos);
    EXPECT_TRUE(emb.coordinates.allFinite());
    // Components are embedded separately and offset along the first axis.
    EXPECT_LT(emb.coordinates.topRows(20).col(0).maxCoeff(), emb.coordinates.bottomRows(20).col(0).minCoeff());
    // Two zero eigenvalues, one per component.
    EXPECT_NEAR(emb.eigenvalues(1), 0.0, 1e-10);
    EXPECT_THROW(laplacian_eigenmaps(p, {.neighbors = 5, .strict = true}), NumericalError);
}

TEST(Eigenmaps, RejectsBadArguments) {
    Engine eng = make_engine(7);
    EXPECT_THROW(laplacian_eigenmaps(gaussian(eng, 2, 3), {.neighbors = 1}), ContractError);
    EXPECT_THROW(laplacian_eigenmaps(gaussian(eng, 5, 3), {.neighbors = 5}), ContractError);
    EXPECT_THROW(laplacian_eigenmaps(gaussian(eng, 5, 3), {.neighbors = 0}), ContractError);
}

TEST(Saliency, NoiselessToyGivesExactSlope) {
    const std::vector<double> x{0.5, 1.0, 2.0, 3.5};
    std::vector<double> risk;
    for (double v : x) risk.push_back(2.0 * v);
    Eigen::MatrixXd pred(4, 1);
    pred << 0.5, 1.0, 2.0, 3.5;
    const auto m = saliency_from_risks(risk, pred);
    EXPECT_NEAR(m.coefficient[0], 2.0, 1e-14);
    EXPECT_NEAR(m.abs_coefficient[0], 2.0, 1e-14);
    EXPECT_NEAR(m.log_display()[0], std::log(2.0 + 1e-12), 1e-14);

    for (double& r : risk) r = -r + 7.0;
    EXPECT_NEAR(saliency_from_risks(risk, pred).abs_coefficient[0], 2.0, 1e-14);
}

TEST(Saliency, ConstantRiskGivesZeroEverywhere) {
    Engine eng = make_engine(8);
    const auto pred = gaussian(eng, 12, 6);
    const std::vector<double> risk(12, 0.3);
    const auto m = saliency_from_risks(risk, pred);
    for (double c : m.abs_coefficient) EXPECT_EQ(c, 0.0);
    for (double l : m.log_display()) EXPECT_NEAR(l, std::log(1e-12), 1e-12);
}

TEST(Saliency, MatchesNormalEquations) {
    Engine eng = make_engine(9);
    const auto pred = gaussian(eng, 30, 8);
    std::vector<double> risk(30);
    for (double& r : risk) r = standard_normal(eng);
    const auto m = saliency_from_risks(risk, pred);
    for (Eigen::Index v = 0; v < 8; ++v) {
        // [n, sum x; sum x, sum x^2] [a; b] = [sum r; sum x r], solved by Cramer's rule.
        double sx = 0, sxx = 0, sr = 0, sxr = 0;
        for (Eigen::Index i = 0; i < 30; ++i) {
            const double x = pred(i, v), r = risk[static_cast<std::size_t>(i)];
            sx += x;
            sxx += x * x;
            sr += r;
            sxr += x * r;
        }
        const double det = 30 * sxx - sx * sx;
        const double slope = (30 * sxr - sx * sr) / det;
        EXPECT_NEAR(m.coefficient[static_cast<std::size_t>(v)], slope, 1e-12);
        EXPECT_GE(m.abs_coefficient[static_cast<std::size_t>(v)], 0.0);
    }
}

TEST(Saliency, PermutingVerticesPermutesTheMap) {
    Engine eng = make_engine(10);
    const auto pred = gaussian(eng, 20, 7);
    std::vector<double> risk(20);
    for (double& r : risk) r = standard_normal(eng);
    std::vector<Eigen::Index> perm{3, 0, 6, 1, 5, 2, 4};
    const Eigen::MatrixXd shuffled = pred(Eigen::all, perm);
    const auto a = saliency_from_risks(risk, pred);
    const auto b = saliency_from_risks(risk, shuffled);
    for (std::size_t v = 0; v < 7; ++v) EXPECT_EQ(b.coefficient[v], a.coefficient[static_cast<std::size_t>(perm[v])]);
}

TEST(Saliency, ZeroVarianceVertexIsFlagged) {
    Engine eng = make_engine(11);
    Eigen::MatrixXd pred = gaussian(eng, 10, 3);
    pred.col(1).setConstant(4.2);
    std::vector<double> risk(10);
    for (double& r : risk) r = standard_normal(eng);
    const auto m = saliency_from_risks(risk, pred);
    EXPECT_TRUE(m.zero_variance[1]);
    EXPECT_FALSE(m.zero_variance[0]);
    EXPECT_EQ(m.coefficient[1], 0.0);
}

TEST(Saliency, ModelPathUsesPredictedRisksAndMeanDisplacement) {
    SyntheticCohortConfig cfg;
    cfg.n_subjects = 15;
    cfg.vertex_count = 6;
    cfg.frame_count = 4;
    const auto cohort = generate_synthetic_cohort(cfg);
    NetworkSpec spec;
    spec.input_dim = feature_length(6, 4);
    spec.hidden_units = 5;
    spec.latent_dim = 3;
    const auto model = NetworkModel::initialize(spec, 2);
    const Eigen::MatrixXd md = mean_displacement_matrix(cohort.samples);
    ASSERT_EQ(md.rows(), 15);
    ASSERT_EQ(md.cols(), 6);
    const auto row3 = mean_displacement_per_vertex(cohort.samples[3]);
    for (Eigen::Index v = 0; v < 6; ++v) EXPECT_EQ(md(3, v), row3[static_cast<std::size_t>(v)]);
    const Eigen::VectorXd risks = predict_risks(model, build_feature_matrix(cohort.samples));
    const auto expected = saliency_from_risks(std::span<const double>(risks.data(), 15), md);
    EXPECT_EQ(saliency_map(model, cohort.samples).coefficient, expected.coefficient);
}

TEST(InterpretCsv, EmbeddingAndSaliencyLayouts) {
    TempDir dir;
    Embedding2D emb;
    emb.coordinates.resize(2, 2);
    emb.coordinates << 0.5, -0.25, 1.0, 2.0;
    const auto y = records({10, 20}, {1, 0});
    save_embedding_csv(dir / "e.csv", emb, {"A", "B"}, y);
    auto lines = lines_of(dir / "e.csv");
    ASSERT_EQ(lines.size(), 3u);
    EXPECT_EQ(lines[0], "subject_id,dim1,dim2,survival_time,event");
    EXPECT_EQ(lines[1], "A,0.5,-0.25,10,1");
    EXPECT_THROW(save_embedding_csv(dir / "x.csv", emb, {"A"}, y), ContractError);

    SaliencyMap m;
    m.abs_coefficient = {2.0, 0.0};
    m.coefficient = {-2.0, 0.0};
    m.zero_variance = {false, true};
    save_saliency_csv(dir / "s.csv", m);
    lines = lines_of(dir / "s.csv");
    ASSERT_EQ(lines.size(), 3u);
    EXPECT_EQ(lines[0], "vertex_index,abs_coefficient,log_display_value");
    EXPECT_EQ(lines[1].substr(0, 4), "1,2,");
    EXPECT_EQ(parse_double(lines[1].substr(4), "log"), std::log(2.0 + 1e-12));
    save_saliency_csv(dir / "s2.csv", m, false);
    EXPECT_EQ(lines_of(dir / "s2.csv")[2], "2,0");
}
