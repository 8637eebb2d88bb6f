// End-to-end runs of the command-line tool on a tiny cohort.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "motionsurv/io.hpp"
#include "motionsurv/motion_features.hpp"
#include "test_support.hpp"

namespace motionsurv {
namespace {

namespace fs = std::filesystem;
using testing::read_bytes;

const char* const kSmallConfig = R"(seed = 11

[generate]
n_subjects = 60
vertex_count = 6
frame_count = 4

[train]
hidden_units = 12
latent_dim = 3
learning_rate = 0.001
epochs = 5

[tune]
n_particles = 4
n_iterations = 50
cv_folds = 6
epochs = 2
hidden_units_lower = 4
hidden_units_upper = 8
latent_dim_lower = 2
latent_dim_upper = 3

[validate]
replicates = 50
fast_validation = true

[interpret]
neighbors = 6
)";

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("motionsurv_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream f(p);
    f << text;
}

int run(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string(MOTIONSURV_CLI) + " " + args + " > '" + log.string() + "' 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    const auto b = read_bytes(p);
    return {b.begin(), b.end()};
}

// Runs every subcommand into dir/out and fails the test on a nonzero exit.
void run_pipeline(const fs::path& dir) {
    const fs::path cfg = dir / "config.ini";
    write_text(cfg, kSmallConfig);
    const std::string common = "--config '" + cfg.string() + "' --set paths.output_dir=" + (dir / "out").string();
    for (const char* cmd : {"generate", "train", "tune", "validate", "predict", "interpret", "km"}) {
        const fs::path log = dir / (std::string(cmd) + ".log");
        ASSERT_EQ(run(std::string(cmd) + " " + common, log), 0) << cmd << ":\n" << slurp(log);
    }
}

// Two runs through the same paths; the first run's outputs are moved aside.
class Pipeline : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        root_ = scratch("pipeline");
        run_pipeline(root_);
        fs::rename(root_ / "out", first());
        run_pipeline(root_);
    }
    static fs::path first() { return root_ / "first"; }
    static fs::path second() { return root_ / "out"; }
    static fs::path root_;
};

fs::path Pipeline::root_;

TEST_F(Pipeline, WritesEveryDeclaredArtifact) {
    const fs::path out = first();
    for (const char* f : {"motion.csv", "survival.csv", "covariates.csv", "model.json", "train_loss.csv",
                          "tune_trace.csv", "tune_best.json", "validation_deep.json", "validation_conventional.json",
                          "comparison.json", "risks.csv", "embedding.csv", "saliency.csv", "km.csv", "logrank.csv"}) {
        EXPECT_TRUE(fs::exists(out / f)) << f;
    }
    for (const char* cmd : {"generate", "train", "tune", "validate", "predict", "interpret", "km"}) {
        const auto m = nlohmann::json::parse(slurp(out / ("manifest_" + std::string(cmd) + ".json")));
        EXPECT_EQ(m.at("command"), cmd);
        EXPECT_EQ(m.at("seed"), 11);
        EXPECT_EQ(m.at("config_hash").get<std::string>().size(), 16u);
        EXPECT_TRUE(m.contains("version"));
        EXPECT_GE(m.at("wall_time_seconds").get<double>(), 0.0);
    }
}

TEST_F(Pipeline, RerunIsByteIdenticalApartFromManifestTimes) {
    const fs::path a = first(), b = second();
    std::set<std::string> names_a, names_b;
    for (const auto& e : fs::directory_iterator(a)) names_a.insert(e.path().filename().string());
    for (const auto& e : fs::directory_iterator(b)) names_b.insert(e.path().filename().string());
    ASSERT_EQ(names_a, names_b);
    for (const auto& name : names_a) {
        if (name.rfind("manifest_", 0) == 0) {
            auto ma = nlohmann::json::parse(slurp(a / name));
            auto mb = nlohmann::json::parse(slurp(b / name));
            for (auto* m : {&ma, &mb}) {
                m->erase("timestamp");
                m->erase("wall_time_seconds");
            }
            EXPECT_EQ(ma, mb) << name;
        } else {
            EXPECT_EQ(read_bytes(a / name), read_bytes(b / name)) << name;
        }
    }
}

TEST_F(Pipeline, ValidationReportHoldsEveryReplicate) {
    const auto r = nlohmann::json::parse(slurp(first() / "validation_deep.json"));
    EXPECT_EQ(r.at("replicates").size(), 50u);
    EXPECT_NE(r.at("protocol").get<std::string>().find("fast-validation"), std::string::npos);
    const auto c = nlohmann::json::parse(slurp(first() / "validation_conventional.json"));
    EXPECT_EQ(c.at("replicates").size(), 50u);
}

TEST_F(Pipeline, TuneTraceHasOneBlockPerIteration) {
    const auto rows = testing::read_fixture(first() / "tune_trace.csv");
    ASSERT_GT(rows.size(), 1u);
    std::set<std::string> iterations;
    for (std::size_t i = 1; i < rows.size(); ++i) iterations.insert(rows[i].at(0));
    EXPECT_EQ(iterations.size(), 50u);
    EXPECT_EQ(rows.size() - 1, 50u * 4u);
}

TEST_F(Pipeline, CohortFilesParseBack) {
    const auto samples = load_motion_file(first() / "motion.csv");
    EXPECT_EQ(samples.size(), 60u);
    const auto outcomes = align_outcomes(subject_ids_of(samples), load_survival_file(first() / "survival.csv"));
    EXPECT_EQ(outcomes.size(), 60u);
    EXPECT_EQ(build_feature_matrix(samples).cols(), 3 * 3 * 6);
}

TEST(Cli, DefaultMeshGivesFullLengthFeatures) {
    const fs::path dir = scratch("defaults");
    ASSERT_EQ(run("generate --set generate.n_subjects=4 --set paths.output_dir=" + (dir / "out").string(),
                  dir / "log"),
              0)
        << slurp(dir / "log");
    EXPECT_EQ(build_feature_matrix(load_motion_file(dir / "out" / "motion.csv")).cols(), 11514);
}

TEST(Cli, BinaryMotionRoundTrip) {
    const fs::path dir = scratch("binary");
    const std::string out = (dir / "out").string();
    ASSERT_EQ(run("generate --set generate.binary=true --set generate.n_subjects=5 --set generate.vertex_count=3 "
                  "--set generate.frame_count=3 --set paths.output_dir=" + out,
                  dir / "log"),
              0)
        << slurp(dir / "log");
    EXPECT_EQ(load_motion_file(dir / "out" / "motion.bin").size(), 5u);
}

TEST(Cli, ExitCodes) {
    const fs::path dir = scratch("exit");
    const std::string out = " --set paths.output_dir=" + (dir / "out").string();
    EXPECT_EQ(run("--help", dir / "log"), 0);
    EXPECT_EQ(run("", dir / "log"), 2);
    EXPECT_EQ(run("frobnicate", dir / "log"), 2);
    EXPECT_EQ(run("generate --set generate.bogus=1" + out, dir / "log"), 2);
    EXPECT_NE(slurp(dir / "log").find("generate.bogus"), std::string::npos);
    EXPECT_EQ(run("generate --set generate.noise_sd=abc" + out, dir / "log"), 2);
    EXPECT_EQ(run("train" + out, dir / "log"), 2);  // no cohort yet

    ASSERT_EQ(run("generate --set generate.n_subjects=30 --set generate.vertex_count=4 --set generate.frame_count=3" + out,
                  dir / "log"),
              0);
    EXPECT_EQ(run("train --set train.hidden_units=6 --set train.latent_dim=2 --set train.learning_rate=1e100 "
                  "--set train.epochs=3" + out,
                  dir / "log"),
              3)
        << slurp(dir / "log");
    EXPECT_NE(slurp(dir / "log").find("train"), std::string::npos);
}

}  // namespace
}  // namespace motionsurv
