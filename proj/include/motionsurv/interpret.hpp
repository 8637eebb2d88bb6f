#pragma once

/// Model interpretation: 2D Laplacian-eigenmaps projection of latent codes and
/// a per-vertex saliency map from univariate regressions of predicted risk on
/// mean displacement.

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "motionsurv/autoenc_net.hpp"
#include "motionsurv/motion_features.hpp"
#include "motionsurv/survival_core.hpp"

namespace motionsurv {

/// Binary kNN adjacency (Euclidean), symmetrized by union. Rows are points.
Eigen::MatrixXd knn_adjacency(const Eigen::MatrixXd& points, std::size_t k);

/// I - D^{-1/2} W D^{-1/2}. Isolated vertices get a unit diagonal.
Eigen::MatrixXd normalized_laplacian(const Eigen::MatrixXd& adjacency);

/// Connected component id per vertex, numbered in order of first appearance.
std::vector<std::size_t> connected_components(const Eigen::MatrixXd& adjacency);

struct Embedding2D {
    Eigen::MatrixXd coordinates;      // n x 2
    std::size_t neighbor_count = 0;
    Eigen::VectorXd eigenvalues;      // ascending spectrum of the normalized Laplacian
    bool degenerate = false;          // lambda_2 and lambda_3 within 1e-10
    std::size_t components = 1;
    std::vector<std::string> warnings;
};

struct EigenmapOptions {
    std::size_t neighbors = 10;
    bool strict = false;  // disconnected graph becomes an error
};

/// Coordinates are the generalized eigenvectors f = D^{-1/2} g for the 2nd and
/// 3rd smallest eigenvalues (the 0 eigenvalue's f is constant), unit
/// D-norm, with the first nonzero entry of each made positive. A disconnected
/// graph is embedded per component, components offset along the first axis.
Embedding2D laplacian_eigenmaps(const Eigen::MatrixXd& latent_codes, const EigenmapOptions& options = {});

struct SaliencyMap {
    std::vector<double> coefficient;      // signed slope per vertex
    std::vector<double> abs_coefficient;
    std::vector<bool> zero_variance;      // predictor constant across subjects; slope set to 0

    static constexpr double kLogEpsilon = 1e-12;
    std::vector<double> log_display() const;
};

/// Simple regression (with intercept) of `risks` on each column of
/// `vertex_predictors` (n x V).
SaliencyMap saliency_from_risks(std::span<const double> risks, const Eigen::MatrixXd& vertex_predictors);

/// n x V matrix of per-vertex mean displacement magnitudes.
Eigen::MatrixXd mean_displacement_matrix(const std::vector<MotionSample>& samples);

SaliencyMap saliency_map(const NetworkModel& model, const std::vector<MotionSample>& samples);

void save_embedding_csv(const std::filesystem::path& path, const Embedding2D& embedding,
                        const std::vector<std::string>& subject_ids, Outcomes outcomes);
void save_saliency_csv(const std::filesystem::path& path, const SaliencyMap& map, bool include_log = true);

}  // namespace motionsurv
