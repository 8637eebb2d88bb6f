#pragma once

/// Mesh motion representation and displacement features.
///
/// A subject's motion is a set of V vertex trajectories, each sampled at the
/// same T frames. The feature vector holds every vertex's displacement from
/// its frame-1 position for frames 2..T.
///
/// Flattening order (stable across training and prediction):
///
///     index(v, t, c) = (v * (T - 1) + (t - 2)) * 3 + c
///
/// with v in [0, V), t in [2, T] and c in {x, y, z}: vertex outer, frame
/// middle, coordinate inner. The binary motion container uses the same
/// order for raw positions with t in [1, T].

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "motionsurv/survival_core.hpp"

namespace motionsurv {

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    friend bool operator==(const Vec3&, const Vec3&) = default;
};

/// Positions of one vertex at frames 1..T.
using VertexTrajectory = std::vector<Vec3>;

struct MotionSample {
    std::string subject_id;
    std::vector<VertexTrajectory> trajectories;  // index v = 0..V-1

    std::size_t vertex_count() const noexcept { return trajectories.size(); }
    /// Frame count of the first trajectory (0 for an empty sample).
    std::size_t frame_count() const noexcept {
        return trajectories.empty() ? 0 : trajectories.front().size();
    }

    friend bool operator==(const MotionSample&, const MotionSample&) = default;
};

/// Throws InputError unless the sample has V >= 1, T >= 2, identical frame
/// counts on every trajectory and finite coordinates.
void validate_sample(const MotionSample& sample);

/// Length of the displacement vector: 3 * (T - 1) * V.
constexpr std::size_t feature_length(std::size_t vertex_count, std::size_t frame_count) noexcept {
    return frame_count < 2 ? 0 : 3 * (frame_count - 1) * vertex_count;
}

/// Coordinate-wise displacement of every vertex from frame 1 (see file comment
/// for layout).
Eigen::VectorXd build_displacement_vector(const MotionSample& sample);

/// Stack displacement vectors into an n x d_p matrix (one subject per row).
/// All samples must share V and T.
Eigen::MatrixXd build_feature_matrix(const std::vector<MotionSample>& samples);

/// Per-vertex mean over frames 2..T of the Euclidean displacement from frame 1.
std::vector<double> mean_displacement_per_vertex(const MotionSample& sample);

struct SyntheticCohortConfig {
    std::size_t n_subjects = 302;
    std::size_t vertex_count = 202;
    std::size_t frame_count = 20;
    double event_fraction_target = 0.28;
    double signal_strength = 1.0;  // log-hazard coefficient on the planted risk
    double noise_sd = 0.1;
    std::uint64_t seed = 1;

    // Generator shape parameters.
    double signal_vertex_fraction = 0.25;  // leading vertices whose amplitude tracks risk
    double motion_coupling = 0.3;          // amplitude = base * exp(-coupling * risk)
    double base_amplitude = 1.0;
    double volumetric_correlation = 0.3;   // correlation of pseudo-volumetric indices with risk
    double baseline_hazard_per_day = 1.0 / (5.0 * 365.25);

    /// Throws InputError for a degenerate configuration.
    void validate() const;
};

struct SyntheticCohort {
    std::vector<MotionSample> samples;
    std::vector<SurvivalRecord> outcomes;
    /// n x 3 pseudo-volumetric covariates (EDV, ESV, EF).
    Eigen::MatrixXd volumetric;
    std::vector<std::string> volumetric_names;
    std::vector<double> planted_risk;
    std::vector<std::size_t> signal_vertices;
    double realized_event_fraction = 0.0;
    double censoring_window_days = 0.0;
};

/// Seeded cohort with a planted survival signal.
///
/// Each subject draws a latent risk r ~ N(0,1). The leading
/// signal_vertex_fraction of vertices contract with amplitude
/// base * exp(-motion_coupling * r) plus N(0, noise_sd) noise; the remaining
/// vertices follow an independent nuisance factor. Event times are
/// exponential with log-hazard signal_strength * r, censored by a uniform
/// administrative window whose length is bisected to hit the target event
/// fraction. Every subject has its own RNG stream, so output is a pure
/// function of the config.
SyntheticCohort generate_synthetic_cohort(const SyntheticCohortConfig& config);

}  // namespace motionsurv
