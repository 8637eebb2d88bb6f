#pragma once

#include <cstdint>
#include <functional>

#include <Eigen/Core>

#include "motionsurv/survival_core.hpp"

namespace motionsurv {

/// Maps a feature matrix (one subject per row) to one risk score per row.
/// Higher scores mean shorter expected survival.
using RiskScorer = std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>;

/// A complete model-building pipeline (including any internal tuning): given
/// training data and a seed it returns a scorer. Must be deterministic in
/// (data, seed).
using TrainerProtocol =
    std::function<RiskScorer(const Eigen::MatrixXd& features, Outcomes outcomes, std::uint64_t seed)>;

}  // namespace motionsurv
