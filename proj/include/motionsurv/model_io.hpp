#pragma once

/// Versioned model documents.
///
/// JSON layout:
///   {
///     "format": "motionsurv-model", "format_version": 1,
///     "spec": { input_dim, hidden_units, latent_dim, dropout_rate, alpha,
///               l1_penalty, learning_rate },
///     "tensors": [ { "name", "shape": [rows, cols], "data": [...] }, ... ],
///     "adam": { "step", "first_moment": [...], "second_moment": [...] }
///   }
/// Tensor data is row-major float64 written with shortest round-trip text,
/// so load(save(m)) is bit-identical. The binary-sidecar variant keeps the
/// same document but replaces every "data" array with "offset" (in doubles)
/// into a little-endian float64 file named by "sidecar".

#include <filesystem>

#include <nlohmann/json.hpp>

#include "motionsurv/autoenc_net.hpp"

namespace motionsurv {

inline constexpr int kModelFormatVersion = 1;

nlohmann::json spec_to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(const nlohmann::json& j);

nlohmann::json model_to_json(const NetworkModel& model);
NetworkModel model_from_json(const nlohmann::json& j);

void save_model(const std::filesystem::path& path, const NetworkModel& model);
/// Loads either variant; a document with a "sidecar" field reads its tensors
/// from the sidecar file next to it.
NetworkModel load_model(const std::filesystem::path& path);

/// JSON header at `path`, tensor payload at `path` + ".bin".
void save_model_with_sidecar(const std::filesystem::path& path, const NetworkModel& model);

}  // namespace motionsurv
