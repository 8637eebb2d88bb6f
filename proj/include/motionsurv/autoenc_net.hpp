#pragma once

/// Denoising autoencoder with a linear Cox prediction head.
///
///     x --mask--> x~ --ReLU--> h1 --ReLU--> z (latent) --ReLU--> h2 --linear--> x^
///                                          |
///                                          +-- risk = w' . z  (no bias)
///
/// Loss on a batch of b subjects:
///     alpha * (1/b) sum_i ||x_i - x^_i||^2          (target is the clean input)
///   + (1 - alpha) * CoxNLL(risk; batch risk sets)
///   + l1 * sum |weights|                            (biases are not penalized)
///
/// Masking zeroes each input element with probability m and does not rescale
/// the survivors. Inference never corrupts the input.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "motionsurv/rng.hpp"
#include "motionsurv/survival_core.hpp"

namespace motionsurv {

struct NetworkSpec {
    std::size_t input_dim = 0;      // d_p
    std::size_t hidden_units = 100;
    std::size_t latent_dim = 10;    // d_h
    double dropout_rate = 0.2;      // m
    double alpha = 0.5;             // reconstruction weight; survival weight is 1 - alpha
    double l1_penalty = 1e-6;
    double learning_rate = 1e-5;

    double gamma() const noexcept { return 1.0 - alpha; }
    /// Throws InputError on inconsistent values (d_h >= d_p, m outside [0,1), ...).
    void validate() const;

    friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// Non-owning view of one parameter tensor (column-major storage).
struct TensorView {
    std::string_view name;
    double* data = nullptr;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    bool penalized = false;  // true for weights, false for biases

    Eigen::Index size() const noexcept { return rows * cols; }
};

struct NetworkParameters {
    Eigen::MatrixXd encoder_hidden_w;  // hidden x d_p
    Eigen::VectorXd encoder_hidden_b;
    Eigen::MatrixXd encoder_latent_w;  // d_h x hidden
    Eigen::VectorXd encoder_latent_b;
    Eigen::MatrixXd decoder_hidden_w;  // hidden x d_h
    Eigen::VectorXd decoder_hidden_b;
    Eigen::MatrixXd decoder_output_w;  // d_p x hidden
    Eigen::VectorXd decoder_output_b;
    Eigen::VectorXd risk_w;            // d_h

    static NetworkParameters zeros(const NetworkSpec& spec);

    /// Tensors in a fixed order (serialization, optimizer, gradient checks).
    std::vector<TensorView> tensors();
    std::vector<TensorView> tensors() const;

    bool all_finite() const;
    std::size_t parameter_count() const;

    friend bool operator==(const NetworkParameters& a, const NetworkParameters& b);
};

struct AdamState {
    NetworkParameters first_moment;
    NetworkParameters second_moment;
    std::int64_t step = 0;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;

/// Weight initialization. Glorot scales by fan_in + fan_out; He by fan_in
/// only, which on wide decoders drives the ReLU code to zero early in training.
enum class WeightInit { GlorotUniform, HeUniform };

struct NetworkModel {
    NetworkSpec spec;
    NetworkParameters params;
    AdamState adam;

    /// Zero-initialized model (all weights and optimizer moments 0).
    static NetworkModel zeros(const NetworkSpec& spec);
    /// Uniform random weights, zero biases, fresh optimizer.
    static NetworkModel initialize(const NetworkSpec& spec, std::uint64_t seed,
                                   WeightInit init = WeightInit::GlorotUniform);
};

struct ForwardResult {
    Eigen::VectorXd reconstruction;
    double risk = 0.0;
    Eigen::VectorXd latent;
};

/// Single-subject forward pass. In training mode the supplied mask is applied
/// (1 keeps an element, 0 zeroes it); without a mask one is drawn from `rng`
/// with drop probability m. Inference mode ignores mask and rng.
ForwardResult forward(const NetworkModel& model, const Eigen::VectorXd& x,
                      const std::optional<Eigen::VectorXd>& corruption_mask, bool training,
                      Engine* rng = nullptr);

/// Draw a b x d keep-mask with drop probability m.
Eigen::MatrixXd draw_corruption_masks(Eigen::Index rows, Eigen::Index cols, double dropout_rate, Engine& rng);

struct LossBreakdown {
    double total = 0.0;
    double reconstruction = 0.0;  // mean squared-norm error, before alpha
    double survival = 0.0;        // batch Cox negative log partial likelihood, before gamma
    double l1 = 0.0;              // l1_penalty * sum |weights|
};

/// Hybrid loss on a batch (rows of batch_x). `masks` is empty for no
/// corruption, otherwise the same shape as batch_x.
LossBreakdown hybrid_loss(const NetworkModel& model, const Eigen::MatrixXd& batch_x,
                          Outcomes batch_outcomes, const Eigen::MatrixXd& masks);

struct Gradients {
    NetworkParameters grad;
    LossBreakdown loss;
};

/// Exact gradients of hybrid_loss with respect to every parameter. The L1
/// subgradient uses sign(0) = 0.
Gradients backward(const NetworkModel& model, const Eigen::MatrixXd& batch_x, Outcomes batch_outcomes,
                   const Eigen::MatrixXd& masks);

/// One Adam update in place. A nonzero `l1_penalty` adds l1_penalty * sign(w)
/// to the gradient of every weight tensor first, which lets callers pass the
/// data gradient alone and skip a separate pass over the parameters.
void adam_step(NetworkModel& model, const NetworkParameters& grad, double l1_penalty = 0.0);

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;
    WeightInit init = WeightInit::GlorotUniform;

    void validate() const;
};

struct TrainResult {
    NetworkModel model;
    std::vector<double> epoch_loss;  // mean batch loss per epoch
};

/// Adam training for config.epochs passes over a per-epoch shuffle of the
/// subjects; fresh masks every step; batch Cox risk sets.
TrainResult train(const NetworkSpec& spec, const Eigen::MatrixXd& features, Outcomes outcomes,
                  const TrainConfig& config);

/// Inference-mode risk w' . phi(x).
double predict_risk(const NetworkModel& model, const Eigen::VectorXd& x);
Eigen::VectorXd predict_risks(const NetworkModel& model, const Eigen::MatrixXd& features);

/// Inference-mode latent codes, one row per subject.
Eigen::MatrixXd encode(const NetworkModel& model, const Eigen::MatrixXd& features);

}  // namespace motionsurv
