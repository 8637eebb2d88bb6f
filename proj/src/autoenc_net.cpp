#include "motionsurv/autoenc_net.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "motionsurv/errors.hpp"

namespace motionsurv {

void NetworkSpec::validate() const {
    auto fail = [](const std::string& what) { throw InputError("network spec: " + what); };
    if (input_dim < 1) fail("input_dim must be >= 1");
    if (hidden_units < 1) fail("hidden_units must be >= 1");
    if (latent_dim < 1) fail("latent_dim must be >= 1");
    if (latent_dim >= input_dim) fail("latent_dim must be smaller than input_dim");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout_rate must lie in [0, 1)");
    if (!(alpha >= 0.0 && alpha <= 1.0)) fail("alpha must lie in [0, 1]");
    if (!(l1_penalty >= 0.0) || !std::isfinite(l1_penalty)) fail("l1_penalty must be >= 0");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be > 0");
}

void TrainConfig::validate() const {
    if (epochs < 1) throw InputError("train config: epochs must be >= 1");
    if (batch_size < 2) throw InputError("train config: batch_size must be >= 2");
}

NetworkParameters NetworkParameters::zeros(const NetworkSpec& spec) {
    const auto d = static_cast<Eigen::Index>(spec.input_dim);
    const auto h = static_cast<Eigen::Index>(spec.hidden_units);
    const auto k = static_cast<Eigen::Index>(spec.latent_dim);
    NetworkParameters p;
    p.encoder_hidden_w = Eigen::MatrixXd::Zero(h, d);
    p.encoder_hidden_b = Eigen::VectorXd::Zero(h);
    p.encoder_latent_w = Eigen::MatrixXd::Zero(k, h);
    p.encoder_latent_b = Eigen::VectorXd::Zero(k);
    p.decoder_hidden_w = Eigen::MatrixXd::Zero(h, k);
    p.decoder_hidden_b = Eigen::VectorXd::Zero(h);
    p.decoder_output_w = Eigen::MatrixXd::Zero(d, h);
    p.decoder_output_b = Eigen::VectorXd::Zero(d);
    p.risk_w = Eigen::VectorXd::Zero(k);
    return p;
}

namespace {

template <class Params>
std::vector<TensorView> tensor_views(Params& p) {
    auto view = [](std::string_view name, auto& m, bool penalized) {
        return TensorView{name, const_cast<double*>(m.data()), m.rows(), m.cols(), penalized};
    };
    return {
        view("encoder.hidden.weight", p.encoder_hidden_w, true),
        view("encoder.hidden.bias", p.encoder_hidden_b, false),
        view("encoder.latent.weight", p.encoder_latent_w, true),
        view("encoder.latent.bias", p.encoder_latent_b, false),
        view("decoder.hidden.weight", p.decoder_hidden_w, true),
        view("decoder.hidden.bias", p.decoder_hidden_b, false),
        view("decoder.output.weight", p.decoder_output_w, true),
        view("decoder.output.bias", p.decoder_output_b, false),
        view("risk.weight", p.risk_w, true),
    };
}

}  // namespace

std::vector<TensorView> NetworkParameters::tensors() { return tensor_views(*this); }
std::vector<TensorView> NetworkParameters::tensors() const { return tensor_views(*this); }

bool NetworkParameters::all_finite() const {
    return std::ranges::all_of(tensors(), [](const TensorView& t) {
        return std::all_of(t.data, t.data + t.size(), [](double v) { return std::isfinite(v); });
    });
}

std::size_t NetworkParameters::parameter_count() const {
    std::size_t total = 0;
    for (const auto& t : tensors()) total += static_cast<std::size_t>(t.size());
    return total;
}

bool operator==(const NetworkParameters& a, const NetworkParameters& b) {
    const auto ta = a.tensors();
    const auto tb = b.tensors();
    for (std::size_t i = 0; i < ta.size(); ++i) {
        if (ta[i].rows != tb[i].rows || ta[i].cols != tb[i].cols) return false;
        if (!std::equal(ta[i].data, ta[i].data + ta[i].size(), tb[i].data)) return false;
    }
    return true;
}

NetworkModel NetworkModel::zeros(const NetworkSpec& spec) {
    spec.validate();
    NetworkModel m;
    m.spec = spec;
    m.params = NetworkParameters::zeros(spec);
    m.adam.first_moment = NetworkParameters::zeros(spec);
    m.adam.second_moment = NetworkParameters::zeros(spec);
    return m;
}

NetworkModel NetworkModel::initialize(const NetworkSpec& spec, std::uint64_t seed, WeightInit init) {
    NetworkModel m = zeros(spec);
    Engine eng = make_engine(derive_seed(seed, hash_name("init")));
    for (auto& t : m.params.tensors()) {
        if (!t.penalized) continue;  // biases start at zero
        // Weight matrices are (fan_out x fan_in); the risk head is a vector over d_h.
        const double fan_in = static_cast<double>(t.cols == 1 ? t.rows : t.cols);
        const double fan_out = static_cast<double>(t.cols == 1 ? 1 : t.rows);
        const double limit = init == WeightInit::HeUniform ? std::sqrt(6.0 / fan_in) : std::sqrt(6.0 / (fan_in + fan_out));
        for (Eigen::Index i = 0; i < t.size(); ++i) t.data[i] = limit * (2.0 * uniform01(eng) - 1.0);
    }
    return m;
}

namespace {

void check_batch(const NetworkModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& masks,
                 std::size_t n_outcomes) {
    if (x.cols() != static_cast<Eigen::Index>(model.spec.input_dim)) {
        std::ostringstream msg;
        msg << "network: input has " << x.cols() << " features, model expects " << model.spec.input_dim;
        throw ContractError(msg.str());
    }
    if (masks.size() != 0 && (masks.rows() != x.rows() || masks.cols() != x.cols())) {
        throw ContractError("network: mask shape does not match batch");
    }
    if (n_outcomes != static_cast<std::size_t>(x.rows())) {
        throw ContractError("network: batch size does not match outcome count");
    }
    if (x.rows() < 1) throw ContractError("network: empty batch");
}

struct Activations {
    Eigen::MatrixXd input;   // corrupted input, b x d
    Eigen::MatrixXd hidden1; // b x h (post-ReLU)
    Eigen::MatrixXd latent;  // b x k (post-ReLU)
    Eigen::MatrixXd hidden2; // b x h (post-ReLU)
    Eigen::MatrixXd output;  // b x d (linear)
    Eigen::VectorXd risk;    // b
};

void relu_inplace(Eigen::MatrixXd& m) { m = m.cwiseMax(0.0); }

void encode_into(const NetworkParameters& p, const Eigen::MatrixXd& input, Activations& a) {
    a.hidden1.noalias() = input * p.encoder_hidden_w.transpose();
    a.hidden1.rowwise() += p.encoder_hidden_b.transpose();
    relu_inplace(a.hidden1);
    a.latent.noalias() = a.hidden1 * p.encoder_latent_w.transpose();
    a.latent.rowwise() += p.encoder_latent_b.transpose();
    relu_inplace(a.latent);
    a.risk.noalias() = a.latent * p.risk_w;
}

Activations run_forward(const NetworkParameters& p, const Eigen::MatrixXd& x, const Eigen::MatrixXd& masks) {
    Activations a;
    if (masks.size() != 0) {
        a.input = x.cwiseProduct(masks);
    } else {
        a.input = x;
    }
    encode_into(p, a.input, a);
    a.hidden2.noalias() = a.latent * p.decoder_hidden_w.transpose();
    a.hidden2.rowwise() += p.decoder_hidden_b.transpose();
    relu_inplace(a.hidden2);
    a.output.noalias() = a.hidden2 * p.decoder_output_w.transpose();
    a.output.rowwise() += p.decoder_output_b.transpose();
    return a;
}

double l1_sum(const NetworkParameters& p) {
    double total = 0.0;
    for (const auto& t : p.tensors()) {
        if (t.penalized) total += Eigen::Map<const Eigen::VectorXd>(t.data, t.size()).lpNorm<1>();
    }
    return total;
}

LossBreakdown loss_from(const NetworkModel& model, const Activations& a, const Eigen::MatrixXd& x,
                        Outcomes outcomes, std::vector<double>* risk_gradient) {
    const double b = static_cast<double>(x.rows());
    LossBreakdown loss;
    loss.reconstruction = (x - a.output).squaredNorm() / b;
    const std::span<const double> risks(a.risk.data(), static_cast<std::size_t>(a.risk.size()));
    auto cox = cox_loss_and_gradient(risks, outcomes);
    loss.survival = cox.value;
    loss.l1 = model.spec.l1_penalty * l1_sum(model.params);
    loss.total = model.spec.alpha * loss.reconstruction + model.spec.gamma() * loss.survival + loss.l1;
    if (risk_gradient) *risk_gradient = std::move(cox.gradient);
    return loss;
}

}  // namespace

Eigen::MatrixXd draw_corruption_masks(Eigen::Index rows, Eigen::Index cols, double dropout_rate, Engine& rng) {
    Eigen::MatrixXd masks(rows, cols);
    if (dropout_rate <= 0.0) {
        masks.setOnes();
        return masks;
    }
    // Keep an element when a uniform 53-bit draw is >= m.
    const auto threshold = static_cast<std::uint64_t>(std::ldexp(dropout_rate, 53));
    double* data = masks.data();
    for (Eigen::Index i = 0; i < masks.size(); ++i) data[i] = (rng() >> 11) >= threshold ? 1.0 : 0.0;
    return masks;
}

ForwardResult forward(const NetworkModel& model, const Eigen::VectorXd& x,
                      const std::optional<Eigen::VectorXd>& corruption_mask, bool training, Engine* rng) {
    const auto d = static_cast<Eigen::Index>(model.spec.input_dim);
    if (x.size() != d) throw ContractError("forward: input length does not match input_dim");
    Eigen::MatrixXd mask_row;
    if (training) {
        if (corruption_mask) {
            if (corruption_mask->size() != d) throw ContractError("forward: mask length does not match input_dim");
            mask_row = corruption_mask->transpose();
        } else {
            if (rng == nullptr) throw ContractError("forward: training without a mask needs an rng");
            mask_row = draw_corruption_masks(1, d, model.spec.dropout_rate, *rng);
        }
    }
    const Activations a = run_forward(model.params, x.transpose(), mask_row);
    ForwardResult r;
    r.reconstruction = a.output.row(0).transpose();
    r.latent = a.latent.row(0).transpose();
    r.risk = a.risk(0);
    return r;
}

LossBreakdown hybrid_loss(const NetworkModel& model, const Eigen::MatrixXd& batch_x, Outcomes batch_outcomes,
                          const Eigen::MatrixXd& masks) {
    check_batch(model, batch_x, masks, batch_outcomes.size());
    const Activations a = run_forward(model.params, batch_x, masks);
    return loss_from(model, a, batch_x, batch_outcomes, nullptr);
}

namespace {

// Fills g (reusing its storage) with the data gradient; the L1 subgradient is
// added only when with_l1 is set.
void gradients_into(const NetworkModel& model, const Eigen::MatrixXd& batch_x, Outcomes batch_outcomes,
                    const Eigen::MatrixXd& masks, bool with_l1, Gradients& g) {
    check_batch(model, batch_x, masks, batch_outcomes.size());
    const NetworkParameters& p = model.params;
    const double alpha = model.spec.alpha;
    const double gamma = model.spec.gamma();
    const double b = static_cast<double>(batch_x.rows());

    const Activations a = run_forward(p, batch_x, masks);
    std::vector<double> risk_grad_vec;
    g.loss = loss_from(model, a, batch_x, batch_outcomes, &risk_grad_vec);
    const Eigen::Map<const Eigen::VectorXd> risk_grad(risk_grad_vec.data(), a.risk.size());

    NetworkParameters& gr = g.grad;

    // Reconstruction branch.
    const Eigen::MatrixXd d_output = (2.0 * alpha / b) * (a.output - batch_x);
    gr.decoder_output_w.noalias() = d_output.transpose() * a.hidden2;
    gr.decoder_output_b = d_output.colwise().sum().transpose();

    Eigen::MatrixXd d_hidden2 = d_output * p.decoder_output_w;
    d_hidden2.array() *= (a.hidden2.array() > 0.0).cast<double>();
    gr.decoder_hidden_w.noalias() = d_hidden2.transpose() * a.latent;
    gr.decoder_hidden_b = d_hidden2.colwise().sum().transpose();

    // Latent receives both the decoder and the Cox head.
    const Eigen::VectorXd d_risk = gamma * risk_grad;
    gr.risk_w.noalias() = a.latent.transpose() * d_risk;
    Eigen::MatrixXd d_latent = d_hidden2 * p.decoder_hidden_w;
    d_latent.noalias() += d_risk * p.risk_w.transpose();
    d_latent.array() *= (a.latent.array() > 0.0).cast<double>();
    gr.encoder_latent_w.noalias() = d_latent.transpose() * a.hidden1;
    gr.encoder_latent_b = d_latent.colwise().sum().transpose();

    Eigen::MatrixXd d_hidden1 = d_latent * p.encoder_latent_w;
    d_hidden1.array() *= (a.hidden1.array() > 0.0).cast<double>();
    gr.encoder_hidden_w.noalias() = d_hidden1.transpose() * a.input;
    gr.encoder_hidden_b = d_hidden1.colwise().sum().transpose();

    const double l1 = model.spec.l1_penalty;
    if (with_l1 && l1 > 0.0) {
        auto grads = gr.tensors();
        const auto params = p.tensors();
        for (std::size_t i = 0; i < grads.size(); ++i) {
            if (!grads[i].penalized) continue;
            Eigen::Map<Eigen::ArrayXd> gv(grads[i].data, grads[i].size());
            Eigen::Map<const Eigen::ArrayXd> pv(params[i].data, params[i].size());
            gv += l1 * pv.sign();
        }
    }
}

}  // namespace

Gradients backward(const NetworkModel& model, const Eigen::MatrixXd& batch_x, Outcomes batch_outcomes,
                   const Eigen::MatrixXd& masks) {
    Gradients g;
    gradients_into(model, batch_x, batch_outcomes, masks, true, g);
    return g;
}

void adam_step(NetworkModel& model, const NetworkParameters& grad, double l1_penalty) {
    auto& st = model.adam;
    ++st.step;
    const double lr = model.spec.learning_rate;
    const double bias1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(st.step));
    const double bias2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(st.step));
    const double step_size = lr / bias1;
    const double inv_sqrt_bias2 = 1.0 / std::sqrt(bias2);

    auto params = model.params.tensors();
    auto m1 = st.first_moment.tensors();
    auto m2 = st.second_moment.tensors();
    const auto grads = grad.tensors();
    // One fused pass per tensor; these arrays are large enough that memory
    // traffic dominates the update.
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Eigen::Index n = params[i].size();
        double* __restrict w = params[i].data;
        double* __restrict m = m1[i].data;
        double* __restrict v = m2[i].data;
        const double* __restrict g = grads[i].data;
        const double l1 = params[i].penalized ? l1_penalty : 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
            const double sign = static_cast<double>((w[k] > 0.0) - (w[k] < 0.0));
            const double gk = g[k] + l1 * sign;
            m[k] = kAdamBeta1 * m[k] + (1.0 - kAdamBeta1) * gk;
            v[k] = kAdamBeta2 * v[k] + (1.0 - kAdamBeta2) * (gk * gk);
            w[k] -= step_size * m[k] / (std::sqrt(v[k]) * inv_sqrt_bias2 + kAdamEpsilon);
        }
    }
}

TrainResult train(const NetworkSpec& spec, const Eigen::MatrixXd& features, Outcomes outcomes,
                  const TrainConfig& config) {
    spec.validate();
    config.validate();
    const auto n = static_cast<std::size_t>(features.rows());
    if (n < 2) throw NumericalError("train: need at least 2 subjects");
    if (outcomes.size() != n) throw ContractError("train: feature rows do not match outcome count");
    if (features.cols() != static_cast<Eigen::Index>(spec.input_dim)) {
        throw ContractError("train: feature width does not match input_dim");
    }

    TrainResult result;
    result.model = NetworkModel::initialize(spec, config.seed, config.init);
    Engine shuffle_rng = make_engine(derive_seed(config.seed, hash_name("shuffle")));
    Engine mask_rng = make_engine(derive_seed(config.seed, hash_name("mask")));

    const std::size_t batch = std::min(config.batch_size, n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<SurvivalRecord> batch_outcomes;
    Eigen::MatrixXd batch_x;
    Gradients g;
    // Row-major copy so each minibatch gathers contiguous rows.
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows_x = features;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle(std::span<std::size_t>(order), shuffle_rng);
        double epoch_total = 0.0;
        std::size_t steps = 0;
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t stop = std::min(n, start + batch);
            const auto rows = static_cast<Eigen::Index>(stop - start);
            batch_x.resize(rows, features.cols());
            batch_outcomes.clear();
            for (std::size_t k = start; k < stop; ++k) {
                batch_x.row(static_cast<Eigen::Index>(k - start)) = rows_x.row(static_cast<Eigen::Index>(order[k]));
                batch_outcomes.push_back(outcomes[order[k]]);
            }
            const Eigen::MatrixXd masks = draw_corruption_masks(rows, features.cols(), spec.dropout_rate, mask_rng);
            gradients_into(result.model, batch_x, batch_outcomes, masks, false, g);
            if (!std::isfinite(g.loss.total)) {
                std::ostringstream msg;
                msg << "train: non-finite loss at epoch " << epoch + 1;
                throw NumericalError(msg.str());
            }
            adam_step(result.model, g.grad, spec.l1_penalty);
            epoch_total += g.loss.total;
            ++steps;
        }
        result.epoch_loss.push_back(epoch_total / static_cast<double>(steps));
    }
    if (!result.model.params.all_finite()) throw NumericalError("train: parameters diverged");
    return result;
}

Eigen::MatrixXd encode(const NetworkModel& model, const Eigen::MatrixXd& features) {
    if (features.cols() != static_cast<Eigen::Index>(model.spec.input_dim)) {
        throw ContractError("encode: feature width does not match input_dim");
    }
    Activations a;
    encode_into(model.params, features, a);
    return a.latent;
}

Eigen::VectorXd predict_risks(const NetworkModel& model, const Eigen::MatrixXd& features) {
    if (features.cols() != static_cast<Eigen::Index>(model.spec.input_dim)) {
        throw ContractError("predict_risk: feature width does not match input_dim");
    }
    Activations a;
    encode_into(model.params, features, a);
    return a.risk;
}

double predict_risk(const NetworkModel& model, const Eigen::VectorXd& x) {
    if (x.size() != static_cast<Eigen::Index>(model.spec.input_dim)) {
        throw ContractError("predict_risk: input length does not match input_dim");
    }
    return predict_risks(model, x.transpose())(0);
}

}  // namespace motionsurv
