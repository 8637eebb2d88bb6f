#include "motionsurv/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "motionsurv/errors.hpp"
#include "motionsurv/io.hpp"

namespace motionsurv {
namespace {

constexpr double kZeroEntry = 1e-12;

void fix_sign(Eigen::Ref<Eigen::VectorXd> v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (std::abs(v(i)) > kZeroEntry) {
            if (v(i) < 0.0) v = -v;
            return;
        }
    }
}

// Generalized eigenvectors of one connected subgraph. Returns up to two
// coordinate columns (zero-filled when the component is too small).
Eigen::MatrixXd embed_component(const Eigen::MatrixXd& adjacency, Eigen::VectorXd* spectrum) {
    const Eigen::Index m = adjacency.rows();
    Eigen::MatrixXd coords = Eigen::MatrixXd::Zero(m, 2);
    if (m < 2) {
        if (spectrum) *spectrum = Eigen::VectorXd::Zero(m);
        return coords;
    }
    const Eigen::MatrixXd lap = normalized_laplacian(adjacency);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(lap);
    if (solver.info() != Eigen::Success) throw NumericalError("laplacian_eigenmaps: eigensolver failed");
    if (spectrum) *spectrum = solver.eigenvalues();
    const Eigen::VectorXd degree = adjacency.rowwise().sum();
    for (Eigen::Index c = 0; c < std::min<Eigen::Index>(2, m - 1); ++c) {
        Eigen::VectorXd f = solver.eigenvectors().col(c + 1).array() / degree.array().sqrt();
        // unit D-norm: f' D f = g' g = 1 already; renormalize against drift
        f /= std::sqrt((f.array().square() * degree.array()).sum());
        fix_sign(f);
        coords.col(c) = f;
    }
    return coords;
}

}  // namespace

Eigen::MatrixXd knn_adjacency(const Eigen::MatrixXd& points, std::size_t k) {
    const Eigen::Index n = points.rows();
    if (n < 2) throw ContractError("knn_adjacency: need at least 2 points");
    if (k < 1 || k >= static_cast<std::size_t>(n)) throw ContractError("knn_adjacency: need 1 <= k < n");
    if (!points.allFinite()) throw InputError("knn_adjacency: points must be finite");
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
    std::vector<std::pair<double, Eigen::Index>> dist(static_cast<std::size_t>(n - 1));
    for (Eigen::Index i = 0; i < n; ++i) {
        std::size_t c = 0;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j != i) dist[c++] = {(points.row(i) - points.row(j)).squaredNorm(), j};
        }
        // ties broken by index so the graph is reproducible
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
        for (std::size_t r = 0; r < k; ++r) {
            w(i, dist[r].second) = 1.0;
            w(dist[r].second, i) = 1.0;
        }
    }
    return w;
}

Eigen::MatrixXd normalized_laplacian(const Eigen::MatrixXd& adjacency) {
    const Eigen::Index n = adjacency.rows();
    if (adjacency.cols() != n) throw ContractError("normalized_laplacian: adjacency must be square");
    const Eigen::VectorXd degree = adjacency.rowwise().sum();
    Eigen::VectorXd inv_sqrt(n);
    for (Eigen::Index i = 0; i < n; ++i) inv_sqrt(i) = degree(i) > 0.0 ? 1.0 / std::sqrt(degree(i)) : 0.0;
    Eigen::MatrixXd lap = -(inv_sqrt.asDiagonal() * adjacency * inv_sqrt.asDiagonal());
    lap.diagonal().array() += 1.0;
    return lap;
}

std::vector<std::size_t> connected_components(const Eigen::MatrixXd& adjacency) {
    const auto n = static_cast<std::size_t>(adjacency.rows());
    constexpr std::size_t kUnset = static_cast<std::size_t>(-1);
    std::vector<std::size_t> label(n, kUnset);
    std::size_t next = 0;
    std::vector<std::size_t> stack;
    for (std::size_t s = 0; s < n; ++s) {
        if (label[s] != kUnset) continue;
        label[s] = next;
        stack.push_back(s);
        while (!stack.empty()) {
            const std::size_t u = stack.back();
            stack.pop_back();
            for (std::size_t v = 0; v < n; ++v) {
                if (label[v] == kUnset && adjacency(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v)) != 0.0) {
                    label[v] = next;
                    stack.push_back(v);
                }
            }
        }
        ++next;
    }
    return label;
}

Embedding2D laplacian_eigenmaps(const Eigen::MatrixXd& latent_codes, const EigenmapOptions& options) {
    const Eigen::Index n = latent_codes.rows();
    if (n < 3) throw ContractError("laplacian_eigenmaps: need at least 3 subjects");
    if (options.neighbors < 1 || options.neighbors >= static_cast<std::size_t>(n)) {
        throw ContractError("laplacian_eigenmaps: need 1 <= k < n");
    }
    Embedding2D out;
    out.neighbor_count = options.neighbors;
    const Eigen::MatrixXd w = knn_adjacency(latent_codes, options.neighbors);
    const auto label = connected_components(w);
    out.components = *std::max_element(label.begin(), label.end()) + 1;

    if (out.components == 1) {
        out.coordinates = embed_component(w, &out.eigenvalues);
    } else {
        if (options.strict) {
            throw NumericalError("laplacian_eigenmaps: kNN graph has " + std::to_string(out.components) +
                                 " components");
        }
        out.warnings.push_back("kNN graph is disconnected (" + std::to_string(out.components) +
                               " components); embedded per component");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> whole(normalized_laplacian(w), Eigen::EigenvaluesOnly);
        out.eigenvalues = whole.eigenvalues();
        out.coordinates = Eigen::MatrixXd::Zero(n, 2);
        for (std::size_t c = 0; c < out.components; ++c) {
            std::vector<Eigen::Index> members;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (label[static_cast<std::size_t>(i)] == c) members.push_back(i);
            }
            const Eigen::MatrixXd sub = w(members, members);
            Eigen::MatrixXd coords = embed_component(sub, nullptr);
            coords.col(0).array() += 3.0 * static_cast<double>(c);
            out.coordinates(members, Eigen::all) = coords;
        }
    }
    if (out.eigenvalues.size() >= 3 && std::abs(out.eigenvalues(2) - out.eigenvalues(1)) < 1e-10) {
        out.degenerate = true;
        out.warnings.push_back("second and third eigenvalues coincide; the 2D basis is not unique");
    }
    return out;
}

std::vector<double> SaliencyMap::log_display() const {
    std::vector<double> out(abs_coefficient.size());
    std::transform(abs_coefficient.begin(), abs_coefficient.end(), out.begin(),
                   [](double a) { return std::log(kLogEpsilon + a); });
    return out;
}

SaliencyMap saliency_from_risks(std::span<const double> risks, const Eigen::MatrixXd& vertex_predictors) {
    const auto n = static_cast<Eigen::Index>(risks.size());
    if (n < 3) throw ContractError("saliency: need at least 3 subjects");
    if (vertex_predictors.rows() != n) throw ContractError("saliency: predictor rows do not match risk count");
    if (!vertex_predictors.allFinite()) throw InputError("saliency: predictors must be finite");
    const Eigen::Map<const Eigen::VectorXd> r(risks.data(), n);
    if (!r.allFinite()) throw NumericalError("saliency: risks must be finite");
    // Identical risks carry no signal; centring them would leave ~1e-17 residue.
    const bool constant = (r.array() == r(0)).all();
    const Eigen::VectorXd rc = constant ? Eigen::VectorXd::Zero(n) : Eigen::VectorXd(r.array() - r.mean());

    const auto v_count = static_cast<std::size_t>(vertex_predictors.cols());
    SaliencyMap map;
    map.coefficient.assign(v_count, 0.0);
    map.abs_coefficient.assign(v_count, 0.0);
    map.zero_variance.assign(v_count, false);
    // Plain sequential sums: vectorised reductions depend on the column's
    // alignment, and a vertex's coefficient must not depend on its position.
    for (std::size_t v = 0; v < v_count; ++v) {
        const auto col = vertex_predictors.col(static_cast<Eigen::Index>(v));
        double mean = 0.0, scale = 1.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            mean += col(i);
            scale = std::max(scale, std::abs(col(i)));
        }
        mean /= static_cast<double>(n);
        double sxx = 0.0, sxr = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double xc = col(i) - mean;
            sxx += xc * xc;
            sxr += xc * rc(i);
        }
        if (sxx <= 1e-24 * scale * scale * static_cast<double>(n)) {
            map.zero_variance[v] = true;
            continue;
        }
        map.coefficient[v] = sxr / sxx;
        map.abs_coefficient[v] = std::abs(map.coefficient[v]);
    }
    return map;
}

Eigen::MatrixXd mean_displacement_matrix(const std::vector<MotionSample>& samples) {
    if (samples.empty()) throw ContractError("saliency: no samples");
    const auto v = static_cast<Eigen::Index>(samples.front().vertex_count());
    Eigen::MatrixXd m(static_cast<Eigen::Index>(samples.size()), v);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto d = mean_displacement_per_vertex(samples[i]);
        if (static_cast<Eigen::Index>(d.size()) != v) throw InputError("saliency: vertex count differs between subjects");
        m.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(d.data(), v);
    }
    return m;
}

SaliencyMap saliency_map(const NetworkModel& model, const std::vector<MotionSample>& samples) {
    if (samples.size() < 3) throw ContractError("saliency: need at least 3 subjects");
    const Eigen::VectorXd risks = predict_risks(model, build_feature_matrix(samples));
    return saliency_from_risks({risks.data(), static_cast<std::size_t>(risks.size())},
                               mean_displacement_matrix(samples));
}

void save_embedding_csv(const std::filesystem::path& path, const Embedding2D& embedding,
                        const std::vector<std::string>& subject_ids, Outcomes outcomes) {
    const auto n = static_cast<std::size_t>(embedding.coordinates.rows());
    if (subject_ids.size() != n || outcomes.size() != n) throw ContractError("embedding csv: length mismatch");
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << "subject_id,dim1,dim2,survival_time,event\n";
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        out << subject_ids[i] << ',' << format_double(embedding.coordinates(r, 0)) << ','
            << format_double(embedding.coordinates(r, 1)) << ',' << format_double(outcomes[i].time) << ','
            << outcomes[i].event << '\n';
    }
    if (!out) throw InputError("failed writing " + path.string());
}

void save_saliency_csv(const std::filesystem::path& path, const SaliencyMap& map, bool include_log) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    const auto logv = map.log_display();
    out << "vertex_index,abs_coefficient" << (include_log ? ",log_display_value" : "") << '\n';
    for (std::size_t v = 0; v < map.abs_coefficient.size(); ++v) {
        out << v + 1 << ',' << format_double(map.abs_coefficient[v]);
        if (include_log) out << ',' << format_double(logv[v]);
        out << '\n';
    }
    if (!out) throw InputError("failed writing " + path.string());
}

}  // namespace motionsurv
