#pragma once

// Shared helpers and brute-force oracles for the test suites. Oracles here
// are written directly from the textbook definitions and never call the
// library routine they check.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "motionsurv/risk_model.hpp"
#include "motionsurv/rng.hpp"
#include "motionsurv/survival_core.hpp"

namespace motionsurv::testing {

inline std::filesystem::path data_dir() { return MOTIONSURV_TEST_DATA_DIR; }

inline std::vector<SurvivalRecord> records(const std::vector<double>& times, const std::vector<int>& events) {
    std::vector<SurvivalRecord> out;
    for (std::size_t i = 0; i < times.size(); ++i) out.push_back({"S" + std::to_string(i + 1), times[i], events[i]});
    return out;
}

/// Integer-valued times (so ties occur) and independent censoring.
inline std::vector<SurvivalRecord> random_outcomes(Engine& eng, std::size_t n, double censor_rate,
                                                   int distinct_times = 12) {
    std::vector<SurvivalRecord> out;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = 1.0 + std::floor(uniform01(eng) * distinct_times);
        const int e = uniform01(eng) < censor_rate ? 0 : 1;
        out.push_back({"S" + std::to_string(i + 1), t, e});
    }
    return out;
}

/// Sum over events of -(eta_i - log sum_{j: t_j >= t_i} exp(eta_j)).
template <class Real = double>
Real brute_cox_nll(const std::vector<Real>& eta, Outcomes y) {
    Real total = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i].event != 1) continue;
        Real denom = 0;
        for (std::size_t j = 0; j < y.size(); ++j) {
            if (y[j].time >= y[i].time) denom += std::exp(eta[j]);
        }
        total -= eta[i] - std::log(denom);
    }
    return total;
}

struct PairCount {
    double concordant = 0.0;
    double tied = 0.0;
    double informative = 0.0;
};

/// Every ordered pair (i, j), i != j, with delta_i = 1 and t_i < t_j.
inline PairCount brute_pairs(const std::vector<double>& risk, Outcomes y) {
    PairCount c;
    for (std::size_t i = 0; i < y.size(); ++i) {
        for (std::size_t j = 0; j < y.size(); ++j) {
            if (i == j || y[i].event != 1 || !(y[i].time < y[j].time)) continue;
            c.informative += 1.0;
            if (risk[i] > risk[j]) c.concordant += 1.0;
            if (risk[i] == risk[j]) c.tied += 1.0;
        }
    }
    return c;
}

inline double relative_error(double a, double b, double floor = 1e-5) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Non-comment, non-empty CSV lines split on commas.
inline std::vector<std::vector<std::string>> read_fixture(const std::filesystem::path& path) {
    std::ifstream in(path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) fields.push_back(f);
        rows.push_back(fields);
    }
    return rows;
}

inline std::vector<char> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Cyclic Jacobi eigendecomposition of a small symmetric matrix; eigenvalues
/// ascending, eigenvectors in matching columns.
inline void jacobi_eigen(Eigen::MatrixXd a, Eigen::VectorXd& values, Eigen::MatrixXd& vectors) {
    const Eigen::Index n = a.rows();
    Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (Eigen::Index p = 0; p < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        }
        if (off < 1e-30) break;
        for (Eigen::Index p = 0; p < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                if (std::abs(a(p, q)) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    std::sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) { return a(x, x) < a(y, y); });
    values.resize(n);
    vectors.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        values(i) = a(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(i)]);
        vectors.col(i) = v.col(order[static_cast<std::size_t>(i)]);
    }
}

inline Eigen::MatrixXd gaussian(Engine& eng, Eigen::Index n, Eigen::Index d, double sd = 1.0) {
    Eigen::MatrixXd m(n, d);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = sd * standard_normal(eng);
    return m;
}

// Adjacency written from the definition: j is among i's k nearest, or i among j's.
inline Eigen::MatrixXd brute_knn(const Eigen::MatrixXd& p, std::size_t k) {
    const Eigen::Index n = p.rows();
    Eigen::MatrixXi nearest = Eigen::MatrixXi::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j) continue;
            // j is a neighbour of i when fewer than k other points are strictly closer.
            std::size_t closer = 0;
            const double dij = (p.row(i) - p.row(j)).norm();
            for (Eigen::Index m = 0; m < n; ++m) {
                if (m != i && m != j && (p.row(i) - p.row(m)).norm() < dij) ++closer;
            }
            if (closer < k) nearest(i, j) = 1;
        }
    }
    Eigen::MatrixXd w(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) w(i, j) = (nearest(i, j) || nearest(j, i)) ? 1.0 : 0.0;
    }
    return w;
}

inline double loglik_1d(const std::vector<double>& x, Outcomes y, double beta) {
    std::vector<double> eta(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) eta[i] = beta * x[i];
    return -brute_cox_nll(eta, y);
}

/// Golden-section maximizer on [lo, hi] (unimodal f).
inline double golden_max(const std::function<double(double)>& f, double lo, double hi) {
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - g * (b - a), d = a + g * (b - a);
    for (int it = 0; it < 200; ++it) {
        if (f(c) > f(d)) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    return 0.5 * (a + b);
}

inline double parse_fraction(const std::string& num, const std::string& den) { return std::stod(num) / std::stod(den); }

// Scores column 0 and never looks at its training data.
inline TrainerProtocol fixed_scorer_trainer() {
    return [](const Eigen::MatrixXd&, Outcomes, std::uint64_t) -> RiskScorer {
        return [](const Eigen::MatrixXd& x) { return Eigen::VectorXd(x.col(0)); };
    };
}

// 1-nearest-neighbour lookup: risk is minus the survival time of the closest
// training row, so the model reproduces its training outcomes.
inline TrainerProtocol memorizing_trainer() {
    return [](const Eigen::MatrixXd& x, Outcomes y, std::uint64_t) -> RiskScorer {
        auto train_x = std::make_shared<Eigen::MatrixXd>(x);
        auto times = std::make_shared<std::vector<double>>();
        for (const auto& r : y) times->push_back(r.time);
        return [train_x, times](const Eigen::MatrixXd& q) {
            Eigen::VectorXd out(q.rows());
            for (Eigen::Index i = 0; i < q.rows(); ++i) {
                Eigen::Index best = 0;
                (train_x->rowwise() - q.row(i)).rowwise().squaredNorm().minCoeff(&best);
                out(i) = -(*times)[static_cast<std::size_t>(best)];
            }
            return out;
        };
    };
}

/// Two-sided sign-flip p-value by enumerating all 2^B sign patterns.
inline double brute_sign_flip_p(const std::vector<double>& d) {
    const double observed = std::abs(std::accumulate(d.begin(), d.end(), 0.0));
    std::size_t hits = 0;
    const std::size_t patterns = std::size_t{1} << d.size();
    for (std::size_t mask = 0; mask < patterns; ++mask) {
        double s = 0.0;
        for (std::size_t i = 0; i < d.size(); ++i) s += (mask >> i) & 1U ? -d[i] : d[i];
        if (std::abs(s) >= observed - 1e-9) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(patterns);
}

}  // namespace motionsurv::testing
