#include "motionsurv/survival_core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/Cholesky>

#include "motionsurv/errors.hpp"

namespace motionsurv {
namespace {

void check_lengths(std::size_t risks, std::size_t outcomes, const char* op) {
    if (risks != outcomes) {
        std::ostringstream msg;
        msg << op << ": " << risks << " risks but " << outcomes << " outcomes";
        throw ContractError(msg.str());
    }
    if (risks == 0) throw ContractError(std::string(op) + ": empty input");
}

/// Indices sorted by time, with [begin, end) ranges of equal time.
struct TimeGroups {
    std::vector<std::size_t> order;  // ascending time
    std::vector<std::pair<std::size_t, std::size_t>> groups;
};

TimeGroups group_by_time(Outcomes outcomes) {
    TimeGroups g;
    g.order.resize(outcomes.size());
    std::iota(g.order.begin(), g.order.end(), std::size_t{0});
    std::stable_sort(g.order.begin(), g.order.end(), [&](std::size_t a, std::size_t b) {
        return outcomes[a].time < outcomes[b].time;
    });
    std::size_t begin = 0;
    while (begin < g.order.size()) {
        std::size_t end = begin + 1;
        while (end < g.order.size() &&
               outcomes[g.order[end]].time == outcomes[g.order[begin]].time) {
            ++end;
        }
        g.groups.emplace_back(begin, end);
        begin = end;
    }
    return g;
}

}  // namespace

void validate_outcomes(Outcomes outcomes) {
    for (const auto& r : outcomes) {
        if (!std::isfinite(r.time) || r.time < 0.0) {
            throw InputError("subject '" + r.subject_id + "': survival time must be finite and >= 0");
        }
        if (r.event != 0 && r.event != 1) {
            throw InputError("subject '" + r.subject_id + "': event indicator must be 0 or 1");
        }
    }
}

std::size_t count_events(Outcomes outcomes) noexcept {
    return static_cast<std::size_t>(std::count_if(
        outcomes.begin(), outcomes.end(), [](const SurvivalRecord& r) { return r.event == 1; }));
}

CoxLossGradient cox_loss_and_gradient(std::span<const double> risks, Outcomes outcomes) {
    check_lengths(risks.size(), outcomes.size(), "cox partial likelihood");
    const std::size_t n = risks.size();
    CoxLossGradient out;
    out.gradient.assign(n, 0.0);
    if (count_events(outcomes) == 0) return out;

    const double shift = *std::max_element(risks.begin(), risks.end());
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = std::exp(risks[i] - shift);

    const TimeGroups tg = group_by_time(outcomes);
    const std::size_t n_groups = tg.groups.size();

    // Risk-set sums S(t_g) = sum_{t_j >= t_g} w_j, built from the latest time down.
    std::vector<double> risk_sum(n_groups);
    double running = 0.0;
    for (std::size_t g = n_groups; g-- > 0;) {
        for (std::size_t k = tg.groups[g].first; k < tg.groups[g].second; ++k) running += w[tg.order[k]];
        risk_sum[g] = running;
    }

    // Ascending pass: cumulative hazard increments d_g / S_g drive the gradient.
    double cumulative = 0.0;
    for (std::size_t g = 0; g < n_groups; ++g) {
        const auto [begin, end] = tg.groups[g];
        std::size_t deaths = 0;
        for (std::size_t k = begin; k < end; ++k) {
            const std::size_t i = tg.order[k];
            if (outcomes[i].event == 1) {
                ++deaths;
                out.value -= risks[i];
            }
        }
        if (deaths > 0) {
            const double log_sum = std::log(risk_sum[g]) + shift;
            out.value += static_cast<double>(deaths) * log_sum;
            cumulative += static_cast<double>(deaths) / risk_sum[g];
        }
        for (std::size_t k = begin; k < end; ++k) {
            const std::size_t i = tg.order[k];
            out.gradient[i] = w[i] * cumulative - (outcomes[i].event == 1 ? 1.0 : 0.0);
        }
    }
    return out;
}

double cox_neg_log_partial_likelihood(std::span<const double> risks, Outcomes outcomes) {
    return cox_loss_and_gradient(risks, outcomes).value;
}

std::vector<double> cox_gradient_wrt_risks(std::span<const double> risks, Outcomes outcomes) {
    return cox_loss_and_gradient(risks, outcomes).gradient;
}

namespace {

struct CoxDerivatives {
    double objective = 0.0;
    Eigen::VectorXd gradient;
    Eigen::MatrixXd hessian;
};

CoxDerivatives cox_derivatives(const Eigen::MatrixXd& x, Outcomes outcomes, const TimeGroups& tg,
                               const Eigen::VectorXd& beta, double lambda, bool with_hessian) {
    const Eigen::Index p = x.cols();
    const Eigen::VectorXd eta = x * beta;
    const double shift = eta.maxCoeff();

    CoxDerivatives d;
    d.gradient = Eigen::VectorXd::Zero(p);
    if (with_hessian) d.hessian = Eigen::MatrixXd::Zero(p, p);

    double s0 = 0.0;
    Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(with_hessian ? p : 0, with_hessian ? p : 0);

    for (std::size_t g = tg.groups.size(); g-- > 0;) {
        const auto [begin, end] = tg.groups[g];
        std::size_t deaths = 0;
        for (std::size_t k = begin; k < end; ++k) {
            const auto i = static_cast<Eigen::Index>(tg.order[k]);
            const double w = std::exp(eta(i) - shift);
            s0 += w;
            s1.noalias() += w * x.row(i).transpose();
            if (with_hessian) s2.noalias() += w * x.row(i).transpose() * x.row(i);
            if (outcomes[static_cast<std::size_t>(i)].event == 1) {
                ++deaths;
                d.objective += eta(i);
                d.gradient.noalias() += x.row(i).transpose();
            }
        }
        if (deaths == 0) continue;
        const double dd = static_cast<double>(deaths);
        const Eigen::VectorXd mean = s1 / s0;
        d.objective -= dd * (std::log(s0) + shift);
        d.gradient.noalias() -= dd * mean;
        if (with_hessian) d.hessian.noalias() -= dd * (s2 / s0 - mean * mean.transpose());
    }

    d.objective -= 0.5 * lambda * beta.squaredNorm();
    d.gradient.noalias() -= lambda * beta;
    if (with_hessian) d.hessian.diagonal().array() -= lambda;
    return d;
}

}  // namespace

double cox_penalized_log_likelihood(const Eigen::MatrixXd& covariates, Outcomes outcomes,
                                    const Eigen::VectorXd& beta, double lambda) {
    if (covariates.rows() != static_cast<Eigen::Index>(outcomes.size()) ||
        covariates.cols() != beta.size()) {
        throw ContractError("cox_penalized_log_likelihood: dimension mismatch");
    }
    const TimeGroups tg = group_by_time(outcomes);
    return cox_derivatives(covariates, outcomes, tg, beta, lambda, false).objective;
}

CoxFit fit_cox_l2(const Eigen::MatrixXd& covariates, Outcomes outcomes, double lambda) {
    constexpr int kMaxIterations = 100;
    constexpr double kGradientTolerance = 1e-8;
    constexpr int kMaxHalvings = 40;

    if (covariates.cols() < 1) throw ContractError("fit_cox_l2: need at least one covariate");
    if (covariates.rows() != static_cast<Eigen::Index>(outcomes.size())) {
        throw ContractError("fit_cox_l2: covariate rows do not match outcomes");
    }
    if (!covariates.allFinite()) throw InputError("fit_cox_l2: covariates must be finite");
    if (!std::isfinite(lambda) || lambda < 0.0) throw InputError("fit_cox_l2: lambda must be >= 0");

    const TimeGroups tg = group_by_time(outcomes);
    const Eigen::Index p = covariates.cols();

    CoxFit fit;
    fit.ridge_penalty = lambda;
    fit.coefficients = Eigen::VectorXd::Zero(p);

    CoxDerivatives cur = cox_derivatives(covariates, outcomes, tg, fit.coefficients, lambda, true);
    fit.objective_trace.push_back(cur.objective);

    for (int iter = 0; iter < kMaxIterations; ++iter) {
        if (cur.gradient.lpNorm<Eigen::Infinity>() < kGradientTolerance) {
            fit.converged = true;
            break;
        }
        // Newton direction solves (-H) step = g; -H is positive semi-definite.
        const Eigen::MatrixXd neg_hessian = -cur.hessian;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(neg_hessian);
        Eigen::VectorXd step = ldlt.solve(cur.gradient);
        if (ldlt.info() != Eigen::Success || !step.allFinite()) {
            // Singular curvature (e.g. no events and lambda = 0): fall back to gradient ascent.
            step = cur.gradient;
        }

        double scale = 1.0;
        bool accepted = false;
        for (int h = 0; h <= kMaxHalvings; ++h, scale *= 0.5) {
            const Eigen::VectorXd candidate = fit.coefficients + scale * step;
            CoxDerivatives next = cox_derivatives(covariates, outcomes, tg, candidate, lambda, true);
            // Near the optimum the gain of a Newton step drops below the
            // objective's rounding error; there the gradient norm decides.
            const double resolution = 1e-13 * std::max(1.0, std::abs(cur.objective));
            const bool improves = next.objective >= cur.objective ||
                                  (next.objective >= cur.objective - resolution &&
                                   next.gradient.lpNorm<Eigen::Infinity>() < cur.gradient.lpNorm<Eigen::Infinity>());
            if (std::isfinite(next.objective) && improves) {
                fit.coefficients = candidate;
                cur = std::move(next);
                accepted = true;
                break;
            }
        }
        fit.n_iterations = iter + 1;
        if (!accepted) break;
        fit.objective_trace.push_back(cur.objective);
    }
    if (!fit.converged && cur.gradient.lpNorm<Eigen::Infinity>() < kGradientTolerance) {
        fit.converged = true;
    }
    if (fit.converged && !fit.coefficients.allFinite()) fit.converged = false;
    return fit;
}

double concordance_index(std::span<const double> risks, Outcomes outcomes, TiePolicy ties) {
    check_lengths(risks.size(), outcomes.size(), "concordance_index");
    const std::size_t n = risks.size();
    const double tie_credit = ties == TiePolicy::Half ? 0.5 : 0.0;
    double numerator = 0.0;
    double informative = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (outcomes[i].event != 1) continue;
        for (std::size_t j = 0; j < n; ++j) {
            if (!(outcomes[i].time < outcomes[j].time)) continue;
            informative += 1.0;
            if (risks[i] > risks[j]) {
                numerator += 1.0;
            } else if (risks[i] == risks[j]) {
                numerator += tie_credit;
            }
        }
    }
    if (informative == 0.0) {
        throw UndefinedResultError("concordance_index: no informative pairs");
    }
    return numerator / informative;
}

const KaplanMeierStep* KaplanMeierCurve::step_at(double t) const noexcept {
    auto it = std::upper_bound(steps_.begin(), steps_.end(), t,
                               [](double v, const KaplanMeierStep& s) { return v < s.time; });
    if (it == steps_.begin()) return nullptr;
    return &*std::prev(it);
}

double KaplanMeierCurve::survival_at(double t) const noexcept {
    const auto* s = step_at(t);
    return s ? s->survival : 1.0;
}

std::pair<double, double> KaplanMeierCurve::interval_at(double t) const noexcept {
    const auto* s = step_at(t);
    return s ? std::pair{s->ci_low, s->ci_high} : std::pair{1.0, 1.0};
}

KaplanMeierCurve kaplan_meier(Outcomes outcomes) {
    if (outcomes.empty()) throw ContractError("kaplan_meier: empty input");
    validate_outcomes(outcomes);
    constexpr double z = 1.959963984540054;

    const TimeGroups tg = group_by_time(outcomes);
    std::vector<KaplanMeierStep> steps;
    steps.reserve(tg.groups.size());

    std::size_t at_risk = outcomes.size();
    double survival = 1.0;
    double greenwood = 0.0;
    for (const auto& [begin, end] : tg.groups) {
        KaplanMeierStep step;
        step.time = outcomes[tg.order[begin]].time;
        step.at_risk = at_risk;
        for (std::size_t k = begin; k < end; ++k) {
            if (outcomes[tg.order[k]].event == 1) {
                ++step.events;
            } else {
                ++step.censored;
            }
        }
        if (step.events > 0) {
            const auto n = static_cast<double>(at_risk);
            const auto d = static_cast<double>(step.events);
            survival *= 1.0 - d / n;
            if (at_risk > step.events) greenwood += d / (n * (n - d));
        }
        step.survival = survival;
        if (survival <= 0.0) {
            step.ci_low = step.ci_high = 0.0;
        } else if (survival >= 1.0 || greenwood == 0.0) {
            step.ci_low = step.ci_high = survival;
        } else {
            const double log_s = std::log(survival);
            const double se = std::sqrt(greenwood) / std::abs(log_s);
            step.ci_low = std::pow(survival, std::exp(z * se));
            step.ci_high = std::pow(survival, std::exp(-z * se));
        }
        steps.push_back(step);
        at_risk -= end - begin;
    }
    return KaplanMeierCurve(std::move(steps));
}

double chi_square1_upper_tail(double statistic) noexcept {
    if (!(statistic > 0.0)) return 1.0;
    return std::erfc(std::sqrt(statistic / 2.0));
}

LogRankResult logrank_test(Outcomes group_a, Outcomes group_b) {
    if (group_a.empty() || group_b.empty()) throw ContractError("logrank_test: empty group");
    validate_outcomes(group_a);
    validate_outcomes(group_b);

    struct Entry {
        double time;
        int event;
        bool in_a;
    };
    std::vector<Entry> all;
    all.reserve(group_a.size() + group_b.size());
    for (const auto& r : group_a) all.push_back({r.time, r.event, true});
    for (const auto& r : group_b) all.push_back({r.time, r.event, false});
    std::sort(all.begin(), all.end(), [](const Entry& l, const Entry& r) { return l.time < r.time; });

    double n_a = static_cast<double>(group_a.size());
    double n_b = static_cast<double>(group_b.size());
    double score = 0.0;  // O_a - E_a, accumulated in a form antisymmetric in the groups
    double variance = 0.0;
    double observed_a = 0.0;
    double expected_a = 0.0;
    std::size_t total_events = 0;

    std::size_t begin = 0;
    while (begin < all.size()) {
        std::size_t end = begin;
        double d_a = 0.0, d_b = 0.0, leave_a = 0.0, leave_b = 0.0;
        while (end < all.size() && all[end].time == all[begin].time) {
            const auto& e = all[end];
            (e.in_a ? leave_a : leave_b) += 1.0;
            if (e.event == 1) (e.in_a ? d_a : d_b) += 1.0;
            ++end;
        }
        const double d = d_a + d_b;
        const double n = n_a + n_b;
        if (d > 0.0) {
            total_events += static_cast<std::size_t>(d);
            score += (d_a * n_b - d_b * n_a) / n;
            observed_a += d_a;
            expected_a += d * n_a / n;
            if (n > 1.0) variance += d * n_a * n_b * (n - d) / (n * n * (n - 1.0));
        }
        n_a -= leave_a;
        n_b -= leave_b;
        begin = end;
    }
    if (total_events == 0) throw UndefinedResultError("logrank_test: no events in either group");

    LogRankResult res;
    res.observed_a = observed_a;
    res.expected_a = expected_a;
    res.variance = variance;
    res.statistic = variance > 0.0 ? score * score / variance : 0.0;
    res.p_value = chi_square1_upper_tail(res.statistic);
    return res;
}

std::vector<SurvivalRecord> take(Outcomes outcomes, std::span<const std::size_t> indices) {
    std::vector<SurvivalRecord> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) {
        if (i >= outcomes.size()) throw ContractError("take: index out of range");
        out.push_back(outcomes[i]);
    }
    return out;
}

}  // namespace motionsurv
