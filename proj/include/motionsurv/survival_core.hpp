#pragma once

/// Survival-analysis primitives for right-censored data.
///
/// Risk sets use R(t_i) = { j : t_j >= t_i }. Tied event times share a single
/// Breslow denominator. All log-sum-exp sums subtract the maximum risk.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace motionsurv {

struct SurvivalRecord {
    std::string subject_id;
    double time = 0.0;  // days
    int event = 0;      // 1 = death observed, 0 = censored

    friend bool operator==(const SurvivalRecord&, const SurvivalRecord&) = default;
};

using Outcomes = std::span<const SurvivalRecord>;

/// Throws InputError on negative / non-finite times or events outside {0,1}.
void validate_outcomes(Outcomes outcomes);

std::size_t count_events(Outcomes outcomes) noexcept;

/// Negative log Cox partial likelihood of the linear predictors `risks`.
/// Returns 0 when every subject is censored.
double cox_neg_log_partial_likelihood(std::span<const double> risks, Outcomes outcomes);

/// Analytic gradient of cox_neg_log_partial_likelihood w.r.t. each risk.
std::vector<double> cox_gradient_wrt_risks(std::span<const double> risks, Outcomes outcomes);

struct CoxLossGradient {
    double value = 0.0;
    std::vector<double> gradient;
};

/// Value and gradient in one O(n log n) pass.
CoxLossGradient cox_loss_and_gradient(std::span<const double> risks, Outcomes outcomes);

struct CoxFit {
    Eigen::VectorXd coefficients;
    double ridge_penalty = 0.0;
    bool converged = false;
    int n_iterations = 0;
    /// Penalized log partial likelihood after each accepted iterate (first
    /// entry is the starting point beta = 0).
    std::vector<double> objective_trace;
};

/// log L(beta) - (lambda / 2) * ||beta||^2 for the covariate matrix (n x p).
double cox_penalized_log_likelihood(const Eigen::MatrixXd& covariates, Outcomes outcomes,
                                    const Eigen::VectorXd& beta, double lambda);

/// Ridge-penalized Cox regression by Newton iterations with step halving.
///
/// Converges when the gradient sup-norm drops below 1e-8; gives up after 100
/// iterations and returns converged = false rather than throwing.
CoxFit fit_cox_l2(const Eigen::MatrixXd& covariates, Outcomes outcomes, double lambda);

enum class TiePolicy {
    Half,    ///< tied predictions in an informative pair score 0.5 (Harrell)
    Strict,  ///< tied predictions score 0, the bare indicator form
};

/// Harrell's concordance index over ordered pairs (i, j) with delta_i = 1 and
/// t_i < t_j. Throws UndefinedResultError when no informative pair exists.
double concordance_index(std::span<const double> risks, Outcomes outcomes,
                         TiePolicy ties = TiePolicy::Half);

struct KaplanMeierStep {
    double time = 0.0;
    std::size_t at_risk = 0;
    std::size_t events = 0;
    std::size_t censored = 0;
    double survival = 1.0;
    double ci_low = 1.0;
    double ci_high = 1.0;
};

/// Product-limit estimate. One step per distinct observed time; the curve is
/// right-continuous and equals 1 before the first step.
class KaplanMeierCurve {
public:
    KaplanMeierCurve() = default;
    explicit KaplanMeierCurve(std::vector<KaplanMeierStep> steps) : steps_(std::move(steps)) {}

    const std::vector<KaplanMeierStep>& steps() const noexcept { return steps_; }
    double survival_at(double t) const noexcept;
    /// Greenwood log-log 95% interval at time t.
    std::pair<double, double> interval_at(double t) const noexcept;

private:
    const KaplanMeierStep* step_at(double t) const noexcept;

    std::vector<KaplanMeierStep> steps_;
};

KaplanMeierCurve kaplan_meier(Outcomes outcomes);

struct LogRankResult {
    double statistic = 0.0;
    double p_value = 1.0;
    int df = 1;
    double observed_a = 0.0;
    double expected_a = 0.0;
    double variance = 0.0;
};

/// Two-group log-rank test; p from the chi-square(1) upper tail.
LogRankResult logrank_test(Outcomes group_a, Outcomes group_b);

/// Upper tail of the chi-square distribution with one degree of freedom.
double chi_square1_upper_tail(double statistic) noexcept;

/// Select records by index (used for resampling and fold splits).
std::vector<SurvivalRecord> take(Outcomes outcomes, std::span<const std::size_t> indices);

}  // namespace motionsurv
