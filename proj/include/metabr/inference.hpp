#pragma once

#include "metabr/distributions.hpp"
#include "metabr/estimation.hpp"
#include "metabr/model.hpp"

namespace metabr {

/// Hypothesis target: one fixed-effect component (0-based index) or psi.
struct ProfileTarget {
    enum class Kind { BetaComponent, Psi };
    Kind kind = Kind::BetaComponent;
    Eigen::Index index = 0;  // ignored for Psi
    double value = 0.0;

    static ProfileTarget beta(Eigen::Index j, double value) {
        return {Kind::BetaComponent, j, value};
    }
    static ProfileTarget psi(double value) { return {Kind::Psi, 0, value}; }
};

enum class StatisticKind { Wald, LR, MeanPLR, MedianPLR };

struct IntervalResult {
    double lower = 0.0;
    double upper = 0.0;
    double level = 0.95;
    StatisticKind statistic_kind = StatisticKind::LR;
    // endpoint solver diagnostics
    double lower_residual = 0.0;
    double upper_residual = 0.0;
    bool lower_bracketed = true;
    bool upper_bracketed = true;
};

IntervalResult wald_ci(const FitResult& fit, Eigen::Index j, double level);

// Two-sided Wald p-value for beta_j = 0.
double wald_pvalue(const FitResult& fit, Eigen::Index j);

// Penalized likelihood ratio statistic
// 2 { l_pen(theta_hat) - l_pen(constrained max at target) }.
double profile_statistic(const Dataset& data, Method method,
                         const ProfileTarget& target, const FitOptions& opts = {});

// Variant for callers that already hold the unconstrained maximum value;
// avoids refitting inside simulation loops.
double profile_statistic_given_max(const Dataset& data, Method method,
                                   const ProfileTarget& target,
                                   const FitOptions& opts, double penloglik_max);

double test_pvalue(const Dataset& data, Method method, const ProfileTarget& target,
                   const FitOptions& opts = {});

// sign(tau_hat - tau) * sqrt(profile_statistic); used for one-sided intervals.
double signed_root(const Dataset& data, Method method, const ProfileTarget& target,
                   const FitOptions& opts = {});

IntervalResult plr_ci(const Dataset& data, Method method, const ProfileTarget& which,
                      double level, const FitOptions& opts = {});

}  // namespace metabr
