#include "metabr/inference.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace metabr {

namespace {

StatisticKind plr_kind(Method m) {
    switch (m) {
        case Method::ML: return StatisticKind::LR;
        case Method::MeanBRPL: return StatisticKind::MeanPLR;
        case Method::MedianBRPL: return StatisticKind::MedianPLR;
        default: throw std::invalid_argument("DL has no ratio statistic");
    }
}

// Value of the method's penalized log-likelihood maximized under the
// target constraint.
double constrained_max(const Dataset& data, Method method,
                       const ProfileTarget& target, const FitOptions& opts) {
    const auto p = data.n_coef();
    FitOptions local = opts;
    if (local.psi_hi < 0.0) local.psi_hi = default_psi_hi(data);

    if (target.kind == ProfileTarget::Kind::Psi) {
        // the penalties are beta-free, so the constrained maximizer in
        // beta is exactly WLS at the fixed psi
        const Theta theta{wls_beta(data, target.value), target.value};
        return penalized_loglik(data, theta, method);
    }

    const Eigen::Index j = target.index;
    if (j < 0 || j >= p) throw std::invalid_argument("beta component index out of range");
    const double tau = target.value;

    Vector beta = Vector::Zero(p);
    beta(j) = tau;
    if (p == 1) {
        const PsiSolve ps = solve_psi(data, beta, method, local);
        return penalized_loglik(data, Theta{beta, ps.psi}, method);
    }

    // alternate WLS on the remaining components (with y offset by the
    // fixed column) and the psi root solve
    Matrix Xo(data.n_studies(), p - 1);
    Eigen::Index c = 0;
    for (Eigen::Index k = 0; k < p; ++k)
        if (k != j) Xo.col(c++) = data.X().col(k);
    const Vector yoff = data.y() - data.X().col(j) * tau;

    double psi = std::min(std::max(dl_estimate(data).psi, local.psi_lo), local.psi_hi);
    for (int it = 0; it < 1000; ++it) {
        const WeightState ws = weights(data, psi);
        const Matrix xtwx = Xo.transpose() * ws.w.asDiagonal() * Xo;
        const Vector bo = Eigen::LLT<Matrix>(xtwx).solve(
            Xo.transpose() * ws.w.cwiseProduct(yoff));
        c = 0;
        for (Eigen::Index k = 0; k < p; ++k)
            if (k != j) beta(k) = bo(c++);

        const PsiSolve ps = solve_psi(data, beta, method, local);
        const double change = std::abs(ps.psi - psi);
        psi = ps.psi;

        const WeightState ws2 = weights(data, psi);
        const Vector r = yoff - Xo * bo;
        const double bscore = (Xo.transpose() * ws2.w.cwiseProduct(r)).cwiseAbs().maxCoeff();
        if (change < 1e-11 && bscore < opts.tol_score)
            return penalized_loglik(data, Theta{beta, psi}, method);
    }
    std::ostringstream msg;
    msg << "constrained maximization did not converge at target " << tau;
    throw std::runtime_error(msg.str());
}

double unconstrained_max(const Dataset& data, Method method, const FitOptions& opts) {
    const FitResult f = fit(data, method, opts);
    return penalized_loglik(data, Theta{f.beta, f.psi}, method);
}

double statistic_from_max(const Dataset& data, Method method,
                          const ProfileTarget& target, const FitOptions& opts,
                          double lmax) {
    const double stat = 2.0 * (lmax - constrained_max(data, method, target, opts));
    return std::max(stat, 0.0);
}

}  // namespace

IntervalResult wald_ci(const FitResult& fit, Eigen::Index j, double level) {
    const double z = level > 0.0 ? normal_quantile(0.5 * (1.0 + level)) : 0.0;
    IntervalResult ci;
    ci.level = level;
    ci.statistic_kind = StatisticKind::Wald;
    ci.lower = fit.beta(j) - z * fit.se_beta(j);
    ci.upper = fit.beta(j) + z * fit.se_beta(j);
    return ci;
}

double wald_pvalue(const FitResult& fit, Eigen::Index j) {
    const double z = std::abs(fit.beta(j)) / fit.se_beta(j);
    return 2.0 * (1.0 - normal_cdf(z));
}

double profile_statistic(const Dataset& data, Method method,
                         const ProfileTarget& target, const FitOptions& opts) {
    return statistic_from_max(data, method, target, opts,
                              unconstrained_max(data, method, opts));
}

double profile_statistic_given_max(const Dataset& data, Method method,
                                   const ProfileTarget& target,
                                   const FitOptions& opts, double penloglik_max) {
    return statistic_from_max(data, method, target, opts, penloglik_max);
}

double test_pvalue(const Dataset& data, Method method, const ProfileTarget& target,
                   const FitOptions& opts) {
    return 1.0 - chisq_cdf(profile_statistic(data, method, target, opts), 1);
}

double signed_root(const Dataset& data, Method method, const ProfileTarget& target,
                   const FitOptions& opts) {
    const FitResult f = fit(data, method, opts);
    const double tau_hat = target.kind == ProfileTarget::Kind::Psi
                               ? f.psi
                               : f.beta(target.index);
    const double lmax = penalized_loglik(data, Theta{f.beta, f.psi}, method);
    const double stat = statistic_from_max(data, method, target, opts, lmax);
    const double sign = (tau_hat >= target.value) ? 1.0 : -1.0;
    return sign * std::sqrt(stat);
}

IntervalResult plr_ci(const Dataset& data, Method method, const ProfileTarget& which,
                      double level, const FitOptions& opts) {
    const bool is_psi = which.kind == ProfileTarget::Kind::Psi;
    const double q = chisq_quantile(level, 1);

    const FitResult f = fit(data, method, opts);
    const double tau_hat = is_psi ? f.psi : f.beta(which.index);
    const double lmax = penalized_loglik(data, Theta{f.beta, f.psi}, method);

    auto stat_at = [&](double tau) {
        ProfileTarget t = which;
        t.value = tau;
        return statistic_from_max(data, method, t, opts, lmax);
    };

    IntervalResult ci;
    ci.level = level;
    ci.statistic_kind = plr_kind(method);

    // asymptotic-scale initial step
    double step0;
    if (is_psi) {
        step0 = std::sqrt(2.0 / weights(data, tau_hat).tr_w2);
    } else {
        step0 = f.se_beta(which.index);
    }
    if (!(step0 > 0.0) || !std::isfinite(step0)) step0 = 1.0;

    auto solve_side = [&](int dir, double& endpoint, double& residual, bool& bracketed) {
        double inner = tau_hat;
        double outer = tau_hat;
        double step = step0;
        bool found = false;
        for (int k = 0; k < 60; ++k) {
            outer = inner + dir * step;
            if (is_psi && dir < 0 && outer < 0.0) outer = 0.0;
            const double s = stat_at(outer);
            if (s >= q) {
                found = true;
                break;
            }
            if (is_psi && outer == 0.0) {
                // statistic at the boundary stays below the quantile
                endpoint = 0.0;
                residual = s - q;
                bracketed = true;
                return;
            }
            inner = outer;
            step *= 2.0;
        }
        if (!found) {
            endpoint = dir > 0 ? std::numeric_limits<double>::infinity()
                               : -std::numeric_limits<double>::infinity();
            residual = stat_at(outer) - q;
            bracketed = false;
            return;
        }
        double a = std::min(inner, outer), b = std::max(inner, outer);
        while (b - a > 1e-6) {
            const double m = 0.5 * (a + b);
            if (m <= a || m >= b) break;  // bracket at floating-point resolution
            const bool above = stat_at(m) >= q;
            // the statistic increases away from tau_hat
            if ((dir > 0) == above)
                b = m;
            else
                a = m;
        }
        endpoint = 0.5 * (a + b);
        residual = stat_at(endpoint) - q;
        bracketed = true;
    };

    solve_side(-1, ci.lower, ci.lower_residual, ci.lower_bracketed);
    solve_side(+1, ci.upper, ci.upper_residual, ci.upper_bracketed);
    return ci;
}

}  // namespace metabr
