#include "metabr/estimation.hpp"

#include <chrono>
#include <cmath>
#include <limits>

namespace metabr {

double default_psi_hi(const Dataset& data) {
    const auto K = static_cast<double>(data.n_studies());
    const double mean = data.y().mean();
    const double var_y = (data.y().array() - mean).square().sum() / (K - 1.0);
    return 10.0 * (data.sigma2().maxCoeff() + var_y);
}

FitResult dl_estimate(const Dataset& data) {
    const auto start = std::chrono::steady_clock::now();
    const auto K = data.n_studies();
    const auto p = data.n_coef();

    const Vector a = data.sigma2().cwiseInverse();
    const Vector beta0 = wls_beta(data, 0.0);
    const Vector r = data.y() - data.X() * beta0;
    const double Q = a.cwiseProduct(r).dot(r);

    const Matrix xtax = data.X().transpose() * a.asDiagonal() * data.X();
    const Matrix xta2x =
        data.X().transpose() * a.array().square().matrix().asDiagonal() * data.X();
    const double denom = a.sum() - Eigen::LLT<Matrix>(xtax).solve(xta2x).trace();

    FitResult res;
    res.method = Method::DL;
    res.psi = std::max(0.0, (Q - static_cast<double>(K - p)) / denom);
    res.beta = wls_beta(data, res.psi);
    const Matrix xtwx = weights(data, res.psi).xtwx;
    res.se_beta = Eigen::LLT<Matrix>(xtwx)
                      .solve(Matrix::Identity(p, p))
                      .diagonal()
                      .cwiseSqrt();
    res.iterations = 1;
    res.converged = true;
    res.at_boundary = (res.psi == 0.0);
    res.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

PsiSolve solve_psi(const Dataset& data, const Vector& beta, Method method,
                   const FitOptions& opts) {
    const double lo = opts.psi_lo;
    const double hi = opts.psi_hi >= 0.0 ? opts.psi_hi : default_psi_hi(data);
    if (!(lo < hi) || lo < 0.0)
        throw std::invalid_argument("invalid psi search interval");

    auto f = [&](double psi) {
        return adjusted_score_psi(data, Theta{beta, psi}, method);
    };

    double flo = f(lo);
    double fhi = f(hi);
    if (std::abs(flo) < opts.tol_score) return {lo, false};
    if (flo * fhi > 0.0) {
        // No interior root. The psi-score decays to zero for large psi, so
        // picking the endpoint by |score| alone is misleading; the sign of
        // the score tells which endpoint maximizes the objective.
        if (flo < 0.0) return {lo, true};
        return {hi, std::abs(fhi) >= opts.tol_score};
    }
    if (std::abs(fhi) < opts.tol_score) return {hi, false};

    // Bisection with secant refinement; the psi-score can be nearly flat
    // near zero, so the bracket is never abandoned.
    double a = lo, b = hi, fa = flo, fb = fhi;
    double best_x = 0.5 * (a + b);
    double best_f = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 400 && b - a > 1e-10; ++it) {
        double x;
        if (it % 2 == 0) {
            const double secant = a - fa * (b - a) / (fb - fa);
            x = (secant > a && secant < b) ? secant : 0.5 * (a + b);
        } else {
            x = 0.5 * (a + b);  // guaranteed progress
        }
        const double fx = f(x);
        if (std::abs(fx) < best_f) {
            best_f = std::abs(fx);
            best_x = x;
        }
        if (std::abs(fx) < opts.tol_score && b - a < 1e-8) break;
        if (fa * fx <= 0.0) {
            b = x;
            fb = fx;
        } else {
            a = x;
            fa = fx;
        }
    }
    return {best_x, false};
}

FitResult fit(const Dataset& data, Method method, const FitOptions& opts) {
    if (method == Method::DL) return dl_estimate(data);
    const auto start = std::chrono::steady_clock::now();
    const auto p = data.n_coef();

    FitResult res;
    res.method = method;
    double psi = opts.psi_start ? *opts.psi_start : dl_estimate(data).psi;
    const double lo = opts.psi_lo;
    const double hi = opts.psi_hi >= 0.0 ? opts.psi_hi : default_psi_hi(data);
    psi = std::min(std::max(psi, lo), hi);
    FitOptions local = opts;
    local.psi_hi = hi;

    Vector beta = wls_beta(data, psi);
    for (res.iterations = 1; res.iterations <= opts.max_iter; ++res.iterations) {
        beta = wls_beta(data, psi);
        const PsiSolve ps = solve_psi(data, beta, method, local);
        psi = ps.psi;
        res.at_boundary = ps.at_boundary;

        const Theta theta{wls_beta(data, psi), psi};
        Vector s(p + 1);
        s.head(p) = score(data, theta).head(p);
        s(p) = adjusted_score_psi(data, theta, method);
        const double smax = s.cwiseAbs().maxCoeff();
        if (smax < opts.tol_score ||
            (res.at_boundary && s.head(p).cwiseAbs().maxCoeff() < opts.tol_score)) {
            res.converged = true;
            break;
        }
    }
    res.iterations = std::min(res.iterations, opts.max_iter);
    res.psi = psi;
    res.beta = wls_beta(data, psi);
    const Matrix xtwx = weights(data, psi).xtwx;
    res.se_beta = Eigen::LLT<Matrix>(xtwx)
                      .solve(Matrix::Identity(p, p))
                      .diagonal()
                      .cwiseSqrt();
    res.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

}  // namespace metabr
