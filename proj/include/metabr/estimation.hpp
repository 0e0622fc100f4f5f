#pragma once

#include <optional>

#include "metabr/model.hpp"

namespace metabr {

struct FitOptions {
    double psi_lo = 0.0;
    double psi_hi = -1.0;  // < 0 means "derive from the data", see default_psi_hi
    double tol_score = 1e-6;
    int max_iter = 1000;
    std::optional<double> psi_start;  // default: DerSimonian-Laird estimate
};

struct FitResult {
    Method method = Method::ML;
    Vector beta;
    double psi = 0.0;
    Vector se_beta;  // sqrt diag of (X'WX)^{-1} at the fitted psi
    int iterations = 0;
    bool converged = false;
    bool at_boundary = false;
    double runtime_seconds = 0.0;
};

// Data-analysis default for the psi search interval upper end:
// 10 * (max sigma2 + sample variance of y).
double default_psi_hi(const Dataset& data);

// DerSimonian-Laird moment estimate from the fixed-effects residual
// Q statistic, with the trace-based denominator for general designs.
FitResult dl_estimate(const Dataset& data);

struct PsiSolve {
    double psi = 0.0;
    bool at_boundary = false;
};

// Root of the method's psi-score at fixed beta, searched in
// [psi_lo, psi_hi]. Without a sign change, returns the endpoint with
// the smaller absolute score and flags it.
PsiSolve solve_psi(const Dataset& data, const Vector& beta, Method method,
                   const FitOptions& opts = {});

// Two-step iteration: WLS update for beta alternated with the psi root
// solve, started at the DL estimate unless psi_start is given.
FitResult fit(const Dataset& data, Method method, const FitOptions& opts = {});

}  // namespace metabr
