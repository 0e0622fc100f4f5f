#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "metabr/inference.hpp"
#include "metabr/model.hpp"
#include "metabr/rng.hpp"

namespace metabr {

struct BrockwellDesign {
    double beta0 = 0.5;
    std::vector<double> psi_grid;  // paper grid: 11 values in [0, 0.1]
    std::vector<int> k_list;       // paper grid: {5,10,...,50,100,200}
    int reps = 10000;
    std::uint64_t seed = 1;
    int workers = 1;
    double psi_hi = 3.0;  // psi root search interval (0, 3)
    double level = 0.95;

    // power-study extras
    std::vector<double> deltas;  // beta = beta0 + delta / sqrt(K)
    bool exact_calibration = false;

    static BrockwellDesign paper_defaults();
};

struct BootstrapDesign {
    Dataset base;
    Theta theta0;  // typically the ML fit of base
    int reps = 10000;
    std::uint64_t seed = 1;
    int workers = 1;
};

struct MetricRow {
    std::string design;
    int K = 0;
    double psi_true = 0.0;
    std::string method;
    std::string metric;
    double value = 0.0;
    int reps = 0;
    std::uint64_t seed = 0;
};

struct SimMetrics {
    std::vector<MetricRow> rows;

    void write_csv(std::ostream& os) const;
    // first matching row value; throws if absent
    double get(const std::string& method, const std::string& metric, int K,
               double psi_true) const;
};

// p-value evaluation grid (alpha * 100) for empirical distributions
extern const std::vector<double> kAlphaGridPct;

// K within-study variances: 0.25 * chi^2_1 draws accepted in (0.009, 0.6)
Vector brockwell_variances(int K, Rng& rng);

// y_i = x_i' beta + u_i + e_i, u_i ~ N(0, psi), e_i ~ N(0, sigma2_i)
Dataset simulate_sample(const Matrix& X, const Vector& beta, double psi,
                        const Vector& sigma2, Rng& rng);

// Per-cell underestimation percentage and mean bias of the psi estimates.
SimMetrics estimation_study(const BrockwellDesign& design);

// Empirical coverage of the two-sided (beta, psi) and one-sided (beta)
// ratio-statistic confidence intervals.
SimMetrics coverage_study(const BrockwellDesign& design, double level);

// Rejection rates of H0: beta = beta0 under beta = beta0 + delta K^{-1/2},
// with asymptotic or simulated exact critical values.
SimMetrics power_study(const BrockwellDesign& design);

// Parametric bootstrap at theta0: psi underestimation, empirical p-value
// distribution, and coverage for each parameter.
SimMetrics pvalue_distribution_study(const BootstrapDesign& design);

}  // namespace metabr
