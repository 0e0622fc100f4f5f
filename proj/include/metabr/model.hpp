#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace metabr {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Method { ML, MeanBRPL, MedianBRPL, DL };

std::string method_name(Method m);
Method method_from_string(const std::string& s);

/// Study-level data: effect estimates y, known within-study variances
/// sigma2, and a K x p design matrix X (a single column of ones for
/// plain meta-analysis). Immutable after construction.
class Dataset {
public:
    Dataset(Vector y, Vector sigma2, Matrix X);

    const Vector& y() const { return y_; }
    const Vector& sigma2() const { return sigma2_; }
    const Matrix& X() const { return X_; }
    Eigen::Index n_studies() const { return y_.size(); }
    Eigen::Index n_coef() const { return X_.cols(); }

private:
    Vector y_;
    Vector sigma2_;
    Matrix X_;
};

/// Joint parameter (beta, psi); psi >= 0, boundary value permitted.
struct Theta {
    Vector beta;
    double psi = 0.0;
};

/// Weight-derived quantities at a given psi. W is diagonal so everything
/// is carried as the weight vector plus its power traces.
struct WeightState {
    Vector w;       // w_i = 1 / (sigma2_i + psi)
    double tr_w = 0.0;
    double tr_w2 = 0.0;
    double tr_w3 = 0.0;
    Matrix xtwx;    // X' W X
};

// psi may be slightly negative for internal root bracketing; public
// callers pass psi >= 0. Throws std::domain_error if any
// sigma2_i + psi <= 0.
WeightState weights(const Dataset& data, double psi);

// (X' W X)^{-1} X' W y
Vector wls_beta(const Dataset& data, double psi);

double log_likelihood(const Dataset& data, const Theta& theta);

// (X' W R, {R' W^2 R - Tr[W]} / 2)
Vector score(const Dataset& data, const Theta& theta);

// Block diagonal: X' W X and Tr[W^2] / 2.
Matrix expected_info(const Dataset& data, double psi);

Matrix observed_info(const Dataset& data, const Theta& theta);

// Closed-form median bias-reducing adjustment: zero beta block and
// psi entry Tr[W H] / 2 + Tr[W^3] / (3 Tr[W^2]), H = X (X'WX)^{-1} X'W.
Vector median_adjustment_closed(const Dataset& data, double psi);

// Same adjustment assembled from the general trace expression with the
// model's P_t / Q_t matrices. Kept as an independent cross-check of the
// closed form; it never shares intermediates with it.
Vector median_adjustment_general(const Dataset& data, double psi);

// ML: l; MeanBRPL: l - log|X'WX| / 2; MedianBRPL additionally
// subtracts log[Tr(W^2)] / 6. DL is rejected.
double penalized_loglik(const Dataset& data, const Theta& theta, Method method);

// d penalized_loglik / d psi. The penalties are beta-free, so the beta
// block of the adjusted score equals the plain score's beta block.
double adjusted_score_psi(const Dataset& data, const Theta& theta, Method method);

}  // namespace metabr
