#include "metabr/model.hpp"

#include <cmath>

namespace metabr {

std::string method_name(Method m) {
    switch (m) {
        case Method::ML: return "ml";
        case Method::MeanBRPL: return "mean-brpl";
        case Method::MedianBRPL: return "median-brpl";
        case Method::DL: return "dl";
    }
    throw std::logic_error("unknown method");
}

Method method_from_string(const std::string& s) {
    if (s == "ml") return Method::ML;
    if (s == "mean-brpl") return Method::MeanBRPL;
    if (s == "median-brpl") return Method::MedianBRPL;
    if (s == "dl") return Method::DL;
    throw std::invalid_argument("unknown method: " + s);
}

Dataset::Dataset(Vector y, Vector sigma2, Matrix X)
    : y_(std::move(y)), sigma2_(std::move(sigma2)), X_(std::move(X)) {
    const auto K = y_.size();
    const auto p = X_.cols();
    if (K < 2) throw std::invalid_argument("need at least 2 studies");
    if (sigma2_.size() != K || X_.rows() != K)
        throw std::invalid_argument("y, sigma2 and X row counts differ");
    if (K <= p) throw std::invalid_argument("need more studies than coefficients");
    if ((sigma2_.array() <= 0.0).any())
        throw std::invalid_argument("within-study variances must be positive");
    Eigen::ColPivHouseholderQR<Matrix> qr(X_);
    if (qr.rank() < p) throw std::invalid_argument("design matrix is rank deficient");
}

WeightState weights(const Dataset& data, double psi) {
    WeightState ws;
    const Vector d = data.sigma2().array() + psi;
    if ((d.array() <= 0.0).any())
        throw std::domain_error("sigma2_i + psi must be positive for all studies");
    ws.w = d.cwiseInverse();
    ws.tr_w = ws.w.sum();
    ws.tr_w2 = ws.w.squaredNorm();
    ws.tr_w3 = ws.w.array().cube().sum();
    ws.xtwx = data.X().transpose() * ws.w.asDiagonal() * data.X();
    return ws;
}

namespace {

Eigen::LLT<Matrix> xtwx_llt(const Matrix& xtwx) {
    Eigen::LLT<Matrix> llt(xtwx);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("X'WX is not positive definite (rank deficiency)");
    return llt;
}

}  // namespace

Vector wls_beta(const Dataset& data, double psi) {
    const WeightState ws = weights(data, psi);
    const Vector xtwy = data.X().transpose() * ws.w.cwiseProduct(data.y());
    return xtwx_llt(ws.xtwx).solve(xtwy);
}

double log_likelihood(const Dataset& data, const Theta& theta) {
    const WeightState ws = weights(data, theta.psi);
    const Vector r = data.y() - data.X() * theta.beta;
    return 0.5 * (ws.w.array().log().sum() - r.cwiseProduct(ws.w).dot(r));
}

Vector score(const Dataset& data, const Theta& theta) {
    const WeightState ws = weights(data, theta.psi);
    const Vector r = data.y() - data.X() * theta.beta;
    const auto p = data.n_coef();
    Vector s(p + 1);
    s.head(p) = data.X().transpose() * ws.w.cwiseProduct(r);
    s(p) = 0.5 * (ws.w.cwiseProduct(r).squaredNorm() - ws.tr_w);
    return s;
}

Matrix expected_info(const Dataset& data, double psi) {
    const WeightState ws = weights(data, psi);
    const auto p = data.n_coef();
    Matrix info = Matrix::Zero(p + 1, p + 1);
    info.topLeftCorner(p, p) = ws.xtwx;
    info(p, p) = 0.5 * ws.tr_w2;
    return info;
}

Matrix observed_info(const Dataset& data, const Theta& theta) {
    const WeightState ws = weights(data, theta.psi);
    const Vector r = data.y() - data.X() * theta.beta;
    const Vector w2r = ws.w.array().square() * r.array();
    const auto p = data.n_coef();
    Matrix j(p + 1, p + 1);
    j.topLeftCorner(p, p) = ws.xtwx;
    j.block(0, p, p, 1) = data.X().transpose() * w2r;
    j.block(p, 0, 1, p) = j.block(0, p, p, 1).transpose();
    j(p, p) = (ws.w.array().cube() * r.array().square()).sum() - 0.5 * ws.tr_w2;
    return j;
}

Vector median_adjustment_closed(const Dataset& data, double psi) {
    const WeightState ws = weights(data, psi);
    const Matrix xtw2x =
        data.X().transpose() * ws.w.array().square().matrix().asDiagonal() * data.X();
    const double tr_wh = xtwx_llt(ws.xtwx).solve(xtw2x).trace();
    const auto p = data.n_coef();
    Vector a = Vector::Zero(p + 1);
    a(p) = 0.5 * tr_wh + ws.tr_w3 / (3.0 * ws.tr_w2);
    return a;
}

Vector median_adjustment_general(const Dataset& data, double psi) {
    const auto K = data.n_studies();
    const auto p = data.n_coef();
    const auto q = p + 1;
    const Matrix& X = data.X();

    Vector w(K);
    for (Eigen::Index i = 0; i < K; ++i) w(i) = 1.0 / (data.sigma2()(i) + psi);
    const Vector w2 = w.array().square();
    double tr_w2 = 0.0, tr_w3 = 0.0;
    for (Eigen::Index i = 0; i < K; ++i) {
        tr_w2 += w(i) * w(i);
        tr_w3 += w(i) * w(i) * w(i);
    }

    Matrix info = Matrix::Zero(q, q);
    info.topLeftCorner(p, p) = X.transpose() * w.asDiagonal() * X;
    info(p, p) = 0.5 * tr_w2;
    Eigen::FullPivLU<Matrix> lu(info);
    if (!lu.isInvertible())
        throw std::runtime_error("expected information is singular (rank deficiency)");
    const Matrix info_inv = lu.inverse();

    const Matrix xtw2x = X.transpose() * w2.asDiagonal() * X;

    // P_t and Q_t matrices of the model; P_t = -Q_t for t < q.
    auto p_mat = [&](Eigen::Index t) {
        Matrix P = Matrix::Zero(q, q);
        if (t < p) {
            const Vector col = X.transpose() * w2.cwiseProduct(X.col(t));
            P.block(0, p, p, 1) = col;
            P.block(p, 0, 1, p) = col.transpose();
        } else {
            P.topLeftCorner(p, p) = xtw2x;
            P(p, p) = tr_w3;
        }
        return P;
    };
    auto q_mat = [&](Eigen::Index t) {
        if (t < p) return Matrix(-p_mat(t));
        Matrix Q = Matrix::Zero(q, q);
        Q(p, p) = -tr_w3;
        return Q;
    };

    // K-dagger vector: Kdag_t = (i^t)' K_t with
    // K_tu = Tr[(i^t (i^t)' / i^tt) (P_u / 3 + Q_u / 2)].
    Vector kdag(q);
    for (Eigen::Index t = 0; t < q; ++t) {
        const Vector it_inv = info_inv.col(t);
        const Matrix outer = it_inv * it_inv.transpose() / info_inv(t, t);
        Vector kt(q);
        for (Eigen::Index u = 0; u < q; ++u)
            kt(u) = (outer * (p_mat(u) / 3.0 + q_mat(u) / 2.0)).trace();
        kdag(t) = it_inv.dot(kt);
    }

    Vector adj(q);
    for (Eigen::Index t = 0; t < q; ++t) {
        const double tr_term = 0.5 * (info_inv * (p_mat(t) + q_mat(t))).trace();
        adj(t) = tr_term - info.col(t).dot(kdag);
    }
    return adj;
}

double penalized_loglik(const Dataset& data, const Theta& theta, Method method) {
    const double l = log_likelihood(data, theta);
    if (method == Method::ML) return l;
    if (method == Method::DL)
        throw std::invalid_argument("DL is an estimator tag, not a likelihood penalty");
    const WeightState ws = weights(data, theta.psi);
    const Matrix L = xtwx_llt(ws.xtwx).matrixL();
    const double logdet = 2.0 * L.diagonal().array().log().sum();
    double out = l - 0.5 * logdet;
    if (method == Method::MedianBRPL) out -= std::log(ws.tr_w2) / 6.0;
    return out;
}

double adjusted_score_psi(const Dataset& data, const Theta& theta, Method method) {
    if (method == Method::DL)
        throw std::invalid_argument("DL is an estimator tag, not a likelihood penalty");
    const auto p = data.n_coef();
    double s = score(data, theta)(p);
    if (method == Method::ML) return s;
    const WeightState ws = weights(data, theta.psi);
    const Matrix xtw2x =
        data.X().transpose() * ws.w.array().square().matrix().asDiagonal() * data.X();
    s += 0.5 * xtwx_llt(ws.xtwx).solve(xtw2x).trace();
    if (method == Method::MedianBRPL) s += ws.tr_w3 / (3.0 * ws.tr_w2);
    return s;
}

}  // namespace metabr
