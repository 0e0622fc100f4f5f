#include "metabr/model.hpp"

#include <cmath>

#include "doctest.h"
#include "test_util.hpp"

using namespace metabr;
using testutil::two_point;

TEST_CASE("dataset invariants are checked at construction") {
    Vector y(2);
    y << 0.0, 2.0;
    Vector s2(2);
    s2 << 1.0, -1.0;
    CHECK_THROWS_AS(Dataset(y, s2, Matrix::Ones(2, 1)), std::invalid_argument);

    Vector s2ok = Vector::Ones(2);
    CHECK_THROWS_AS(Dataset(y, s2ok, Matrix::Ones(2, 2)), std::invalid_argument);

    Vector y3(3);
    y3 << 1.0, 2.0, 3.0;
    Vector s23 = Vector::Ones(3);
    Matrix Xdup(3, 2);
    Xdup.col(0).setOnes();
    Xdup.col(1).setOnes();  // rank deficient
    CHECK_THROWS_AS(Dataset(y3, s23, Xdup), std::invalid_argument);

    CHECK_THROWS_AS(Dataset(Vector::Ones(1), Vector::Ones(1), Matrix::Ones(1, 1)),
                    std::invalid_argument);
}

TEST_CASE("weights at unit variances") {
    const Dataset d = two_point();
    const WeightState ws = weights(d, 0.0);
    CHECK(ws.w(0) == doctest::Approx(1.0));
    CHECK(ws.w(1) == doctest::Approx(1.0));
    CHECK(ws.tr_w == doctest::Approx(2.0));
    CHECK(ws.tr_w2 == doctest::Approx(2.0));
    CHECK(ws.tr_w3 == doctest::Approx(2.0));
    CHECK(ws.xtwx(0, 0) == doctest::Approx(2.0));

    const WeightState ws5 = weights(d, 5.0);
    CHECK(ws5.w(0) == doctest::Approx(1.0 / 6.0));
    CHECK(ws5.tr_w2 == doctest::Approx(1.0 / 18.0));
    CHECK(ws5.xtwx(0, 0) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("weights decrease in psi and reject invalid variance shifts") {
    Rng rng(11);
    const Dataset d = testutil::random_dataset(rng, 8, 2);
    const WeightState a = weights(d, 0.3);
    const WeightState b = weights(d, 0.9);
    for (int i = 0; i < 8; ++i) CHECK(b.w(i) < a.w(i));
    CHECK_THROWS_AS(weights(d, -10.0), std::domain_error);
}

TEST_CASE("wls_beta equals weighted mean for intercept-only designs") {
    const Dataset d = two_point();
    CHECK(wls_beta(d, 0.0)(0) == doctest::Approx(1.0));
    CHECK(wls_beta(d, 5.0)(0) == doctest::Approx(1.0));

    Vector y(3);
    y << 1.0, 2.0, 3.0;
    Vector s2(3);
    s2 << 1.0, 1.0, 4.0;
    const Dataset d3(y, s2, Matrix::Ones(3, 1));
    CHECK(wls_beta(d3, 0.0)(0) == doctest::Approx(5.0 / 3.0));
}

TEST_CASE("beta score vanishes at the WLS solution") {
    Rng rng(12);
    for (int rep = 0; rep < 20; ++rep) {
        const Dataset d = testutil::random_dataset(rng, 10, 3);
        const double psi = rng.uniform();
        const Theta theta{wls_beta(d, psi), psi};
        CHECK(score(d, theta).head(3).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("log-likelihood values on the two-point dataset") {
    const Dataset d = two_point();
    CHECK(log_likelihood(d, Theta{Vector::Ones(1), 0.0}) == doctest::Approx(-1.0));
    const double expected = 0.5 * (2.0 * std::log(1.0 / 6.0) - 2.0 / 6.0);
    CHECK(log_likelihood(d, Theta{Vector::Ones(1), 5.0}) == doctest::Approx(expected));
}

TEST_CASE("log-likelihood is maximized over beta at the WLS estimate") {
    Rng rng(13);
    const Dataset d = testutil::random_dataset(rng, 9, 1);
    const double psi = 0.4;
    const Vector bhat = wls_beta(d, psi);
    const double lmax = log_likelihood(d, Theta{bhat, psi});
    for (double eps : {-0.3, -0.01, 0.01, 0.3}) {
        Vector b = bhat;
        b(0) += eps;
        CHECK(log_likelihood(d, Theta{b, psi}) < lmax);
    }
}

TEST_CASE("score examples") {
    const Dataset d = two_point();
    const Vector s0 = score(d, Theta{Vector::Zero(1), 0.0});
    CHECK(s0(0) == doctest::Approx(2.0));
    CHECK(s0(1) == doctest::Approx(1.0));
    const Vector s1 = score(d, Theta{Vector::Ones(1), 0.0});
    CHECK(s1(0) == doctest::Approx(0.0));
    CHECK(s1(1) == doctest::Approx(0.0));
}

TEST_CASE("score matches finite differences of the log-likelihood") {
    Rng rng(14);
    for (int rep = 0; rep < 20; ++rep) {
        const int p = 1 + static_cast<int>(rng.uniform() * 3);
        const Dataset d = testutil::random_dataset(rng, 12, p);
        Theta theta;
        theta.beta = Vector::Zero(p);
        for (int c = 0; c < p; ++c) theta.beta(c) = rng.normal();
        theta.psi = 0.2 + rng.uniform();
        const Vector s = score(d, theta);
        const double h = 1e-6;
        for (int c = 0; c < p; ++c) {
            const double g = testutil::fd(
                [&](double x) {
                    Theta t = theta;
                    t.beta(c) = x;
                    return log_likelihood(d, t);
                },
                theta.beta(c), h);
            CHECK(s(c) == doctest::Approx(g).epsilon(1e-6));
        }
        const double gpsi = testutil::fd(
            [&](double x) {
                Theta t = theta;
                t.psi = x;
                return log_likelihood(d, t);
            },
            theta.psi, h);
        CHECK(s(p) == doctest::Approx(gpsi).epsilon(1e-6));
    }
}

TEST_CASE("expected information examples and positive definiteness") {
    const Dataset d = two_point();
    const Matrix i0 = expected_info(d, 0.0);
    CHECK(i0(0, 0) == doctest::Approx(2.0));
    CHECK(i0(1, 1) == doctest::Approx(1.0));
    CHECK(i0(0, 1) == 0.0);
    const Matrix i5 = expected_info(d, 5.0);
    CHECK(i5(0, 0) == doctest::Approx(1.0 / 3.0));
    CHECK(i5(1, 1) == doctest::Approx(1.0 / 36.0));

    Rng rng(15);
    for (int rep = 0; rep < 10; ++rep) {
        const Dataset rd = testutil::random_dataset(rng, 8, 2);
        const Matrix info = expected_info(rd, rng.uniform());
        CHECK(info.block(0, 2, 2, 1).cwiseAbs().maxCoeff() == 0.0);
        Eigen::SelfAdjointEigenSolver<Matrix> es(info);
        CHECK(es.eigenvalues().minCoeff() > 0.0);
    }
}

TEST_CASE("observed information examples") {
    const Dataset d = two_point();
    const Matrix j1 = observed_info(d, Theta{Vector::Ones(1), 0.0});
    CHECK(j1(0, 0) == doctest::Approx(2.0));
    CHECK(j1(0, 1) == doctest::Approx(0.0));
    CHECK(j1(1, 1) == doctest::Approx(1.0));

    const Matrix j0 = observed_info(d, Theta{Vector::Zero(1), 0.0});
    CHECK(j0(0, 0) == doctest::Approx(2.0));
    CHECK(j0(0, 1) == doctest::Approx(2.0));
    CHECK(j0(1, 0) == doctest::Approx(2.0));
    CHECK(j0(1, 1) == doctest::Approx(3.0));
}

TEST_CASE("observed information equals minus the score Jacobian") {
    Rng rng(16);
    for (int rep = 0; rep < 10; ++rep) {
        const int p = 1 + static_cast<int>(rng.uniform() * 2);
        const Dataset d = testutil::random_dataset(rng, 10, p);
        Theta theta;
        theta.beta = Vector::Zero(p);
        for (int c = 0; c < p; ++c) theta.beta(c) = rng.normal();
        theta.psi = 0.3 + rng.uniform();
        const Matrix j = observed_info(d, theta);
        CHECK((j - j.transpose()).cwiseAbs().maxCoeff() < 1e-12);
        const double h = 1e-6;
        for (int a = 0; a < p + 1; ++a) {
            for (int b = 0; b < p + 1; ++b) {
                const double g = testutil::fd(
                    [&](double x) {
                        Theta t = theta;
                        if (b < p)
                            t.beta(b) = x;
                        else
                            t.psi = x;
                        return score(d, t)(a);
                    },
                    b < p ? theta.beta(b) : theta.psi, h);
                CHECK(j(a, b) == doctest::Approx(-g).epsilon(1e-5));
            }
        }
    }
}

TEST_CASE("closed-form median adjustment on the two-point dataset") {
    const Dataset d = two_point();
    const Vector a = median_adjustment_closed(d, 0.0);
    CHECK(a(0) == 0.0);
    CHECK(a(1) == doctest::Approx(5.0 / 6.0));
}

TEST_CASE("median adjustment reduces to 5/6 per unit variance for equal weights") {
    const int K = 7;
    const double s2v = 1.7;
    Vector y(K);
    for (int i = 0; i < K; ++i) y(i) = 0.3 * i;
    const Dataset d(y, Vector::Constant(K, s2v), Matrix::Ones(K, 1));
    for (double psi : {0.0, 0.8, 3.0}) {
        const Vector a = median_adjustment_closed(d, psi);
        CHECK(a(1) == doctest::Approx((5.0 / 6.0) / (s2v + psi)));
    }
}

TEST_CASE("general and closed adjustments agree") {
    const Dataset d = two_point();
    for (double psi : {0.0, 0.5, 5.0}) {
        const Vector g = median_adjustment_general(d, psi);
        const Vector c = median_adjustment_closed(d, psi);
        CHECK((g - c).cwiseAbs().maxCoeff() < 1e-10);
    }

    Rng rng(17);
    for (int rep = 0; rep < 100; ++rep) {
        const int K = 3 + static_cast<int>(rng.uniform() * 28);
        const int p = 1 + static_cast<int>(rng.uniform() * 3.999);
        if (K <= p) continue;
        const Dataset d2 = testutil::random_dataset(rng, K, p);
        const double psi = 2.0 * rng.uniform();
        const Vector g = median_adjustment_general(d2, psi);
        const Vector c = median_adjustment_closed(d2, psi);
        CHECK((g - c).cwiseAbs().maxCoeff() < 1e-10);
        CHECK(c.head(p).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("penalized log-likelihood values and relations") {
    const Dataset d = two_point();
    const Theta t15{Vector::Ones(1), 5.0};
    const double expected = std::log(1.0 / 6.0) - 1.0 / 6.0 -
                            0.5 * std::log(1.0 / 3.0) -
                            std::log(1.0 / 18.0) / 6.0;
    CHECK(penalized_loglik(d, t15, Method::MedianBRPL) == doctest::Approx(expected));

    const Theta t10{Vector::Ones(1), 0.0};
    CHECK(penalized_loglik(d, t10, Method::ML) == doctest::Approx(-1.0));
    CHECK_THROWS_AS(penalized_loglik(d, t10, Method::DL), std::invalid_argument);

    Rng rng(18);
    for (int rep = 0; rep < 10; ++rep) {
        const Dataset rd = testutil::random_dataset(rng, 9, 2);
        Theta theta{Vector::Zero(2), 0.1 + rng.uniform()};
        theta.beta << rng.normal(), rng.normal();
        const double lmed = penalized_loglik(rd, theta, Method::MedianBRPL);
        const double lmean = penalized_loglik(rd, theta, Method::MeanBRPL);
        const double tr_w2 = weights(rd, theta.psi).tr_w2;
        CHECK(lmed - lmean == doctest::Approx(-std::log(tr_w2) / 6.0));
    }
}

TEST_CASE("penalties depend on psi only") {
    Rng rng(19);
    const Dataset d = testutil::random_dataset(rng, 8, 2);
    const double psi = 0.7;
    Theta t1{Vector::Zero(2), psi};
    Theta t2{Vector::Zero(2), psi};
    t1.beta << 0.3, -1.2;
    t2.beta << -0.8, 0.4;
    const double dl = log_likelihood(d, t1) - log_likelihood(d, t2);
    for (Method m : {Method::ML, Method::MeanBRPL, Method::MedianBRPL}) {
        CHECK(penalized_loglik(d, t1, m) - penalized_loglik(d, t2, m) ==
              doctest::Approx(dl).epsilon(1e-12));
    }
}

TEST_CASE("adjusted psi-score values on the two-point dataset") {
    const Dataset d = two_point();
    const Theta t{Vector::Ones(1), 0.0};
    CHECK(adjusted_score_psi(d, t, Method::MedianBRPL) == doctest::Approx(5.0 / 6.0));
    CHECK(adjusted_score_psi(d, t, Method::MeanBRPL) == doctest::Approx(0.5));
    CHECK(adjusted_score_psi(d, t, Method::ML) == doctest::Approx(0.0));
    CHECK_THROWS_AS(adjusted_score_psi(d, t, Method::DL), std::invalid_argument);
}

TEST_CASE("adjusted scores are the gradients of the penalized log-likelihoods") {
    Rng rng(20);
    int draws = 0;
    while (draws < 50) {
        const int p = 1 + static_cast<int>(rng.uniform() * 3);
        const Dataset d = testutil::random_dataset(rng, 10, p);
        Theta theta;
        theta.beta = Vector::Zero(p);
        for (int c = 0; c < p; ++c) theta.beta(c) = rng.normal();
        theta.psi = 0.2 + rng.uniform();
        ++draws;
        const double h = 1e-6;
        for (Method m : {Method::ML, Method::MeanBRPL, Method::MedianBRPL}) {
            const double g = testutil::fd(
                [&](double x) {
                    Theta t = theta;
                    t.psi = x;
                    return penalized_loglik(d, t, m);
                },
                theta.psi, h);
            CHECK(adjusted_score_psi(d, theta, m) ==
                  doctest::Approx(g).epsilon(1e-5));
            // beta block of the adjusted score is the plain score
            for (int c = 0; c < p; ++c) {
                const double gb = testutil::fd(
                    [&](double x) {
                        Theta t = theta;
                        t.beta(c) = x;
                        return penalized_loglik(d, t, m);
                    },
                    theta.beta(c), h);
                CHECK(score(d, theta)(c) == doctest::Approx(gb).epsilon(1e-5));
            }
        }
    }
}

TEST_CASE("scale equivariance at c = 2") {
    Rng rng(21);
    const Dataset d = testutil::random_dataset(rng, 9, 2);
    const double c = 2.0;
    const Dataset ds(c * d.y(), c * c * d.sigma2(), d.X());
    const auto K = d.n_studies();

    Theta theta{Vector::Zero(2), 0.6};
    theta.beta << 0.4, -0.9;
    Theta scaled{c * theta.beta, c * c * theta.psi};
    CHECK(log_likelihood(ds, scaled) ==
          doctest::Approx(log_likelihood(d, theta) - K * std::log(c)));

    // stationary psi of each adjusted score maps to c^2 psi
    for (Method m : {Method::ML, Method::MeanBRPL, Method::MedianBRPL}) {
        const Vector b = wls_beta(d, 0.5);
        // find a stationary point numerically on the original data
        double lo = 0.0, hi = 50.0;
        auto f = [&](double psi) {
            return adjusted_score_psi(d, Theta{wls_beta(d, psi), psi}, m);
        };
        auto fs = [&](double psi) {
            return adjusted_score_psi(ds, Theta{wls_beta(ds, psi), psi}, m);
        };
        if (f(lo) * f(hi) < 0.0) {
            double a = lo, bb = hi;
            for (int it = 0; it < 200; ++it) {
                const double mid = 0.5 * (a + bb);
                if (f(a) * f(mid) <= 0.0)
                    bb = mid;
                else
                    a = mid;
            }
            const double root = 0.5 * (a + bb);
            CHECK(std::abs(fs(c * c * root)) < 1e-6);
        }
        (void)b;
    }
}

TEST_CASE("equal-variance stationary points match the closed forms") {
    Rng rng(22);
    const int K = 8;
    const double s2v = 0.4;
    Vector y(K);
    for (int i = 0; i < K; ++i) y(i) = rng.normal() * 2.0;
    const Dataset d(y, Vector::Constant(K, s2v), Matrix::Ones(K, 1));
    const double ybar = y.mean();
    const double S = (y.array() - ybar).square().sum();
    const Vector beta = Vector::Constant(1, ybar);

    struct Case {
        Method m;
        double denom;
    };
    for (const auto& [m, denom] : {Case{Method::ML, double(K)},
                                   Case{Method::MeanBRPL, K - 1.0},
                                   Case{Method::MedianBRPL, K - 5.0 / 3.0}}) {
        const double psi_expected = S / denom - s2v;
        if (psi_expected > 0.0) {
            CHECK(std::abs(adjusted_score_psi(d, Theta{beta, psi_expected}, m)) <
                  1e-8);
        }
    }
}
