#include "metabr/simulation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <stdexcept>
#include <thread>

namespace metabr {

const std::vector<double> kAlphaGridPct = {1.0,  2.5,  5.0,  10.0, 25.0, 50.0,
                                           75.0, 90.0, 95.0, 97.5, 99.0};

BrockwellDesign BrockwellDesign::paper_defaults() {
    BrockwellDesign d;
    d.beta0 = 0.5;
    for (int i = 0; i <= 10; ++i) d.psi_grid.push_back(0.01 * i);
    d.k_list = {5, 10, 15, 20, 25, 30, 35, 40, 45, 50, 100, 200};
    d.reps = 10000;
    return d;
}

namespace {

enum StreamPurpose : std::uint64_t {
    kVariances = 1,
    kReplicate = 2,
    kPowerNull = 3,
    kPowerAlt = 4,
};

std::uint64_t stream_id(StreamPurpose purpose, std::uint64_t a, std::uint64_t b,
                        std::uint64_t c, std::uint64_t d = 0) {
    std::uint64_t h = purpose;
    for (std::uint64_t v : {a, b, c, d}) {
        h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    }
    return h;
}

void run_parallel(int reps, int workers, const std::function<void(int)>& body);

std::string fmt(const char* format, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), format, v);
    return buf;
}

const std::array<Method, 3> kMethods = {Method::ML, Method::MeanBRPL,
                                        Method::MedianBRPL};

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Append the empirical distribution of p-values at the alpha grid.
void append_pvalue_rows(SimMetrics& out, const MetricRow& base,
                        const std::vector<double>& pvalues) {
    int n = 0;
    for (double p : pvalues)
        if (!std::isnan(p)) ++n;
    for (double alpha_pct : kAlphaGridPct) {
        int count = 0;
        for (double p : pvalues)
            if (!std::isnan(p) && p <= alpha_pct / 100.0) ++count;
        MetricRow row = base;
        row.metric += "_pvalue_le_" + fmt("%g", alpha_pct);
        row.value = n > 0 ? 100.0 * count / n : kNaN;
        out.rows.push_back(row);
    }
}

double mean_skipnan(const std::vector<double>& v) {
    double sum = 0.0;
    int n = 0;
    for (double x : v)
        if (!std::isnan(x)) {
            sum += x;
            ++n;
        }
    return n > 0 ? sum / n : kNaN;
}

double prop_skipnan(const std::vector<double>& v) { return mean_skipnan(v); }

void run_parallel(int reps, int workers, const std::function<void(int)>& body) {
    if (workers <= 1) {
        for (int r = 0; r < reps; ++r) body(r);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int wkr = 0; wkr < workers; ++wkr) {
        pool.emplace_back([&, wkr] {
            for (int r = wkr; r < reps; r += workers) body(r);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace

void SimMetrics::write_csv(std::ostream& os) const {
    os << "design,K,psi_true,method,metric,value,reps,seed\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%d,%.10g,%s,%s,%.10g,%d,%llu\n",
                      r.design.c_str(), r.K, r.psi_true, r.method.c_str(),
                      r.metric.c_str(), r.value, r.reps,
                      static_cast<unsigned long long>(r.seed));
        os << buf;
    }
}

double SimMetrics::get(const std::string& method, const std::string& metric, int K,
                       double psi_true) const {
    for (const auto& r : rows)
        if (r.method == method && r.metric == metric && r.K == K &&
            std::abs(r.psi_true - psi_true) < 1e-12)
            return r.value;
    throw std::out_of_range("no metric row: " + method + "/" + metric);
}

Vector brockwell_variances(int K, Rng& rng) {
    if (K < 2) throw std::invalid_argument("K must be at least 2");
    Vector out(K);
    for (int i = 0; i < K; ++i) {
        double v = 0.0;
        bool ok = false;
        for (long attempt = 0; attempt < 1000000; ++attempt) {
            const double z = rng.normal();
            v = 0.25 * z * z;
            if (v > 0.009 && v < 0.6) {
                ok = true;
                break;
            }
        }
        if (!ok) throw std::runtime_error("variance rejection sampling stalled");
        out(i) = v;
    }
    return out;
}

Dataset simulate_sample(const Matrix& X, const Vector& beta, double psi,
                        const Vector& sigma2, Rng& rng) {
    if (psi < 0.0) throw std::invalid_argument("psi must be nonnegative");
    const auto K = X.rows();
    Vector y(K);
    const double sd_u = std::sqrt(psi);
    const Vector mu = X * beta;
    for (Eigen::Index i = 0; i < K; ++i) {
        const double u = sd_u * rng.normal();
        const double e = std::sqrt(sigma2(i)) * rng.normal();
        y(i) = mu(i) + u + e;
    }
    return Dataset(y, sigma2, X);
}

namespace {

struct CellFits {
    // per method: psi estimate, beta-profile stat at beta0, psi-profile
    // stat at psi_true, signed root at beta0; NaN when the replicate failed
    std::array<double, 3> psi_hat;
    std::array<double, 3> stat_beta;
    std::array<double, 3> stat_psi;
    std::array<double, 3> sroot;
    std::array<bool, 3> converged = {false, false, false};
};

// One Brockwell replicate: fit all three methods and evaluate the ratio
// statistics at the generating parameter values.
CellFits brockwell_replicate(const Matrix& X, const Vector& sigma2, double beta0,
                             double psi_true, double psi_hi, Rng& rng,
                             bool with_inference, double beta_gen) {
    CellFits out;
    out.psi_hat.fill(kNaN);
    out.stat_beta.fill(kNaN);
    out.stat_psi.fill(kNaN);
    out.sroot.fill(kNaN);

    const Vector beta_vec = Vector::Constant(1, beta_gen);
    const Dataset data = simulate_sample(X, beta_vec, psi_true, sigma2, rng);

    FitOptions opts;
    opts.psi_lo = 0.0;
    opts.psi_hi = psi_hi;

    for (std::size_t m = 0; m < kMethods.size(); ++m) {
        try {
            const FitResult f = fit(data, kMethods[m], opts);
            out.psi_hat[m] = f.psi;
            out.converged[m] = f.converged;
            if (!with_inference) continue;
            const double lmax =
                penalized_loglik(data, Theta{f.beta, f.psi}, kMethods[m]);
            // beta profile at the null value
            const Vector b0 = Vector::Constant(1, beta0);
            const PsiSolve ps = solve_psi(data, b0, kMethods[m], opts);
            const double lcon =
                penalized_loglik(data, Theta{b0, ps.psi}, kMethods[m]);
            out.stat_beta[m] = std::max(0.0, 2.0 * (lmax - lcon));
            out.sroot[m] = (f.beta(0) >= beta0 ? 1.0 : -1.0) *
                           std::sqrt(out.stat_beta[m]);
            // psi profile at the generating value
            const Theta tpsi{wls_beta(data, psi_true), psi_true};
            out.stat_psi[m] = std::max(
                0.0, 2.0 * (lmax - penalized_loglik(data, tpsi, kMethods[m])));
        } catch (const std::exception&) {
            // leave NaN; tallied as nonconvergence
        }
    }
    return out;
}

}  // namespace

SimMetrics estimation_study(const BrockwellDesign& design) {
    SimMetrics out;
    for (int K : design.k_list) {
        Rng vr(design.seed, stream_id(kVariances, K, 0, 0));
        const Vector sigma2 = brockwell_variances(K, vr);
        const Matrix X = Matrix::Ones(K, 1);
        for (std::size_t pi = 0; pi < design.psi_grid.size(); ++pi) {
            const double psi_true = design.psi_grid[pi];
            std::vector<CellFits> results(design.reps);
            run_parallel(design.reps, design.workers, [&](int r) {
                Rng rng(design.seed, stream_id(kReplicate, K, pi, r));
                results[r] = brockwell_replicate(X, sigma2, design.beta0, psi_true,
                                                 design.psi_hi, rng, false,
                                                 design.beta0);
            });
            for (std::size_t m = 0; m < kMethods.size(); ++m) {
                std::vector<double> under, bias;
                int nonconv = 0;
                for (const auto& res : results) {
                    if (std::isnan(res.psi_hat[m])) {
                        ++nonconv;
                        continue;
                    }
                    if (!res.converged[m]) ++nonconv;
                    under.push_back(res.psi_hat[m] <= psi_true ? 1.0 : 0.0);
                    bias.push_back(res.psi_hat[m] - psi_true);
                }
                MetricRow base{"brockwell-estimation", K, psi_true,
                               method_name(kMethods[m]), "", 0.0,
                               design.reps, design.seed};
                MetricRow row = base;
                row.metric = "underestimation_pct";
                row.value = 100.0 * mean_skipnan(under);
                out.rows.push_back(row);
                row.metric = "mean_bias";
                row.value = mean_skipnan(bias);
                out.rows.push_back(row);
                row.metric = "nonconverged";
                row.value = nonconv;
                out.rows.push_back(row);
            }
        }
    }
    return out;
}

SimMetrics coverage_study(const BrockwellDesign& design, double level) {
    SimMetrics out;
    const double q = chisq_quantile(level, 1);
    const double z = normal_quantile(level);
    for (int K : design.k_list) {
        Rng vr(design.seed, stream_id(kVariances, K, 0, 0));
        const Vector sigma2 = brockwell_variances(K, vr);
        const Matrix X = Matrix::Ones(K, 1);
        for (std::size_t pi = 0; pi < design.psi_grid.size(); ++pi) {
            const double psi_true = design.psi_grid[pi];
            std::vector<CellFits> results(design.reps);
            run_parallel(design.reps, design.workers, [&](int r) {
                Rng rng(design.seed, stream_id(kReplicate, K, pi, r));
                results[r] = brockwell_replicate(X, sigma2, design.beta0, psi_true,
                                                 design.psi_hi, rng, true,
                                                 design.beta0);
            });
            for (std::size_t m = 0; m < kMethods.size(); ++m) {
                std::vector<double> cov2b, cov1b, covp;
                int nonconv = 0;
                for (const auto& res : results) {
                    if (std::isnan(res.stat_beta[m])) {
                        ++nonconv;
                        continue;
                    }
                    cov2b.push_back(res.stat_beta[m] <= q ? 1.0 : 0.0);
                    cov1b.push_back(res.sroot[m] <= z ? 1.0 : 0.0);
                    covp.push_back(res.stat_psi[m] <= q ? 1.0 : 0.0);
                }
                MetricRow row{"brockwell-coverage", K, psi_true,
                              method_name(kMethods[m]), "", 0.0,
                              design.reps, design.seed};
                row.metric = "coverage_two_sided_beta";
                row.value = 100.0 * prop_skipnan(cov2b);
                out.rows.push_back(row);
                row.metric = "coverage_one_sided_beta";
                row.value = 100.0 * prop_skipnan(cov1b);
                out.rows.push_back(row);
                row.metric = "coverage_two_sided_psi";
                row.value = 100.0 * prop_skipnan(covp);
                out.rows.push_back(row);
                row.metric = "nonconverged";
                row.value = nonconv;
                out.rows.push_back(row);
            }
        }
    }
    return out;
}

SimMetrics power_study(const BrockwellDesign& design) {
    SimMetrics out;
    const double q_asym = chisq_quantile(design.level, 1);
    for (int K : design.k_list) {
        Rng vr(design.seed, stream_id(kVariances, K, 0, 0));
        const Vector sigma2 = brockwell_variances(K, vr);
        const Matrix X = Matrix::Ones(K, 1);
        for (std::size_t pi = 0; pi < design.psi_grid.size(); ++pi) {
            const double psi_true = design.psi_grid[pi];

            // exact critical values from the simulated null distribution
            std::array<double, 3> q_exact = {q_asym, q_asym, q_asym};
            if (design.exact_calibration) {
                std::vector<CellFits> null_results(design.reps);
                run_parallel(design.reps, design.workers, [&](int r) {
                    Rng rng(design.seed, stream_id(kPowerNull, K, pi, r));
                    null_results[r] =
                        brockwell_replicate(X, sigma2, design.beta0, psi_true,
                                            design.psi_hi, rng, true, design.beta0);
                });
                for (std::size_t m = 0; m < kMethods.size(); ++m) {
                    std::vector<double> stats;
                    for (const auto& res : null_results)
                        if (!std::isnan(res.stat_beta[m]))
                            stats.push_back(res.stat_beta[m]);
                    if (stats.empty())
                        throw std::runtime_error("no usable null replicates");
                    std::sort(stats.begin(), stats.end());
                    const std::size_t k = static_cast<std::size_t>(
                        std::ceil(design.level * static_cast<double>(stats.size())));
                    q_exact[m] = stats[std::min(k, stats.size()) - 1];
                }
            }

            for (std::size_t di = 0; di < design.deltas.size(); ++di) {
                const double delta = design.deltas[di];
                const double beta_gen =
                    design.beta0 + delta / std::sqrt(static_cast<double>(K));
                std::vector<CellFits> results(design.reps);
                run_parallel(design.reps, design.workers, [&](int r) {
                    Rng rng(design.seed, stream_id(kPowerAlt, K, pi, r, di));
                    results[r] =
                        brockwell_replicate(X, sigma2, design.beta0, psi_true,
                                            design.psi_hi, rng, true, beta_gen);
                });
                for (std::size_t m = 0; m < kMethods.size(); ++m) {
                    std::vector<double> rej_asym, rej_exact;
                    int nonconv = 0;
                    for (const auto& res : results) {
                        if (std::isnan(res.stat_beta[m])) {
                            ++nonconv;
                            continue;
                        }
                        rej_asym.push_back(res.stat_beta[m] > q_asym ? 1.0 : 0.0);
                        rej_exact.push_back(res.stat_beta[m] > q_exact[m] ? 1.0 : 0.0);
                    }
                    MetricRow row{"brockwell-power", K, psi_true,
                                  method_name(kMethods[m]), "", 0.0,
                                  design.reps, design.seed};
                    row.metric = "power_asymptotic_delta_" + fmt("%g", delta);
                    row.value = 100.0 * prop_skipnan(rej_asym);
                    out.rows.push_back(row);
                    if (design.exact_calibration) {
                        row.metric = "power_exact_delta_" + fmt("%g", delta);
                        row.value = 100.0 * prop_skipnan(rej_exact);
                        out.rows.push_back(row);
                    }
                    row.metric = "nonconverged_delta_" + fmt("%g", delta);
                    row.value = nonconv;
                    out.rows.push_back(row);
                }
            }
        }
    }
    return out;
}

SimMetrics pvalue_distribution_study(const BootstrapDesign& design) {
    const auto p = design.base.n_coef();
    const int K = static_cast<int>(design.base.n_studies());
    const int n_targets = static_cast<int>(p) + 1;  // each beta_j, then psi

    struct RepResult {
        std::array<double, 3> psi_hat;
        // pvalues[m * n_targets + t]
        std::vector<double> pvalues;
    };
    std::vector<RepResult> results(design.reps);

    run_parallel(design.reps, design.workers, [&](int r) {
        Rng rng(design.seed, stream_id(kReplicate, 0, 0, r));
        RepResult& res = results[r];
        res.psi_hat.fill(kNaN);
        res.pvalues.assign(3 * n_targets, kNaN);
        const Dataset data = simulate_sample(design.base.X(), design.theta0.beta,
                                             design.theta0.psi,
                                             design.base.sigma2(), rng);
        FitOptions opts;  // data-analysis default interval
        for (std::size_t m = 0; m < kMethods.size(); ++m) {
            try {
                const FitResult f = fit(data, kMethods[m], opts);
                res.psi_hat[m] = f.psi;
                const double lmax =
                    penalized_loglik(data, Theta{f.beta, f.psi}, kMethods[m]);
                for (int t = 0; t < n_targets; ++t) {
                    const ProfileTarget target =
                        t < p ? ProfileTarget::beta(t, design.theta0.beta(t))
                              : ProfileTarget::psi(design.theta0.psi);
                    try {
                        const double stat = profile_statistic_given_max(
                            data, kMethods[m], target, opts, lmax);
                        res.pvalues[m * n_targets + t] = 1.0 - chisq_cdf(stat, 1);
                    } catch (const std::exception&) {
                        // leave NaN
                    }
                }
            } catch (const std::exception&) {
                // leave NaN
            }
        }
    });

    SimMetrics out;
    for (std::size_t m = 0; m < kMethods.size(); ++m) {
        MetricRow base{"bootstrap", K, design.theta0.psi,
                       method_name(kMethods[m]), "", 0.0, design.reps, design.seed};
        std::vector<double> under;
        int nonconv = 0;
        for (const auto& res : results) {
            if (std::isnan(res.psi_hat[m])) {
                ++nonconv;
                continue;
            }
            under.push_back(res.psi_hat[m] <= design.theta0.psi ? 1.0 : 0.0);
        }
        MetricRow row = base;
        row.metric = "underestimation";
        row.value = prop_skipnan(under);
        out.rows.push_back(row);
        row.metric = "nonconverged";
        row.value = nonconv;
        out.rows.push_back(row);

        for (int t = 0; t < n_targets; ++t) {
            const std::string tname =
                t < p ? "beta" + std::to_string(t) : std::string("psi");
            std::vector<double> pv;
            pv.reserve(results.size());
            for (const auto& res : results) pv.push_back(res.pvalues[m * n_targets + t]);
            MetricRow prow = base;
            prow.metric = tname;
            append_pvalue_rows(out, prow, pv);
            // two-sided coverage at 95% by test inversion
            std::vector<double> cov;
            for (double pval : pv)
                if (!std::isnan(pval)) cov.push_back(pval > 0.05 ? 1.0 : 0.0);
            MetricRow crow = base;
            crow.metric = "coverage95_" + tname;
            crow.value = 100.0 * prop_skipnan(cov);
            out.rows.push_back(crow);
        }
    }
    return out;
}

}  // namespace metabr
