#include "metabr/distributions.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace metabr {

namespace {

// Regularized lower incomplete gamma P(a, x): series for x < a + 1,
// continued fraction otherwise.
double gamma_p(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw std::domain_error("gamma_p: bad arguments");
    if (x == 0.0) return 0.0;
    const double lg = std::lgamma(a);
    if (x < a + 1.0) {
        double term = 1.0 / a;
        double sum = term;
        double ap = a;
        for (int n = 0; n < 500; ++n) {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if (std::abs(term) < std::abs(sum) * 1e-16) break;
        }
        return sum * std::exp(-x + a * std::log(x) - lg);
    }
    // Lentz's continued fraction for Q(a, x)
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-16) break;
    }
    const double q = std::exp(-x + a * std::log(x) - lg) * h;
    return 1.0 - q;
}

}  // namespace

double chisq_cdf(double x, int df) {
    if (df <= 0) throw std::domain_error("chisq_cdf: df must be positive");
    if (x < 0.0) throw std::domain_error("chisq_cdf: x must be nonnegative");
    if (std::isinf(x)) return 1.0;
    return gamma_p(0.5 * df, 0.5 * x);
}

double chisq_quantile(double p, int df) {
    if (df <= 0) throw std::domain_error("chisq_quantile: df must be positive");
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("chisq_quantile: p must be in (0,1)");
    // bracket then bisect; the CDF is strictly increasing
    double lo = 0.0;
    double hi = std::max(1.0, static_cast<double>(df));
    while (chisq_cdf(hi, df) < p) hi *= 2.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (chisq_cdf(mid, df) < p)
            lo = mid;
        else
            hi = mid;
        if (hi - lo < 1e-13 * (1.0 + hi)) break;
    }
    return 0.5 * (lo + hi);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("normal_quantile: p must be in (0,1)");
    double lo = -40.0, hi = 40.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (normal_cdf(mid) < p)
            lo = mid;
        else
            hi = mid;
        if (hi - lo < 1e-14) break;
    }
    return 0.5 * (lo + hi);
}

}  // namespace metabr
