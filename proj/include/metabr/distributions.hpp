#pragma once

namespace metabr {

// Regularized lower incomplete gamma based chi-square distribution
// functions, plus the standard normal CDF/quantile via erfc.

double chisq_cdf(double x, int df);
double chisq_quantile(double p, int df);

double normal_cdf(double x);
double normal_quantile(double p);

}  // namespace metabr
