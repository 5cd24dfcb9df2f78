#pragma once

namespace mtmatch {

// Regularized lower / upper incomplete gamma functions P(a, x), Q(a, x).
double gamma_p(double a, double x);
double gamma_q(double a, double x);

double chi2_cdf(double x, double df);
double chi2_sf(double x, double df);
// x with chi2_cdf(x, df) = prob.
double chi2_quantile(double prob, double df);

double normal_cdf(double x);
// Rational approximation refined by one Halley step.
double normal_quantile(double prob);

}  // namespace mtmatch
