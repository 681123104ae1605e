#pragma once

namespace metakit::stats {

// Distribution helpers shared by every fitting module. Thin wrappers over
// boost::math so the rest of the code never includes boost headers.

double pnorm(double z);            // P(Z <= z)
double qnorm(double p);            // inverse of pnorm
double dnorm(double z);
double pt(double x, double df);    // P(T_df <= x)
double qt(double p, double df);
double pf(double x, double df1, double df2);   // P(F <= x)
double pchisq(double x, double df);            // P(X2 <= x)
double qchisq(double p, double df);

// Two-sided p-values.
double p_from_z(double z);
double p_from_t(double t, double df);
double p_upper_chisq(double x, double df);     // P(X2 >= x)
double p_upper_f(double x, double df1, double df2);

// Exact null CDF of the number of concordant pairs T in a Kendall
// rank test with n untied observations: P(T <= q).
double pkendall(int q, int n);

}  // namespace metakit::stats
