#include "metakit/stats.h"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <vector>

namespace metakit::stats {

namespace bm = boost::math;

double pnorm(double z) { return bm::cdf(bm::normal_distribution<>(), z); }
double qnorm(double p) { return bm::quantile(bm::normal_distribution<>(), p); }
double dnorm(double z) { return bm::pdf(bm::normal_distribution<>(), z); }
double pt(double x, double df) { return bm::cdf(bm::students_t_distribution<>(df), x); }
double qt(double p, double df) { return bm::quantile(bm::students_t_distribution<>(df), p); }
double pf(double x, double df1, double df2) {
  return bm::cdf(bm::fisher_f_distribution<>(df1, df2), x);
}
double pchisq(double x, double df) {
  if (x <= 0.0) return 0.0;
  return bm::cdf(bm::chi_squared_distribution<>(df), x);
}
double qchisq(double p, double df) {
  return bm::quantile(bm::chi_squared_distribution<>(df), p);
}

double p_from_z(double z) { return 2.0 * pnorm(-std::abs(z)); }
double p_from_t(double t, double df) { return 2.0 * pt(-std::abs(t), df); }
double p_upper_chisq(double x, double df) {
  if (x <= 0.0) return 1.0;
  return bm::cdf(bm::complement(bm::chi_squared_distribution<>(df), x));
}
double p_upper_f(double x, double df1, double df2) {
  if (x <= 0.0) return 1.0;
  return bm::cdf(bm::complement(bm::fisher_f_distribution<>(df1, df2), x));
}

// Null distribution of the concordant-pair count via the classical
// insertion recursion: w(q, n) = sum_{j=0}^{n-1} w(q - j, n - 1).
double pkendall(int q, int n) {
  if (q < 0) return 0.0;
  const int qmax = n * (n - 1) / 2;
  if (q >= qmax) return 1.0;
  std::vector<double> w(qmax + 1, 0.0);
  w[0] = 1.0;
  double total = 1.0;
  for (int m = 2; m <= n; ++m) {
    std::vector<double> nw(qmax + 1, 0.0);
    const int lim = m * (m - 1) / 2;
    for (int s = 0; s <= lim; ++s) {
      double acc = 0.0;
      for (int j = 0; j < m && j <= s; ++j) acc += w[s - j];
      nw[s] = acc;
    }
    w = std::move(nw);
    total *= m;
  }
  double cum = 0.0;
  for (int s = 0; s <= q; ++s) cum += w[s];
  return cum / total;
}

}  // namespace metakit::stats
