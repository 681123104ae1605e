#include "metakit/stats.h"
#include "support.h"

using namespace metakit::stats;

TEST_CASE("distribution wrappers") {
  check_close(pnorm(1.959963984540054), 0.975, 1e-12);
  check_close(qnorm(0.975), 1.959963984540054, 1e-12);
  check_close(qt(0.975, 12), 2.1788128296634177, 1e-12);
  check_close(p_from_t(-2.1788128296634177, 12), 0.05, 1e-10);
  check_close(p_from_z(1.959963984540054), 0.05, 1e-10);
  check_close(qchisq(0.975, 12), 23.336664158645334, 1e-12);
  CHECK(p_upper_chisq(0.0, 5) == 1.0);
  CHECK(p_upper_chisq(-1.0, 5) == 1.0);
  check_close(p_upper_f(4.0, 2, 10), 0.052922149401344654, 1e-12);
}

TEST_CASE("exact kendall distribution over concordant-pair counts") {
  // n = 3: counts 0..3 have probabilities 1/6, 2/6, 2/6, 1/6.
  check_close(pkendall(0, 3), 1.0 / 6.0, 1e-14);
  check_close(pkendall(1, 3), 3.0 / 6.0, 1e-14);
  check_close(pkendall(2, 3), 5.0 / 6.0, 1e-14);
  CHECK(pkendall(3, 3) == 1.0);
  CHECK(pkendall(-1, 3) == 0.0);

  // Symmetry of the null distribution.
  const int n = 8, total = n * (n - 1) / 2;
  for (int q = 0; q < total; ++q) {
    check_close(pkendall(q, n), 1.0 - pkendall(total - q - 1, n), 1e-12, 1e-14);
  }
}
