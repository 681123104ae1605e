#pragma once

#include <string>

namespace metakit {

enum class Measure { logRR, logOR, RD, SMD, ZCOR };

struct TwoByTwo {
  double a = 0, b = 0, c = 0, d = 0;  // group1 +/-, group2 +/-
};

struct ContinuousGroups {
  double m1 = 0, m2 = 0;
  double sd1 = 0, sd2 = 0;
  double n1 = 0, n2 = 0;
};

struct EffectSizeRecord {
  double yi = 0, vi = 0, sei = 0;
  int row_id = -1;
  bool estimable = true;
  std::string note;
};

// 2x2 measures. Tables containing any zero cell get 0.5 added to all four
// cells; double-zero outcome tables (a=c=0 or b=d=0) are not estimable for
// the ratio measures.
EffectSizeRecord compute_2x2(const TwoByTwo& t, Measure measure);

// Hedges g: d = (m1-m2)/sp, J = 1 - 3/(4(n1+n2-2)-1), yi = J*d,
// vi = 1/n1 + 1/n2 + yi^2/(2(n1+n2)).
EffectSizeRecord compute_smd(const ContinuousGroups& g);

// Fisher z: yi = atanh(r), vi = 1/(n-3).
EffectSizeRecord compute_fisher_z(double r, int n);

Measure measure_from_string(const std::string& s);
std::string measure_to_string(Measure m);

}  // namespace metakit
