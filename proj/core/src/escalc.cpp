#include "metakit/escalc.h"

#include <cmath>

#include "metakit/errors.h"

namespace metakit {

EffectSizeRecord compute_2x2(const TwoByTwo& t, Measure measure) {
  if (t.a < 0 || t.b < 0 || t.c < 0 || t.d < 0) throw ComputeError("negative cell count");
  if (t.a + t.b < 1 || t.c + t.d < 1) throw ComputeError("empty group in 2x2 table");

  EffectSizeRecord rec;
  const bool ratio = measure == Measure::logRR || measure == Measure::logOR;
  if (ratio && ((t.a == 0 && t.c == 0) || (t.b == 0 && t.d == 0))) {
    rec.estimable = false;
    rec.note = "not estimable: double-zero table";
    return rec;
  }

  TwoByTwo u = t;
  const bool zero = t.a == 0 || t.b == 0 || t.c == 0 || t.d == 0;
  if (zero) {
    u.a += 0.5;
    u.b += 0.5;
    u.c += 0.5;
    u.d += 0.5;
    rec.note = "zero cell: 0.5 added to all cells";
  }
  const double n1 = u.a + u.b, n2 = u.c + u.d;

  switch (measure) {
    case Measure::logRR:
      rec.yi = std::log((u.a / n1) / (u.c / n2));
      rec.vi = 1.0 / u.a - 1.0 / n1 + 1.0 / u.c - 1.0 / n2;
      break;
    case Measure::logOR:
      rec.yi = std::log((u.a * u.d) / (u.b * u.c));
      rec.vi = 1.0 / u.a + 1.0 / u.b + 1.0 / u.c + 1.0 / u.d;
      break;
    case Measure::RD:
      rec.yi = u.a / n1 - u.c / n2;
      rec.vi = u.a * u.b / (n1 * n1 * n1) + u.c * u.d / (n2 * n2 * n2);
      break;
    default:
      throw ComputeError("measure requires a 2x2 table");
  }
  rec.sei = std::sqrt(rec.vi);
  return rec;
}

EffectSizeRecord compute_smd(const ContinuousGroups& g) {
  if (g.sd1 < 0 || g.sd2 < 0) throw ComputeError("negative standard deviation");
  if (g.n1 < 2 || g.n2 < 2) throw ComputeError("group size below 2");

  EffectSizeRecord rec;
  const double m = g.n1 + g.n2 - 2.0;
  const double sp = std::sqrt(((g.n1 - 1.0) * g.sd1 * g.sd1 + (g.n2 - 1.0) * g.sd2 * g.sd2) / m);
  if (sp == 0.0) {
    rec.estimable = false;
    rec.note = "not estimable: zero pooled standard deviation";
    return rec;
  }
  const double d = (g.m1 - g.m2) / sp;
  const double J = 1.0 - 3.0 / (4.0 * m - 1.0);
  rec.yi = J * d;
  rec.vi = 1.0 / g.n1 + 1.0 / g.n2 + rec.yi * rec.yi / (2.0 * (g.n1 + g.n2));
  rec.sei = std::sqrt(rec.vi);
  return rec;
}

EffectSizeRecord compute_fisher_z(double r, int n) {
  EffectSizeRecord rec;
  if (!(std::abs(r) < 1.0)) {
    rec.estimable = false;
    rec.note = "correlation outside (-1, 1)";
    return rec;
  }
  if (n < 4) {
    rec.estimable = false;
    rec.note = "sample size below 4";
    return rec;
  }
  rec.yi = std::atanh(r);
  rec.vi = 1.0 / (n - 3.0);
  rec.sei = std::sqrt(rec.vi);
  return rec;
}

Measure measure_from_string(const std::string& s) {
  if (s == "logRR" || s == "RR") return Measure::logRR;
  if (s == "logOR" || s == "OR") return Measure::logOR;
  if (s == "RD") return Measure::RD;
  if (s == "SMD") return Measure::SMD;
  if (s == "ZCOR") return Measure::ZCOR;
  throw SchemaError("unknown effect size measure: " + s);
}

std::string measure_to_string(Measure m) {
  switch (m) {
    case Measure::logRR: return "logRR";
    case Measure::logOR: return "logOR";
    case Measure::RD: return "RD";
    case Measure::SMD: return "SMD";
    case Measure::ZCOR: return "ZCOR";
  }
  return "?";
}

}  // namespace metakit
