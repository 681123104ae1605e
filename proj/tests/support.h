#pragma once

#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "metakit/dataset.h"
#include "metakit/escalc.h"
#include "metakit/kernel.h"
#include "oracle_values.h"

#ifndef METAKIT_DATA_DIR
#error "METAKIT_DATA_DIR must be defined by the build"
#endif
#ifndef METAKIT_GOLDEN_DIR
#error "METAKIT_GOLDEN_DIR must be defined by the build"
#endif

inline std::string data_path(const std::string& name) {
  return std::string(METAKIT_DATA_DIR) + "/" + name;
}
inline std::string golden_path(const std::string& name) {
  return std::string(METAKIT_GOLDEN_DIR) + "/" + name;
}

// |got - want| <= atol + rtol |want|; NaN expectations must be matched by NaN.
inline void check_close(double got, double want, double rtol = 1e-4,
                        double atol = 1e-8) {
  INFO("got " << got << ", want " << want);
  if (std::isnan(want)) {
    CHECK(std::isnan(got));
    return;
  }
  CHECK(std::abs(got - want) <= atol + rtol * std::abs(want));
}

inline void check_pvalue(double got, double want, double atol = 1e-3) {
  INFO("got p " << got << ", want p " << want);
  CHECK(std::abs(got - want) <= atol);
}

struct EffectData {
  Eigen::VectorXd yi, vi;
};

// BCG trials as log relative risks (a = tpos, b = tneg, c = cpos, d = cneg).
inline EffectData load_bcg_rr() {
  metakit::Dataset d = metakit::Dataset::load_csv(data_path("bcg.csv"));
  const int k = d.nrow();
  EffectData e;
  e.yi.resize(k);
  e.vi.resize(k);
  for (int i = 0; i < k; ++i) {
    metakit::TwoByTwo t{d.column("tpos").num[i], d.column("tneg").num[i],
                        d.column("cpos").num[i], d.column("cneg").num[i]};
    auto rec = metakit::compute_2x2(t, metakit::Measure::logRR);
    REQUIRE(rec.estimable);
    e.yi(i) = rec.yi;
    e.vi(i) = rec.vi;
  }
  return e;
}

// Writing-to-learn studies: mapped yi/vi columns, complete cases over the
// model variables, feedback treated as categorical.
inline metakit::Dataset load_writing_cc(metakit::CompleteCaseReport* report = nullptr) {
  metakit::Dataset d = metakit::Dataset::load_csv(
      data_path("writing.csv"), {{"feedback", metakit::ColType::categorical}});
  return d.drop_incomplete({"yi", "vi", "length", "feedback"}, report);
}
