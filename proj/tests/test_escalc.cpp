#include "metakit/errors.h"
#include "support.h"

using metakit::compute_2x2;
using metakit::compute_fisher_z;
using metakit::compute_smd;
using metakit::ContinuousGroups;
using metakit::Measure;
using metakit::TwoByTwo;

TEST_CASE("hedges g with small-sample correction") {
  ContinuousGroups g{5.5, 4.8, 1.2, 1.5, 25, 30};
  auto r = compute_smd(g);
  REQUIRE(r.estimable);
  check_close(r.yi, oracle::toy::smd_yi);
  check_close(r.vi, oracle::toy::smd_vi);
}

TEST_CASE("smd with zero pooled sd is not estimable") {
  ContinuousGroups g{5.0, 5.0, 0.0, 0.0, 10, 10};
  auto r = compute_smd(g);
  CHECK_FALSE(r.estimable);
  CHECK_FALSE(r.note.empty());
}

TEST_CASE("log odds ratio with a zero cell adds 0.5 to all cells") {
  auto r = compute_2x2(TwoByTwo{0, 10, 5, 5}, Measure::logOR);
  REQUIRE(r.estimable);
  check_close(r.yi, oracle::toy::or_zerocell_yi);
  check_close(r.vi, oracle::toy::or_zerocell_vi);
}

TEST_CASE("log relative risk with a zero cell") {
  auto r = compute_2x2(TwoByTwo{0, 10, 5, 5}, Measure::logRR);
  REQUIRE(r.estimable);
  check_close(r.yi, oracle::toy::rr_zerocell_yi);
  check_close(r.vi, oracle::toy::rr_zerocell_vi);
}

TEST_CASE("double-zero tables are not estimable for ratio measures") {
  auto rr = compute_2x2(TwoByTwo{0, 10, 0, 12}, Measure::logRR);
  CHECK_FALSE(rr.estimable);
  auto orr = compute_2x2(TwoByTwo{0, 10, 0, 12}, Measure::logOR);
  CHECK_FALSE(orr.estimable);
  // Risk difference is still defined.
  auto rd = compute_2x2(TwoByTwo{0, 10, 0, 12}, Measure::RD);
  CHECK(rd.estimable);
}

TEST_CASE("risk difference without correction") {
  auto r = compute_2x2(TwoByTwo{4, 119, 11, 128}, Measure::RD);
  REQUIRE(r.estimable);
  check_close(r.yi, oracle::toy::rd_yi);
  check_close(r.vi, oracle::toy::rd_vi);
}

TEST_CASE("fisher z transform of a correlation") {
  auto r = compute_fisher_z(0.5, 28);
  REQUIRE(r.estimable);
  check_close(r.yi, oracle::toy::zcor_yi);
  check_close(r.vi, oracle::toy::zcor_vi);
  CHECK_FALSE(compute_fisher_z(0.5, 3).estimable);
}

TEST_CASE("bcg corpus: log relative risks match the reference implementation") {
  EffectData e = load_bcg_rr();
  REQUIRE(e.yi.size() == 13);
  for (int i = 0; i < 13; ++i) {
    check_close(e.yi(i), oracle::bcg::escalc_rr_yi[i], 1e-10);
    check_close(e.vi(i), oracle::bcg::escalc_rr_vi[i], 1e-10);
  }
  check_close(e.yi.sum(), oracle::bcg::escalc_rr_yi_sum, 1e-10);
  check_close(e.vi.sum(), oracle::bcg::escalc_rr_vi_sum, 1e-10);
}

TEST_CASE("measure names round-trip") {
  CHECK(metakit::measure_from_string("logRR") == Measure::logRR);
  CHECK(metakit::measure_from_string("RR") == Measure::logRR);
  CHECK(metakit::measure_from_string("SMD") == Measure::SMD);
  CHECK(metakit::measure_to_string(Measure::ZCOR) == "ZCOR");
  CHECK_THROWS_AS(metakit::measure_from_string("bogus"), metakit::SchemaError);
}
