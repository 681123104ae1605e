#include "metakit/errors.h"
#include "metakit/uni.h"
#include "support.h"

using metakit::build_design;
using metakit::Dataset;
using metakit::parse_term;
using metakit::Term;

TEST_CASE("term parsing") {
  CHECK(parse_term("ablat").vars == std::vector<std::string>{"ablat"});
  Term t = parse_term(" alloc : ablat ");
  CHECK(t.vars == std::vector<std::string>{"alloc", "ablat"});
  CHECK(t.label() == "alloc:ablat");
}

TEST_CASE("design expansion: main effects and reference levels") {
  Dataset cc = load_writing_cc();
  auto d = build_design(cc, {parse_term("length"), parse_term("feedback")});
  CHECK(d.k() == 45);
  CHECK(d.p() == 3);
  CHECK(d.colnames == std::vector<std::string>{"intercept", "length", "feedback=1"});
  CHECK(d.X.col(0).sum() == 45.0);
  check_close(d.X.col(2).sum(), oracle::writing::feedback_n_lvl1, 1e-12);

  // Variable summaries feed EMM grids later.
  int li = d.var_index("length");
  REQUIRE(li >= 0);
  check_close(d.vars[li].mean, oracle::writing::length_mean, 1e-12);
  check_close(d.vars[li].sd, oracle::writing::length_sd, 1e-12);
}

TEST_CASE("design expansion: interaction columns") {
  Dataset bcg = Dataset::load_csv(data_path("bcg.csv"));
  auto d = build_design(bcg, {parse_term("alloc"), parse_term("ablat"),
                              parse_term("alloc:ablat")});
  CHECK(d.p() == 6);
  CHECK(d.colnames[0] == "intercept");
  CHECK(d.colnames[1] == "alloc=random");
  CHECK(d.colnames[2] == "alloc=systematic");
  CHECK(d.colnames[3] == "ablat");
  CHECK(d.colnames[4] == "alloc=random:ablat");
  CHECK(d.colnames[5] == "alloc=systematic:ablat");
  // The interaction column is the elementwise product of its parents.
  for (int i = 0; i < d.k(); ++i) {
    CHECK(d.X(i, 4) == d.X(i, 1) * d.X(i, 3));
  }
}

TEST_CASE("design row builder reproduces model-matrix rows") {
  Dataset cc = load_writing_cc();
  auto d = build_design(cc, {parse_term("length"), parse_term("feedback")});
  // vars order: length (continuous), feedback (categorical)
  int li = d.var_index("length");
  int fi = d.var_index("feedback");
  std::vector<double> num(d.vars.size(), 0.0);
  std::vector<int> cat(d.vars.size(), 0);
  num[li] = 15.0;
  cat[fi] = 1;
  Eigen::RowVectorXd r = d.row(num, cat);
  REQUIRE(r.size() == 3);
  CHECK(r(0) == 1.0);
  CHECK(r(1) == 15.0);
  CHECK(r(2) == 1.0);
}

TEST_CASE("rank-deficient designs are rejected with column names") {
  Dataset cc = load_writing_cc();
  // length duplicated through an interaction with itself is collinear.
  CHECK_THROWS_AS(build_design(cc, {parse_term("length"), parse_term("length")}),
                  metakit::SchemaError);
  try {
    build_design(cc, {parse_term("length"), parse_term("length")});
  } catch (const metakit::SchemaError& e) {
    CHECK(std::string(e.what()).find("length") != std::string::npos);
  }
}

TEST_CASE("missing model variables are a schema error") {
  Dataset d = Dataset::load_csv(data_path("writing.csv"),
                                {{"feedback", metakit::ColType::categorical}});
  // 'length' has missing entries before listwise deletion.
  CHECK_THROWS_AS(build_design(d, {parse_term("length")}), metakit::SchemaError);
}

TEST_CASE("restricted loglik profile matches the reference at fixed tau2") {
  EffectData e = load_bcg_rr();
  Eigen::MatrixXd X = Eigen::MatrixXd::Ones(13, 1);
  auto ll = [&](double t2) {
    Eigen::MatrixXd M = (e.vi.array() + t2).matrix().asDiagonal();
    return metakit::reml_loglik(e.yi, X, M);
  };
  check_close(ll(0.0), oracle::bcg::reml_ll_at_0, 1e-10);
  check_close(ll(0.1), oracle::bcg::reml_ll_at_0p1, 1e-10);
  check_close(ll(0.3132), oracle::bcg::reml_ll_at_0p3132, 1e-10);
  check_close(ll(1.0), oracle::bcg::reml_ll_at_1, 1e-10);
  check_close(ll(2.0), oracle::bcg::reml_ll_at_2, 1e-10);
}

TEST_CASE("q statistic at inverse-variance weights") {
  EffectData e = load_bcg_rr();
  Eigen::MatrixXd X = Eigen::MatrixXd::Ones(13, 1);
  double QE = metakit::q_statistic(e.yi, X, e.vi.cwiseInverse());
  check_close(QE, oracle::bcg::fe_QE, 1e-10);
}

TEST_CASE("wls rejects non positive definite marginals") {
  Eigen::VectorXd y(2);
  y << 1.0, 2.0;
  Eigen::MatrixXd X = Eigen::MatrixXd::Ones(2, 1);
  Eigen::MatrixXd M(2, 2);
  M << 1.0, 2.0, 2.0, 1.0;  // indefinite
  CHECK_THROWS_AS(metakit::wls_fit(y, X, M), metakit::ComputeError);
}
