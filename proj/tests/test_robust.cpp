#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "metakit/errors.h"
#include "metakit/mv.h"
#include "metakit/robust.h"
#include "metakit/stats.h"
#include "metakit/tables.h"
#include "metakit/uni.h"
#include "support.h"

using namespace metakit;

namespace {

Column real_col(const std::vector<double>& v) {
  Column c;
  c.type = ColType::real;
  c.num = v;
  c.miss.assign(v.size(), 0);
  for (std::size_t i = 0; i < v.size(); ++i)
    if (std::isnan(v[i])) c.miss[i] = 1;
  return c;
}

Column text_col(const std::vector<std::string>& v) {
  Column c;
  c.type = ColType::text;
  c.txt = v;
  c.miss.assign(v.size(), 0);
  return c;
}

// 3 clusters x 2 rows, FE working model, X = [1, x].
struct CrToy {
  Dataset d;
  UniFit fit;
  std::vector<std::string> cl;
};

CrToy make_cr_toy(double y_scale = 1.0) {
  std::vector<double> y = {0.1, 0.3, -0.2, 0.4, 0.0, 0.5};
  for (double& yi : y) yi *= y_scale;
  std::vector<int> ids(6);
  std::iota(ids.begin(), ids.end(), 0);
  CrToy t{Dataset::from_columns(
              {"y", "v", "x", "cl"},
              {real_col(y), real_col({0.04, 0.09, 0.05, 0.02, 0.08, 0.03}),
               real_col({0, 1, 0, 1, 0, 1}),
               text_col({"1", "1", "2", "2", "3", "3"})},
              ids),
          {},
          {"1", "1", "2", "2", "3", "3"}};
  Eigen::VectorXd yv(6), vv(6);
  for (int i = 0; i < 6; ++i) {
    yv(i) = t.d.column("y").num[i];
    vv(i) = t.d.column("v").num[i];
  }
  UniModelSpec spec;
  spec.method = Tau2Method::FE;
  spec.test = TestType::wald_z;
  t.fit = fit_uni(spec, yv, vv, build_design(t.d, {parse_term("x")}));
  return t;
}

// 4 clusters x 2 rows, equal sampling variances, intercept only.
CrToy make_balanced_toy() {
  std::vector<int> ids(8);
  std::iota(ids.begin(), ids.end(), 0);
  CrToy t{Dataset::from_columns(
              {"y", "v", "cl"},
              {real_col({0.12, -0.34, 0.51, 0.27, -0.08, 0.44, 0.19, -0.25}),
               real_col(std::vector<double>(8, 0.1)),
               text_col({"1", "1", "2", "2", "3", "3", "4", "4"})},
              ids),
          {},
          {"1", "1", "2", "2", "3", "3", "4", "4"}};
  Eigen::VectorXd yv(8), vv(8);
  for (int i = 0; i < 8; ++i) {
    yv(i) = t.d.column("y").num[i];
    vv(i) = t.d.column("v").num[i];
  }
  UniModelSpec spec;
  spec.method = Tau2Method::FE;
  spec.test = TestType::wald_z;
  t.fit = fit_uni(spec, yv, vv, build_design(t.d, {}));
  return t;
}

struct RecidFit {
  Dataset d;
  VMatrix V;
  MVFit fit;
  std::vector<std::string> cl;
};

RecidFit load_recid_fit() {
  RecidFit r{Dataset::load_csv(data_path("recidivism.csv")), {}, {}, {}};
  const int k = r.d.nrow();
  REQUIRE(k == 100);
  Eigen::VectorXd yi(k);
  for (int i = 0; i < k; ++i) yi(i) = r.d.column("yi").num[i];
  r.V = vcalc({"study", "esid", "deltype", 0.70, 0.50}, r.d, "vi");
  MvOptions opts;
  opts.test = TestType::wald_z;
  r.fit = fit_mv(yi, build_design(r.d, {}), r.V, NestedRandomSpec{"study", "esid"}, r.d, opts);
  for (int i = 0; i < k; ++i) r.cl.push_back(r.d.cell_text("study", i));
  return r;
}

double table_real(const ResultTable& t, const std::string& col, int row) {
  return t.column(col).real[static_cast<std::size_t>(row)];
}

}  // namespace

TEST_CASE("toy CR0/CR1/CR2 covariances, dfs and p-values match the oracle") {
  CrToy t = make_cr_toy();
  check_close(t.fit.b(0), oracle::toy::toy_fe_b[0], 1e-12, 1e-15);
  check_close(t.fit.b(1), oracle::toy::toy_fe_b[1], 1e-12, 1e-15);

  struct Want {
    CRType type;
    const double* cov;
    const double* df;
    const double* p;
  };
  const Want wants[] = {
      {CRType::CR0, oracle::toy::toy_cr0_cov, oracle::toy::toy_cr0_df, oracle::toy::toy_cr0_p},
      {CRType::CR1, oracle::toy::toy_cr1_cov, oracle::toy::toy_cr1_df, oracle::toy::toy_cr1_p},
      {CRType::CR2, oracle::toy::toy_cr2_cov, oracle::toy::toy_cr2_df, oracle::toy::toy_cr2_p},
  };
  for (const Want& w : wants) {
    CAPTURE(static_cast<int>(w.type));
    RobustOptions o;
    o.type = w.type;
    RobustFit rf = cluster_robust(t.fit, t.cl, o);
    CHECK(rf.n_clusters == 3);
    CHECK(rf.type == w.type);
    CHECK_FALSE(rf.pseudo_inverse_used);
    check_close(rf.cov_robust(0, 0), w.cov[0], 1e-12, 1e-15);
    check_close(rf.cov_robust(0, 1), w.cov[1], 1e-12, 1e-15);
    check_close(rf.cov_robust(1, 1), w.cov[2], 1e-12, 1e-15);
    CHECK(rf.cov_robust(1, 0) == rf.cov_robust(0, 1));
    check_close(rf.df(0), w.df[0], 1e-12, 1e-15);
    check_close(rf.df(1), w.df[1], 1e-12, 1e-15);
    ResultTable tab = robust_coef_tests(rf, t.fit);
    check_close(table_real(tab, "pval", 0), w.p[0], 1e-12, 1e-15);
    check_close(table_real(tab, "pval", 1), w.p[1], 1e-12, 1e-15);
    // df never exceeds G - 1 and stays positive
    for (int j = 0; j < 2; ++j) {
      CHECK(rf.df(j) > 0.0);
      CHECK(rf.df(j) <= 3.0 - 1.0 + 1e-8);
    }
  }

  SUBCASE("CR0 matches a literal hand-rolled sandwich") {
    RobustOptions o;
    o.type = CRType::CR0;
    RobustFit rf = cluster_robust(t.fit, t.cl, o);
    const Eigen::MatrixXd& X = t.fit.design.X;
    const Eigen::VectorXd w = t.fit.v.cwiseInverse();
    Eigen::MatrixXd XtWX = X.transpose() * w.asDiagonal() * X;
    Eigen::MatrixXd B = XtWX.inverse();
    Eigen::VectorXd e = t.fit.y - X * t.fit.b;
    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(2, 2);
    for (int g = 0; g < 3; ++g) {
      Eigen::VectorXd u = Eigen::VectorXd::Zero(2);
      for (int i = 2 * g; i < 2 * g + 2; ++i) u += X.row(i).transpose() * w(i) * e(i);
      meat += u * u.transpose();
    }
    Eigen::MatrixXd cov = B * meat * B;
    for (int a = 0; a < 2; ++a)
      for (int b2 = 0; b2 < 2; ++b2) check_close(rf.cov_robust(a, b2), cov(a, b2), 1e-13, 1e-15);
  }

  SUBCASE("CR1 equals CR0 scaled by G/(G-1), with identical dfs") {
    RobustOptions o0, o1;
    o0.type = CRType::CR0;
    o1.type = CRType::CR1;
    RobustFit r0 = cluster_robust(t.fit, t.cl, o0);
    RobustFit r1 = cluster_robust(t.fit, t.cl, o1);
    const double c = 3.0 / 2.0;
    for (int a = 0; a < 2; ++a)
      for (int b2 = 0; b2 < 2; ++b2)
        check_close(r1.cov_robust(a, b2), c * r0.cov_robust(a, b2), 1e-14, 1e-15);
    check_close(r1.df(0), r0.df(0), 1e-12, 1e-15);
    check_close(r1.df(1), r0.df(1), 1e-12, 1e-15);
  }

  SUBCASE("doubling yi doubles robust SEs and leaves t and df unchanged") {
    CrToy t2 = make_cr_toy(2.0);
    RobustFit a = cluster_robust(t.fit, t.cl);
    RobustFit b = cluster_robust(t2.fit, t2.cl);
    for (int j = 0; j < 2; ++j) {
      check_close(std::sqrt(b.cov_robust(j, j)), 2.0 * std::sqrt(a.cov_robust(j, j)), 1e-12, 1e-15);
      check_close(b.df(j), a.df(j), 1e-12, 1e-15);
    }
    ResultTable ta = robust_coef_tests(a, t.fit);
    ResultTable tb = robust_coef_tests(b, t2.fit);
    check_close(table_real(tb, "stat", 1), table_real(ta, "stat", 1), 1e-12, 1e-15);
    check_close(table_real(tb, "pval", 1), table_real(ta, "pval", 1), 1e-12, 1e-15);
  }

  SUBCASE("row and cluster order do not change the result") {
    // reversal makes cluster 3 appear first
    std::vector<int> rev = {5, 4, 3, 2, 1, 0};
    Dataset dr = t.d.keep_rows(rev);
    Eigen::VectorXd yv(6), vv(6);
    for (int i = 0; i < 6; ++i) {
      yv(i) = dr.column("y").num[i];
      vv(i) = dr.column("v").num[i];
    }
    UniModelSpec spec;
    spec.method = Tau2Method::FE;
    spec.test = TestType::wald_z;
    UniFit fr = fit_uni(spec, yv, vv, build_design(dr, {parse_term("x")}));
    std::vector<std::string> clr;
    for (int i = 0; i < 6; ++i) clr.push_back(dr.cell_text("cl", i));
    RobustFit a = cluster_robust(t.fit, t.cl);
    RobustFit b = cluster_robust(fr, clr);
    for (int x = 0; x < 2; ++x)
      for (int y = 0; y < 2; ++y) check_close(b.cov_robust(x, y), a.cov_robust(x, y), 1e-12, 1e-15);
    check_close(b.df(0), a.df(0), 1e-12, 1e-15);
    check_close(b.df(1), a.df(1), 1e-12, 1e-15);
    CHECK(b.cluster_labels.front() == "3");
  }
}

TEST_CASE("balanced intercept-only design gives CR2 df of G-1") {
  CrToy t = make_balanced_toy();
  RobustFit rf = cluster_robust(t.fit, t.cl);
  CHECK(rf.n_clusters == 4);
  CHECK(std::fabs(rf.df(0) - 3.0) < 1e-8);
  check_close(std::sqrt(rf.cov_robust(0, 0)), oracle::toy::bal_cr2_se, 1e-12, 1e-15);
  check_close(rf.df(0), oracle::toy::bal_cr2_df, 1e-12, 1e-15);
  ResultTable tab = robust_coef_tests(rf, t.fit);
  check_close(table_real(tab, "stat", 0), oracle::toy::bal_cr2_t, 1e-12, 1e-15);
  check_close(table_real(tab, "pval", 0), oracle::toy::bal_cr2_p, 1e-12, 1e-15);
}

TEST_CASE("recidivism cluster-robust inference matches the oracle") {
  RecidFit r = load_recid_fit();

  struct Want {
    CRType type;
    double se, tstat, df, p, lb, ub;
  };
  const Want wants[] = {
      {CRType::CR0, oracle::recid::cr0_se, oracle::recid::cr0_t, oracle::recid::cr0_df,
       oracle::recid::cr0_p, oracle::recid::cr0_ci[0], oracle::recid::cr0_ci[1]},
      {CRType::CR1, oracle::recid::cr1_se, oracle::recid::cr1_t, oracle::recid::cr1_df,
       oracle::recid::cr1_p, oracle::recid::cr1_ci[0], oracle::recid::cr1_ci[1]},
      {CRType::CR2, oracle::recid::cr2_se, oracle::recid::cr2_t, oracle::recid::cr2_df,
       oracle::recid::cr2_p, oracle::recid::cr2_ci[0], oracle::recid::cr2_ci[1]},
  };
  for (const Want& w : wants) {
    CAPTURE(static_cast<int>(w.type));
    RobustOptions o;
    o.type = w.type;
    RobustFit rf = cluster_robust(r.fit, r.cl, o);
    CHECK(rf.n_clusters == 17);
    check_close(std::sqrt(rf.cov_robust(0, 0)), w.se, 1e-4);
    check_close(rf.df(0), w.df, 1e-4);
    CHECK(rf.df(0) > 0.0);
    CHECK(rf.df(0) <= 16.0 + 1e-8);
    ResultTable tab = robust_coef_tests(rf, r.fit);
    check_close(table_real(tab, "est", 0), oracle::recid::mv_b, 1e-5);
    check_close(table_real(tab, "se", 0), w.se, 1e-4);
    check_close(table_real(tab, "stat", 0), w.tstat, 1e-4);
    check_close(table_real(tab, "pval", 0), w.p, 1e-3);
    check_close(table_real(tab, "ci_lb", 0), w.lb, 1e-4);
    check_close(table_real(tab, "ci_ub", 0), w.ub, 1e-4);
  }

  SUBCASE("Dataset overload matches the key-vector overload") {
    RobustFit a = cluster_robust(r.fit, r.cl);
    RobustFit b = cluster_robust(r.fit, r.d, "study");
    CHECK(a.cov_robust(0, 0) == b.cov_robust(0, 0));
    CHECK(a.df(0) == b.df(0));
  }

  SUBCASE("permuting rows of the same fitted model is inert at 1e-12") {
    std::vector<int> perm(100);
    for (int i = 0; i < 100; ++i) perm[static_cast<std::size_t>(i)] = (37 * i + 11) % 100;
    MVFit pf = r.fit;
    const int k = 100;
    Eigen::VectorXd y2(k);
    Eigen::MatrixXd X2(k, r.fit.design.X.cols()), M2(k, k);
    std::vector<std::string> cl2(k);
    for (int i = 0; i < k; ++i) {
      const int pi = perm[static_cast<std::size_t>(i)];
      y2(i) = r.fit.y(pi);
      X2.row(i) = r.fit.design.X.row(pi);
      cl2[static_cast<std::size_t>(i)] = r.cl[static_cast<std::size_t>(pi)];
      for (int j = 0; j < k; ++j)
        M2(i, j) = r.fit.M(pi, perm[static_cast<std::size_t>(j)]);
    }
    pf.y = y2;
    pf.design.X = X2;
    pf.M = M2;
    RobustFit a = cluster_robust(r.fit, r.cl);
    RobustFit b = cluster_robust(pf, cl2);
    check_close(b.cov_robust(0, 0), a.cov_robust(0, 0), 1e-12, 1e-15);
    check_close(b.df(0), a.df(0), 1e-12, 1e-15);
  }

  SUBCASE("clustering finer than the covariance blocks is rejected") {
    std::vector<std::string> esid;
    for (int i = 0; i < 100; ++i) {
      esid.push_back(r.d.cell_text("study", i) + "/" + r.d.cell_text("esid", i));
    }
    CHECK_THROWS_WITH_AS(cluster_robust(r.fit, esid),
                         doctest::Contains("finer than the covariance blocks"), SchemaError);
  }

  SUBCASE("KH scaling of the original fit does not leak into the sandwich") {
    MvOptions kh;
    kh.test = TestType::knapp_hartung;
    Eigen::VectorXd yi = r.fit.y;
    MVFit khfit =
        fit_mv(yi, r.fit.design, r.V, NestedRandomSpec{"study", "esid"}, r.d, kh);
    RobustFit a = cluster_robust(r.fit, r.cl);
    RobustFit b = cluster_robust(khfit, r.cl);
    check_close(b.cov_robust(0, 0), a.cov_robust(0, 0), 1e-8);
    check_close(b.df(0), a.df(0), 1e-8);
  }
}

TEST_CASE("robust_coef_tests details") {
  CrToy t = make_cr_toy();
  RobustFit rf = cluster_robust(t.fit, t.cl);

  SUBCASE("testing against the fitted values gives t = 0 and p = 1") {
    ResultTable tab = robust_coef_tests(rf, t.fit, t.fit.b);
    for (int j = 0; j < 2; ++j) {
      CHECK(table_real(tab, "stat", j) == 0.0);
      CHECK(table_real(tab, "pval", j) == 1.0);
      CHECK(table_real(tab, "null_value", j) == t.fit.b(j));
    }
  }

  SUBCASE("default nulls are zeros and CIs use the Satterthwaite df") {
    ResultTable tab = robust_coef_tests(rf, t.fit);
    CHECK(tab.name == "robust_coefficient_tests");
    CHECK(tab.nrow() == 2);
    for (int j = 0; j < 2; ++j) {
      const double se = std::sqrt(rf.cov_robust(j, j));
      const double q = stats::qt(0.975, rf.df(j));
      CHECK(table_real(tab, "null_value", j) == 0.0);
      check_close(table_real(tab, "se", j), se, 1e-14, 1e-15);
      check_close(table_real(tab, "stat", j), t.fit.b(j) / se, 1e-14, 1e-15);
      check_close(table_real(tab, "ci_lb", j), t.fit.b(j) - q * se, 1e-14, 1e-15);
      check_close(table_real(tab, "ci_ub", j), t.fit.b(j) + q * se, 1e-14, 1e-15);
    }
    const std::string js = table_to_json(tab);
    CHECK(js.find("\"robust_coefficient_tests\"") != std::string::npos);
    CHECK(js.find("CR2") != std::string::npos);
  }

  SUBCASE("a 90% level narrows the interval") {
    ResultTable t95 = robust_coef_tests(rf, t.fit);
    ResultTable t90 = robust_coef_tests(rf, t.fit, Eigen::VectorXd(), 0.90);
    CHECK(table_real(t90, "ci_lb", 1) > table_real(t95, "ci_lb", 1));
    CHECK(table_real(t90, "ci_ub", 1) < table_real(t95, "ci_ub", 1));
  }

  SUBCASE("wrong-length nulls are rejected") {
    Eigen::VectorXd bad(3);
    bad << 0, 0, 0;
    CHECK_THROWS_AS(robust_coef_tests(rf, t.fit, bad), SchemaError);
  }
}

TEST_CASE("cluster_robust error handling") {
  CrToy t = make_cr_toy();

  SUBCASE("a single cluster is rejected") {
    std::vector<std::string> one(6, "a");
    CHECK_THROWS_WITH_AS(cluster_robust(t.fit, one),
                         doctest::Contains("at least 2 clusters"), ComputeError);
  }

  SUBCASE("clustering length mismatch is rejected") {
    std::vector<std::string> five(5, "a");
    CHECK_THROWS_AS(cluster_robust(t.fit, five), SchemaError);
  }

  SUBCASE("missing cluster values are rejected by the Dataset overload") {
    std::vector<int> ids(6);
    std::iota(ids.begin(), ids.end(), 0);
    Column cl = text_col({"1", "1", "2", "2", "3", "3"});
    cl.miss[3] = 1;
    Dataset d = Dataset::from_columns(
        {"y", "cl"}, {real_col({0.1, 0.3, -0.2, 0.4, 0.0, 0.5}), cl}, ids);
    CHECK_THROWS_WITH_AS(cluster_robust(t.fit, d, "cl"),
                         doctest::Contains("missing value"), SchemaError);
    CHECK_THROWS_WITH_AS(cluster_robust(t.fit, d, "nope"),
                         doctest::Contains("unknown column"), SchemaError);
  }

  SUBCASE("a cluster-level dummy makes the CR2 adjustment singular") {
    std::vector<int> ids(4);
    std::iota(ids.begin(), ids.end(), 0);
    Dataset d = Dataset::from_columns(
        {"y", "v", "d", "cl"},
        {real_col({0.2, 0.5, -0.1, 0.3}), real_col({0.05, 0.05, 0.08, 0.08}),
         real_col({1, 1, 0, 0}), text_col({"1", "1", "2", "2"})},
        ids);
    Eigen::VectorXd yv(4), vv(4);
    for (int i = 0; i < 4; ++i) {
      yv(i) = d.column("y").num[i];
      vv(i) = d.column("v").num[i];
    }
    UniModelSpec spec;
    spec.method = Tau2Method::FE;
    spec.test = TestType::wald_z;
    UniFit fit = fit_uni(spec, yv, vv, build_design(d, {parse_term("d")}));
    std::vector<std::string> cl = {"1", "1", "2", "2"};
    CHECK_THROWS_WITH_AS(cluster_robust(fit, cl),
                         doctest::Contains("singular for cluster '1'"), ComputeError);

    RobustOptions o;
    o.allow_pseudo_inverse = true;
    RobustFit rf = cluster_robust(fit, cl, o);
    CHECK(rf.pseudo_inverse_used);
    CHECK(std::isfinite(rf.cov_robust(0, 0)));

    // CR0 has no adjustment to invert, so it still works
    RobustOptions o0;
    o0.type = CRType::CR0;
    CHECK_NOTHROW(cluster_robust(fit, cl, o0));
  }

  SUBCASE("location-scale location fits have no single working tau2") {
    std::vector<int> ids(6);
    std::iota(ids.begin(), ids.end(), 0);
    Dataset d = Dataset::from_columns(
        {"y", "v", "x"},
        {real_col({0.1, 0.3, -0.2, 0.4, 0.0, 0.5}),
         real_col({0.04, 0.09, 0.05, 0.02, 0.08, 0.03}), real_col({0, 1, 0, 1, 0, 1})},
        ids);
    Eigen::VectorXd yv(6), vv(6);
    for (int i = 0; i < 6; ++i) {
      yv(i) = d.column("y").num[i];
      vv(i) = d.column("v").num[i];
    }
    UniModelSpec spec;
    spec.test = TestType::wald_z;
    auto ls = fit_location_scale(spec, yv, vv, build_design(d, {}),
                                 build_design(d, {parse_term("x")}));
    CHECK_THROWS_WITH_AS(cluster_robust(ls.first, {"1", "1", "2", "2", "3", "3"}),
                         doctest::Contains("finite working model"), SchemaError);
  }
}
