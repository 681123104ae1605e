#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "metakit/dataset.h"
#include "metakit/kernel.h"
#include "metakit/tables.h"
#include "metakit/uni.h"

namespace metakit {

// Dependency structure for constructing the effect-size variance-covariance
// matrix. Off-diagonal correlation within a cluster is rho_within_type when
// the two rows share a construct type, rho_between_type otherwise; with no
// construct_type column every same-cluster pair uses rho_within_type.
struct VcalcSpec {
  std::string cluster;
  std::string construct;       // optional observation-identity column, "" = absent
  std::string construct_type;  // optional type column, "" = absent
  double rho_within_type = 0.0;
  double rho_between_type = 0.0;
};

struct VMatrix {
  Eigen::MatrixXd V;  // k x k symmetric, row order bound to row_ids
  std::vector<int> row_ids;
};

// Nested random intercepts: level1 is the outer grouping (study), level2 the
// inner one (estimate id). level2 ids may repeat across level1 groups; they
// are disambiguated by composite (level1, level2) keys.
struct NestedRandomSpec {
  std::string level1;
  std::string level2;
};

struct MvOptions {
  TestType test = TestType::wald_z;
  double ci_level = 0.95;
  bool kh_truncate = false;  // truncate the KH-type scale at 1 when true
  // Pin a variance component instead of estimating it (inclusion tests pin 0).
  std::optional<double> fix_sigma2_study;
  std::optional<double> fix_sigma2_esid;
};

struct MVFit {
  Eigen::VectorXd b;
  Eigen::MatrixXd cov_b;  // test-adjusted (KH-type scaled when selected)
  Eigen::MatrixXd cov_b_unscaled;
  double sigma2_study = 0.0;
  double sigma2_esid = 0.0;
  bool boundary_study = false;  // estimated component collapsed to 0
  bool boundary_esid = false;
  bool fixed_study = false;  // component was pinned via MvOptions
  bool fixed_esid = false;
  double loglik_restricted = 0.0;
  double AIC = 0.0, BIC = 0.0;
  double QE = 0.0, QEp = 1.0;
  int QE_df = 0;
  double QM = 0.0, QMp = 1.0;
  int QM_df1 = 0, QM_df2 = 0;
  double kh_scale = 1.0;
  int k = 0, p = 0;
  int iterations = 0;
  MvOptions opts;
  CoefTable coefs;

  // Inputs retained for refits, profile CIs, robust and post-fit work.
  Eigen::VectorXd y;
  DesignMatrix design;
  Eigen::MatrixXd V;
  Eigen::MatrixXd M;  // marginal covariance at the reported components
  std::vector<std::string> level1_keys;   // per-row outer group key
  std::vector<std::string> level2_keys;   // per-row composite (level1, level2) key
  std::vector<std::string> sigma2_names;  // display names, e.g. {"study", "study/esid"}

  double df_test() const { return static_cast<double>(k - p); }
};

// V[i,j] = vi on the diagonal, exact 0 across clusters, otherwise
// r * sqrt(vi * vj) with r chosen by construct-type equality.
VMatrix vcalc(const VcalcSpec& spec, const Dataset& d,
              const std::string& vi_col = "vi");

// CSV writer/reader for V: k x k numeric entries, no header, dataset row
// order, 17 significant digits (round-trips bit-exactly).
void save_V(const VMatrix& vm, const std::string& path);
VMatrix load_precomputed_V(const std::string& path, const Dataset& d);

// REML fit of the nested-random-effects model
//   y = X b + u_level1 + u_level1/level2 + e,  Cov(e) = V,
// with M = V + sigma2_study Z1 Z1' + sigma2_esid Z2 Z2' (Z2 from composite
// keys; the identity when every row is its own estimate). Log-variance
// quasi-Newton optimization with 5 deterministic restarts.
MVFit fit_mv(const Eigen::VectorXd& y, const DesignMatrix& X, const VMatrix& vm,
             const NestedRandomSpec& random, const Dataset& d,
             const MvOptions& opts = {});

// Overload taking per-row group keys directly (level2 keys are composited
// with level1 internally).
MVFit fit_mv(const Eigen::VectorXd& y, const DesignMatrix& X, const VMatrix& vm,
             const std::vector<std::string>& level1_keys,
             const std::vector<std::string>& level2_keys,
             const std::vector<std::string>& sigma2_names,
             const MvOptions& opts = {});

// Leave-one-component-out likelihood-ratio tests: each variance component
// (and the pair jointly) is pinned to 0 and the model refit with the same X
// and V; LRT = 2 (ll_full - ll_reduced) on restricted likelihoods against a
// naive chi-square (no boundary correction).
ResultTable inclusion_tests(const MVFit& full);

enum class MvComponent { study, esid };

// Profile-likelihood CI for one variance component: the other component is
// re-optimized at each candidate value; endpoints solve
// 2 (ll_max - ll(sigma2)) = qchisq(level, 1), lower endpoint truncated at 0.
Interval ci_sigma_profile(const MVFit& fit, MvComponent component,
                          double level = 0.95);

}  // namespace metakit
