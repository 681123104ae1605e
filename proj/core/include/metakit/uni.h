#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "metakit/escalc.h"
#include "metakit/kernel.h"

namespace metakit {

enum class Tau2Method { REML, ML, DL, PM, HE, FE };
enum class TestType { knapp_hartung, wald_z };
enum class EstTransform { none, exp_t, tanh_t };

struct UniModelSpec {
  Tau2Method method = Tau2Method::REML;
  TestType test = TestType::knapp_hartung;
  std::optional<double> fixed_tau2;
  EstTransform transform = EstTransform::none;
  double ci_level = 0.95;
  bool kh_truncate = false;  // truncate the KH scale at 1 when true
};

struct CoefTable {
  std::vector<std::string> names;
  Eigen::VectorXd est, se, stat, pval, ci_lb, ci_ub;
};

struct UniFit {
  Eigen::VectorXd b;
  Eigen::MatrixXd cov_b;     // test-adjusted (KH-scaled when applicable)
  Eigen::MatrixXd cov_b_unscaled;
  double tau2 = 0.0;
  double se_tau2 = 0.0;      // NaN for moment estimators
  double QE = 0.0, QEp = 1.0;
  int QE_df = 0;
  double QM = 0.0, QMp = 1.0;
  int QM_df1 = 0, QM_df2 = 0;
  double I2 = 0.0, H2 = 1.0;
  double loglik = 0.0;       // restricted for REML, otherwise full ML
  double loglik_ml = 0.0;
  double AIC = 0.0, BIC = 0.0;
  int k = 0, p = 0;
  double kh_scale = 1.0;
  UniModelSpec spec;
  CoefTable coefs;

  // Inputs retained for post-fit work.
  Eigen::VectorXd y, v;
  DesignMatrix design;

  double df_test() const { return static_cast<double>(k - p); }
};

struct ScaleFit {
  Eigen::VectorXd alpha;
  Eigen::MatrixXd cov_alpha;
  Eigen::VectorXd tau2_i;    // exp(z_i' alpha)
  CoefTable coefs;           // Wald z tests on alpha
  DesignMatrix design;       // scale design Z
  double loglik = 0.0;       // restricted, shared with the location part
  int iterations = 0;
};

struct Interval {
  double lb = 0.0, ub = 0.0;
  bool lb_open = false, ub_open = false;  // flags for collapsed/open endpoints
};

// tau^2 point estimation. X is the fixed-effects design.
double estimate_tau2(Tau2Method method, const Eigen::VectorXd& y,
                     const Eigen::VectorXd& v, const Eigen::MatrixXd& X,
                     bool* boundary_flag = nullptr);

UniFit fit_uni(const UniModelSpec& spec, const Eigen::VectorXd& y,
               const Eigen::VectorXd& v, const DesignMatrix& design);

// I^2 / H^2 with the "typical" sampling variance s^2 = (k-p)/tr(P) at
// fixed-effect weights.
void heterogeneity_stats(const Eigen::VectorXd& v, const Eigen::MatrixXd& X,
                         double tau2, double* I2, double* H2);

// Q-profile confidence interval for tau^2.
Interval ci_tau2_qprofile(const Eigen::VectorXd& y, const Eigen::VectorXd& v,
                          const Eigen::MatrixXd& X, double level = 0.95);

// Prediction interval for a new study's true effect (intercept models).
Interval prediction_interval(const UniFit& fit, double level = 0.95);

// Joint location-scale REML fit; Z is the scale design (log tau^2 linear).
std::pair<UniFit, ScaleFit> fit_location_scale(const UniModelSpec& spec,
                                               const Eigen::VectorXd& y,
                                               const Eigen::VectorXd& v,
                                               const DesignMatrix& X,
                                               const DesignMatrix& Z);

struct SubgroupResult {
  std::vector<std::string> group_labels;
  std::vector<UniFit> fits;
  std::vector<std::string> skipped;  // groups with too few rows
  double Q_between = 0.0;
  int df = 0;
  double pval = 1.0;
};

SubgroupResult subgroup_analysis(const UniModelSpec& spec, const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& v,
                                 const std::vector<std::string>& group,
                                 int min_rows = 2);

struct PooledTable {
  double est = 0.0, se = 0.0, zval = 0.0, pval = 1.0, ci_lb = 0.0, ci_ub = 0.0;
  int k = 0;
  std::string measure_label;
};

enum class MHMeasure { RR, OR, RD };
PooledTable fit_mh(const std::vector<TwoByTwo>& tables, MHMeasure measure,
                   double ci_level = 0.95);
PooledTable fit_peto(const std::vector<TwoByTwo>& tables, double ci_level = 0.95);

struct TransformedEstimate {
  double point = 0.0, lb = 0.0, ub = 0.0;
  bool transformed = false;
};
TransformedEstimate transform_estimates(double point, double lb, double ub,
                                        EstTransform transform);

Tau2Method tau2_method_from_string(const std::string& s);
std::string tau2_method_to_string(Tau2Method m);

}  // namespace metakit
