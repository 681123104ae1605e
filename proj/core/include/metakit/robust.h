#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "metakit/mv.h"
#include "metakit/tables.h"
#include "metakit/uni.h"

namespace metakit {

enum class CRType { CR0, CR1, CR2 };

struct RobustOptions {
  CRType type = CRType::CR2;
  // Zero out eigenvalues below the cutoff in the CR2 adjustment instead of
  // raising an error for the offending cluster.
  bool allow_pseudo_inverse = false;
};

struct RobustFit {
  CRType type = CRType::CR2;
  int n_clusters = 0;
  Eigen::MatrixXd cov_robust;          // p x p sandwich covariance
  Eigen::VectorXd df;                  // per-coefficient Satterthwaite df
  std::vector<std::string> coef_names;
  std::vector<std::string> cluster_labels;  // first-appearance order
  bool pseudo_inverse_used = false;
};

// Cluster-robust covariance for a fitted model. The clustering vector assigns
// one label per data row and must be at least as coarse as the blocks of the
// marginal covariance. Working weights are the model-implied inverse marginal
// covariance; the Knapp-Hartung scale of the original fit is ignored.
RobustFit cluster_robust(const UniFit& fit, const std::vector<std::string>& clustering,
                         const RobustOptions& opts = {});
RobustFit cluster_robust(const MVFit& fit, const std::vector<std::string>& clustering,
                         const RobustOptions& opts = {});
RobustFit cluster_robust(const UniFit& fit, const Dataset& data,
                         const std::string& cluster_col, const RobustOptions& opts = {});
RobustFit cluster_robust(const MVFit& fit, const Dataset& data,
                         const std::string& cluster_col, const RobustOptions& opts = {});

// Per-coefficient t tests against the supplied null values (zeros when empty),
// with p-values and confidence intervals from t references at each
// coefficient's Satterthwaite df.
ResultTable robust_coef_tests(const RobustFit& rf, const UniFit& fit,
                              const Eigen::VectorXd& test_values = Eigen::VectorXd(),
                              double level = 0.95);
ResultTable robust_coef_tests(const RobustFit& rf, const MVFit& fit,
                              const Eigen::VectorXd& test_values = Eigen::VectorXd(),
                              double level = 0.95);

}  // namespace metakit
