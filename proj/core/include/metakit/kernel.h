#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "metakit/dataset.h"

namespace metakit {

// One fixed-effects term: a single column name, or several for an
// interaction ("a:b" style).
struct Term {
  std::vector<std::string> vars;
  std::string label() const;
};

struct VarInfo {
  std::string name;
  bool categorical = false;
  std::vector<std::string> levels;  // categorical only
  double mean = 0.0;                // continuous only, complete-case mean
  double sd = 0.0;
};

struct TermBlock {
  std::vector<int> var_idx;  // indices into DesignMatrix::vars
  int col_begin = 0, col_end = 0;
  std::string label;
};

struct DesignMatrix {
  Eigen::MatrixXd X;
  bool intercept = true;
  std::vector<VarInfo> vars;
  std::vector<TermBlock> terms;
  std::vector<std::string> colnames;

  int k() const { return static_cast<int>(X.rows()); }
  int p() const { return static_cast<int>(X.cols()); }

  // Model-matrix row for one assignment of every design variable:
  // numval[v] for continuous vars, catval[v] a level index for categorical.
  Eigen::RowVectorXd row(const std::vector<double>& numval,
                         const std::vector<int>& catval) const;

  int var_index(const std::string& name) const;  // -1 when absent
  const TermBlock* find_term(const std::string& label) const;
};

// Expands terms against the dataset: categorical vars to levels-1 dummies
// against the lexicographically first level, interactions to elementwise
// products. Throws on rank deficiency, naming the offending columns.
DesignMatrix build_design(const Dataset& d, const std::vector<Term>& terms,
                          bool intercept = true);

struct WLSFit {
  Eigen::VectorXd b;
  Eigen::MatrixXd cov_b;        // (X' M^-1 X)^-1
  Eigen::VectorXd residuals;    // y - X b
  Eigen::MatrixXd hat;          // X cov_b X' M^-1
  double rss_weighted = 0.0;    // r' M^-1 r
};

// Generalized least squares via Cholesky; M must be symmetric PD.
WLSFit wls_fit(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
               const Eigen::MatrixXd& M);

// Cochran-type Q: weighted residual sum of squares about the W-weighted fit.
double q_statistic(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                   const Eigen::VectorXd& w);

// Restricted / full Gaussian log-likelihood at covariance M, with the GLS
// coefficients profiled out.
double reml_loglik(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                   const Eigen::MatrixXd& M);
double ml_loglik(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                 const Eigen::MatrixXd& M);

// Parses "a:b:c" into a Term.
Term parse_term(const std::string& spec);

}  // namespace metakit
