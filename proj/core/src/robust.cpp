#include "metakit/robust.h"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "metakit/errors.h"
#include "metakit/stats.h"

namespace metakit {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Clusters {
  std::vector<std::string> labels;            // first-appearance order
  std::vector<std::vector<int>> rows;         // row indices per cluster
  std::vector<int> of_row;                    // row -> cluster index
};

Clusters group_rows(const std::vector<std::string>& keys) {
  Clusters cl;
  cl.of_row.resize(keys.size());
  std::map<std::string, int> seen;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    auto it = seen.find(keys[i]);
    int g;
    if (it == seen.end()) {
      g = static_cast<int>(cl.labels.size());
      seen.emplace(keys[i], g);
      cl.labels.push_back(keys[i]);
      cl.rows.emplace_back();
    } else {
      g = it->second;
    }
    cl.rows[g].push_back(static_cast<int>(i));
    cl.of_row[static_cast<std::size_t>(i)] = g;
  }
  return cl;
}

std::vector<std::string> keys_from_column(const Dataset& d, const std::string& col) {
  if (!d.has(col)) throw SchemaError("unknown column '" + col + "'");
  std::vector<std::string> keys(static_cast<std::size_t>(d.nrow()));
  for (int i = 0; i < d.nrow(); ++i) {
    if (d.is_missing(col, i))
      throw SchemaError("clustering column '" + col + "' has a missing value in row " +
                        std::to_string(d.row_ids()[static_cast<std::size_t>(i)]));
    keys[static_cast<std::size_t>(i)] = d.cell_text(col, i);
  }
  return keys;
}

// Symmetric inverse square root of the CR2 criterion matrix
// G_j = F (Theta_j - X_j B X_j') F' with F'F = Theta_j (upper Cholesky).
Eigen::MatrixXd cr2_adjustment(const Eigen::MatrixXd& theta, const Eigen::MatrixXd& Xj,
                               const Eigen::MatrixXd& B, const std::string& label,
                               bool allow_pseudo_inverse, bool* pseudo_used) {
  const Eigen::Index n = theta.rows();
  Eigen::LLT<Eigen::MatrixXd> llt(theta);
  if (llt.info() != Eigen::Success)
    throw ComputeError("working covariance block for cluster '" + label +
                       "' is not positive definite");
  Eigen::MatrixXd F = Eigen::MatrixXd(llt.matrixL()).transpose();  // F'F = theta
  Eigen::MatrixXd resid_var = theta - Xj * B * Xj.transpose();     // Var(e_j) under the model
  Eigen::MatrixXd G = F * resid_var * F.transpose();
  G = 0.5 * (G + G.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
  if (es.info() != Eigen::Success)
    throw ComputeError("CR2 eigen decomposition failed for cluster '" + label + "'");
  const Eigen::VectorXd& ev = es.eigenvalues();
  const double cutoff = 1e-12 * std::max(ev(n - 1), 0.0);
  Eigen::VectorXd inv_sqrt(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (ev(i) <= cutoff) {
      if (!allow_pseudo_inverse)
        throw ComputeError("CR2 adjustment is singular for cluster '" + label + "'");
      inv_sqrt(i) = 0.0;
      *pseudo_used = true;
    } else {
      inv_sqrt(i) = 1.0 / std::sqrt(ev(i));
    }
  }
  Eigen::MatrixXd Ghalf_inv =
      es.eigenvectors() * inv_sqrt.asDiagonal() * es.eigenvectors().transpose();
  return F.transpose() * Ghalf_inv * F;
}

// Sandwich covariance and per-coefficient Satterthwaite df for a GLS fit with
// marginal covariance M, block diagonal with respect to the clustering.
RobustFit cluster_robust_impl(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                              const std::vector<std::string>& coef_names,
                              const Eigen::MatrixXd& M, const Eigen::VectorXd& b,
                              const std::vector<std::string>& clustering,
                              const RobustOptions& opts) {
  const int k = static_cast<int>(y.size());
  const int p = static_cast<int>(X.cols());
  if (static_cast<int>(clustering.size()) != k)
    throw SchemaError("clustering length does not match the data");
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < p; ++j)
      if (!std::isfinite(X(i, j)) || !std::isfinite(M(i, i)))
        throw SchemaError("fit does not provide a finite working model");

  Clusters cl = group_rows(clustering);
  const int G = static_cast<int>(cl.labels.size());
  if (G < 2)
    throw ComputeError("cluster-robust inference requires at least 2 clusters (got " +
                       std::to_string(G) + ")");

  // The clustering must be at least as coarse as the covariance blocks.
  for (int i = 0; i < k; ++i)
    for (int j = i + 1; j < k; ++j)
      if (M(i, j) != 0.0 && cl.of_row[static_cast<std::size_t>(i)] !=
                                cl.of_row[static_cast<std::size_t>(j)])
        throw SchemaError(
            "clustering is finer than the covariance blocks: rows " + std::to_string(i + 1) +
            " and " + std::to_string(j + 1) + " are correlated but assigned to clusters '" +
            clustering[static_cast<std::size_t>(i)] + "' and '" +
            clustering[static_cast<std::size_t>(j)] + "'");

  const Eigen::VectorXd e = y - X * b;

  std::vector<Eigen::MatrixXd> X_g(static_cast<std::size_t>(G));
  std::vector<Eigen::MatrixXd> Theta_g(static_cast<std::size_t>(G));
  std::vector<Eigen::MatrixXd> W_g(static_cast<std::size_t>(G));
  std::vector<Eigen::VectorXd> e_g(static_cast<std::size_t>(G));

  Eigen::MatrixXd XtWX = Eigen::MatrixXd::Zero(p, p);
  for (int g = 0; g < G; ++g) {
    const auto& rows = cl.rows[static_cast<std::size_t>(g)];
    const int n = static_cast<int>(rows.size());
    Eigen::MatrixXd Xj(n, p), Tj(n, n);
    Eigen::VectorXd ej(n);
    for (int a = 0; a < n; ++a) {
      Xj.row(a) = X.row(rows[static_cast<std::size_t>(a)]);
      ej(a) = e(rows[static_cast<std::size_t>(a)]);
      for (int c = 0; c < n; ++c)
        Tj(a, c) = M(rows[static_cast<std::size_t>(a)], rows[static_cast<std::size_t>(c)]);
    }
    Eigen::LLT<Eigen::MatrixXd> llt(Tj);
    if (llt.info() != Eigen::Success)
      throw ComputeError("working covariance block for cluster '" +
                         cl.labels[static_cast<std::size_t>(g)] + "' is not positive definite");
    Eigen::MatrixXd Wj = llt.solve(Eigen::MatrixXd::Identity(n, n));
    XtWX.noalias() += Xj.transpose() * Wj * Xj;
    X_g[static_cast<std::size_t>(g)] = std::move(Xj);
    Theta_g[static_cast<std::size_t>(g)] = std::move(Tj);
    W_g[static_cast<std::size_t>(g)] = std::move(Wj);
    e_g[static_cast<std::size_t>(g)] = std::move(ej);
  }

  Eigen::LLT<Eigen::MatrixXd> bread(XtWX);
  if (bread.info() != Eigen::Success)
    throw ComputeError("singular model matrix in the working fit");
  const Eigen::MatrixXd B = bread.solve(Eigen::MatrixXd::Identity(p, p));
  Eigen::LLT<Eigen::MatrixXd> lltB(B);
  if (lltB.info() != Eigen::Success)
    throw ComputeError("coefficient covariance is not positive definite");
  const Eigen::MatrixXd LB = lltB.matrixL();

  RobustFit rf;
  rf.type = opts.type;
  rf.n_clusters = G;
  rf.coef_names = coef_names;
  rf.cluster_labels = cl.labels;

  const double cr1 = std::sqrt(static_cast<double>(G) / (G - 1.0));

  // quad[g](c) = s'_gc Theta_g s_gc and K[g] = (D_g X_g) L_B with
  // D_g = B X_g' W_g A_g; row c of D_g is the score weight vector for b_c.
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(p, p);
  Eigen::MatrixXd quad(G, p);
  std::vector<Eigen::MatrixXd> K(static_cast<std::size_t>(G));
  for (int g = 0; g < G; ++g) {
    const Eigen::MatrixXd& Xj = X_g[static_cast<std::size_t>(g)];
    const Eigen::MatrixXd& Tj = Theta_g[static_cast<std::size_t>(g)];
    const Eigen::MatrixXd& Wj = W_g[static_cast<std::size_t>(g)];
    Eigen::MatrixXd WA;  // W_g A_g
    switch (opts.type) {
      case CRType::CR0: WA = Wj; break;
      case CRType::CR1: WA = cr1 * Wj; break;
      case CRType::CR2:
        WA = Wj * cr2_adjustment(Tj, Xj, B, cl.labels[static_cast<std::size_t>(g)],
                                 opts.allow_pseudo_inverse, &rf.pseudo_inverse_used);
        break;
    }
    Eigen::MatrixXd Cj = Xj.transpose() * WA;                    // p x n_g
    Eigen::VectorXd uj = Cj * e_g[static_cast<std::size_t>(g)];  // score contribution
    meat.noalias() += uj * uj.transpose();
    Eigen::MatrixXd Dj = B * Cj;
    quad.row(g) = (Dj * Tj * Dj.transpose()).diagonal();
    K[static_cast<std::size_t>(g)] = Dj * Xj * LB;
  }

  Eigen::MatrixXd cov = B * meat * B;
  rf.cov_robust = 0.5 * (cov + cov.transpose());

  // Satterthwaite: for each coefficient, Omega[g,h] = delta_gh quad - k_g'k_h
  // collects the covariances of the per-cluster score contributions under the
  // working model; df = tr(Omega)^2 / tr(Omega^2).
  rf.df = Eigen::VectorXd::Constant(p, kNaN);
  Eigen::MatrixXd Kc(G, p);
  for (int c = 0; c < p; ++c) {
    for (int g = 0; g < G; ++g) Kc.row(g) = K[static_cast<std::size_t>(g)].row(c);
    Eigen::MatrixXd Omega = -Kc * Kc.transpose();
    Omega.diagonal() += quad.col(c);
    const double tr = Omega.trace();
    const double tr2 = Omega.squaredNorm();
    if (tr > 0.0 && tr2 > 0.0) rf.df(c) = tr * tr / tr2;
  }
  return rf;
}

ResultTable coef_tests_impl(const RobustFit& rf, const Eigen::VectorXd& b,
                            const Eigen::VectorXd& test_values, double level) {
  const int p = static_cast<int>(b.size());
  if (rf.cov_robust.rows() != p)
    throw SchemaError("robust covariance does not match the fit");
  Eigen::VectorXd nulls = test_values;
  if (nulls.size() == 0) nulls = Eigen::VectorXd::Zero(p);
  if (static_cast<int>(nulls.size()) != p)
    throw SchemaError("test_values length does not match the number of coefficients");
  if (!(level > 0.0 && level < 1.0)) throw SchemaError("confidence level must be in (0, 1)");

  ResultTable t;
  t.name = "robust_coefficient_tests";
  t.title = "Cluster-Robust Coefficient Tests";
  TableColumn& name = t.add_column("coefficient", CellType::text, "Coefficient");
  TableColumn& est = t.add_column("est", CellType::real, "Estimate");
  TableColumn& se = t.add_column("se", CellType::real, "Robust SE");
  TableColumn& stat = t.add_column("stat", CellType::real, "t");
  TableColumn& dfc = t.add_column("df", CellType::real, "df");
  TableColumn& pval = t.add_column("pval", CellType::real, "p");
  pval.decimals = 4;
  TableColumn& lb = t.add_column("ci_lb", CellType::real, "Lower " +
                                 std::to_string(static_cast<int>(level * 100 + 0.5)) + "% CI");
  TableColumn& ub = t.add_column("ci_ub", CellType::real, "Upper " +
                                 std::to_string(static_cast<int>(level * 100 + 0.5)) + "% CI");
  TableColumn& h0 = t.add_column("null_value", CellType::real, "Null Value");

  for (int j = 0; j < p; ++j) {
    name.push_text(rf.coef_names.size() == static_cast<std::size_t>(p)
                       ? rf.coef_names[static_cast<std::size_t>(j)]
                       : "b" + std::to_string(j));
    const double sej = std::sqrt(rf.cov_robust(j, j));
    const double dfj = rf.df(j);
    const double diff = b(j) - nulls(j);
    const double tj = diff == 0.0 ? 0.0 : diff / sej;
    est.push_real(b(j));
    se.push_real(sej);
    stat.push_real(tj);
    dfc.push_real(dfj);
    pval.push_real(stats::p_from_t(tj, dfj));
    const double q = stats::qt(0.5 + level / 2.0, dfj);
    lb.push_real(b(j) - q * sej);
    ub.push_real(b(j) + q * sej);
    h0.push_real(nulls(j));
  }
  const char* type_name = rf.type == CRType::CR0   ? "CR0"
                          : rf.type == CRType::CR1 ? "CR1"
                                                   : "CR2";
  t.footnotes.push_back(std::string(type_name) +
                        " cluster-robust standard errors with Satterthwaite degrees of "
                        "freedom; clusters = " +
                        std::to_string(rf.n_clusters) + ".");
  return t;
}

}  // namespace

RobustFit cluster_robust(const UniFit& fit, const std::vector<std::string>& clustering,
                         const RobustOptions& opts) {
  if (!std::isfinite(fit.tau2))
    throw SchemaError("fit does not provide a finite working model");
  Eigen::MatrixXd M = (fit.v.array() + fit.tau2).matrix().asDiagonal();
  return cluster_robust_impl(fit.y, fit.design.X, fit.design.colnames, M, fit.b, clustering, opts);
}

RobustFit cluster_robust(const MVFit& fit, const std::vector<std::string>& clustering,
                         const RobustOptions& opts) {
  return cluster_robust_impl(fit.y, fit.design.X, fit.design.colnames, fit.M, fit.b, clustering,
                             opts);
}

RobustFit cluster_robust(const UniFit& fit, const Dataset& data,
                         const std::string& cluster_col, const RobustOptions& opts) {
  if (data.nrow() != static_cast<int>(fit.y.size()))
    throw SchemaError("dataset does not match the fitted data");
  return cluster_robust(fit, keys_from_column(data, cluster_col), opts);
}

RobustFit cluster_robust(const MVFit& fit, const Dataset& data,
                         const std::string& cluster_col, const RobustOptions& opts) {
  if (data.nrow() != static_cast<int>(fit.y.size()))
    throw SchemaError("dataset does not match the fitted data");
  return cluster_robust(fit, keys_from_column(data, cluster_col), opts);
}

ResultTable robust_coef_tests(const RobustFit& rf, const UniFit& fit,
                              const Eigen::VectorXd& test_values, double level) {
  return coef_tests_impl(rf, fit.b, test_values, level);
}

ResultTable robust_coef_tests(const RobustFit& rf, const MVFit& fit,
                              const Eigen::VectorXd& test_values, double level) {
  return coef_tests_impl(rf, fit.b, test_values, level);
}

}  // namespace metakit
