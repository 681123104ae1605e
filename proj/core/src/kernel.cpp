#include "metakit/kernel.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <set>

#include "metakit/errors.h"

namespace metakit {

namespace {

constexpr double kPi = 3.14159265358979323846;

// ln|A| from a Cholesky factor, 2 * sum(log diag L).
double logdet_from_llt(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  const auto& L = llt.matrixLLT();
  double s = 0.0;
  for (int i = 0; i < L.rows(); ++i) s += std::log(L(i, i));
  return 2.0 * s;
}

}  // namespace

std::string Term::label() const {
  std::string s;
  for (std::size_t i = 0; i < vars.size(); ++i) {
    if (i) s += ":";
    s += vars[i];
  }
  return s;
}

Term parse_term(const std::string& spec) {
  Term t;
  std::string cur;
  for (char c : spec) {
    if (c == ':') {
      if (!cur.empty()) t.vars.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) t.vars.push_back(cur);
  if (t.vars.empty()) throw SchemaError("empty model term");
  return t;
}

int DesignMatrix::var_index(const std::string& name) const {
  for (std::size_t i = 0; i < vars.size(); ++i) {
    if (vars[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

const TermBlock* DesignMatrix::find_term(const std::string& label) const {
  for (const auto& t : terms) {
    if (t.label == label) return &t;
  }
  return nullptr;
}

Eigen::RowVectorXd DesignMatrix::row(const std::vector<double>& numval,
                                     const std::vector<int>& catval) const {
  Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(p());
  int col = 0;
  if (intercept) r(col++) = 1.0;
  for (const auto& term : terms) {
    // Each term column is a product of one atom per variable; atoms of a
    // categorical var are its non-reference level indicators.
    const int nv = static_cast<int>(term.var_idx.size());
    std::vector<int> atom_count(nv), atom_pos(nv, 0);
    for (int j = 0; j < nv; ++j) {
      const VarInfo& v = vars[static_cast<std::size_t>(term.var_idx[j])];
      atom_count[j] = v.categorical ? static_cast<int>(v.levels.size()) - 1 : 1;
    }
    const int ncols = term.col_end - term.col_begin;
    for (int c = 0; c < ncols; ++c) {
      double prod = 1.0;
      for (int j = 0; j < nv; ++j) {
        const int vi = term.var_idx[j];
        const VarInfo& v = vars[static_cast<std::size_t>(vi)];
        if (v.categorical) {
          // Atom atom_pos[j] encodes indicator of level atom_pos[j] + 1.
          prod *= (catval[static_cast<std::size_t>(vi)] == atom_pos[j] + 1) ? 1.0 : 0.0;
        } else {
          prod *= numval[static_cast<std::size_t>(vi)];
        }
      }
      r(col + c) = prod;
      // Advance mixed-radix counter; first variable cycles fastest.
      for (int j = 0; j < nv; ++j) {
        if (++atom_pos[j] < atom_count[j]) break;
        atom_pos[j] = 0;
      }
    }
    col += ncols;
  }
  return r;
}

DesignMatrix build_design(const Dataset& d, const std::vector<Term>& terms,
                          bool intercept) {
  DesignMatrix dm;
  dm.intercept = intercept;
  const int k = d.nrow();

  // Collect distinct variables in first-appearance order.
  for (const auto& t : terms) {
    for (const auto& v : t.vars) {
      if (dm.var_index(v) >= 0) continue;
      if (!d.has(v)) throw SchemaError("unknown model variable: " + v);
      VarInfo info;
      info.name = v;
      const Column& col = d.column(v);
      if (col.type == ColType::text) throw SchemaError("text column in model: " + v);
      info.categorical = col.type == ColType::categorical;
      if (info.categorical) {
        // Only levels observed in the current rows; order stays lexicographic.
        std::set<int> seen;
        for (int i = 0; i < k; ++i) {
          if (col.miss[static_cast<std::size_t>(i)]) {
            throw SchemaError("missing value in model variable: " + v);
          }
          seen.insert(col.cat[static_cast<std::size_t>(i)]);
        }
        for (int lv : seen) info.levels.push_back(col.levels[static_cast<std::size_t>(lv)]);
        if (info.levels.size() < 2) {
          throw SchemaError("categorical variable " + v + " has fewer than 2 observed levels");
        }
      } else {
        double sum = 0.0;
        for (int i = 0; i < k; ++i) {
          if (col.miss[static_cast<std::size_t>(i)]) {
            throw SchemaError("missing value in model variable: " + v);
          }
          sum += col.num[static_cast<std::size_t>(i)];
        }
        info.mean = sum / k;
        double ss = 0.0;
        for (int i = 0; i < k; ++i) {
          const double dev = col.num[static_cast<std::size_t>(i)] - info.mean;
          ss += dev * dev;
        }
        info.sd = k > 1 ? std::sqrt(ss / (k - 1)) : 0.0;
      }
      dm.vars.push_back(std::move(info));
    }
  }

  // Per-row variable values against the observed-level re-coding.
  std::vector<std::vector<double>> numval(dm.vars.size());
  std::vector<std::vector<int>> catval(dm.vars.size());
  for (std::size_t vi = 0; vi < dm.vars.size(); ++vi) {
    const VarInfo& info = dm.vars[vi];
    const Column& col = d.column(info.name);
    if (info.categorical) {
      catval[vi].resize(static_cast<std::size_t>(k));
      for (int i = 0; i < k; ++i) {
        const std::string& lev =
            col.levels[static_cast<std::size_t>(col.cat[static_cast<std::size_t>(i)])];
        const auto it = std::lower_bound(info.levels.begin(), info.levels.end(), lev);
        catval[vi][static_cast<std::size_t>(i)] = static_cast<int>(it - info.levels.begin());
      }
    } else {
      numval[vi] = col.num;
    }
  }

  int p = intercept ? 1 : 0;
  for (const auto& t : terms) {
    TermBlock block;
    block.label = t.label();
    int ncols = 1;
    for (const auto& v : t.vars) {
      const int vi = dm.var_index(v);
      block.var_idx.push_back(vi);
      const VarInfo& info = dm.vars[static_cast<std::size_t>(vi)];
      ncols *= info.categorical ? static_cast<int>(info.levels.size()) - 1 : 1;
    }
    block.col_begin = p;
    block.col_end = p + ncols;
    p += ncols;
    dm.terms.push_back(std::move(block));
  }

  dm.X.resize(k, p);
  dm.colnames.resize(static_cast<std::size_t>(p));
  if (intercept) dm.colnames[0] = "intercept";
  std::vector<double> rnum(dm.vars.size(), 0.0);
  std::vector<int> rcat(dm.vars.size(), 0);
  for (int i = 0; i < k; ++i) {
    for (std::size_t vi = 0; vi < dm.vars.size(); ++vi) {
      if (dm.vars[vi].categorical) {
        rcat[vi] = catval[vi][static_cast<std::size_t>(i)];
      } else {
        rnum[vi] = numval[vi][static_cast<std::size_t>(i)];
      }
    }
    dm.X.row(i) = dm.row(rnum, rcat);
  }

  // Column names per term.
  for (const auto& block : dm.terms) {
    const int nv = static_cast<int>(block.var_idx.size());
    std::vector<int> atom_count(static_cast<std::size_t>(nv)),
        atom_pos(static_cast<std::size_t>(nv), 0);
    for (int j = 0; j < nv; ++j) {
      const VarInfo& v = dm.vars[static_cast<std::size_t>(block.var_idx[j])];
      atom_count[static_cast<std::size_t>(j)] =
          v.categorical ? static_cast<int>(v.levels.size()) - 1 : 1;
    }
    for (int c = block.col_begin; c < block.col_end; ++c) {
      std::string name;
      for (int j = 0; j < nv; ++j) {
        const VarInfo& v = dm.vars[static_cast<std::size_t>(block.var_idx[j])];
        if (!name.empty()) name += ":";
        if (v.categorical) {
          name += v.name + "=" +
                  v.levels[static_cast<std::size_t>(atom_pos[static_cast<std::size_t>(j)] + 1)];
        } else {
          name += v.name;
        }
      }
      dm.colnames[static_cast<std::size_t>(c)] = name;
      for (int j = 0; j < nv; ++j) {
        if (++atom_pos[static_cast<std::size_t>(j)] < atom_count[static_cast<std::size_t>(j)]) break;
        atom_pos[static_cast<std::size_t>(j)] = 0;
      }
    }
  }

  // Rank check.
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(dm.X);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) {
    std::string bad;
    const auto perm = qr.colsPermutation().indices();
    for (int j = qr.rank(); j < p; ++j) {
      if (!bad.empty()) bad += ", ";
      bad += dm.colnames[static_cast<std::size_t>(perm(j))];
    }
    throw SchemaError("design matrix is rank deficient; collinear columns: " + bad);
  }
  return dm;
}

WLSFit wls_fit(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
               const Eigen::MatrixXd& M) {
  const int k = static_cast<int>(y.size());
  if (X.rows() != k || M.rows() != k || M.cols() != k) {
    throw SchemaError("dimension mismatch in weighted fit");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(M);
  if (llt.info() != Eigen::Success) {
    throw ComputeError("marginal covariance is not positive definite");
  }
  // Whitened problem: L^-1 X, L^-1 y.
  Eigen::MatrixXd Xw = llt.matrixL().solve(X);
  Eigen::VectorXd yw = llt.matrixL().solve(y);
  Eigen::MatrixXd XtWX = Xw.transpose() * Xw;
  Eigen::LLT<Eigen::MatrixXd> lltA(XtWX);
  if (lltA.info() != Eigen::Success) {
    throw ComputeError("normal equations are singular");
  }
  WLSFit fit;
  fit.b = lltA.solve(Xw.transpose() * yw);
  fit.cov_b = lltA.solve(Eigen::MatrixXd::Identity(X.cols(), X.cols()));
  fit.residuals = y - X * fit.b;
  Eigen::VectorXd rw = yw - Xw * fit.b;
  fit.rss_weighted = rw.squaredNorm();
  // H = X (X'WX)^-1 X' W, with W = M^-1 applied via the factor.
  Eigen::MatrixXd WX = llt.solve(X);
  fit.hat = X * fit.cov_b * WX.transpose();
  return fit;
}

double q_statistic(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                   const Eigen::VectorXd& w) {
  for (int i = 0; i < w.size(); ++i) {
    if (!(w(i) > 0.0)) throw ComputeError("nonpositive weight in Q statistic");
  }
  Eigen::MatrixXd M = w.cwiseInverse().asDiagonal();
  return wls_fit(y, X, M).rss_weighted;
}

namespace {

double gaussian_loglik(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                       const Eigen::MatrixXd& M, bool restricted) {
  const int k = static_cast<int>(y.size());
  const int p = static_cast<int>(X.cols());
  if (restricted && k <= p) {
    throw ComputeError("restricted likelihood undefined: k <= p");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(M);
  if (llt.info() != Eigen::Success) {
    throw ComputeError("marginal covariance is not positive definite");
  }
  const double ldM = logdet_from_llt(llt);
  Eigen::MatrixXd Xw = llt.matrixL().solve(X);
  Eigen::VectorXd yw = llt.matrixL().solve(y);
  Eigen::MatrixXd XtWX = Xw.transpose() * Xw;
  Eigen::LLT<Eigen::MatrixXd> lltA(XtWX);
  if (lltA.info() != Eigen::Success) throw ComputeError("normal equations are singular");
  Eigen::VectorXd b = lltA.solve(Xw.transpose() * yw);
  const double rss = (yw - Xw * b).squaredNorm();
  if (restricted) {
    // Includes the +0.5 log|X'X| constant so that values line up with the
    // usual REML likelihood reported for these models (metafor's REMLf).
    Eigen::LLT<Eigen::MatrixXd> lltX(Eigen::MatrixXd(X.transpose() * X));
    if (lltX.info() != Eigen::Success) throw ComputeError("singular design");
    return -0.5 * ((k - p) * std::log(2.0 * kPi) - logdet_from_llt(lltX) + ldM +
                   logdet_from_llt(lltA) + rss);
  }
  return -0.5 * (k * std::log(2.0 * kPi) + ldM + rss);
}

}  // namespace

double reml_loglik(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                   const Eigen::MatrixXd& M) {
  return gaussian_loglik(y, X, M, true);
}

double ml_loglik(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                 const Eigen::MatrixXd& M) {
  return gaussian_loglik(y, X, M, false);
}

}  // namespace metakit
