#include "metakit/mv.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "metakit/errors.h"
#include "metakit/stats.h"
#include "optim.h"

namespace metakit {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// Log-variance box: exp(-30) ~ 9e-14 acts as the zero boundary, exp(35)
// as the divergence guard.
constexpr double kLogLo = -30.0;
constexpr double kLogHi = 35.0;
// Components below this are reported as exactly 0 (boundary solutions).
constexpr double kZeroTol = 1e-10;

std::string key_of(const Dataset& d, const std::string& col, int i) {
  if (d.is_missing(col, i))
    throw SchemaError("grouping column '" + col + "' has a missing value in row " +
                      std::to_string(d.row_ids()[i]));
  return d.cell_text(col, i);
}

// Same-group indicator matrix (Z Z' for one random intercept).
Eigen::MatrixXd indicator(const std::vector<std::string>& keys) {
  const int k = static_cast<int>(keys.size());
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = i; j < k; ++j)
      if (keys[i] == keys[j]) S(i, j) = S(j, i) = 1.0;
  return S;
}

void check_psd(const Eigen::MatrixXd& A, const char* what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (lo < -1e-10 * std::max(hi, 0.0))
    throw ComputeError(std::string(what) + " is not positive semidefinite");
}

struct MvProblem {
  Eigen::VectorXd y;
  Eigen::MatrixXd X;
  Eigen::MatrixXd V;
  Eigen::MatrixXd S1, S2;
};

double reml_at(const MvProblem& pb, double s1, double s2) {
  Eigen::MatrixXd M = pb.V + s1 * pb.S1 + s2 * pb.S2;
  try {
    return reml_loglik(pb.y, pb.X, M);
  } catch (const ComputeError&) {
    return kNegInf;
  }
}

struct CompResult {
  double s1 = 0.0, s2 = 0.0;
  double ll = kNegInf;
  bool boundary1 = false, boundary2 = false;
  int iterations = 0;
};

double from_log(double x) {
  if (x > kLogHi) return std::exp(kLogHi);
  return std::exp(std::max(x, kLogLo));
}

double reported(double s, bool* boundary) {
  if (s < kZeroTol) {
    if (boundary) *boundary = true;
    return 0.0;
  }
  return s;
}

// Newton polish after BFGS: drives the central-difference stationarity
// system to its root so the solution does not depend on the optimizer's
// path (permuting rows must leave fit scalars unchanged within 1e-10).
Eigen::VectorXd newton_polish(const std::function<double(const Eigen::VectorXd&)>& f,
                              Eigen::VectorXd x) {
  const int n = static_cast<int>(x.size());
  double fx = f(x);
  for (int it = 0; it < 12; ++it) {
    Eigen::VectorXd g(n);
    for (int j = 0; j < n; ++j) {
      const double h = 1e-4 * (1.0 + std::abs(x(j)));
      Eigen::VectorXd xp = x, xm = x;
      xp(j) += h;
      xm(j) -= h;
      g(j) = (f(xp) - f(xm)) / (2.0 * h);
    }
    Eigen::MatrixXd H = internal::numeric_hessian(f, x);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(-H);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) break;
    Eigen::VectorXd step = ldlt.solve(g);
    if (!step.allFinite()) break;
    const double norm = step.lpNorm<Eigen::Infinity>();
    if (norm > 1.0) step *= 1.0 / norm;
    Eigen::VectorXd xn = x + step;
    const double fn = f(xn);
    if (!std::isfinite(fn) || fn < fx - 1e-8) break;
    x = xn;
    fx = fn;
    if (norm < 1e-9) break;
  }
  return x;
}

// REML maximization over the free log-variances; fixed components stay at
// their pinned values. Deterministically seeded restarts on failure.
CompResult optimize_components(const MvProblem& pb, std::optional<double> fix1,
                               std::optional<double> fix2, double t2_hint) {
  const bool free1 = !fix1.has_value();
  const bool free2 = !fix2.has_value();
  const int nf = (free1 ? 1 : 0) + (free2 ? 1 : 0);

  CompResult res;
  if (nf == 0) {
    res.s1 = *fix1;
    res.s2 = *fix2;
    res.ll = reml_at(pb, res.s1, res.s2);
    return res;
  }

  auto unpack = [&](const Eigen::VectorXd& x, double* s1, double* s2) {
    int idx = 0;
    *s1 = fix1 ? *fix1 : from_log(x(idx++));
    *s2 = fix2 ? *fix2 : from_log(x(idx++));
  };
  auto value = [&](const Eigen::VectorXd& x) {
    for (int j = 0; j < nf; ++j)
      if (x(j) > kLogHi) return kNegInf;
    double s1, s2;
    unpack(x, &s1, &s2);
    return reml_at(pb, s1, s2);
  };

  const double start_each = std::max(nf == 2 ? t2_hint / 2.0 : t2_hint, 1e-4);
  Eigen::VectorXd x0 = Eigen::VectorXd::Constant(nf, std::log(start_each));

  std::mt19937 rng(20240521u);
  std::uniform_real_distribution<double> unif(-0.5, 0.5);
  internal::BfgsResult best;
  bool have_best = false;
  for (int attempt = 0; attempt <= 5; ++attempt) {
    Eigen::VectorXd s0 = x0;
    if (attempt > 0)
      for (int j = 0; j < nf; ++j) s0(j) += unif(rng);
    internal::BfgsResult r = internal::bfgs_maximize(value, s0);
    if (!have_best || r.fval > best.fval) {
      best = r;
      have_best = true;
    }
    if (r.converged) {
      best = r;
      break;
    }
  }
  if (!best.converged) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", best.fval);
    throw ConvergenceError(
        "variance component optimization did not converge after 5 restarts "
        "(best restricted loglik = " + std::string(buf) + ")");
  }

  Eigen::VectorXd xstar = newton_polish(value, best.x);
  unpack(xstar, &res.s1, &res.s2);
  if (free1) res.s1 = reported(res.s1, &res.boundary1);
  if (free2) res.s2 = reported(res.s2, &res.boundary2);
  res.ll = reml_at(pb, res.s1, res.s2);
  res.iterations = best.iterations;
  return res;
}

double diag_tau2_hint(const MvProblem& pb) {
  try {
    double t2 = estimate_tau2(Tau2Method::REML, pb.y, pb.V.diagonal(), pb.X);
    return std::max(t2, 1e-4);
  } catch (const MetakitError&) {
    return 1e-2;
  }
}

MvProblem problem_from_fit(const MVFit& fit) {
  MvProblem pb;
  pb.y = fit.y;
  pb.X = fit.design.X;
  pb.V = fit.V;
  pb.S1 = indicator(fit.level1_keys);
  pb.S2 = indicator(fit.level2_keys);
  return pb;
}

}  // namespace

VMatrix vcalc(const VcalcSpec& spec, const Dataset& d, const std::string& vi_col) {
  if (std::abs(spec.rho_within_type) > 1.0 || std::abs(spec.rho_between_type) > 1.0)
    throw SchemaError("vcalc correlations must lie in [-1, 1]");
  if (!spec.construct_type.empty() && spec.construct.empty())
    throw SchemaError("vcalc: construct_type requires a construct column");
  if (!d.has(vi_col)) throw SchemaError("unknown column '" + vi_col + "'");
  if (!d.has(spec.cluster)) throw SchemaError("unknown column '" + spec.cluster + "'");
  if (!spec.construct.empty() && !d.has(spec.construct))
    throw SchemaError("unknown column '" + spec.construct + "'");
  if (!spec.construct_type.empty() && !d.has(spec.construct_type))
    throw SchemaError("unknown column '" + spec.construct_type + "'");

  const int k = d.nrow();
  const std::vector<double> vi = d.numeric(vi_col);
  for (int i = 0; i < k; ++i) {
    if (!(vi[i] > 0.0) || !std::isfinite(vi[i]))
      throw ComputeError("non-positive sampling variance in row " +
                         std::to_string(d.row_ids()[i]));
  }

  const bool typed = !spec.construct_type.empty();
  std::vector<std::string> cl(k), ty(typed ? k : 0);
  for (int i = 0; i < k; ++i) {
    cl[i] = key_of(d, spec.cluster, i);
    if (typed) ty[i] = d.cell_text(spec.construct_type, i);
  }

  // Cluster membership in first-appearance order.
  std::map<std::string, std::vector<int>> groups;
  for (int i = 0; i < k; ++i) groups[cl[i]].push_back(i);

  Eigen::MatrixXd V = Eigen::MatrixXd::Zero(k, k);
  for (int i = 0; i < k; ++i) V(i, i) = vi[static_cast<std::size_t>(i)];
  for (const auto& [key, rows] : groups) {
    const int m = static_cast<int>(rows.size());
    for (int a = 0; a < m; ++a) {
      for (int b = a + 1; b < m; ++b) {
        const int i = rows[a], j = rows[b];
        const double r = (typed && ty[i] != ty[j]) ? spec.rho_between_type
                                                   : spec.rho_within_type;
        V(i, j) = V(j, i) = r * std::sqrt(vi[i] * vi[j]);
      }
    }
    if (m > 1) {
      Eigen::MatrixXd block(m, m);
      for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) block(a, b) = V(rows[a], rows[b]);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(block, Eigen::EigenvaluesOnly);
      const double lo = es.eigenvalues().minCoeff();
      const double hi = es.eigenvalues().maxCoeff();
      if (lo < -1e-10 * std::max(hi, 0.0))
        throw ComputeError("variance-covariance block for cluster '" + key +
                           "' is not positive semidefinite");
    }
  }
  return VMatrix{std::move(V), d.row_ids()};
}

void save_V(const VMatrix& vm, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SchemaError("cannot open '" + path + "' for writing");
  const Eigen::Index k = vm.V.rows();
  char buf[40];
  std::string line;
  for (Eigen::Index i = 0; i < k; ++i) {
    line.clear();
    for (Eigen::Index j = 0; j < k; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", vm.V(i, j));
      if (j) line += ',';
      line += buf;
    }
    line += '\n';
    out << line;
  }
  if (!out) throw SchemaError("write failed for '" + path + "'");
}

VMatrix load_precomputed_V(const std::string& path, const Dataset& d) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    const char* s = line.c_str();
    while (true) {
      char* end = nullptr;
      const double x = std::strtod(s, &end);
      if (end == s) throw ParseError("unparseable V entry", lineno);
      row.push_back(x);
      s = end;
      while (*s == ' ' || *s == '\t') ++s;
      if (*s == ',') {
        ++s;
        continue;
      }
      if (*s == '\0') break;
      throw ParseError("unparseable V entry", lineno);
    }
    rows.push_back(std::move(row));
  }

  const int k = d.nrow();
  const int nr = static_cast<int>(rows.size());
  for (int i = 0; i < nr; ++i) {
    if (static_cast<int>(rows[i].size()) != nr)
      throw SchemaError("V matrix is not square: row " + std::to_string(i + 1) +
                        " has " + std::to_string(rows[i].size()) + " of " +
                        std::to_string(nr) + " entries");
  }
  if (nr != k)
    throw SchemaError("V matrix is " + std::to_string(nr) + "x" + std::to_string(nr) +
                      " but the dataset has " + std::to_string(k) + " rows");

  Eigen::MatrixXd V(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      const double x = rows[i][j];
      if (!std::isfinite(x))
        throw SchemaError("non-finite V entry at (" + std::to_string(i + 1) + ", " +
                          std::to_string(j + 1) + ")");
      V(i, j) = x;
    }
  for (int i = 0; i < k; ++i)
    for (int j = i + 1; j < k; ++j)
      if (std::abs(V(i, j) - V(j, i)) > 1e-10)
        throw SchemaError("V matrix is asymmetric at (" + std::to_string(i + 1) +
                          ", " + std::to_string(j + 1) + ")");
  for (int i = 0; i < k; ++i)
    if (!(V(i, i) > 0.0))
      throw ComputeError("non-positive V diagonal at row " + std::to_string(i + 1));
  for (int i = 0; i < k; ++i)
    for (int j = i + 1; j < k; ++j) {
      const double bound = std::sqrt(V(i, i) * V(j, j));
      if (std::abs(V(i, j)) > bound * (1.0 + 1e-12))
        throw ComputeError("V entry at (" + std::to_string(i + 1) + ", " +
                           std::to_string(j + 1) +
                           ") exceeds the Cauchy-Schwarz bound");
    }
  check_psd(V, "V matrix");
  return VMatrix{std::move(V), d.row_ids()};
}

MVFit fit_mv(const Eigen::VectorXd& y, const DesignMatrix& X, const VMatrix& vm,
             const std::vector<std::string>& level1_keys,
             const std::vector<std::string>& level2_keys,
             const std::vector<std::string>& sigma2_names, const MvOptions& opts) {
  const int k = static_cast<int>(y.size());
  const int p = X.p();
  if (k <= p) throw ComputeError("insufficient data: k <= p");
  if (X.k() != k || vm.V.rows() != k || vm.V.cols() != k)
    throw SchemaError("dimension mismatch between y, X and V");
  if (static_cast<int>(level1_keys.size()) != k ||
      static_cast<int>(level2_keys.size()) != k)
    throw SchemaError("grouping key length does not match the data");
  if (opts.fix_sigma2_study && *opts.fix_sigma2_study < 0.0)
    throw SchemaError("fixed sigma2 components must be nonnegative");
  if (opts.fix_sigma2_esid && *opts.fix_sigma2_esid < 0.0)
    throw SchemaError("fixed sigma2 components must be nonnegative");
  check_psd(vm.V, "V matrix");

  MVFit fit;
  fit.y = y;
  fit.design = X;
  fit.V = vm.V;
  fit.level1_keys = level1_keys;
  // Composite keys disambiguate reused inner ids across outer groups.
  fit.level2_keys.resize(level1_keys.size());
  for (int i = 0; i < k; ++i)
    fit.level2_keys[i] = level1_keys[i] + '\x1f' + level2_keys[i];
  fit.sigma2_names = sigma2_names.size() == 2
                         ? sigma2_names
                         : std::vector<std::string>{"level1", "level1/level2"};
  fit.k = k;
  fit.p = p;
  fit.opts = opts;
  fit.fixed_study = opts.fix_sigma2_study.has_value();
  fit.fixed_esid = opts.fix_sigma2_esid.has_value();

  MvProblem pb;
  pb.y = y;
  pb.X = X.X;
  pb.V = vm.V;
  pb.S1 = indicator(fit.level1_keys);
  pb.S2 = indicator(fit.level2_keys);

  CompResult opt = optimize_components(pb, opts.fix_sigma2_study,
                                       opts.fix_sigma2_esid, diag_tau2_hint(pb));
  if (!std::isfinite(opt.ll))
    throw ComputeError("restricted likelihood is not finite at the fitted components");
  fit.sigma2_study = opt.s1;
  fit.sigma2_esid = opt.s2;
  fit.boundary_study = opt.boundary1;
  fit.boundary_esid = opt.boundary2;
  fit.loglik_restricted = opt.ll;
  fit.iterations = opt.iterations;

  fit.M = vm.V + fit.sigma2_study * pb.S1 + fit.sigma2_esid * pb.S2;
  WLSFit wls = wls_fit(y, X.X, fit.M);
  fit.b = wls.b;
  fit.cov_b_unscaled = wls.cov_b;

  const int dfr = k - p;
  if (opts.test == TestType::knapp_hartung) {
    double s2 = wls.rss_weighted / dfr;
    if (opts.kh_truncate) s2 = std::max(s2, 1.0);
    fit.kh_scale = s2;
    fit.cov_b = s2 * wls.cov_b;
  } else {
    fit.kh_scale = 1.0;
    fit.cov_b = wls.cov_b;
  }

  const double alpha = 1.0 - opts.ci_level;
  const double crit = opts.test == TestType::knapp_hartung
                          ? stats::qt(1.0 - alpha / 2.0, dfr)
                          : stats::qnorm(1.0 - alpha / 2.0);
  fit.coefs.names = X.colnames;
  fit.coefs.est = fit.b;
  fit.coefs.se = fit.cov_b.diagonal().cwiseSqrt();
  fit.coefs.stat = fit.coefs.est.cwiseQuotient(fit.coefs.se);
  fit.coefs.pval.resize(p);
  fit.coefs.ci_lb.resize(p);
  fit.coefs.ci_ub.resize(p);
  for (int j = 0; j < p; ++j) {
    fit.coefs.pval(j) = opts.test == TestType::knapp_hartung
                            ? stats::p_from_t(fit.coefs.stat(j), dfr)
                            : stats::p_from_z(fit.coefs.stat(j));
    fit.coefs.ci_lb(j) = fit.coefs.est(j) - crit * fit.coefs.se(j);
    fit.coefs.ci_ub(j) = fit.coefs.est(j) + crit * fit.coefs.se(j);
  }

  // Residual heterogeneity against the known-V fixed-effects model.
  WLSFit fe = wls_fit(y, X.X, vm.V);
  fit.QE = fe.rss_weighted;
  fit.QE_df = dfr;
  fit.QEp = stats::p_upper_chisq(fit.QE, dfr);

  // Omnibus moderator test, matching the univariate convention.
  const int first = X.intercept && p > 1 ? 1 : 0;
  const int m = p - first;
  Eigen::VectorXd bs = fit.b.segment(first, m);
  Eigen::MatrixXd cs = fit.cov_b.block(first, first, m, m);
  Eigen::LLT<Eigen::MatrixXd> lltc(cs);
  if (lltc.info() != Eigen::Success)
    throw ComputeError("singular coefficient covariance");
  const double wald = bs.dot(lltc.solve(bs));
  if (opts.test == TestType::knapp_hartung) {
    fit.QM = wald / m;
    fit.QM_df1 = m;
    fit.QM_df2 = dfr;
    fit.QMp = stats::p_upper_f(fit.QM, m, dfr);
  } else {
    fit.QM = wald;
    fit.QM_df1 = m;
    fit.QM_df2 = 0;
    fit.QMp = stats::p_upper_chisq(wald, m);
  }

  const int q = p + (fit.fixed_study ? 0 : 1) + (fit.fixed_esid ? 0 : 1);
  fit.AIC = -2.0 * fit.loglik_restricted + 2.0 * q;
  fit.BIC = -2.0 * fit.loglik_restricted + q * std::log(static_cast<double>(dfr));
  return fit;
}

MVFit fit_mv(const Eigen::VectorXd& y, const DesignMatrix& X, const VMatrix& vm,
             const NestedRandomSpec& random, const Dataset& d,
             const MvOptions& opts) {
  if (!d.has(random.level1)) throw SchemaError("unknown column '" + random.level1 + "'");
  if (!d.has(random.level2)) throw SchemaError("unknown column '" + random.level2 + "'");
  if (d.nrow() != static_cast<int>(y.size()))
    throw SchemaError("dataset size does not match the data vector");
  const int k = d.nrow();
  std::vector<std::string> l1(k), l2(k);
  for (int i = 0; i < k; ++i) {
    l1[i] = key_of(d, random.level1, i);
    l2[i] = key_of(d, random.level2, i);
  }
  const std::vector<std::string> names = {random.level1,
                                          random.level1 + "/" + random.level2};
  return fit_mv(y, X, vm, l1, l2, names, opts);
}

ResultTable inclusion_tests(const MVFit& full) {
  if (full.fixed_study || full.fixed_esid)
    throw SchemaError("inclusion tests require both variance components free");

  MvProblem pb = problem_from_fit(full);
  const double hint = std::max(full.sigma2_study + full.sigma2_esid, 1e-4);

  ResultTable t;
  t.name = "component_inclusion_tests";
  t.title = "Component Inclusion Tests";
  TableColumn& comp = t.add_column("component", CellType::text, "Component");
  TableColumn& df = t.add_column("df", CellType::integer, "df");
  TableColumn& lrt = t.add_column("lrt", CellType::real, "LRT");
  TableColumn& pval = t.add_column("pval", CellType::real, "p");
  pval.decimals = 4;
  TableColumn& ll = t.add_column("loglik", CellType::real, "Restricted log-lik");
  TableColumn& avail = t.add_column("available", CellType::boolean, "Available");
  t.footnotes.push_back(
      "Likelihood-ratio tests compare restricted likelihoods against a naive "
      "chi-square reference; boundary corrections are not applied.");

  struct Row {
    std::string label;
    std::optional<double> fix1, fix2;
    int df;
  };
  const std::vector<Row> rows = {
      {full.sigma2_names[0], 0.0, std::nullopt, 1},
      {full.sigma2_names[1], std::nullopt, 0.0, 1},
      {"all components", 0.0, 0.0, 2},
  };
  for (const Row& r : rows) {
    comp.push_text(r.label);
    df.push_integer(r.df);
    double ll_red = kNaN;
    bool ok = true;
    try {
      CompResult red = optimize_components(pb, r.fix1, r.fix2, hint);
      ll_red = red.ll;
      ok = std::isfinite(ll_red);
    } catch (const ConvergenceError&) {
      ok = false;
    }
    if (!ok) {
      lrt.push_missing();
      pval.push_missing();
      ll.push_missing();
      avail.push_boolean(false);
      continue;
    }
    const double stat = std::max(0.0, 2.0 * (full.loglik_restricted - ll_red));
    lrt.push_real(stat);
    pval.push_real(stats::p_upper_chisq(stat, r.df));
    ll.push_real(ll_red);
    avail.push_boolean(true);
  }
  return t;
}

Interval ci_sigma_profile(const MVFit& fit, MvComponent component, double level) {
  if (!(level > 0.0 && level < 1.0)) throw SchemaError("level must be in (0, 1)");
  const bool profiling_study = component == MvComponent::study;
  if ((profiling_study && fit.fixed_study) || (!profiling_study && fit.fixed_esid))
    throw SchemaError("cannot profile a fixed variance component");

  MvProblem pb = problem_from_fit(fit);
  const double s_hat = profiling_study ? fit.sigma2_study : fit.sigma2_esid;
  const double other_hat = profiling_study ? fit.sigma2_esid : fit.sigma2_study;
  const bool other_fixed = profiling_study ? fit.fixed_esid : fit.fixed_study;
  const double crit = stats::qchisq(level, 1.0);

  // Profile restricted loglik: the pinned component at s, the other
  // re-optimized (or held at its pinned value).
  auto prof = [&](double s) -> double {
    auto at = [&](double other) {
      return profiling_study ? reml_at(pb, s, other) : reml_at(pb, other, s);
    };
    if (other_fixed) return at(other_hat);
    auto f = [&](double xlog) { return at(from_log(xlog)); };
    const double xstar = internal::brent_maximize(f, kLogLo, kLogHi, 1e-8);
    double other = from_log(xstar);
    if (other < kZeroTol) other = 0.0;
    return at(other);
  };

  const double ll_max = fit.loglik_restricted;
  auto g = [&](double s) { return 2.0 * (ll_max - prof(s)) - crit; };

  auto bisect = [&](double lo, double hi) {
    // g(lo) and g(hi) straddle 0.
    double glo = g(lo);
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (hi - lo < 1e-10 + 1e-6 * std::abs(mid)) return mid;
      const double gm = g(mid);
      if ((gm > 0.0) == (glo > 0.0)) {
        lo = mid;
        glo = gm;
      } else {
        hi = mid;
      }
    }
    return 0.5 * (lo + hi);
  };

  Interval ci;
  // Lower endpoint, truncated at 0.
  if (s_hat <= kZeroTol || g(0.0) <= 0.0) {
    ci.lb = 0.0;
  } else {
    ci.lb = bisect(0.0, s_hat);
  }

  // Upper endpoint by doubling until the profile drops below the cutoff.
  const int k = static_cast<int>(pb.y.size());
  double vy = 0.0;
  if (k > 1) {
    const double mean = pb.y.mean();
    vy = (pb.y.array() - mean).square().sum() / (k - 1);
  }
  const double cap = 100.0 * std::max({vy, s_hat + other_hat, 0.1});
  double lo = std::max(s_hat, 0.0);
  double hi = std::max(2.0 * std::max(s_hat, 1e-3), 1e-2);
  bool crossed = false;
  while (hi <= cap) {
    if (g(hi) > 0.0) {
      crossed = true;
      break;
    }
    lo = hi;
    hi *= 2.0;
  }
  if (!crossed) {
    ci.ub = hi;
    ci.ub_open = true;  // flat profile: no crossing below the search cap
  } else {
    ci.ub = bisect(lo, hi);
  }
  return ci;
}

}  // namespace metakit
