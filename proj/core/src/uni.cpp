#include "metakit/uni.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "metakit/errors.h"
#include "metakit/stats.h"
#include "optim.h"

namespace metakit {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Eigen::MatrixXd marginal_diag(const Eigen::VectorXd& v, double tau2) {
  Eigen::VectorXd d = v.array() + tau2;
  return d.asDiagonal();
}

// P = W - W X (X'WX)^-1 X'W for diagonal W.
Eigen::MatrixXd projection_at(const Eigen::VectorXd& w, const Eigen::MatrixXd& X) {
  Eigen::MatrixXd W = w.asDiagonal();
  Eigen::MatrixXd WX = W * X;
  Eigen::MatrixXd XtWX = X.transpose() * WX;
  Eigen::LLT<Eigen::MatrixXd> llt(XtWX);
  if (llt.info() != Eigen::Success) throw ComputeError("singular weighted design");
  return W - WX * llt.solve(WX.transpose());
}

// Generalized Q at heterogeneity tau2: weighted RSS with w = 1/(v + tau2).
double q_gen(const Eigen::VectorXd& y, const Eigen::VectorXd& v,
             const Eigen::MatrixXd& X, double tau2) {
  Eigen::VectorXd w = (v.array() + tau2).inverse();
  return q_statistic(y, X, w);
}

double sample_variance(const Eigen::VectorXd& y) {
  const int k = static_cast<int>(y.size());
  if (k < 2) return 0.0;
  const double mean = y.mean();
  return (y.array() - mean).square().sum() / (k - 1);
}

double tau2_upper_bound(const Eigen::VectorXd& y) {
  const double vy = sample_variance(y);
  return vy > 0.0 ? 10.0 * vy : 1.0;
}

}  // namespace

double estimate_tau2(Tau2Method method, const Eigen::VectorXd& y,
                     const Eigen::VectorXd& v, const Eigen::MatrixXd& X,
                     bool* boundary_flag) {
  const int k = static_cast<int>(y.size());
  const int p = static_cast<int>(X.cols());
  if (boundary_flag) *boundary_flag = false;
  for (int i = 0; i < k; ++i) {
    if (!(v(i) > 0.0)) throw ComputeError("nonpositive sampling variance");
  }
  if (method == Tau2Method::FE) return 0.0;
  if (k <= p) throw ComputeError("insufficient data: k <= p");

  switch (method) {
    case Tau2Method::DL: {
      Eigen::VectorXd w = v.cwiseInverse();
      const double Q = q_statistic(y, X, w);
      const double c = projection_at(w, X).trace();
      return std::max(0.0, (Q - (k - p)) / c);
    }
    case Tau2Method::HE: {
      // Moment estimator on OLS residuals: (y'Py - tr(PV)) / (k - p),
      // P = I - X(X'X)^-1 X'.
      Eigen::MatrixXd XtX = X.transpose() * X;
      Eigen::LLT<Eigen::MatrixXd> llt(XtX);
      if (llt.info() != Eigen::Success) throw ComputeError("singular design");
      Eigen::MatrixXd P = Eigen::MatrixXd::Identity(k, k) - X * llt.solve(X.transpose());
      const double rss = y.dot(P * y);
      const double trPV = (P * Eigen::MatrixXd(v.asDiagonal())).trace();
      return std::max(0.0, (rss - trPV) / (k - p));
    }
    case Tau2Method::PM: {
      const double target = static_cast<double>(k - p);
      const double upper = tau2_upper_bound(y);
      double f0 = q_gen(y, v, X, 0.0) - target;
      if (f0 <= 0.0) return 0.0;
      double fu = q_gen(y, v, X, upper) - target;
      if (fu > 0.0) {
        if (boundary_flag) *boundary_flag = true;
        return upper;
      }
      double lo = 0.0, hi = upper;
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = q_gen(y, v, X, mid) - target;
        if (fm > 0.0) lo = mid; else hi = mid;
        if (hi - lo < 1e-12 * (1.0 + hi)) break;
      }
      return 0.5 * (lo + hi);
    }
    case Tau2Method::REML:
    case Tau2Method::ML: {
      const bool restricted = method == Tau2Method::REML;
      const double upper = tau2_upper_bound(y);
      auto ll = [&](double t2) {
        Eigen::MatrixXd M = marginal_diag(v, t2);
        return restricted ? reml_loglik(y, X, M) : ml_loglik(y, X, M);
      };
      double t2 = internal::brent_maximize(ll, 0.0, upper, 1e-10);
      // Compare against the boundary; Brent cannot land exactly on 0.
      if (ll(0.0) >= ll(t2)) t2 = 0.0;
      return t2;
    }
    default:
      break;
  }
  throw ComputeError("unsupported tau2 method");
}

void heterogeneity_stats(const Eigen::VectorXd& v, const Eigen::MatrixXd& X,
                         double tau2, double* I2, double* H2) {
  const int k = static_cast<int>(v.size());
  const int p = static_cast<int>(X.cols());
  Eigen::VectorXd w = v.cwiseInverse();
  const double s2 = (k - p) / projection_at(w, X).trace();
  *I2 = 100.0 * tau2 / (tau2 + s2);
  *H2 = (tau2 + s2) / s2;
}

UniFit fit_uni(const UniModelSpec& spec, const Eigen::VectorXd& y,
               const Eigen::VectorXd& v, const DesignMatrix& design) {
  const Eigen::MatrixXd& X = design.X;
  const int k = static_cast<int>(y.size());
  const int p = static_cast<int>(X.cols());
  if (k <= p) throw ComputeError("insufficient data: k <= p");

  UniFit fit;
  fit.spec = spec;
  fit.design = design;
  fit.y = y;
  fit.v = v;
  fit.k = k;
  fit.p = p;

  if (spec.fixed_tau2) {
    fit.tau2 = *spec.fixed_tau2;
    if (fit.tau2 < 0.0) throw SchemaError("fixed tau2 must be nonnegative");
    fit.se_tau2 = kNaN;
  } else {
    fit.tau2 = estimate_tau2(spec.method, y, v, X);
    Eigen::VectorXd w = (v.array() + fit.tau2).inverse();
    if (spec.method == Tau2Method::REML) {
      Eigen::MatrixXd P = projection_at(w, X);
      fit.se_tau2 = std::sqrt(2.0 / (P * P).trace());
    } else if (spec.method == Tau2Method::ML) {
      fit.se_tau2 = std::sqrt(2.0 / w.array().square().sum());
    } else {
      fit.se_tau2 = kNaN;
    }
  }

  Eigen::MatrixXd M = marginal_diag(v, fit.tau2);
  WLSFit wls = wls_fit(y, X, M);
  fit.b = wls.b;
  fit.cov_b_unscaled = wls.cov_b;

  const int dfr = k - p;
  if (spec.test == TestType::knapp_hartung) {
    double s2 = wls.rss_weighted / dfr;
    if (spec.kh_truncate) s2 = std::max(1.0, s2);
    fit.kh_scale = s2;
    fit.cov_b = s2 * wls.cov_b;
  } else {
    fit.kh_scale = 1.0;
    fit.cov_b = wls.cov_b;
  }

  const double alpha = 1.0 - spec.ci_level;
  const double crit = spec.test == TestType::knapp_hartung
                          ? stats::qt(1.0 - alpha / 2.0, dfr)
                          : stats::qnorm(1.0 - alpha / 2.0);
  fit.coefs.names = design.colnames;
  fit.coefs.est = fit.b;
  fit.coefs.se = fit.cov_b.diagonal().cwiseSqrt();
  fit.coefs.stat = fit.coefs.est.cwiseQuotient(fit.coefs.se);
  fit.coefs.pval.resize(p);
  fit.coefs.ci_lb.resize(p);
  fit.coefs.ci_ub.resize(p);
  for (int j = 0; j < p; ++j) {
    fit.coefs.pval(j) = spec.test == TestType::knapp_hartung
                            ? stats::p_from_t(fit.coefs.stat(j), dfr)
                            : stats::p_from_z(fit.coefs.stat(j));
    fit.coefs.ci_lb(j) = fit.coefs.est(j) - crit * fit.coefs.se(j);
    fit.coefs.ci_ub(j) = fit.coefs.est(j) + crit * fit.coefs.se(j);
  }

  // Residual heterogeneity test at fixed-effect weights.
  fit.QE = q_statistic(y, X, v.cwiseInverse());
  fit.QE_df = dfr;
  fit.QEp = stats::p_upper_chisq(fit.QE, dfr);

  // Omnibus moderator test: all non-intercept coefficients (or the
  // intercept itself in intercept-only models).
  int first = design.intercept && p > 1 ? 1 : 0;
  const int m = p - first;
  Eigen::VectorXd bs = fit.b.segment(first, m);
  Eigen::MatrixXd cs = fit.cov_b.block(first, first, m, m);
  Eigen::LLT<Eigen::MatrixXd> lltc(cs);
  if (lltc.info() != Eigen::Success) throw ComputeError("singular coefficient covariance");
  const double wald = bs.dot(lltc.solve(bs));
  if (spec.test == TestType::knapp_hartung) {
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

  heterogeneity_stats(v, X, fit.tau2, &fit.I2, &fit.H2);

  fit.loglik_ml = ml_loglik(y, X, M);
  const bool reml = spec.method == Tau2Method::REML;
  fit.loglik = reml ? reml_loglik(y, X, M) : fit.loglik_ml;
  const int q = p + ((spec.method == Tau2Method::FE || spec.fixed_tau2) ? 0 : 1);
  const double n_eff = reml ? static_cast<double>(k - p) : static_cast<double>(k);
  fit.AIC = -2.0 * fit.loglik + 2.0 * q;
  fit.BIC = -2.0 * fit.loglik + q * std::log(n_eff);
  return fit;
}

Interval ci_tau2_qprofile(const Eigen::VectorXd& y, const Eigen::VectorXd& v,
                          const Eigen::MatrixXd& X, double level) {
  const int k = static_cast<int>(y.size());
  const int p = static_cast<int>(X.cols());
  if (k <= p) throw ComputeError("insufficient data: k <= p");
  const double df = static_cast<double>(k - p);
  const double alpha = 1.0 - level;
  const double q_hi = stats::qchisq(1.0 - alpha / 2.0, df);  // lower endpoint target
  const double q_lo = stats::qchisq(alpha / 2.0, df);        // upper endpoint target

  auto Q = [&](double t2) { return q_gen(y, v, X, t2); };

  Interval ci;
  // Q(tau2) decreases from Q(0); find crossings by expansion + bisection.
  auto solve = [&](double target, bool* open_hi) -> double {
    if (Q(0.0) <= target) return 0.0;
    double lo = 0.0, hi = 1.0;
    int guard = 0;
    while (Q(hi) > target) {
      lo = hi;
      hi *= 2.0;
      if (++guard > 60) {
        if (open_hi) *open_hi = true;
        return hi;
      }
    }
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (Q(mid) > target) lo = mid; else hi = mid;
      if (hi - lo < 1e-10 * (1.0 + hi)) break;
    }
    return 0.5 * (lo + hi);
  };

  ci.lb = solve(q_hi, nullptr);
  ci.ub = solve(q_lo, &ci.ub_open);
  if (ci.lb == 0.0 && Q(0.0) <= q_lo) {
    // Entire profile below even the lower quantile: degenerate [0, 0].
    ci.ub = 0.0;
    ci.lb_open = false;
    ci.ub_open = false;
  }
  return ci;
}

Interval prediction_interval(const UniFit& fit, double level) {
  if (!fit.design.intercept) throw ComputeError("prediction interval needs an intercept model");
  const double alpha = 1.0 - level;
  const double crit = fit.spec.test == TestType::knapp_hartung
                          ? stats::qt(1.0 - alpha / 2.0, fit.df_test())
                          : stats::qnorm(1.0 - alpha / 2.0);
  const double se = fit.coefs.se(0);
  const double tau2 = std::isnan(fit.tau2) ? 0.0 : fit.tau2;
  const double half = crit * std::sqrt(se * se + tau2);
  Interval pi;
  pi.lb = fit.b(0) - half;
  pi.ub = fit.b(0) + half;
  return pi;
}

namespace {

// Restricted log-likelihood for the location-scale model at scale
// coefficients alpha: M = diag(v_i + exp(z_i' alpha)).
double ls_loglik(const Eigen::VectorXd& y, const Eigen::VectorXd& v,
                 const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z,
                 const Eigen::VectorXd& alpha) {
  Eigen::VectorXd eta = Z * alpha;
  Eigen::VectorXd d(v.size());
  for (int i = 0; i < v.size(); ++i) {
    if (eta(i) > 35.0) return -std::numeric_limits<double>::infinity();
    d(i) = v(i) + std::exp(eta(i));
  }
  Eigen::MatrixXd M = d.asDiagonal();
  return reml_loglik(y, X, M);
}

}  // namespace

std::pair<UniFit, ScaleFit> fit_location_scale(const UniModelSpec& spec,
                                               const Eigen::VectorXd& y,
                                               const Eigen::VectorXd& v,
                                               const DesignMatrix& X,
                                               const DesignMatrix& Z) {
  const int k = static_cast<int>(y.size());
  const int p = X.p();
  const int q = Z.p();
  if (k <= p + q) throw ComputeError("insufficient data for location-scale model: k <= p + q");
  if (spec.method != Tau2Method::REML && spec.method != Tau2Method::ML) {
    throw SchemaError("location-scale models require REML or ML");
  }

  auto obj = [&](const Eigen::VectorXd& a) {
    return ls_loglik(y, v, X.X, Z.X, a);
  };

  // Start from the constant-heterogeneity fit.
  double tau2_0 = estimate_tau2(Tau2Method::REML, y, v, X.X);
  if (tau2_0 < 1e-4) tau2_0 = 1e-4;
  Eigen::VectorXd start = Eigen::VectorXd::Zero(q);
  if (Z.intercept) start(0) = std::log(tau2_0);

  internal::BfgsResult best;
  best.fval = -std::numeric_limits<double>::infinity();
  std::mt19937 rng(20240521u);
  std::uniform_real_distribution<double> unif(-0.5, 0.5);
  for (int attempt = 0; attempt < 5; ++attempt) {
    Eigen::VectorXd s0 = start;
    if (attempt > 0) {
      for (int j = 0; j < q; ++j) s0(j) += unif(rng);
    }
    internal::BfgsResult r = internal::bfgs_maximize(obj, s0);
    if (r.converged && r.fval > best.fval) best = r;
    if (!best.converged && r.fval > best.fval) best = r;
  }
  if (!best.converged) {
    throw ConvergenceError("location-scale optimizer failed after 5 restarts (best loglik " +
                           std::to_string(best.fval) + ")");
  }

  ScaleFit sf;
  sf.alpha = best.x;
  sf.design = Z;
  sf.loglik = best.fval;
  sf.iterations = best.iterations;
  sf.tau2_i = (Z.X * sf.alpha).array().exp().matrix();

  Eigen::MatrixXd H = internal::numeric_hessian(obj, sf.alpha);
  Eigen::MatrixXd info = -H;
  Eigen::LLT<Eigen::MatrixXd> llt(info);
  if (llt.info() != Eigen::Success) {
    throw ConvergenceError("observed information for scale coefficients is not positive definite");
  }
  sf.cov_alpha = llt.solve(Eigen::MatrixXd::Identity(q, q));

  sf.coefs.names = Z.colnames;
  sf.coefs.est = sf.alpha;
  sf.coefs.se = sf.cov_alpha.diagonal().cwiseSqrt();
  sf.coefs.stat = sf.coefs.est.cwiseQuotient(sf.coefs.se);
  sf.coefs.pval.resize(q);
  sf.coefs.ci_lb.resize(q);
  sf.coefs.ci_ub.resize(q);
  const double zc = stats::qnorm(1.0 - (1.0 - spec.ci_level) / 2.0);
  for (int j = 0; j < q; ++j) {
    sf.coefs.pval(j) = stats::p_from_z(sf.coefs.stat(j));
    sf.coefs.ci_lb(j) = sf.coefs.est(j) - zc * sf.coefs.se(j);
    sf.coefs.ci_ub(j) = sf.coefs.est(j) + zc * sf.coefs.se(j);
  }

  // Location part at the fitted per-row heterogeneity.
  UniFit fit;
  fit.spec = spec;
  fit.design = X;
  fit.y = y;
  fit.v = v;
  fit.k = k;
  fit.p = p;
  fit.tau2 = kNaN;  // row-specific; see ScaleFit::tau2_i
  fit.se_tau2 = kNaN;

  Eigen::VectorXd d = v + sf.tau2_i;
  Eigen::MatrixXd M = d.asDiagonal();
  WLSFit wls = wls_fit(y, X.X, M);
  fit.b = wls.b;
  fit.cov_b_unscaled = wls.cov_b;
  const int dfr = k - p;
  if (spec.test == TestType::knapp_hartung) {
    double s2 = wls.rss_weighted / dfr;
    if (spec.kh_truncate) s2 = std::max(1.0, s2);
    fit.kh_scale = s2;
    fit.cov_b = s2 * wls.cov_b;
  } else {
    fit.kh_scale = 1.0;
    fit.cov_b = wls.cov_b;
  }
  const double alpha_lvl = 1.0 - spec.ci_level;
  const double crit = spec.test == TestType::knapp_hartung
                          ? stats::qt(1.0 - alpha_lvl / 2.0, dfr)
                          : stats::qnorm(1.0 - alpha_lvl / 2.0);
  fit.coefs.names = X.colnames;
  fit.coefs.est = fit.b;
  fit.coefs.se = fit.cov_b.diagonal().cwiseSqrt();
  fit.coefs.stat = fit.coefs.est.cwiseQuotient(fit.coefs.se);
  fit.coefs.pval.resize(p);
  fit.coefs.ci_lb.resize(p);
  fit.coefs.ci_ub.resize(p);
  for (int j = 0; j < p; ++j) {
    fit.coefs.pval(j) = spec.test == TestType::knapp_hartung
                            ? stats::p_from_t(fit.coefs.stat(j), dfr)
                            : stats::p_from_z(fit.coefs.stat(j));
    fit.coefs.ci_lb(j) = fit.coefs.est(j) - crit * fit.coefs.se(j);
    fit.coefs.ci_ub(j) = fit.coefs.est(j) + crit * fit.coefs.se(j);
  }
  fit.QE = q_statistic(y, X.X, v.cwiseInverse());
  fit.QE_df = dfr;
  fit.QEp = stats::p_upper_chisq(fit.QE, dfr);
  int first = X.intercept && p > 1 ? 1 : 0;
  const int m = p - first;
  Eigen::VectorXd bs = fit.b.segment(first, m);
  Eigen::MatrixXd cs = fit.cov_b.block(first, first, m, m);
  Eigen::LLT<Eigen::MatrixXd> lltc(cs);
  if (lltc.info() != Eigen::Success) throw ComputeError("singular coefficient covariance");
  const double wald = bs.dot(lltc.solve(bs));
  if (spec.test == TestType::knapp_hartung) {
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
  heterogeneity_stats(v, X.X, sf.tau2_i.mean(), &fit.I2, &fit.H2);
  fit.loglik = best.fval;
  fit.loglik_ml = ml_loglik(y, X.X, M);
  const int qq = p + q;
  const double n_eff = static_cast<double>(k - p);
  fit.AIC = -2.0 * fit.loglik + 2.0 * qq;
  fit.BIC = -2.0 * fit.loglik + qq * std::log(n_eff);
  return {fit, sf};
}

SubgroupResult subgroup_analysis(const UniModelSpec& spec, const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& v,
                                 const std::vector<std::string>& group, int min_rows) {
  if (group.size() != static_cast<std::size_t>(y.size())) {
    throw SchemaError("grouping column length mismatch");
  }
  std::map<std::string, std::vector<int>> by_group;
  for (int i = 0; i < y.size(); ++i) by_group[group[static_cast<std::size_t>(i)]].push_back(i);

  SubgroupResult res;
  std::vector<double> mu, wg;
  for (const auto& [label, idx] : by_group) {
    if (static_cast<int>(idx.size()) < min_rows) {
      res.skipped.push_back(label);
      continue;
    }
    Eigen::VectorXd yg(idx.size()), vg(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      yg(static_cast<int>(i)) = y(idx[i]);
      vg(static_cast<int>(i)) = v(idx[i]);
    }
    DesignMatrix dg;
    dg.intercept = true;
    dg.X = Eigen::MatrixXd::Ones(static_cast<int>(idx.size()), 1);
    dg.colnames = {"intercept"};
    UniFit f = fit_uni(spec, yg, vg, dg);
    mu.push_back(f.b(0));
    wg.push_back(1.0 / (f.coefs.se(0) * f.coefs.se(0)));
    res.group_labels.push_back(label);
    res.fits.push_back(std::move(f));
  }
  const int G = static_cast<int>(mu.size());
  if (G >= 2) {
    double sw = 0.0, swm = 0.0;
    for (int g = 0; g < G; ++g) {
      sw += wg[static_cast<std::size_t>(g)];
      swm += wg[static_cast<std::size_t>(g)] * mu[static_cast<std::size_t>(g)];
    }
    const double mbar = swm / sw;
    double qb = 0.0;
    for (int g = 0; g < G; ++g) {
      const double dev = mu[static_cast<std::size_t>(g)] - mbar;
      qb += wg[static_cast<std::size_t>(g)] * dev * dev;
    }
    res.Q_between = qb;
    res.df = G - 1;
    res.pval = stats::p_upper_chisq(qb, G - 1);
  }
  return res;
}

PooledTable fit_mh(const std::vector<TwoByTwo>& tables, MHMeasure measure,
                   double ci_level) {
  if (tables.empty()) throw ComputeError("no tables");
  double R = 0.0, S = 0.0;
  PooledTable out;
  out.k = static_cast<int>(tables.size());
  const double zc = stats::qnorm(1.0 - (1.0 - ci_level) / 2.0);

  switch (measure) {
    case MHMeasure::RR: {
      double num = 0.0;
      for (const auto& t : tables) {
        const double n1 = t.a + t.b, n2 = t.c + t.d, N = n1 + n2;
        if (N <= 0) continue;
        R += t.a * n2 / N;
        S += t.c * n1 / N;
        num += (n1 * n2 * (t.a + t.c) - t.a * t.c * N) / (N * N);
      }
      if (R <= 0.0 || S <= 0.0) throw ComputeError("Mantel-Haenszel RR not estimable");
      out.est = std::log(R / S);
      out.se = std::sqrt(num / (R * S));
      out.measure_label = "logRR";
      break;
    }
    case MHMeasure::OR: {
      // Robins-Breslow-Greenland variance.
      double sPR = 0.0, sPSQR = 0.0, sQS = 0.0;
      for (const auto& t : tables) {
        const double N = t.a + t.b + t.c + t.d;
        if (N <= 0) continue;
        const double Ri = t.a * t.d / N, Si = t.b * t.c / N;
        const double Pi = (t.a + t.d) / N, Qi = (t.b + t.c) / N;
        R += Ri;
        S += Si;
        sPR += Pi * Ri;
        sPSQR += Pi * Si + Qi * Ri;
        sQS += Qi * Si;
      }
      if (R <= 0.0 || S <= 0.0) throw ComputeError("Mantel-Haenszel OR not estimable");
      out.est = std::log(R / S);
      out.se = std::sqrt(sPR / (2.0 * R * R) + sPSQR / (2.0 * R * S) + sQS / (2.0 * S * S));
      out.measure_label = "logOR";
      break;
    }
    case MHMeasure::RD: {
      // Sato / Greenland-Robins variance.
      double num = 0.0, den = 0.0, sP = 0.0, sQ = 0.0;
      for (const auto& t : tables) {
        const double n1 = t.a + t.b, n2 = t.c + t.d, N = n1 + n2;
        if (N <= 0) continue;
        num += (t.a * n2 - t.c * n1) / N;
        den += n1 * n2 / N;
        sP += (n1 * n1 * t.c - n2 * n2 * t.a + n1 * n2 * (n2 - n1) / 2.0) / (N * N);
        sQ += (t.a * (n2 - t.c) + t.c * (n1 - t.a)) / (2.0 * N);
      }
      if (den <= 0.0) throw ComputeError("Mantel-Haenszel RD not estimable");
      out.est = num / den;
      out.se = std::sqrt((out.est * sP + sQ) / (den * den));
      out.measure_label = "RD";
      break;
    }
  }
  out.zval = out.est / out.se;
  out.pval = stats::p_from_z(out.zval);
  out.ci_lb = out.est - zc * out.se;
  out.ci_ub = out.est + zc * out.se;
  return out;
}

PooledTable fit_peto(const std::vector<TwoByTwo>& tables, double ci_level) {
  if (tables.empty()) throw ComputeError("no tables");
  double sOE = 0.0, sV = 0.0;
  for (const auto& t : tables) {
    const double n1 = t.a + t.b, n2 = t.c + t.d, N = n1 + n2;
    if (N <= 1) continue;
    const double E = n1 * (t.a + t.c) / N;
    const double V = n1 * n2 * (t.a + t.c) * (t.b + t.d) / (N * N * (N - 1.0));
    sOE += t.a - E;
    sV += V;
  }
  if (sV <= 0.0) throw ComputeError("Peto method not estimable");
  PooledTable out;
  out.k = static_cast<int>(tables.size());
  out.est = sOE / sV;
  out.se = 1.0 / std::sqrt(sV);
  out.zval = out.est / out.se;
  out.pval = stats::p_from_z(out.zval);
  const double zc = stats::qnorm(1.0 - (1.0 - ci_level) / 2.0);
  out.ci_lb = out.est - zc * out.se;
  out.ci_ub = out.est + zc * out.se;
  out.measure_label = "logOR";
  return out;
}

TransformedEstimate transform_estimates(double point, double lb, double ub,
                                        EstTransform transform) {
  TransformedEstimate t;
  switch (transform) {
    case EstTransform::none:
      t.point = point;
      t.lb = lb;
      t.ub = ub;
      break;
    case EstTransform::exp_t:
      t.point = std::exp(point);
      t.lb = std::exp(lb);
      t.ub = std::exp(ub);
      t.transformed = true;
      break;
    case EstTransform::tanh_t:
      t.point = std::tanh(point);
      t.lb = std::tanh(lb);
      t.ub = std::tanh(ub);
      t.transformed = true;
      break;
  }
  return t;
}

Tau2Method tau2_method_from_string(const std::string& s) {
  if (s == "REML") return Tau2Method::REML;
  if (s == "ML") return Tau2Method::ML;
  if (s == "DL") return Tau2Method::DL;
  if (s == "PM") return Tau2Method::PM;
  if (s == "HE") return Tau2Method::HE;
  if (s == "FE" || s == "EE") return Tau2Method::FE;
  throw SchemaError("unknown tau2 method: " + s);
}

std::string tau2_method_to_string(Tau2Method m) {
  switch (m) {
    case Tau2Method::REML: return "REML";
    case Tau2Method::ML: return "ML";
    case Tau2Method::DL: return "DL";
    case Tau2Method::PM: return "PM";
    case Tau2Method::HE: return "HE";
    case Tau2Method::FE: return "FE";
  }
  return "?";
}

}  // namespace metakit
