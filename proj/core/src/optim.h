#pragma once

// Internal numeric optimization helpers shared by the model-fitting
// translation units. Not installed.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <utility>

namespace metakit::internal {

// Brent-style bounded scalar maximization (golden section + parabolic
// interpolation), tolerance on the argument.
inline double brent_maximize(const std::function<double(double)>& f, double lo,
                             double hi, double tol) {
  const double golden = 0.3819660112501051;
  double a = lo, b = hi;
  double x = a + golden * (b - a), w = x, vv = x;
  double fx = f(x), fw = fx, fv = fx;
  double d = 0.0, e = 0.0;
  for (int iter = 0; iter < 200; ++iter) {
    const double m = 0.5 * (a + b);
    const double tol1 = tol * (std::abs(x) + 1e-12) + 1e-14;
    const double tol2 = 2.0 * tol1;
    if (std::abs(x - m) <= tol2 - 0.5 * (b - a)) break;
    double p = 0.0, q = 0.0, r = 0.0;
    bool use_golden = true;
    if (std::abs(e) > tol1) {
      r = (x - w) * (fx - fv);
      q = (x - vv) * (fx - fw);
      p = (x - vv) * q - (x - w) * r;
      q = 2.0 * (q - r);
      if (q > 0.0) p = -p;
      q = std::abs(q);
      const double etemp = e;
      e = d;
      if (std::abs(p) < std::abs(0.5 * q * etemp) && p > q * (a - x) &&
          p < q * (b - x)) {
        d = p / q;
        const double u = x + d;
        if (u - a < tol2 || b - u < tol2) d = (m > x) ? tol1 : -tol1;
        use_golden = false;
      }
    }
    if (use_golden) {
      e = (x < m) ? b - x : a - x;
      d = golden * e;
    }
    const double u = (std::abs(d) >= tol1) ? x + d : x + ((d > 0.0) ? tol1 : -tol1);
    const double fu = f(u);
    if (fu >= fx) {
      if (u < x) b = x; else a = x;
      vv = w; fv = fw;
      w = x; fw = fx;
      x = u; fx = fu;
    } else {
      if (u < x) a = u; else b = u;
      if (fu >= fw || w == x) {
        vv = w; fv = fw;
        w = u; fw = fu;
      } else if (fu >= fv || vv == x || vv == w) {
        vv = u; fv = fu;
      }
    }
  }
  return x;
}

struct BfgsResult {
  Eigen::VectorXd x;
  double fval = 0.0;
  bool converged = false;
  int iterations = 0;
};

// Quasi-Newton (BFGS) maximizer with central-difference gradients,
// h_j = 1e-5 (1 + |x_j|); stops when the gradient inf-norm < 1e-6.
inline BfgsResult bfgs_maximize(
    const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x0,
    int max_iter = 500) {
  const int n = static_cast<int>(x0.size());
  auto grad = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd g(n);
    for (int j = 0; j < n; ++j) {
      const double h = 1e-5 * (1.0 + std::abs(x(j)));
      Eigen::VectorXd xp = x, xm = x;
      xp(j) += h;
      xm(j) -= h;
      g(j) = (f(xp) - f(xm)) / (2.0 * h);
    }
    return g;
  };

  BfgsResult res;
  Eigen::VectorXd x = std::move(x0);
  double fx = f(x);
  if (!std::isfinite(fx)) {
    res.x = x;
    res.fval = fx;
    return res;
  }
  Eigen::VectorXd g = grad(x);
  Eigen::MatrixXd Hinv = Eigen::MatrixXd::Identity(n, n);
  for (int iter = 0; iter < max_iter; ++iter) {
    if (g.lpNorm<Eigen::Infinity>() < 1e-6) {
      res.converged = true;
      res.iterations = iter;
      break;
    }
    Eigen::VectorXd dir = Hinv * g;  // ascent direction
    if (dir.dot(g) <= 0.0) {
      Hinv = Eigen::MatrixXd::Identity(n, n);
      dir = g;
    }
    double step = 1.0;
    double fnew = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd xnew;
    for (int ls = 0; ls < 60; ++ls) {
      xnew = x + step * dir;
      fnew = f(xnew);
      if (std::isfinite(fnew) && fnew >= fx + 1e-4 * step * g.dot(dir)) break;
      step *= 0.5;
    }
    if (!(std::isfinite(fnew) && fnew >= fx - 1e-14)) {
      res.iterations = iter;
      break;  // line search failed
    }
    Eigen::VectorXd gnew = grad(xnew);
    Eigen::VectorXd s = xnew - x;
    Eigen::VectorXd yk = gnew - g;
    const double sy = -s.dot(yk);
    if (sy > 1e-12) {
      // Standard BFGS update on the inverse Hessian of -f.
      Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
      Eigen::MatrixXd V = I + (s * yk.transpose()) / sy;
      Hinv = V * Hinv * V.transpose() + (s * s.transpose()) / sy;
    }
    x = xnew;
    fx = fnew;
    g = gnew;
    res.iterations = iter + 1;
  }
  res.x = x;
  res.fval = fx;
  return res;
}

// Central-difference Hessian, h_j = 1e-4 (1 + |x_j|).
inline Eigen::MatrixXd numeric_hessian(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x) {
  const int n = static_cast<int>(x.size());
  Eigen::MatrixXd H(n, n);
  Eigen::VectorXd h(n);
  for (int j = 0; j < n; ++j) h(j) = 1e-4 * (1.0 + std::abs(x(j)));
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      Eigen::VectorXd xpp = x, xpm = x, xmp = x, xmm = x;
      xpp(i) += h(i); xpp(j) += h(j);
      xpm(i) += h(i); xpm(j) -= h(j);
      xmp(i) -= h(i); xmp(j) += h(j);
      xmm(i) -= h(i); xmm(j) -= h(j);
      H(i, j) = H(j, i) =
          (f(xpp) - f(xpm) - f(xmp) + f(xmm)) / (4.0 * h(i) * h(j));
    }
  }
  return H;
}

}  // namespace metakit::internal
