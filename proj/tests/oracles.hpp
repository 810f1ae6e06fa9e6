#pragma once

// Independent reference computations for the unit and acceptance tests.
// Nothing here calls into the Hermite-Obreschkoff machinery.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace oracle {

using Real = long double;
using Poly = std::vector<Real>;  // ascending powers

inline Poly mul(const Poly& a, const Poly& b) {
  Poly out(a.size() + b.size() - 1, 0.0L);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}

inline Real eval(const Poly& p, Real x) {
  Real acc = 0.0L;
  for (auto it = p.rbegin(); it != p.rend(); ++it) acc = acc * x + *it;
  return acc;
}

inline Poly antiderivative(const Poly& p) {
  Poly out(p.size() + 1, 0.0L);
  for (std::size_t k = 0; k < p.size(); ++k) out[k + 1] = p[k] / static_cast<Real>(k + 1);
  return out;
}

inline Poly derivative(const Poly& p) {
  if (p.size() <= 1) return {0.0L};
  Poly out(p.size() - 1);
  for (std::size_t k = 1; k < p.size(); ++k) out[k - 1] = p[k] * static_cast<Real>(k);
  return out;
}

/// Lagrange basis polynomial j on nodes c, expanded as a product.
inline Poly lagrange(const Eigen::VectorXd& c, int j) {
  Poly p{1.0L};
  for (int m = 0; m < c.size(); ++m) {
    if (m == j) continue;
    const Real denom = static_cast<Real>(c(j)) - static_cast<Real>(c(m));
    p = mul(p, Poly{-static_cast<Real>(c(m)) / denom, 1.0L / denom});
  }
  return p;
}

/// A_ij = integral of l_j over [0, c_i].
inline Eigen::MatrixXd collocation_matrix(const Eigen::VectorXd& c) {
  const auto s = c.size();
  Eigen::MatrixXd A(s, s);
  for (int j = 0; j < s; ++j) {
    const Poly L = antiderivative(lagrange(c, j));
    for (int i = 0; i < s; ++i) A(i, j) = static_cast<double>(eval(L, c(i)) - eval(L, 0.0L));
  }
  return A;
}

/// k-th derivative of l_j at c_i.
inline Eigen::MatrixXd lagrange_derivatives(const Eigen::VectorXd& c, int k) {
  const auto s = c.size();
  Eigen::MatrixXd D(s, s);
  for (int j = 0; j < s; ++j) {
    Poly p = lagrange(c, j);
    for (int d = 0; d < k; ++d) p = derivative(p);
    for (int i = 0; i < s; ++i) D(i, j) = static_cast<double>(eval(p, c(i)));
  }
  return D;
}

/// Cubic Hermite interpolation on one step from end values and slopes.
inline Eigen::VectorXd cubic_hermite(const Eigen::VectorXd& x0, const Eigen::VectorXd& x1,
                                     const Eigen::VectorXd& f0, const Eigen::VectorXd& f1, double h,
                                     double tau) {
  const double t2 = tau * tau, t3 = t2 * tau;
  const double h00 = 2 * t3 - 3 * t2 + 1;
  const double h10 = t3 - 2 * t2 + tau;
  const double h01 = -2 * t3 + 3 * t2;
  const double h11 = t3 - t2;
  return h00 * x0 + h * h10 * f0 + h01 * x1 + h * h11 * f1;
}

/// Least-squares slope of log(err) vs log(h), points with err <= floor dropped.
inline double loglog_slope(const std::vector<double>& h, const std::vector<double>& err, double floor) {
  Eigen::MatrixXd X(0, 2);
  Eigen::VectorXd y(0);
  for (std::size_t k = 0; k < h.size(); ++k) {
    if (!(err[k] > floor)) continue;
    X.conservativeResize(X.rows() + 1, 2);
    y.conservativeResize(y.size() + 1);
    X(X.rows() - 1, 0) = 1.0;
    X(X.rows() - 1, 1) = std::log(h[k]);
    y(y.size() - 1) = std::log(err[k]);
  }
  if (X.rows() < 2) return std::numeric_limits<double>::quiet_NaN();
  return X.colPivHouseholderQr().solve(y)(1);
}

struct ScanResult {
  double argmin = 0.0;
  double min = std::numeric_limits<double>::infinity();
};

/// Two-level brute force: `points` samples over [lo, hi], then `points`
/// samples across the two cells around the best coarse sample.
inline ScanResult grid_scan(const std::function<double(double)>& f, double lo, double hi, int points) {
  auto scan = [&](double a, double b) {
    ScanResult best;
    for (int k = 0; k < points; ++k) {
      const double u = a + (b - a) * k / (points - 1);
      const double v = f(u);
      if (v < best.min) best = {u, v};
    }
    return best;
  };
  const ScanResult coarse = scan(lo, hi);
  const double cell = (hi - lo) / (points - 1);
  const ScanResult fine = scan(std::max(lo, coarse.argmin - cell), std::min(hi, coarse.argmin + cell));
  return fine.min < coarse.min ? fine : coarse;
}

}  // namespace oracle
