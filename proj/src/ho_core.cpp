#include "hoctl/ho_core.hpp"

#include <cmath>
#include <cstdint>
#include <iostream>
#include <mutex>
#include <string>

#include "hoctl/errors.hpp"

namespace hoctl {
namespace {

void check_stage_count(int s) {
  if (s < kMinStages || s > kMaxStages) {
    throw InvalidStageCount("stage count must lie in [" + std::to_string(kMinStages) + ", " +
                            std::to_string(kMaxStages) + "], got " + std::to_string(s));
  }
  if (s > kWellConditionedStages) {
    static std::once_flag warned[kMaxStages + 1];
    std::call_once(warned[s], [s] {
      std::cerr << "hoctl: warning: s = " << s
                << " exceeds " << kWellConditionedStages
                << " stages; spline and derivative coefficients lose accuracy in double precision\n";
    });
  }
}

// n choose k for the small arguments used here; exact in double.
double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return std::round(r);
}

double factorial(int n) {
  double r = 1.0;
  for (int i = 2; i <= n; ++i) r *= i;
  return r;
}

long double horner(const std::vector<std::int64_t>& coeffs, long double x) {
  long double acc = 0.0L;
  for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * x + static_cast<long double>(*it);
  return acc;
}

std::vector<std::int64_t> derivative(const std::vector<std::int64_t>& p) {
  if (p.size() <= 1) return {0};
  std::vector<std::int64_t> d(p.size() - 1);
  for (std::size_t k = 1; k < p.size(); ++k) d[k - 1] = static_cast<std::int64_t>(k) * p[k];
  return d;
}

// x^(s-1) (x-1)^(s-1) differentiated s-2 times, ascending integer coefficients.
std::vector<std::int64_t> node_polynomial_int(int s) {
  const int e = s - 1;
  std::vector<std::int64_t> p(2 * e + 1, 0);
  for (int k = 0; k <= e; ++k) {
    const auto sign = ((e - k) % 2 == 0) ? 1 : -1;
    p[e + k] = sign * static_cast<std::int64_t>(binomial(e, k));
  }
  for (int d = 0; d < s - 2; ++d) p = derivative(p);
  return p;
}

// Root of q in [lo, hi] given a sign change; bisection then Newton polish.
double refine_root(const std::vector<std::int64_t>& q, const std::vector<std::int64_t>& dq,
                   long double lo, long double hi) {
  long double flo = horner(q, lo);
  for (int it = 0; it < 200 && hi - lo > 1e-16L; ++it) {
    const long double mid = 0.5L * (lo + hi);
    const long double fmid = horner(q, mid);
    if (fmid == 0.0L) return static_cast<double>(mid);
    if ((fmid < 0) == (flo < 0)) {
      lo = mid;
      flo = fmid;
    } else {
      hi = mid;
    }
  }
  long double x = 0.5L * (lo + hi);
  for (int it = 0; it < 3; ++it) {
    const long double slope = horner(dq, x);
    if (slope == 0.0L) break;
    const long double next = x - horner(q, x) / slope;
    if (next < lo || next > hi) break;
    x = next;
  }
  return static_cast<double>(x);
}

}  // namespace

std::vector<double> lobatto_node_polynomial(int s) {
  check_stage_count(s);
  const auto p = node_polynomial_int(s);
  return {p.begin(), p.end()};
}

NodeSet lobatto_nodes(int s) {
  check_stage_count(s);
  NodeSet nodes;
  nodes.s = s;
  nodes.c = Vector::Zero(s);
  nodes.c(s - 1) = 1.0;
  if (s == 2) return nodes;

  // 0 and 1 are simple roots; divide them out exactly so that the remaining
  // s-2 roots are interior and simple.
  const auto p = node_polynomial_int(s);
  std::vector<std::int64_t> p1(p.begin() + 1, p.end());  // p / x
  std::vector<std::int64_t> q(p1.size() - 1);            // p1 / (x - 1)
  std::int64_t carry = 0;
  for (std::size_t k = p1.size() - 1; k >= 1; --k) {
    carry = p1[k] + carry;
    q[k - 1] = carry;
  }
  if (p1[0] + carry != 0) throw DegenerateSystem("node polynomial does not vanish at x = 1");
  const auto dq = derivative(q);

  constexpr int kGrid = 4096;
  int found = 0;
  long double x_prev = 0.0L;
  long double f_prev = horner(q, x_prev);
  for (int g = 1; g <= kGrid && found < s - 2; ++g) {
    const long double x = static_cast<long double>(g) / kGrid;
    const long double f = horner(q, x);
    if (f == 0.0L) {
      nodes.c(++found) = static_cast<double>(x);
    } else if ((f < 0) != (f_prev < 0) && f_prev != 0.0L) {
      nodes.c(++found) = refine_root(q, dq, x_prev, x);
    }
    x_prev = x;
    f_prev = f;
  }
  if (found != s - 2) {
    throw DegenerateSystem("found " + std::to_string(found) + " interior nodes, expected " +
                           std::to_string(s - 2));
  }
  return nodes;
}

namespace {

// The derivative recursion divides by c_i^m / m!, which costs several digits
// per stage; the whole chain runs in extended precision and is rounded once.
using Real = long double;
using MatrixL = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
using VectorL = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
using RowL = Eigen::Matrix<Real, 1, Eigen::Dynamic>;

template <typename T>
struct MasterT {
  Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> P, Q, M, N;
};

template <typename T>
T factorial_t(int n) {
  T r = 1;
  for (int i = 2; i <= n; ++i) r *= i;
  return r;
}

template <typename T>
MasterT<T> master_t(const Eigen::Matrix<T, Eigen::Dynamic, 1>& c) {
  const int s = static_cast<int>(c.size());
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
  MasterT<T> sys;
  sys.P = Mat::Zero(s, s - 1);
  sys.Q = Mat::Zero(s - 1, s - 1);
  sys.M = Mat::Zero(s, s);
  sys.N = Mat::Zero(s - 1, s);
  for (int i = 0; i < s; ++i) {
    for (int j = 1; j <= s - 1; ++j) sys.P(i, j - 1) = -std::pow(c(i), T(j + 1)) / factorial_t<T>(j + 1);
    sys.M(i, 0) = c(i);
  }
  for (int i = 1; i <= s - 1; ++i) {
    for (int j = 1; j <= s - 1; ++j) {
      sys.Q(i - 1, j - 1) = -std::pow(c(i), T(j + 1)) / (T(s) * factorial_t<T>(j));
    }
    sys.N(i - 1, 0) = c(i) / T(s);
    sys.N(i - 1, i) = -c(i) / T(s);
  }
  return sys;
}

VectorL widen(const Vector& v) { return v.cast<Real>(); }

void check_invertible(const Matrix& Q) {
  const Eigen::FullPivLU<Matrix> lu(Q);
  if (!lu.isInvertible() || lu.rcond() < 1e-14) {
    throw DegenerateSystem("master system matrix Q is singular (rcond " + std::to_string(lu.rcond()) +
                           "); nodes are not distinct");
  }
}

struct ExtendedTableau {
  VectorL c;
  MatrixL A;
  MatrixL Y;  // row j-1: h^j d^j f/dt^j at t_k in terms of the stage derivatives
};

ExtendedTableau extended_tableau(const NodeSet& nodes) {
  ExtendedTableau ext;
  ext.c = widen(nodes.c);
  const MasterT<Real> sys = master_t<Real>(ext.c);
  ext.Y = sys.Q.fullPivLu().solve(sys.N);
  ext.A = sys.M - sys.P * ext.Y;
  return ext;
}

std::vector<MatrixL> extended_derivatives(const ExtendedTableau& ext) {
  const int s = static_cast<int>(ext.c.size());
  std::vector<MatrixL> D(s, MatrixL::Zero(s, s));
  D[0] = MatrixL::Identity(s, s);

  // Derivatives at c_1 = 0, already fixed by the compact system.
  auto start_row = [&](int j) -> RowL {
    if (j == 0) return RowL::Unit(s, 0);
    return ext.Y.row(j - 1);
  };

  for (int m = 2; m <= s; ++m) {
    const int n = s - m;
    MatrixL& Dm = D[m - 1];
    Dm.row(0) = start_row(m - 1);
    for (int i = 1; i < s; ++i) {
      const Real ci = ext.c(i);
      // HO formula with the pair (n, m) at tau = c_i, divided by h, with the
      // x_k terms cancelled.
      RowL rhs = -Real(binomial(n + m, n)) * ext.A.row(i);
      for (int j = 1; j <= n; ++j) {
        rhs += Real(binomial(n - j + m, n - j)) * std::pow(ci, Real(j)) / factorial_t<Real>(j) * start_row(j - 1);
      }
      for (int j = 1; j <= m - 1; ++j) {
        rhs -= Real(binomial(n + m - j, n)) * std::pow(-ci, Real(j)) / factorial_t<Real>(j) * D[j - 1].row(i);
      }
      Dm.row(i) = rhs / (std::pow(-ci, Real(m)) / factorial_t<Real>(m));
    }
  }
  return D;
}

}  // namespace

MasterSystem assemble_master_system(const NodeSet& nodes) {
  check_stage_count(nodes.s);
  const MasterT<double> m = master_t<double>(nodes.c);
  check_invertible(m.Q);
  MasterSystem sys;
  sys.P = m.P;
  sys.Q = m.Q;
  sys.M = m.M;
  sys.N = m.N;
  return sys;
}

Matrix tableau_matrix_with_step(const NodeSet& nodes, double h) {
  MasterSystem sys = assemble_master_system(nodes);
  for (Index j = 0; j < sys.P.cols(); ++j) {
    const double scale = std::pow(h, static_cast<double>(j + 2));
    sys.P.col(j) *= scale;
    sys.Q.col(j) *= scale;
  }
  return sys.M - sys.P * sys.Q.fullPivLu().solve(sys.N);
}

CollocationTableau build_tableau(const NodeSet& nodes) {
  assemble_master_system(nodes);  // validates s and node distinctness
  const ExtendedTableau ext = extended_tableau(nodes);
  CollocationTableau tab;
  tab.s = nodes.s;
  tab.nodes = nodes;
  tab.A = ext.A.cast<double>();
  tab.b = tab.A.row(tab.s - 1).transpose();
  tab.classical_order = 2 * tab.s - 2;
  return tab;
}

CollocationTableau build_tableau(int s) { return build_tableau(lobatto_nodes(s)); }

DerivativeMatrices build_derivative_matrices(const CollocationTableau& tab) {
  assemble_master_system(tab.nodes);
  const auto D = extended_derivatives(extended_tableau(tab.nodes));
  DerivativeMatrices out;
  out.s = tab.s;
  for (const auto& d : D) out.D.push_back(d.cast<double>());
  return out;
}

DerivativeMatrices build_derivative_matrices(int s) {
  return build_derivative_matrices(build_tableau(s));
}

SplineBasis build_spline_basis(const CollocationTableau& tab, const DerivativeMatrices& der) {
  const int s = tab.s;
  if (static_cast<int>(der.D.size()) != s) throw BasisConstructionError("derivative matrix count differs from s");
  const VectorL c = widen(tab.c());
  // c_1 = 0 and the first row of A vanishes, so the constant coefficient is
  // zero; the unknowns are the coefficients of tau^1 ... tau^s.
  const int rows = (s - 1) + s * s;
  MatrixL V = MatrixL::Zero(rows, s);
  MatrixL rhs = MatrixL::Zero(rows, s);
  int r = 0;
  for (int l = 1; l < s; ++l, ++r) {
    for (int q = 1; q <= s; ++q) V(r, q - 1) = std::pow(c(l), Real(q));
    rhs.row(r) = tab.A.row(l).cast<Real>();
  }
  for (int i = 1; i <= s; ++i) {
    for (int l = 0; l < s; ++l, ++r) {
      for (int q = i; q <= s; ++q) {
        V(r, q - 1) = factorial_t<Real>(q) / factorial_t<Real>(q - i) * std::pow(c(l), Real(q - i));
      }
      rhs.row(r) = der.D[i - 1].row(l).cast<Real>();
    }
  }

  const Eigen::ColPivHouseholderQR<MatrixL> qr(V);
  if (qr.rank() < s) throw BasisConstructionError("spline fit is rank deficient");
  const MatrixL sol = qr.solve(rhs);  // s x s, column k = spline k
  const double residual = static_cast<double>((V * sol - rhs).lpNorm<Eigen::Infinity>());
  const double scale = std::max(1.0, static_cast<double>(rhs.lpNorm<Eigen::Infinity>()));
  const double tol = s > kWellConditionedStages ? 1e-8 : 1e-12;
  if (!(residual <= tol * scale)) {
    throw BasisConstructionError("spline node-matching residual " + std::to_string(residual / scale) +
                                 " (relative) exceeds " + std::to_string(tol));
  }

  SplineBasis basis;
  basis.s = s;
  basis.coeffs = Matrix::Zero(s, s + 1);
  basis.coeffs.rightCols(s) = sol.transpose().cast<double>();
  return basis;
}

SplineBasis build_spline_basis(int s) {
  const auto tab = build_tableau(s);
  return build_spline_basis(tab, build_derivative_matrices(tab));
}

Matrix spline_derivative_coeffs(const SplineBasis& basis, int deriv) {
  const int s = basis.s;
  if (deriv < 0 || deriv > s) throw DomainError("derivative order outside [0, s]");
  Matrix out = Matrix::Zero(s, s + 1);
  for (int q = deriv; q <= s; ++q) {
    out.col(q - deriv) = basis.coeffs.col(q) * (factorial(q) / factorial(q - deriv));
  }
  return out;
}

Vector eval_spline(const SplineBasis& basis, double tau, int deriv) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw DomainError("tau outside [0, 1]");
  if (deriv < 0 || deriv > basis.s) throw DomainError("derivative order outside [0, s]");
  const int s = basis.s;
  Vector out = Vector::Zero(s);
  for (int q = s; q >= deriv; --q) {
    out = out * tau + basis.coeffs.col(q) * (factorial(q) / factorial(q - deriv));
  }
  return out;
}

}  // namespace hoctl
