#pragma once

// Lobatto IIIA coefficients, derivative matrices and Hermite spline bases
// built from the Hermite-Obreschkoff formula with pairs (n, m), n + m = s.

#include <vector>

#include "hoctl/types.hpp"

namespace hoctl {

inline constexpr int kMinStages = 2;
inline constexpr int kMaxStages = 8;
/// Above this stage count the Vandermonde-type fits lose several digits.
inline constexpr int kWellConditionedStages = 6;

/// Collocation nodes c_1 = 0 < c_2 < ... < c_s = 1.
struct NodeSet {
  int s = 0;
  Vector c;
};

/// Matrices of the compact system
///
///   [I P; O Q] [X; Delta] = [I M; O N] [X_k; h F]
///
/// stored with the powers of h factored out: column j of P and Q is the
/// literal entry divided by h^(j+1), which corresponds to the scaled
/// unknowns h^j d^j f / dt^j at t_k. The scaling cancels in P Q^-1 N.
struct MasterSystem {
  Matrix P;  // s x (s-1)
  Matrix Q;  // (s-1) x (s-1)
  Matrix M;  // s x s
  Matrix N;  // (s-1) x s
  bool h_factored_out = true;
};

struct CollocationTableau {
  int s = 0;
  NodeSet nodes;
  Matrix A;  // s x s
  Vector b;  // last row of A
  int classical_order = 0;

  const Vector& c() const { return nodes.c; }
};

/// D[i] maps stage derivatives F to h^i times the i-th time derivative of f
/// at the nodes; D[0] is the identity.
struct DerivativeMatrices {
  int s = 0;
  std::vector<Matrix> D;
};

/// H_s(tau): row k of `coeffs` holds the monomial coefficients
/// (tau^0 ... tau^s) of the k-th spline.
struct SplineBasis {
  int s = 0;
  Matrix coeffs;  // s x (s+1)
};

/// Roots of d^(s-2)/dx^(s-2) [x^(s-1) (x-1)^(s-1)], ascending, endpoints
/// pinned to 0 and 1. Throws InvalidStageCount for s outside [2, 8].
NodeSet lobatto_nodes(int s);

/// Exact integer coefficients (ascending powers) of the node polynomial.
std::vector<double> lobatto_node_polynomial(int s);

MasterSystem assemble_master_system(const NodeSet& nodes);

/// The literal system with h kept in P and Q, A = M - P Q^-1 N.
Matrix tableau_matrix_with_step(const NodeSet& nodes, double h);

CollocationTableau build_tableau(int s);
CollocationTableau build_tableau(const NodeSet& nodes);

DerivativeMatrices build_derivative_matrices(int s);
DerivativeMatrices build_derivative_matrices(const CollocationTableau& tableau);

SplineBasis build_spline_basis(int s);
SplineBasis build_spline_basis(const CollocationTableau& tableau,
                               const DerivativeMatrices& derivatives);

/// d^deriv/dtau^deriv H_s(tau), by differentiating the monomials.
/// Throws DomainError for tau outside [0,1] or deriv outside [0, s].
Vector eval_spline(const SplineBasis& basis, double tau, int deriv = 0);

/// Monomial coefficients of d^deriv/dtau^deriv H_s, same layout as
/// SplineBasis::coeffs (trailing columns become zero).
Matrix spline_derivative_coeffs(const SplineBasis& basis, int deriv);

}  // namespace hoctl
