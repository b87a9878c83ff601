#pragma once

// Differential constraints, their symbols, kernels V(xi), and the
// compatibility projection P(xi) onto the kernel, both in closed form and via
// an independent nullspace oracle.
//
// The three operators act on d x d matrix fields u:
//   Curl:     (curl u)_{ijk} = d_k u_{ij} - d_j u_{ik}          (u = grad v)
//   Div:      (div u)_i      = sum_j d_j u_{ij}                  (row-wise)
//   CurlCurl: second-order constraint on symmetric fields whose kernel at
//             frequency xi is { b (.) xi }, i.e. u = sym grad v.
// Closed-form CurlCurl paths are d =  2 only; the oracle works for any d.

#include <optional>
#include <vector>

#include "twowell/linalg.hpp"

namespace tw {

enum class OpKind { Curl, Div, CurlCurl };

struct DiffOp {
  OpKind kind;
  int d;
  DiffOp(OpKind k, int dim) : kind(k), d(dim) {
    if (d < 2) throw std::invalid_argument("DiffOp: d must be >= 2");
  }
};

const char* op_name(OpKind k);

// Unit direction; renormalized on construction, |input| < 1e-12 rejected
// (the projection is undefined at the origin and zero-homogeneous elsewhere).
struct Direction {
  Vecd xi;
  explicit Direction(const Vecd& v) : xi(normalized(v)) {}
  int dim() const { return static_cast<int>(xi.size()); }
};

// Symbol of the operator applied to a, flattened:
//   Curl:     d^3 entries, index (i*d + j)*d + k,  a_{ij} xi_k - a_{ik} xi_j
//   Div:      d entries, a xi
//   CurlCurl: d^4 entries, index ((i*d+j)*d+k)*d + l,
//             xi_i xi_j a_{kl} + xi_k xi_l a_{ij} - xi_i xi_l a_{kj} - xi_k xi_j a_{il}
// For CurlCurl the overall sign coming from two Fourier derivatives is
// dropped; only the kernel of the symbol matters here.
std::vector<double> symbol_apply(const DiffOp& op, const Direction& xi, const Mat& a);

// Closed-form compatibility projection onto V(xi):
//   Curl:     P a = (a xi) (x) xi
//   Div:      P a = a - (a xi) (x) xi
//   CurlCurl: P a = G_xi(a xi) (.) xi with G_xi(v) = 2 v - (xi, v) xi   (d = 2)
Mat project_compatible(const DiffOp& op, const Direction& xi, const Mat& a);

// Orthonormal basis of ker of the symbol map at xi, computed by SVD of the
// flattened symbol matrix (singular values below 1e-9 * sigma_max count as
// zero).  For CurlCurl the basis lives in the symmetric subspace.
// This is the independent verification path; it never touches the closed
// forms above.
std::vector<Mat> kernel_basis_oracle(const DiffOp& op, const Direction& xi);

// Projection of a onto span(kernel_basis_oracle(op, xi)).
Mat project_compatible_oracle(const DiffOp& op, const Direction& xi, const Mat& a);

// Kernel dimension over `samples` deterministic pseudo-random directions;
// constancy across the list is the constant-rank check.
std::vector<int> wave_cone_rank(const DiffOp& op, int samples);

}  // namespace tw
