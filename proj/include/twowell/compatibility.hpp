#pragma once

// Compatibility quantifiers of a state difference a:
//   h(a) = min over unit xi of |a - P(xi)a|^2   (squared distance to the wave cone)
//   g(a) = max over unit xi of |P(xi)a|^2
// with h + g = |a|^2, the set S(a) of optimal lamination directions, the
// multiplier p_a(xi) = g - |P(xi)a|^2 vanishing exactly on S(a), and the
// maximal vanishing order L of p_a near S(a).  Closed forms plus a
// sphere-sampling oracle that only uses the nullspace projector.

#include <optional>

#include "twowell/operator_kernel.hpp"

namespace tw {

struct LaminationSet {
  enum class Kind { SubsphereOfEigenspace, FourPoints, FullSphere };
  Kind kind;
  // SubsphereOfEigenspace: orthonormal basis of the eigenspace U; the set is
  // U intersected with the unit sphere.
  std::vector<Vecd> basis;
  // FourPoints: the four unit directions, in antipodal pairs.
  std::vector<Vecd> points;
  // At least one explicit unit vector inside the set, every kind.
  std::vector<Vecd> witnesses;

  // Euclidean distance from a unit vector to the set.
  double dist(const Vecd& xi) const;
};

struct CompatQuantifiers {
  double h = 0;
  double g = 0;
  bool equicompatible = false;
  std::optional<int> vanishing_order;  // absent exactly when equicompatible
};

// Closed-form quantifiers.  CurlCurl requires d = 2 and symmetric a (use the
// sampling oracle for d = 3).  Zero a is rejected: the wells must differ.
CompatQuantifiers quantifiers(const DiffOp& op, const Mat& a);

// Closed-form optimal lamination set S(a) with explicit witnesses.
LaminationSet optimal_directions(const DiffOp& op, const Mat& a);

// p_a(xi) = g(a) - |P(xi)a|^2, clamped to [0, inf).
double multiplier_p(const DiffOp& op, const Mat& a, const Direction& xi);

// Samples p at geometric distances rho in [1e-4, 1e-1] from a witness along a
// tangent direction and fits log p against log dist(xi, S); returns slope/2,
// which estimates L.  Throws if a is equicompatible or the fit degenerates
// (all sampled p below noise, an equicompatibility symptom).
double vanishing_order_fit(const DiffOp& op, const Mat& a);

// Sphere-sampling oracle: brute scan over n_dirs deterministic directions
// (equispaced angles for d = 2, Fibonacci sphere for d = 3+) followed by an
// on-sphere pattern-search refinement.  Projections go through
// project_compatible_oracle only.
struct SphereScan {
  double h = 0;
  double g = 0;
  Vecd argmin;  // direction attaining h
  Vecd argmax;  // direction attaining g
};
SphereScan quantifiers_sphere_oracle(const DiffOp& op, const Mat& a, int n_dirs,
                                     bool refine = true);

}  // namespace tw
