#pragma once

// Relaxed two-well energy at zero interface cost.  For wells {a0, a1} with
// difference a = a1 - a0 and boundary datum F, the envelope at volume
// fraction theta is
//   H(theta) = |F - a_theta|^2 + theta(1-theta) h(a),   a_theta = (1-theta)a0 + theta a1,
// strictly convex in theta with leading coefficient g(a) > 0.  Its minimizer
// theta_tilde and value E0 drive everything downstream, together with the
// compatible approximation (tilde wells) used by the explicit constructions.

#include <optional>
#include <utility>

#include "twowell/compatibility.hpp"

namespace tw {

struct ProblemData {
  DiffOp op;
  Mat F, a0, a1;

  ProblemData(const DiffOp& o, const Mat& F_, const Mat& a0_, const Mat& a1_);
  Mat a() const { return a1 - a0; }
};

enum class Regime { Pure0, Mixing, Pure1 };
const char* regime_name(Regime r);

struct TildeWells {
  Mat a0t, a1t;
  Vecd xi_star;
  Vecd b;  // amplitude: P(xi*)a = b (x) xi* (Curl), b (.) xi* (CurlCurl); zero for Div
};

struct RelaxReport {
  double theta_tilde = 0;
  double E0_density = 0;
  Regime regime = Regime::Mixing;
  double R_A = 0;  // slab half-margin h/(2|a|^2)
  double h = 0, g = 0;
  bool equicompatible = false;
  std::optional<int> vanishing_order;
  std::optional<TildeWells> tilde_wells;  // present exactly in the Mixing regime
};

// H(theta) as above.
double envelope_at_fraction(const ProblemData& data, double theta);

// Closed-form minimizer: clamp of (2<F-a0, a> - h) / (2g) to [0,1], snapped
// to the boundary within 1e-12.  Returns (theta_tilde, E0_density).
std::pair<double, double> optimal_fraction(const ProblemData& data);

// Independent check: uniform grid search over [0,1] with `points` intervals.
// h is passed in so the caller controls its provenance (closed form or
// sphere oracle).
std::pair<double, double> optimal_fraction_grid_oracle(const ProblemData& data, double h,
                                                       int points = 1000000);

// Tilde wells around F: a0t = F - theta_tilde P(xi*)a, a1t = F + (1-theta_tilde) P(xi*)a.
// xi_star must lie in S(a): multiplier_p(xi_star) <= 1e-8, else rejected.
struct CompatApprox {
  Mat a0t, a1t;
  Vecd b;
};
CompatApprox compatible_approximation(const ProblemData& data, const Direction& xi_star);

// Full report, tilde wells included when mixing (witness = first direction
// from optimal_directions).
RelaxReport relax_report(const ProblemData& data);

}  // namespace tw
