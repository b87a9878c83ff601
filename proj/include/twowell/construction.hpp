#pragma once

// Explicit branching test fields with exact per-cell energy ledgers, plus the
// reductions that bring every operator/well configuration to the canonical
// frame (optimal lamination normal e1) the cells are built in.

#include "twowell/relaxation.hpp"

#include <vector>

namespace tw {

// ---------------------------------------------------------------------------
// Profile functions
// ---------------------------------------------------------------------------

// 2-periodic sawtooth boundary profile on the reference period [-1, 1):
//   phi(t) = -theta (1 + t)   on [-1, -theta)
//          = (1 - theta) t    on [-theta, theta)
//          = -theta (t - 1)   on [theta, 1)
// Mean zero, Lipschitz, phi' takes the two slopes {-theta, 1-theta}.
double sawtooth(double theta, double t);

// Rescaled profile phi_r(t) = r * phi(t / r).
double sawtooth_scaled(double theta, double r, double t);

// Derivative of phi_r with respect to t (scale-invariant):
// -theta outside the middle branch, 1-theta inside.
double sawtooth_slope(double theta, double r, double t);

// Vertical cutoff ramp: 1 on [0, 1/2], linear -4t+3 on (1/2, 3/4), 0 on [3/4, inf).
double cutoff_ramp(double t);
double cutoff_ramp_slope(double t);

// ---------------------------------------------------------------------------
// Unit cells (canonical frame; the optimal lamination normal is e1)
// ---------------------------------------------------------------------------

enum class CellKind { GradInterior, GradCutoff, CCInterior, CCCutoff };

const char* cell_kind_name(CellKind k);

// Exact per-cell energy ledger. All integrals are over one cell
// (-l, l) x (0, h) in the canonical frame.
struct CellLedger {
  double excess = 0.0;          // integral of |chi_tilde - chi|^2 = 2 l h E0
  double compat = 0.0;          // integral of |u - chi_tilde|^2
  double cross = 0.0;           // 2 * integral of (u - chi_tilde) : (chi_tilde - chi)
  double surface_len = 0.0;     // interface length inside the cell
  double elastic_direct = 0.0;  // independent quadrature of |u - chi|^2
  // Split of compat by local frame component, without the |b|^2 factor:
  // compat = |b|^2 (int_A2 + int_B2) for gradient cells, where the A part
  // multiplies b (x) e1 and the B part multiplies b (x) e2 in u - chi_tilde.
  // The split is what a later symmetrization pass reweights.
  double int_A2 = 0.0;
  double int_B2 = 0.0;

  double elastic_total() const { return excess + compat + cross; }
};

// Canonical two-well data shared by every cell of a construction.
struct CanonicalState {
  DiffOp op{OpKind::Curl, 2};
  Mat F, a0, a1;    // canonical datum and wells
  Mat ta0, ta1;     // compatible (tilde) wells
  Vecd b;           // lamination amplitude: (a1-a0) e1
  double theta = 0.0;
  double E0_density = 0.0;
  double jump_norm = 0.0;  // |a1 - a0|
};

// One rectangular cell (-l, l) x (0, h) of the layered construction, in the
// canonical frame. Samplers use local coordinates.
struct UnitCell {
  CellKind kind = CellKind::GradInterior;
  double l = 0.0, h = 0.0;
  CanonicalState data;

  // Shear slope of the straight interior interfaces: (1-theta) l / (2h).
  double gamma_shear() const;
  // Horizontal half-offset of the curved interfaces at the cell top: (1-theta) l / 2.
  double alpha_offset() const;

  // Sub-region index: interior cells 1..5 left to right, cutoff cells 1..3.
  int region(double x1, double x2) const;
  // Phase label: 1 on the a1 regions (omega_2, omega_4 resp. the middle strip).
  int phase(double x1, double x2) const;
  // Displacement v (zero trace on the sides; sawtooth traces top/bottom).
  void displacement(double x1, double x2, double out[2]) const;
  // Full displacement gradient (row i = component, column j = derivative).
  Mat grad_v(double x1, double x2) const;
  // Field value u = F + grad v (gradient cells) or F + sym grad v (cc cells).
  Mat state(double x1, double x2) const;
  // Exact region areas (index 0 unused; interior 1..5, cutoff 1..3).
  std::vector<double> region_areas() const;

  CellLedger ledger() const;
};

UnitCell grad_interior_cell(const CanonicalState& data, double l, double h);
UnitCell grad_cutoff_cell(const CanonicalState& data, double l, double h);
UnitCell cc_interior_cell(const CanonicalState& data, double l, double h);
UnitCell cc_cutoff_cell(const CanonicalState& data, double l, double h);

// Compat integral of the cc interior cell by Gauss-Legendre with npts nodes
// in the vertical variable (exposed so tests can double the rule).
double cc_interior_compat_quadrature(double l, double h, double theta, int npts);

// ---------------------------------------------------------------------------
// Reduction to the canonical frame
// ---------------------------------------------------------------------------

enum class ReduceRoute {
  CurlRotation,      // rotate so the optimal normal becomes e1
  DivToCurl,         // right-multiply by the quarter turn, then rotate
  CCSemidef,         // semidefinite difference: reuse the wells as gradient wells
  CCIndefiniteLift,  // indefinite difference: lift wells by the rank-one part
  CCRankOneFrame     // rank-one difference: conjugate + rescale to a = e1 (x) e1
};

const char* reduce_route_name(ReduceRoute r);

// Maps canonical-frame objects back to the original frame.
struct BackTransform {
  Mat R;                       // canonical coordinates y -> original x = R y
  bool div_route = false;      // append the right factor undoing the div lift
  bool conjugate = false;      // cc rank-one route: values conjugate-transform
  double state_scale = 1.0;    // lambda (cc rank-one route), else 1
  double energy_scale = 1.0;   // lambda^2, else 1: elastic energies multiply by this
  double surface_scale = 1.0;  // |lambda|, else 1: TV terms multiply by this
  double eps_scale = 1.0;      // original eps corresponds to eps/eps_scale canonically

  Vecd map_point(const Vecd& y) const;
  Mat map_state(const Mat& canonical_value) const;
  Vecd map_displacement(const Vecd& v_canonical) const;
};

struct CanonicalReduction {
  ProblemData canonical;  // Curl data (gradient routes) or canonical CurlCurl data
  ReduceRoute route = ReduceRoute::CurlRotation;
  BackTransform back;
  // Stage-one lifted data in the original frame (before the rotation), used
  // by the symmetrization pass for the cc-to-gradient routes.
  Mat lifted_F, lifted_a0, lifted_a1;
  Vecd xi_star;
  // Symmetrization reweights of the two compat components (cc-to-gradient
  // routes; both 1 otherwise).
  double rho1 = 1.0, rho2 = 1.0;
  // |a1 - a0| of the original curlcurl wells (surface density after sym).
  double cc_jump_norm = 0.0;

  explicit CanonicalReduction(ProblemData c) : canonical(std::move(c)) {}
};

enum class ReduceTarget { Auto, GradTwoThirds, CCFourFifths };

// Reduce (op, F, a0, a1) with optimal direction xi_star to a canonical frame
// with e1 optimal. Auto picks the rank-one curlcurl frame when available
// (better exponent), otherwise a gradient route.
CanonicalReduction reduce_to_canonical(const ProblemData& data, const Vecd& xi_star,
                                       ReduceTarget target = ReduceTarget::Auto);

// ---------------------------------------------------------------------------
// Branching constructions
// ---------------------------------------------------------------------------

// Pick the refinement count from the interface-energy weight:
// ceil(eps^{-1/3}) for the gradient construction, ceil(eps^{-1/5}) for the
// rank-one curlcurl construction; never below 2.
enum class ScalingRoute { TwoThirds, FourFifths };
int choose_N(double eps, ScalingRoute route);

struct Layer {
  int j = 0;       // refinement generation; the last layer is the cutoff
  double l = 0.0;  // cell half-width
  double h = 0.0;  // layer height
  double y0 = 0.0; // bottom coordinate (upper half, y0 >= 1/2)
  long count = 0;  // cells across [0, 1]
  CellKind kind = CellKind::GradInterior;
  UnitCell cell;   // geometry + samplers
  CellLedger led;  // cached cell.ledger()
};

// Self-similar layered field on the unit square Q = (0,1)^2, canonical frame.
// The lower half x2 < 1/2 mirrors the upper half; samplers handle this.
struct BranchField {
  DiffOp op{OpKind::Curl, 2};
  CanonicalState data;       // canonical two-well data
  Mat R_frame;               // rotation used internally (canonical -> input frame)
  double energy_scale = 1;   // input-frame elastic energy = scale * canonical
  double surface_scale = 1;  // input-frame TV term = scale * canonical TV
  double state_scale = 1;

  int N = 0, j0 = 0;
  double tau = 0.0;
  std::vector<Layer> layers;    // upper half, bottom to top
  std::vector<double> layer_y;  // bottoms, plus final 1.0

  // Totals over the full unit square, canonical units.
  double excess_total = 0, compat_total = 0, cross_total = 0;
  double interface_length = 0;
  double int_A2_total = 0, int_B2_total = 0;
  double elastic_direct_total = 0;

  // Input-frame energies (equal to the canonical ones for gradient routes).
  double E0_density() const { return energy_scale * data.E0_density; }
  double elastic_ledger() const {
    return energy_scale * (excess_total + compat_total + cross_total);
  }
  double surface_tv() const {
    return surface_scale * data.jump_norm * interface_length;
  }
  double total_energy(double eps) const { return elastic_ledger() + eps * surface_tv(); }
  double corrected_energy(double eps) const { return total_energy(eps) - E0_density(); }
  double phase1_area() const;  // exact analytic area of {chi = a1}
  double min_cell_width() const;

  struct CellRef {
    int layer = 0;
    long k = 0;        // cell index within the layer
    double lx1 = 0.0;  // local coordinates inside the cell
    double lx2 = 0.0;
    bool mirrored = false;
  };
  CellRef locate(double x1, double x2) const;

  // Samplers on Q (canonical frame; values on the lower half are the
  // energy-preserving mirror images).
  void displacement(double x1, double x2, double out[2]) const;
  int phase(double x1, double x2) const;
  int region(double x1, double x2) const;
  Mat state(double x1, double x2) const;
};

// Branching construction for gradient (curl) data; data.op must be Curl with
// d = 2, xi_star an optimal direction, and the regime must be Mixing.
BranchField grad_branching(const ProblemData& data, const Vecd& xi_star, int N, double tau);

// Branching construction for curlcurl data with a rank-one well difference.
// Internally conjugates and rescales; reported energies refer to the input
// frame.
BranchField cc_branching(const ProblemData& data, const Vecd& xi_star, int N, double tau);

// ---------------------------------------------------------------------------
// Symmetrization (gradient field -> symmetrized-gradient test field)
// ---------------------------------------------------------------------------

// View of a gradient branching as a test field for the curlcurl problem it
// was reduced from: values y -> sym(u(y) R^T), wells the original cc wells.
// Pointwise |sym M| <= |M| makes every energy part at most the base one.
struct SymmetrizedField {
  BranchField base;        // canonical gradient field
  Mat R;                   // frame rotation from the reduction
  Mat F_cc, a0_cc, a1_cc;  // original curlcurl data
  double rho1 = 1.0, rho2 = 1.0;
  double jump_norm = 0.0;  // |a1_cc - a0_cc|

  double excess_total = 0, compat_total = 0, cross_total = 0;
  double E0_cc_density = 0;

  double elastic_ledger() const { return excess_total + compat_total + cross_total; }
  double surface_tv() const { return jump_norm * base.interface_length; }
  double total_energy(double eps) const { return elastic_ledger() + eps * surface_tv(); }
  double corrected_energy(double eps) const { return total_energy(eps) - E0_cc_density; }

  Mat state(double x1, double x2) const;  // sym(base.state * R^T)
  Mat chi(double x1, double x2) const;    // a0_cc or a1_cc by base phase
};

SymmetrizedField symmetrize_field(const BranchField& base, const CanonicalReduction& red);

}  // namespace tw
