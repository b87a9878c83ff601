#pragma once

// Independent grid evaluation of the singularly perturbed energies: midpoint
// quadrature of the elastic density against a sampled displacement, edge-sum
// total variation of the phase, and the Fourier-side relaxed elastic energy
//   E~_el(f) = sum_{k != 0} |f^(k)|^2 dist^{2L}(k, W) / |k|^{2L}
// for the mean-free phase indicator f = chi_1 - theta zero-padded to a
// doubled domain.  Everything here is deliberately unaware of the analytic
// cell ledgers so that grid totals are an independent check on them.

#include <iosfwd>
#include <vector>

#include "twowell/compatibility.hpp"
#include "twowell/construction.hpp"

namespace tw {

enum class GradMode { Full, Symmetrized };

// Displacement samples on the (n+1)^2 nodes of an n x n grid over
// [ox, ox+ex] x [oy, oy+ey], plus one phase label per cell.  Node (i1,i2)
// lives at (ox + i1*dx, oy + i2*dy) with index i2*(n+1)+i1; cell (i1,i2) has
// index i2*n+i1 and center offset (i1+1/2, i2+1/2)*(dx, dy).
struct GridField {
  int n = 0;
  GradMode mode = GradMode::Full;
  double ox = 0.0, oy = 0.0, ex = 1.0, ey = 1.0;
  std::vector<double> vx, vy;  // (n+1)^2 node values each
  std::vector<int> phase;      // n^2 labels in {0, 1}
  double min_feature = 0.0;    // finest construction width; 0 = unknown

  double dx() const { return ex / n; }
  double dy() const { return ey / n; }
  int node(int i1, int i2) const { return i2 * (n + 1) + i1; }
  int cell(int i1, int i2) const { return i2 * n + i1; }
};

struct EnergyBreakdown {
  double elastic = 0.0;
  double surface = 0.0;  // TV value: jump norm x interface length
  bool resolution_warning = false;
  double e0_density = 0.0;  // relaxed density used by excess_corrected

  double total(double eps) const { return elastic + eps * surface; }
  double excess_corrected(double eps, double area) const {
    return total(eps) - area * e0_density;
  }
};

// Samples a branching field (displacement at nodes, phase at cell centers)
// on the unit square.  n must be a power of two in [64, 8192].
GridField rasterize(const BranchField& f, int n);

// Samples a single cell on its own rectangle (-l,l) x (0,h).
GridField rasterize_cell(const UnitCell& cell, int n);

// Midpoint-rule integral of |F + Dv - chi|^2 with Dv the four-corner central
// difference at each cell center, symmetrized when mode == Symmetrized.  If
// right_rot is given the state is mapped M -> M * right_rot before the
// optional symmetrization, matching the frame of the supplied wells.  Sets
// resolution_warning when the grid cannot resolve the finest cells
// (min_feature < 2 max(dx, dy)).
EnergyBreakdown elastic_energy(const GridField& g, const Mat& F, const Mat& chi0,
                               const Mat& chi1, const Mat* right_rot = nullptr);

// Grid-path surface energy: jump_norm times the total length of interior
// edges separating different labels.  Axis-aligned edges overestimate tilted
// interfaces by at most a factor sqrt(2).
double surface_grid(const GridField& g, double jump_norm);

// Area average of F + Dv over the grid; equals F to machine precision for
// fields vanishing on the boundary.
Mat mean_state(const GridField& g, const Mat& F);

struct FourierResult {
  double elastic = 0.0;  // E~_el
  double mass = 0.0;     // sum_{k != 0} |f^|^2, should be theta(1-theta)|Omega|
  double theta_g = 0.0;  // measured phase-1 area fraction
};

// Relaxed elastic lower-bound energy of the phase field alone.  W is the set
// of optimal lamination directions (at most two lines through the origin in
// the plane); FullSphere (equicompatible) data is rejected.  L is the
// multiplier vanishing order.  Requires the unit-square domain.  With the
// default pad = 2 the FFT runs on a 2x zero-extended grid (the whole-space
// setting of the lower bound); pad = 1 treats the field as periodic on the
// torus, which is exact for laminates and tiled branching phases -- the
// sharp window of the zero-extension otherwise leaks O(1/k) of the mass off
// the lamination lines.
FourierResult fourier_relaxed_energy(const GridField& g, const LaminationSet& W,
                                     int L, int pad = 2);

// One row per cell center: x1,x2,v1,v2,phase with node values averaged.
void dump_grid_csv(const GridField& g, std::ostream& os);

}  // namespace tw
