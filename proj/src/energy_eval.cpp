#include "twowell/energy_eval.hpp"

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace tw {

namespace {

void check_grid_n(int n) {
  if (n < 64 || n > 8192 || (n & (n - 1)) != 0)
    throw std::invalid_argument("grid: n must be a power of two in [64, 8192]");
}

}  // namespace

GridField rasterize(const BranchField& f, int n) {
  check_grid_n(n);
  GridField g;
  g.n = n;
  g.mode = f.op.kind == OpKind::CurlCurl ? GradMode::Symmetrized : GradMode::Full;
  g.min_feature = f.min_cell_width();
  g.vx.resize(static_cast<size_t>(n + 1) * (n + 1));
  g.vy.resize(g.vx.size());
  g.phase.resize(static_cast<size_t>(n) * n);
  const double d = 1.0 / n;
  for (int i2 = 0; i2 <= n; ++i2)
    for (int i1 = 0; i1 <= n; ++i1) {
      double v[2];
      f.displacement(i1 * d, i2 * d, v);
      g.vx[g.node(i1, i2)] = v[0];
      g.vy[g.node(i1, i2)] = v[1];
    }
  for (int i2 = 0; i2 < n; ++i2)
    for (int i1 = 0; i1 < n; ++i1)
      g.phase[g.cell(i1, i2)] = f.phase((i1 + 0.5) * d, (i2 + 0.5) * d);
  return g;
}

GridField rasterize_cell(const UnitCell& cell, int n) {
  check_grid_n(n);
  GridField g;
  g.n = n;
  g.mode = (cell.kind == CellKind::CCInterior || cell.kind == CellKind::CCCutoff)
               ? GradMode::Symmetrized
               : GradMode::Full;
  g.ox = -cell.l;
  g.oy = 0.0;
  g.ex = 2.0 * cell.l;
  g.ey = cell.h;
  g.min_feature = 2.0 * cell.l * std::min(cell.data.theta, 1.0 - cell.data.theta);
  g.vx.resize(static_cast<size_t>(n + 1) * (n + 1));
  g.vy.resize(g.vx.size());
  g.phase.resize(static_cast<size_t>(n) * n);
  const double dx = g.dx(), dy = g.dy();
  for (int i2 = 0; i2 <= n; ++i2)
    for (int i1 = 0; i1 <= n; ++i1) {
      double v[2];
      cell.displacement(g.ox + i1 * dx, g.oy + i2 * dy, v);
      g.vx[g.node(i1, i2)] = v[0];
      g.vy[g.node(i1, i2)] = v[1];
    }
  for (int i2 = 0; i2 < n; ++i2)
    for (int i1 = 0; i1 < n; ++i1)
      g.phase[g.cell(i1, i2)] =
          cell.phase(g.ox + (i1 + 0.5) * dx, g.oy + (i2 + 0.5) * dy);
  return g;
}

EnergyBreakdown elastic_energy(const GridField& g, const Mat& F, const Mat& chi0,
                               const Mat& chi1, const Mat* right_rot) {
  if (g.n <= 0) throw std::invalid_argument("elastic_energy: empty grid");
  EnergyBreakdown out;
  const double dx = g.dx(), dy = g.dy();
  out.resolution_warning =
      g.min_feature > 0.0 && g.min_feature < 2.0 * std::max(dx, dy);
  const double cell_area = dx * dy;
  double acc = 0.0;
  Mat grad(2), state(2);
  for (int i2 = 0; i2 < g.n; ++i2) {
    for (int i1 = 0; i1 < g.n; ++i1) {
      const int n00 = g.node(i1, i2), n10 = g.node(i1 + 1, i2);
      const int n01 = g.node(i1, i2 + 1), n11 = g.node(i1 + 1, i2 + 1);
      // four-corner central difference at the cell center
      grad(0, 0) = ((g.vx[n10] + g.vx[n11]) - (g.vx[n00] + g.vx[n01])) / (2.0 * dx);
      grad(1, 0) = ((g.vy[n10] + g.vy[n11]) - (g.vy[n00] + g.vy[n01])) / (2.0 * dx);
      grad(0, 1) = ((g.vx[n01] + g.vx[n11]) - (g.vx[n00] + g.vx[n10])) / (2.0 * dy);
      grad(1, 1) = ((g.vy[n01] + g.vy[n11]) - (g.vy[n00] + g.vy[n10])) / (2.0 * dy);
      state = F + grad;
      if (right_rot != nullptr) state = matmul(state, *right_rot);
      if (g.mode == GradMode::Symmetrized) state = sym_part(state);
      const Mat& chi = g.phase[g.cell(i1, i2)] == 1 ? chi1 : chi0;
      acc += fnorm2(state - chi) * cell_area;
    }
  }
  out.elastic = acc;
  return out;
}

double surface_grid(const GridField& g, double jump_norm) {
  const double dx = g.dx(), dy = g.dy();
  double len = 0.0;
  for (int i2 = 0; i2 < g.n; ++i2)
    for (int i1 = 0; i1 + 1 < g.n; ++i1)
      if (g.phase[g.cell(i1, i2)] != g.phase[g.cell(i1 + 1, i2)]) len += dy;
  for (int i2 = 0; i2 + 1 < g.n; ++i2)
    for (int i1 = 0; i1 < g.n; ++i1)
      if (g.phase[g.cell(i1, i2)] != g.phase[g.cell(i1, i2 + 1)]) len += dx;
  return jump_norm * len;
}

Mat mean_state(const GridField& g, const Mat& F) {
  const double dx = g.dx(), dy = g.dy();
  Mat acc(2);
  for (int i2 = 0; i2 < g.n; ++i2) {
    for (int i1 = 0; i1 < g.n; ++i1) {
      const int n00 = g.node(i1, i2), n10 = g.node(i1 + 1, i2);
      const int n01 = g.node(i1, i2 + 1), n11 = g.node(i1 + 1, i2 + 1);
      acc(0, 0) += ((g.vx[n10] + g.vx[n11]) - (g.vx[n00] + g.vx[n01])) / (2.0 * dx);
      acc(1, 0) += ((g.vy[n10] + g.vy[n11]) - (g.vy[n00] + g.vy[n01])) / (2.0 * dx);
      acc(0, 1) += ((g.vx[n01] + g.vx[n11]) - (g.vx[n00] + g.vx[n10])) / (2.0 * dy);
      acc(1, 1) += ((g.vy[n01] + g.vy[n11]) - (g.vy[n00] + g.vy[n10])) / (2.0 * dy);
    }
  }
  const double cells = static_cast<double>(g.n) * g.n;
  return F + (1.0 / cells) * acc;
}

FourierResult fourier_relaxed_energy(const GridField& g, const LaminationSet& W,
                                     int L, int pad) {
  if (W.kind == LaminationSet::Kind::FullSphere)
    throw std::invalid_argument(
        "fourier_relaxed_energy: equicompatible data has no spectral gap");
  if (L < 1) throw std::invalid_argument("fourier_relaxed_energy: order must be >= 1");
  if (pad < 1 || pad > 4)
    throw std::invalid_argument("fourier_relaxed_energy: pad factor in [1, 4]");
  if (std::abs(g.ox) > 1e-12 || std::abs(g.oy) > 1e-12 ||
      std::abs(g.ex - 1.0) > 1e-12 || std::abs(g.ey - 1.0) > 1e-12)
    throw std::invalid_argument("fourier_relaxed_energy: unit-square grids only");

  // collect the <= 2 lines spanned by the optimal directions
  std::vector<Vecd> lines;
  const std::vector<Vecd>& cands =
      W.kind == LaminationSet::Kind::FourPoints ? W.points : W.witnesses;
  for (const Vecd& v : cands) {
    const Vecd u = normalized(v);
    bool known = false;
    for (const Vecd& w : lines)
      if (std::abs(dot(u, w)) > 1.0 - 1e-9) known = true;
    if (!known) lines.push_back(u);
  }
  if (lines.empty() || lines.size() > 2)
    throw std::invalid_argument("fourier_relaxed_energy: need one or two lines");

  const int n = g.n, m = pad * n;
  const double theta_g = [&] {
    long count = 0;
    for (int p : g.phase) count += p;
    return static_cast<double>(count) / (static_cast<double>(n) * n);
  }();

  std::vector<double> in(static_cast<size_t>(m) * m, 0.0);
  std::vector<std::complex<double>> out(static_cast<size_t>(m) * (m / 2 + 1));
  fftw_plan plan = fftw_plan_dft_r2c_2d(
      m, m, in.data(), reinterpret_cast<fftw_complex*>(out.data()), FFTW_ESTIMATE);
  if (plan == nullptr) throw std::runtime_error("fourier_relaxed_energy: fftw plan");
  for (int i2 = 0; i2 < n; ++i2)
    for (int i1 = 0; i1 < n; ++i1)
      in[static_cast<size_t>(i2) * m + i1] =
          g.phase[g.cell(i1, i2)] == 1 ? 1.0 - theta_g : -theta_g;
  fftw_execute(plan);
  fftw_destroy_plan(plan);

  // |f^(xi)|^2 integrated with the homogeneous weight: the physical scaling
  // of xi drops out, so fold indices to signed integer frequencies.  The
  // transform's halved axis is the inner (x1) index, the full axis is x2.
  const double norm =
      1.0 / (static_cast<double>(pad) * pad * std::pow(static_cast<double>(n), 4));
  double elastic = 0.0, mass = 0.0;
  for (int jy = 0; jy < m; ++jy) {
    const double ky = jy > m / 2 ? jy - m : jy;
    for (int jx = 0; jx <= m / 2; ++jx) {
      if (jy == 0 && jx == 0) continue;
      const double kx = jx;
      const double mult = (jx > 0 && jx < m / 2) ? 2.0 : 1.0;
      const std::complex<double>& c = out[static_cast<size_t>(jy) * (m / 2 + 1) + jx];
      const double p = std::norm(c) * mult;
      const double kk = kx * kx + ky * ky;
      double dist2 = kk;
      for (const Vecd& w : lines) {
        const double along = kx * w[0] + ky * w[1];
        dist2 = std::min(dist2, kk - along * along);
      }
      dist2 = std::max(dist2, 0.0);
      elastic += p * std::pow(dist2 / kk, L);
      mass += p;
    }
  }
  FourierResult r;
  r.elastic = elastic * norm;
  r.mass = mass * norm;
  r.theta_g = theta_g;
  return r;
}

void dump_grid_csv(const GridField& g, std::ostream& os) {
  os << "x1,x2,v1,v2,phase\n";
  char buf[160];
  const double dx = g.dx(), dy = g.dy();
  for (int i2 = 0; i2 < g.n; ++i2) {
    for (int i1 = 0; i1 < g.n; ++i1) {
      const int n00 = g.node(i1, i2), n10 = g.node(i1 + 1, i2);
      const int n01 = g.node(i1, i2 + 1), n11 = g.node(i1 + 1, i2 + 1);
      const double v1 = 0.25 * (g.vx[n00] + g.vx[n10] + g.vx[n01] + g.vx[n11]);
      const double v2 = 0.25 * (g.vy[n00] + g.vy[n10] + g.vy[n01] + g.vy[n11]);
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%d\n",
                    g.ox + (i1 + 0.5) * dx, g.oy + (i2 + 0.5) * dy, v1, v2,
                    g.phase[g.cell(i1, i2)]);
      os << buf;
    }
  }
}

}  // namespace tw
