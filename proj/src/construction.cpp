#include "twowell/construction.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <utility>

namespace tw {

namespace {

// --- quadrature helpers ------------------------------------------------------

struct GlRule {
  std::vector<double> x, w;  // nodes/weights on [-1, 1]
};

// Gauss-Legendre nodes by Newton iteration on the Legendre recurrence.
const GlRule& gl_rule(int n) {
  static std::mutex mu;
  static std::map<int, GlRule> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  GlRule r;
  r.x.resize(n);
  r.w.resize(n);
  const int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
      }
      pp = n * (z * p0 - p1) / (z * z - 1.0);
      double dz = p0 / pp;
      z -= dz;
      if (std::abs(dz) < 1e-15) break;
    }
    r.x[i] = -z;
    r.x[n - 1 - i] = z;
    r.w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
    r.w[n - 1 - i] = r.w[i];
  }
  return cache.emplace(n, std::move(r)).first->second;
}

template <class F>
double gl_integrate(F&& f, double a, double b, int n) {
  const GlRule& r = gl_rule(n);
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += r.w[i] * f(mid + half * r.x[i]);
  return s * half;
}

double simpson_value(double a, double b, double fa, double fm, double fb) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

template <class F>
double adaptive_simpson_rec(F&& f, double a, double m, double b, double fa, double fm,
                            double fb, double whole, double tol, int depth) {
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = simpson_value(a, m, fa, flm, fm);
  const double right = simpson_value(m, b, fm, frm, fb);
  if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return adaptive_simpson_rec(f, a, lm, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson_rec(f, m, rm, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

template <class F>
double adaptive_simpson(F&& f, double a, double b, double tol) {
  const double m = 0.5 * (a + b);
  const double fa = f(a), fm = f(m), fb = f(b);
  return adaptive_simpson_rec(f, a, m, b, fa, fm, fb, simpson_value(a, b, fa, fm, fb),
                              tol, 40);
}

// Cubic interface interpolant and derivatives used by the curlcurl cells.
double gamma_interp(double s) { return (3.0 - 2.0 * s) * s * s; }
double gamma_interp_d1(double s) { return 6.0 * s * (1.0 - s); }
double gamma_interp_d2(double s) { return 6.0 - 12.0 * s; }

Mat rotation_from_normal(const Vecd& xi) {
  Mat r(2);
  r(0, 0) = xi[0];
  r(1, 0) = xi[1];
  r(0, 1) = -xi[1];
  r(1, 1) = xi[0];
  return r;
}

bool is_exact_e1(const Vecd& xi) {
  return xi.size() == 2 && xi[0] == 1.0 && xi[1] == 0.0;
}

}  // namespace

// --- profiles ----------------------------------------------------------------

double sawtooth(double theta, double t) {
  const double s = std::remainder(t, 2.0);  // [-1, 1]
  if (s < -theta) return -theta * (1.0 + s);
  if (s < theta) return (1.0 - theta) * s;
  return -theta * (s - 1.0);
}

double sawtooth_scaled(double theta, double r, double t) {
  return r * sawtooth(theta, t / r);
}

double sawtooth_slope(double theta, double r, double t) {
  const double s = std::remainder(t / r, 2.0);
  return (s >= -theta && s < theta) ? (1.0 - theta) : -theta;
}

double cutoff_ramp(double t) {
  if (t <= 0.5) return 1.0;
  if (t >= 0.75) return 0.0;
  return -4.0 * t + 3.0;
}

double cutoff_ramp_slope(double t) {
  return (t > 0.5 && t < 0.75) ? -4.0 : 0.0;
}

const char* cell_kind_name(CellKind k) {
  switch (k) {
    case CellKind::GradInterior: return "grad_interior";
    case CellKind::GradCutoff: return "grad_cutoff";
    case CellKind::CCInterior: return "cc_interior";
    case CellKind::CCCutoff: return "cc_cutoff";
  }
  return "?";
}

// --- unit cells ----------------------------------------------------------------

double UnitCell::gamma_shear() const { return (1.0 - data.theta) * l / (2.0 * h); }
double UnitCell::alpha_offset() const { return (1.0 - data.theta) * l / 2.0; }

namespace {

bool is_interior_kind(CellKind k) {
  return k == CellKind::GradInterior || k == CellKind::CCInterior;
}

// Horizontal interface offset at height x2: straight shear for gradient
// cells, cubic interpolation for curlcurl cells.
double boundary_offset(const UnitCell& c, double x2) {
  if (c.kind == CellKind::GradInterior) return c.gamma_shear() * x2;
  return c.alpha_offset() * gamma_interp(x2 / c.h);
}

void validate_cell(const UnitCell& c) {
  if (!(c.l > 0.0) || !(c.h > 0.0))
    throw std::invalid_argument("cell: l, h must be positive");
  if (is_interior_kind(c.kind)) {
    if (!(c.l <= c.h) || !(c.h <= 1.0))
      throw std::invalid_argument("interior cell needs 0 < l <= h <= 1");
  } else {
    if (!(c.l <= 2.0 * c.h) || !(2.0 * c.h <= 1.0))
      throw std::invalid_argument("cutoff cell needs 0 < l <= 2h <= 1");
  }
  if (!(c.data.theta > 0.0 && c.data.theta < 1.0))
    throw std::invalid_argument("cell: theta must lie in (0,1)");
}

}  // namespace

int UnitCell::region(double x1, double x2) const {
  const double tl = data.theta * l;
  if (!is_interior_kind(kind)) {
    // Half-open strip matching the sawtooth_slope branch convention.
    if (x1 < -tl) return 1;
    if (x1 < tl) return 2;
    return 3;
  }
  const double c = boundary_offset(*this, x2);
  if (x1 < -tl - c) return 1;
  if (x1 < -c) return 2;
  if (x1 <= c) return 3;
  if (x1 <= tl + c) return 4;
  return 5;
}

int UnitCell::phase(double x1, double x2) const {
  const int r = region(x1, x2);
  if (!is_interior_kind(kind)) return r == 2 ? 1 : 0;
  return (r == 2 || r == 4) ? 1 : 0;
}

void UnitCell::displacement(double x1, double x2, double out[2]) const {
  const double th = data.theta;
  if (!is_interior_kind(kind)) {
    const double f = cutoff_ramp(x2 / h) * sawtooth_scaled(th, l, x1);
    out[0] = f * data.b[0];
    out[1] = f * data.b[1];
    return;
  }
  const double c = boundary_offset(*this, x2);
  const double tl = th * l;
  double v1;
  switch (region(x1, x2)) {
    case 1: v1 = -th * (l + x1); break;
    case 2: v1 = (1.0 - th) * x1 + c; break;
    case 3: v1 = -th * x1; break;
    case 4: v1 = (1.0 - th) * x1 - c; break;
    default: v1 = -th * (x1 - l); break;
  }
  if (kind == CellKind::GradInterior) {
    out[0] = v1 * data.b[0];
    out[1] = v1 * data.b[1];
    return;
  }
  // Curlcurl interior cell: the second component keeps the off-diagonal of
  // sym grad v identically zero.
  const double s = x2 / h;
  const double g1 = gamma_interp_d1(s);
  const double a = alpha_offset();
  double v2;
  switch (region(x1, x2)) {
    case 2: v2 = -(a / h) * g1 * (tl + c + x1); break;
    case 3: v2 = -(a / h) * g1 * tl; break;
    case 4: v2 = -(a / h) * g1 * (tl + c - x1); break;
    default: v2 = 0.0; break;
  }
  out[0] = v1;
  out[1] = v2;
}

Mat UnitCell::grad_v(double x1, double x2) const {
  const double th = data.theta;
  Mat g(2);
  if (!is_interior_kind(kind)) {
    const double d1 = cutoff_ramp(x2 / h) * sawtooth_slope(th, l, x1);
    const double d2 = cutoff_ramp_slope(x2 / h) / h * sawtooth_scaled(th, l, x1);
    for (int i = 0; i < 2; ++i) {
      g(i, 0) = data.b[i] * d1;
      g(i, 1) = data.b[i] * d2;
    }
    return g;
  }
  const int r = region(x1, x2);
  const double d1v1 = (r == 2 || r == 4) ? (1.0 - th) : -th;
  if (kind == CellKind::GradInterior) {
    const double gam = gamma_shear();
    const double d2v1 = (r == 2) ? gam : (r == 4 ? -gam : 0.0);
    for (int i = 0; i < 2; ++i) {
      g(i, 0) = data.b[i] * d1v1;
      g(i, 1) = data.b[i] * d2v1;
    }
    return g;
  }
  const double s = x2 / h, a = alpha_offset(), tl = th * l;
  const double g1 = gamma_interp_d1(s), g2 = gamma_interp_d2(s);
  const double c = a * gamma_interp(s);
  double d2v1 = 0.0, d1v2 = 0.0, d2v2 = 0.0;
  if (r == 2) {
    d2v1 = a * g1 / h;
    d1v2 = -a * g1 / h;
    d2v2 = -(a / (h * h)) * g2 * (tl + c + x1) - (a * a / (h * h)) * g1 * g1;
  } else if (r == 3) {
    d2v2 = -(a / (h * h)) * g2 * tl;
  } else if (r == 4) {
    d2v1 = -a * g1 / h;
    d1v2 = a * g1 / h;
    d2v2 = -(a / (h * h)) * g2 * (tl + c - x1) - (a * a / (h * h)) * g1 * g1;
  }
  g(0, 0) = d1v1;
  g(0, 1) = d2v1;
  g(1, 0) = d1v2;
  g(1, 1) = d2v2;
  return g;
}

Mat UnitCell::state(double x1, double x2) const {
  const Mat g = grad_v(x1, x2);
  if (kind == CellKind::GradInterior || kind == CellKind::GradCutoff)
    return data.F + g;
  return data.F + sym_part(g);
}

std::vector<double> UnitCell::region_areas() const {
  const double th = data.theta;
  if (!is_interior_kind(kind))
    return {0.0, (1.0 - th) * l * h, 2.0 * th * l * h, (1.0 - th) * l * h};
  // Integral of the interface offset over the cell height.
  const double C = (kind == CellKind::GradInterior)
                       ? gamma_shear() * h * h / 2.0
                       : alpha_offset() * h / 2.0;  // integral of gamma_interp is 1/2
  const double side = (1.0 - th) * l * h - C;
  return {0.0, side, th * l * h, 2.0 * C, th * l * h, side};
}

double cc_interior_compat_quadrature(double l, double h, double theta, int npts) {
  const double a = (1.0 - theta) * l / 2.0;
  const double tl = theta * l;
  auto f = [&](double s) {
    const double A = -(a / (h * h)) * gamma_interp_d2(s);
    const double g1 = gamma_interp_d1(s);
    const double B = -(a * a / (h * h)) * g1 * g1;
    const double side = A * A * tl * tl * tl / 3.0 + A * B * tl * tl + B * B * tl;
    const double mid = (A * tl) * (A * tl) * 2.0 * a * gamma_interp(s);
    return 2.0 * side + mid;
  };
  return h * gl_integrate(f, 0.0, 1.0, npts);
}

namespace {

// Independent elastic integral of |state - chi|^2 for cutoff cells: the
// integrand is piecewise polynomial on the 3x3 split at x1 = +-theta l and
// x2 = h/2, 3h/4.
double cutoff_elastic_direct(const UnitCell& c) {
  const double tl = c.data.theta * c.l;
  const double xs[4] = {-c.l, -tl, tl, c.l};
  const double ys[4] = {0.0, 0.5 * c.h, 0.75 * c.h, c.h};
  double total = 0.0;
  for (int ix = 0; ix < 3; ++ix)
    for (int iy = 0; iy < 3; ++iy) {
      auto fx = [&](double x1) {
        auto fy = [&](double x2) {
          const Mat u = c.state(x1, x2);
          const Mat& chi = c.phase(x1, x2) ? c.data.a1 : c.data.a0;
          return fnorm2(u - chi);
        };
        return gl_integrate(fy, ys[iy], ys[iy + 1], 4);
      };
      total += gl_integrate(fx, xs[ix], xs[ix + 1], 4);
    }
  return total;
}

// Same for the curlcurl interior cell: Gauss in x1 per region (degree <= 2
// there), Gauss-Legendre across the height (polynomial in s).
double cc_interior_elastic_direct(const UnitCell& c) {
  const double tl = c.data.theta * c.l;
  auto row = [&](double s) {
    const double x2 = s * c.h;
    const double off = c.alpha_offset() * gamma_interp(s);
    const double bounds[6] = {-c.l, -tl - off, -off, off, tl + off, c.l};
    double sum = 0.0;
    for (int r = 0; r < 5; ++r) {
      auto fx = [&](double x1) {
        const Mat u = c.state(x1, x2);
        const Mat& chi = c.phase(x1, x2) ? c.data.a1 : c.data.a0;
        return fnorm2(u - chi);
      };
      sum += gl_integrate(fx, bounds[r], bounds[r + 1], 4);
    }
    return sum;
  };
  return c.h * gl_integrate(row, 0.0, 1.0, 32);
}

CellLedger grad_interior_ledger(const UnitCell& c) {
  CellLedger led;
  const double th = c.data.theta;
  const double gam = c.gamma_shear();
  const double bb = norm2(c.data.b);
  led.excess = 2.0 * c.l * c.h * c.data.E0_density;
  led.int_A2 = 0.0;
  led.int_B2 = gam * gam * 2.0 * th * c.l * c.h;
  led.compat = bb * led.int_B2;
  led.cross = 0.0;  // the +/- shear regions have equal area and cancel
  led.surface_len = 4.0 * c.h * std::sqrt(1.0 + gam * gam);
  // Independent route: the integrand is constant on each of the five regions.
  const std::vector<double> areas = c.region_areas();
  const double x2 = 0.5 * c.h;
  const double off = boundary_offset(c, x2);
  const double tl = th * c.l;
  const double mids[6] = {0.0,
                          0.5 * (-c.l - tl - off),
                          0.5 * (-tl - 2.0 * off),
                          0.0,
                          0.5 * (tl + 2.0 * off),
                          0.5 * (c.l + tl + off)};
  for (int r = 1; r <= 5; ++r) {
    const Mat u = c.state(mids[r], x2);
    const Mat& chi = c.phase(mids[r], x2) ? c.data.a1 : c.data.a0;
    led.elastic_direct += areas[r] * fnorm2(u - chi);
  }
  return led;
}

CellLedger cutoff_profile_ledger(const UnitCell& c) {
  CellLedger led;
  const double th = c.data.theta;
  led.excess = 2.0 * c.l * c.h * c.data.E0_density;
  led.int_A2 = (2.0 / 3.0) * th * (1.0 - th) * c.l * c.h;
  led.int_B2 = (8.0 / 3.0) * th * th * (1.0 - th) * (1.0 - th) * c.l * c.l * c.l / c.h;
  led.cross = 0.0;  // the sawtooth integrates to zero within each phase
  led.surface_len = 2.0 * c.h;
  led.elastic_direct = cutoff_elastic_direct(c);
  const double bb = norm2(c.data.b);
  if (c.kind == CellKind::GradCutoff) {
    led.compat = bb * (led.int_A2 + led.int_B2);
  } else {
    // Symmetrized gradient: the two profile components pick up the weights
    // (|b|^2 + (b.e1)^2) / 2|b|^2 and (|b|^2 + (b.e2)^2) / 2|b|^2.
    const double rho1 = (bb + c.data.b[0] * c.data.b[0]) / (2.0 * bb);
    const double rho2 = (bb + c.data.b[1] * c.data.b[1]) / (2.0 * bb);
    led.compat = bb * (rho1 * led.int_A2 + rho2 * led.int_B2);
  }
  return led;
}

CellLedger cc_interior_ledger(const UnitCell& c) {
  CellLedger led;
  const double tl = c.data.theta * c.l, a = c.alpha_offset(), h = c.h;
  led.excess = 2.0 * c.l * c.h * c.data.E0_density;
  led.compat = cc_interior_compat_quadrature(c.l, c.h, c.data.theta, 32);
  // Cross term: d2 v2 integrates slice-exactly per region; the tilde-well
  // offsets weight the two phases. The total vanishes because v2 = 0 at the
  // cell top and bottom.
  const Mat c1 = c.data.ta1 - c.data.a1;
  const Mat c0 = c.data.ta0 - c.data.a0;
  auto t_phase1 = [&](double s) {
    const double A = -(a / (h * h)) * gamma_interp_d2(s);
    const double g1 = gamma_interp_d1(s);
    const double B = -(a * a / (h * h)) * g1 * g1;
    return 2.0 * (A * tl * tl / 2.0 + B * tl);
  };
  auto t_phase0 = [&](double s) {
    const double A = -(a / (h * h)) * gamma_interp_d2(s);
    return A * tl * 2.0 * a * gamma_interp(s);
  };
  const double T1 = h * gl_integrate(t_phase1, 0.0, 1.0, 32);
  const double T0 = h * gl_integrate(t_phase0, 0.0, 1.0, 32);
  led.cross = 2.0 * (c1(1, 1) * T1 + c0(1, 1) * T0);
  auto arc = [&](double s) {
    const double d = a * gamma_interp_d1(s);
    return std::sqrt(h * h + d * d);
  };
  led.surface_len = 4.0 * adaptive_simpson(arc, 0.0, 1.0, 1e-13 * (h + a));
  led.elastic_direct = cc_interior_elastic_direct(c);
  return led;
}

UnitCell make_cell(CellKind kind, const CanonicalState& data, double l, double h) {
  UnitCell c;
  c.kind = kind;
  c.l = l;
  c.h = h;
  c.data = data;
  validate_cell(c);
  return c;
}

}  // namespace

CellLedger UnitCell::ledger() const {
  switch (kind) {
    case CellKind::GradInterior: return grad_interior_ledger(*this);
    case CellKind::GradCutoff:
    case CellKind::CCCutoff: return cutoff_profile_ledger(*this);
    case CellKind::CCInterior: return cc_interior_ledger(*this);
  }
  throw std::logic_error("unreachable cell kind");
}

UnitCell grad_interior_cell(const CanonicalState& d, double l, double h) {
  return make_cell(CellKind::GradInterior, d, l, h);
}
UnitCell grad_cutoff_cell(const CanonicalState& d, double l, double h) {
  return make_cell(CellKind::GradCutoff, d, l, h);
}
UnitCell cc_interior_cell(const CanonicalState& d, double l, double h) {
  return make_cell(CellKind::CCInterior, d, l, h);
}
UnitCell cc_cutoff_cell(const CanonicalState& d, double l, double h) {
  return make_cell(CellKind::CCCutoff, d, l, h);
}

// --- reductions ----------------------------------------------------------------

const char* reduce_route_name(ReduceRoute r) {
  switch (r) {
    case ReduceRoute::CurlRotation: return "curl_rotation";
    case ReduceRoute::DivToCurl: return "div_to_curl";
    case ReduceRoute::CCSemidef: return "cc_semidef";
    case ReduceRoute::CCIndefiniteLift: return "cc_indefinite_lift";
    case ReduceRoute::CCRankOneFrame: return "cc_rank_one_frame";
  }
  return "?";
}

Vecd BackTransform::map_point(const Vecd& y) const { return matvec(R, y); }

Mat BackTransform::map_state(const Mat& m) const {
  if (conjugate) return state_scale * matmul(matmul(R, m), transpose(R));
  Mat out = matmul(m, transpose(R));
  if (div_route) {
    // Undo the right factor S^T that turned div-free data into curl-free data.
    Mat s(2, {0.0, -1.0, 1.0, 0.0});
    out = matmul(out, s);
  }
  return out;
}

Vecd BackTransform::map_displacement(const Vecd& v) const {
  Vecd out = matvec(R, v);
  if (conjugate)
    for (double& c : out) c *= state_scale;
  return out;
}

namespace {

void check_reduction_consistency(const RelaxReport& orig, const ProblemData& canonical,
                                 double energy_scale, const char* what) {
  const RelaxReport rc = relax_report(canonical);
  if (std::abs(rc.theta_tilde - orig.theta_tilde) > 1e-9)
    throw std::logic_error(std::string(what) + ": optimal fraction not preserved");
  if (std::abs(energy_scale * rc.E0_density - orig.E0_density) >
      1e-9 * std::max(1.0, orig.E0_density))
    throw std::logic_error(std::string(what) + ": excess energy not preserved");
}

}  // namespace

CanonicalReduction reduce_to_canonical(const ProblemData& data, const Vecd& xi_star,
                                       ReduceTarget target) {
  if (data.op.d != 2)
    throw std::invalid_argument("reduce_to_canonical: planar data only");
  const Direction xi(xi_star);
  const Mat a = data.a();
  if (multiplier_p(data.op, a, xi) > 1e-8 * fnorm2(a))
    throw std::invalid_argument("reduce_to_canonical: xi_star is not an optimal direction");
  const RelaxReport rr = relax_report(data);
  if (rr.regime != Regime::Mixing)
    throw std::invalid_argument("reduce_to_canonical: data must be in the mixing regime");

  const Mat R = rotation_from_normal(xi.xi);

  if (data.op.kind == OpKind::Curl || data.op.kind == OpKind::Div) {
    Mat lf = data.F, l0 = data.a0, l1 = data.a1;
    const bool div = data.op.kind == OpKind::Div;
    if (div) {
      // Right-multiplying by S^T (S the quarter turn) carries div-free fields
      // to curl-free fields; the phase pattern and optimal normal are kept.
      Mat st(2, {0.0, 1.0, -1.0, 0.0});
      lf = matmul(lf, st);
      l0 = matmul(l0, st);
      l1 = matmul(l1, st);
    }
    CanonicalReduction red(ProblemData(DiffOp{OpKind::Curl, 2}, matmul(lf, R),
                                       matmul(l0, R), matmul(l1, R)));
    red.route = div ? ReduceRoute::DivToCurl : ReduceRoute::CurlRotation;
    red.back.R = R;
    red.back.div_route = div;
    red.xi_star = xi.xi;
    red.lifted_F = lf;
    red.lifted_a0 = l0;
    red.lifted_a1 = l1;
    check_reduction_consistency(rr, red.canonical, 1.0, reduce_route_name(red.route));
    return red;
  }

  // CurlCurl data.
  const EigenSym es = sym_eigen(a);
  const double lo = es.val[0], hi = es.val[1];
  const double eig_scale = std::max(std::abs(lo), std::abs(hi));
  const bool rank_one = std::min(std::abs(lo), std::abs(hi)) <= 1e-10 * eig_scale;

  if (target == ReduceTarget::CCFourFifths ||
      (target == ReduceTarget::Auto && rank_one)) {
    if (!rank_one)
      throw std::invalid_argument(
          "reduce_to_canonical: rank-one frame needs a rank-one well difference");
    const double lambda = std::abs(hi) >= std::abs(lo) ? hi : lo;
    const Mat rt = transpose(R);
    auto conj_scaled = [&](const Mat& m) {
      return (1.0 / lambda) * matmul(matmul(rt, m), R);
    };
    CanonicalReduction red(ProblemData(DiffOp{OpKind::CurlCurl, 2}, conj_scaled(data.F),
                                       conj_scaled(data.a0), conj_scaled(data.a1)));
    red.route = ReduceRoute::CCRankOneFrame;
    red.back.R = R;
    red.back.conjugate = true;
    red.back.state_scale = lambda;
    red.back.energy_scale = lambda * lambda;
    red.back.surface_scale = std::abs(lambda);
    red.back.eps_scale = std::abs(lambda);
    red.xi_star = xi.xi;
    red.lifted_F = data.F;
    red.lifted_a0 = data.a0;
    red.lifted_a1 = data.a1;
    red.cc_jump_norm = fnorm(a);
    check_reduction_consistency(rr, red.canonical, red.back.energy_scale,
                                reduce_route_name(red.route));
    return red;
  }

  // Gradient routes for curlcurl data: keep the wells when the difference is
  // semidefinite, otherwise lift them by the asymmetric rank-one part.
  const bool semidef = lo * hi >= -1e-10 * eig_scale * eig_scale;
  Mat l0 = data.a0, l1 = data.a1;
  if (!semidef) {
    const CompatApprox ca = compatible_approximation(data, xi);
    const Mat bx = outer(ca.b, xi.xi);
    const Mat atheta = data.a0 + rr.theta_tilde * a;
    l0 = atheta - rr.theta_tilde * bx;
    l1 = atheta + (1.0 - rr.theta_tilde) * bx;
  }

  const Mat ap = l1 - l0;
  // Transfer condition: xi stays optimal for the lifted gradient problem.
  if (multiplier_p(DiffOp{OpKind::Curl, 2}, ap, xi) > 1e-8 * fnorm2(ap))
    throw std::logic_error("reduce_to_canonical: lifted wells lost optimality of xi_star");
  // Transfer condition: the symmetric parts recover the original wells.
  const double wtol = 1e-10 * std::max(1.0, fnorm(a));
  if (fnorm(sym_part(l0) - data.a0) > wtol || fnorm(sym_part(l1) - data.a1) > wtol)
    throw std::logic_error("reduce_to_canonical: lifted wells do not symmetrize back");

  CanonicalReduction red(ProblemData(DiffOp{OpKind::Curl, 2}, matmul(data.F, R),
                                     matmul(l0, R), matmul(l1, R)));
  red.route = semidef ? ReduceRoute::CCSemidef : ReduceRoute::CCIndefiniteLift;
  red.back.R = R;
  red.xi_star = xi.xi;
  red.lifted_F = data.F;
  red.lifted_a0 = l0;
  red.lifted_a1 = l1;
  // Transfer conditions: fraction and excess agree with the original.
  check_reduction_consistency(rr, red.canonical, 1.0, reduce_route_name(red.route));

  const Vecd b = matvec(ap, xi.xi);  // canonical lamination amplitude
  const double bb = norm2(b);
  const Vecd xip = {-xi.xi[1], xi.xi[0]};
  red.rho1 = (bb + dot(b, xi.xi) * dot(b, xi.xi)) / (2.0 * bb);
  red.rho2 = (bb + dot(b, xip) * dot(b, xip)) / (2.0 * bb);
  red.cc_jump_norm = fnorm(a);
  return red;
}

// --- branchings ----------------------------------------------------------------

int choose_N(double eps, ScalingRoute route) {
  if (!(eps > 0.0 && eps < 1.0))
    throw std::invalid_argument("choose_N: eps must lie in (0,1)");
  const double p = route == ScalingRoute::TwoThirds ? 1.0 / 3.0 : 1.0 / 5.0;
  // Guard against pow landing a hair above an exact integer (e.g. 1e-3 -> 10).
  const double n = std::ceil(std::pow(eps, -p) - 1e-9);
  return n < 2.0 ? 2 : static_cast<int>(n);
}

namespace {

BranchField build_layers(const CanonicalState& cs, bool cc_cells, int N, double tau) {
  if (N < 2) throw std::invalid_argument("branching: N >= 2 required");
  if (!(tau > 0.25 && tau < 0.5))
    throw std::invalid_argument("branching: tau must lie in (1/4, 1/2)");
  BranchField f;
  f.op = cs.op;
  f.data = cs;
  f.R_frame = identity(2);
  f.N = N;
  f.tau = tau;

  double lj = 1.0 / (2.0 * N);
  double hj = (1.0 - tau) / 2.0;
  double y = 0.5;
  if (lj > hj) throw std::logic_error("branching: first layer violates l <= h");
  int j = 0;
  while (true) {
    Layer lay;
    lay.j = j;
    lay.l = lj;
    lay.h = hj;
    lay.y0 = y;
    lay.count = static_cast<long>(N) << j;
    lay.kind = cc_cells ? CellKind::CCInterior : CellKind::GradInterior;
    lay.cell = make_cell(lay.kind, cs, lj, hj);
    lay.led = lay.cell.ledger();
    f.layers.push_back(std::move(lay));
    y += hj;
    const double ln = lj / 2.0, hn = hj * tau;
    if (ln <= hn) {
      lj = ln;
      hj = hn;
      ++j;
    } else {
      break;
    }
  }
  f.j0 = j;

  Layer cut;
  cut.j = j + 1;
  cut.l = lj / 2.0;
  cut.h = 1.0 - y;  // remaining height; exact tiling of [1/2, 1] by construction
  cut.y0 = y;
  cut.count = static_cast<long>(N) << (j + 1);
  cut.kind = cc_cells ? CellKind::CCCutoff : CellKind::GradCutoff;
  if (!(cut.l <= 2.0 * cut.h))
    throw std::logic_error("branching: cutoff layer violates l <= 2h");
  cut.cell = make_cell(cut.kind, cs, cut.l, cut.h);
  cut.led = cut.cell.ledger();
  f.layers.push_back(std::move(cut));

  f.layer_y.clear();
  for (const Layer& lay : f.layers) f.layer_y.push_back(lay.y0);
  f.layer_y.push_back(1.0);

  for (const Layer& lay : f.layers) {
    const double mult = 2.0 * static_cast<double>(lay.count);  // mirror doubles all
    f.excess_total += mult * lay.led.excess;
    f.compat_total += mult * lay.led.compat;
    f.cross_total += mult * lay.led.cross;
    f.interface_length += mult * lay.led.surface_len;
    f.int_A2_total += mult * lay.led.int_A2;
    f.int_B2_total += mult * lay.led.int_B2;
    f.elastic_direct_total += mult * lay.led.elastic_direct;
  }
  return f;
}

CanonicalState canonical_state_from(const ProblemData& pd) {
  const RelaxReport rr = relax_report(pd);
  if (rr.regime != Regime::Mixing)
    throw std::invalid_argument("branching: construction requires the mixing regime");
  const Direction e1(Vecd{1.0, 0.0});
  const CompatApprox ca = compatible_approximation(pd, e1);
  CanonicalState cs;
  cs.op = pd.op;
  cs.F = pd.F;
  cs.a0 = pd.a0;
  cs.a1 = pd.a1;
  cs.ta0 = ca.a0t;
  cs.ta1 = ca.a1t;
  cs.b = ca.b;
  cs.theta = rr.theta_tilde;
  cs.E0_density = rr.E0_density;
  cs.jump_norm = fnorm(pd.a());
  return cs;
}

}  // namespace

BranchField grad_branching(const ProblemData& data, const Vecd& xi_star, int N, double tau) {
  if (data.op.kind != OpKind::Curl || data.op.d != 2)
    throw std::invalid_argument("grad_branching: planar curl data required (reduce first)");
  const Direction xi(xi_star);
  const Mat a = data.a();
  if (multiplier_p(data.op, a, xi) > 1e-8 * fnorm2(a))
    throw std::invalid_argument("grad_branching: xi_star is not an optimal direction");

  Mat R = identity(2);
  ProblemData pd = data;
  if (!is_exact_e1(xi.xi)) {
    R = rotation_from_normal(xi.xi);
    pd = ProblemData(data.op, matmul(data.F, R), matmul(data.a0, R), matmul(data.a1, R));
  }
  BranchField f = build_layers(canonical_state_from(pd), /*cc_cells=*/false, N, tau);
  f.R_frame = R;
  return f;
}

BranchField cc_branching(const ProblemData& data, const Vecd& xi_star, int N, double tau) {
  if (data.op.kind != OpKind::CurlCurl || data.op.d != 2)
    throw std::invalid_argument("cc_branching: planar curlcurl data required");
  const CanonicalReduction red =
      reduce_to_canonical(data, xi_star, ReduceTarget::CCFourFifths);
  BranchField f = build_layers(canonical_state_from(red.canonical), /*cc_cells=*/true,
                               N, tau);
  f.R_frame = red.back.R;
  f.energy_scale = red.back.energy_scale;
  f.surface_scale = red.back.surface_scale;
  f.state_scale = red.back.state_scale;
  return f;
}

double BranchField::phase1_area() const {
  double s = 0.0;
  for (const Layer& lay : layers)
    s += 2.0 * static_cast<double>(lay.count) * data.theta * 2.0 * lay.l * lay.h;
  return s;
}

double BranchField::min_cell_width() const { return 2.0 * layers.back().l; }

BranchField::CellRef BranchField::locate(double x1, double x2) const {
  CellRef ref;
  ref.mirrored = x2 < 0.5;
  const double xp = ref.mirrored ? 1.0 - x2 : x2;
  int idx = static_cast<int>(std::upper_bound(layer_y.begin(), layer_y.end(), xp) -
                             layer_y.begin()) - 1;
  idx = std::max(0, std::min(idx, static_cast<int>(layers.size()) - 1));
  ref.layer = idx;
  const Layer& lay = layers[idx];
  const double w = 2.0 * lay.l;
  long k = static_cast<long>(std::floor(x1 / w));
  k = std::max(0L, std::min(k, lay.count - 1));
  ref.k = k;
  ref.lx1 = x1 - (static_cast<double>(k) + 0.5) * w;
  ref.lx2 = xp - lay.y0;
  return ref;
}

void BranchField::displacement(double x1, double x2, double out[2]) const {
  const CellRef ref = locate(x1, x2);
  layers[ref.layer].cell.displacement(ref.lx1, ref.lx2, out);
  if (ref.mirrored && op.kind == OpKind::CurlCurl) out[1] = -out[1];
}

int BranchField::phase(double x1, double x2) const {
  const CellRef ref = locate(x1, x2);
  return layers[ref.layer].cell.phase(ref.lx1, ref.lx2);
}

int BranchField::region(double x1, double x2) const {
  const CellRef ref = locate(x1, x2);
  return layers[ref.layer].cell.region(ref.lx1, ref.lx2);
}

Mat BranchField::state(double x1, double x2) const {
  const CellRef ref = locate(x1, x2);
  const UnitCell& cell = layers[ref.layer].cell;
  Mat g = cell.grad_v(ref.lx1, ref.lx2);
  if (ref.mirrored) {
    // Mirror rule: v(x1, 1-x2) for gradient cells, (v1, -v2)(x1, 1-x2) for
    // curlcurl cells; either way the x2-derivative column flips sign first.
    g(0, 1) = -g(0, 1);
    g(1, 1) = -g(1, 1);
    if (op.kind == OpKind::CurlCurl) {
      g(1, 0) = -g(1, 0);
      g(1, 1) = -g(1, 1);
    }
  }
  if (op.kind == OpKind::CurlCurl) return data.F + sym_part(g);
  return data.F + g;
}

// --- symmetrization --------------------------------------------------------------

SymmetrizedField symmetrize_field(const BranchField& base, const CanonicalReduction& red) {
  if (base.op.kind != OpKind::Curl)
    throw std::invalid_argument("symmetrize_field: base must be a gradient field");
  if (red.route != ReduceRoute::CCSemidef && red.route != ReduceRoute::CCIndefiniteLift)
    throw std::invalid_argument(
        "symmetrize_field: reduction must come from a curlcurl problem");
  SymmetrizedField s;
  s.base = base;
  s.R = red.back.R;
  s.F_cc = sym_part(red.lifted_F);
  s.a0_cc = sym_part(red.lifted_a0);
  s.a1_cc = sym_part(red.lifted_a1);
  s.rho1 = red.rho1;
  s.rho2 = red.rho2;
  s.jump_norm = red.cc_jump_norm;
  const double bb = norm2(base.data.b);
  s.excess_total = base.excess_total;  // same excess density after symmetrizing
  s.compat_total = bb * (red.rho1 * base.int_A2_total + red.rho2 * base.int_B2_total);
  s.cross_total = 0.0;
  s.E0_cc_density = base.data.E0_density;
  return s;
}

Mat SymmetrizedField::state(double x1, double x2) const {
  return sym_part(matmul(base.state(x1, x2), transpose(R)));
}

Mat SymmetrizedField::chi(double x1, double x2) const {
  return base.phase(x1, x2) ? a1_cc : a0_cc;
}

}  // namespace tw
