#include "twowell/compatibility.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>

namespace tw {

namespace {

void check_state(const DiffOp& op, const Mat& a, const char* who) {
  if (a.d != op.d) throw std::invalid_argument(std::string(who) + ": dimension mismatch");
  if (fnorm(a) == 0.0)
    throw std::invalid_argument(std::string(who) + ": zero state (wells must be distinct)");
  if (op.kind == OpKind::CurlCurl && !is_symmetric(a, 1e-9 * fnorm(a)))
    throw std::invalid_argument(std::string(who) + ": curlcurl requires a symmetric state");
}

void require_cc_2d(const DiffOp& op, const char* who) {
  if (op.kind == OpKind::CurlCurl && op.d != 2)
    throw std::invalid_argument(std::string(who) +
                                ": curlcurl closed forms require d = 2 (use the sampling oracle)");
}

bool equicompatible_state(const DiffOp& op, const Mat& a) {
  // The equicompatible sets are scaled orthogonal matrices (Curl/Div) and
  // scaled identities (CurlCurl); both are measure zero, so a tolerance
  // decides membership.
  if (op.kind == OpKind::CurlCurl) {
    Mat dev = a - (0.5 * trace(a)) * identity(2);
    return fnorm(dev) <= 1e-10 * fnorm(a);
  }
  Mat G = gram(a);
  Mat dev = G - (trace(G) / op.d) * identity(op.d);
  return fnorm(dev) <= 1e-10 * fnorm2(a);
}

// curlcurl spectral classification (d = 2, symmetric a)
struct CcSpectrum {
  double lm, lp;  // eigenvalues ascending
  Vecd vm, vp;
  bool pos_semidef, neg_semidef, indefinite;
  bool rank_one;
};

CcSpectrum cc_spectrum(const Mat& a) {
  EigenSym es = sym_eigen(sym_part(a));
  CcSpectrum s;
  s.lm = es.val[0];
  s.lp = es.val[1];
  s.vm = es.eigenvector(0);
  s.vp = es.eigenvector(1);
  double scale = std::max(std::abs(s.lm), std::abs(s.lp));
  double tol = 1e-10 * scale;
  s.pos_semidef = s.lm >= -tol;
  s.neg_semidef = s.lp <= tol;
  s.indefinite = !s.pos_semidef && !s.neg_semidef;
  s.rank_one = std::min(std::abs(s.lm), std::abs(s.lp)) <= 1e-10 * scale;
  return s;
}

}  // namespace

CompatQuantifiers quantifiers(const DiffOp& op, const Mat& a) {
  check_state(op, a, "quantifiers");
  require_cc_2d(op, "quantifiers");

  CompatQuantifiers q;
  q.equicompatible = equicompatible_state(op, a);
  double a2 = fnorm2(a);

  if (op.kind == OpKind::CurlCurl) {
    CcSpectrum s = cc_spectrum(a);
    if (s.pos_semidef)
      q.g = s.lp * s.lp;
    else if (s.neg_semidef)
      q.g = s.lm * s.lm;
    else
      q.g = s.lm * s.lm + s.lp * s.lp;
    q.h = std::max(0.0, a2 - q.g);
    if (!q.equicompatible) q.vanishing_order = s.rank_one ? 2 : 1;
    return q;
  }

  EigenSym es = sym_eigen(gram(a));
  if (op.kind == OpKind::Curl) {
    q.g = es.val[op.d - 1];           // max |a xi|^2
    q.h = std::max(0.0, a2 - q.g);
  } else {
    q.h = std::max(0.0, es.val[0]);   // min |a xi|^2
    q.g = a2 - q.h;
  }
  if (!q.equicompatible) q.vanishing_order = 1;
  return q;
}

double LaminationSet::dist(const Vecd& xi) const {
  switch (kind) {
    case Kind::FullSphere:
      return 0.0;
    case Kind::FourPoints: {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& p : points) best = std::min(best, norm(vsub(xi, p)));
      return best;
    }
    case Kind::SubsphereOfEigenspace: {
      // nearest point is the renormalized projection onto U
      double proj2 = 0;
      for (const auto& b : basis) {
        double c = dot(b, xi);
        proj2 += c * c;
      }
      double n = std::sqrt(proj2);
      if (n < 1e-154) return std::sqrt(2.0);
      return std::sqrt(std::max(0.0, 2.0 - 2.0 * n));
    }
  }
  return 0.0;
}

LaminationSet optimal_directions(const DiffOp& op, const Mat& a) {
  check_state(op, a, "optimal_directions");
  require_cc_2d(op, "optimal_directions");

  LaminationSet set;
  if (op.kind == OpKind::CurlCurl) {
    CcSpectrum s = cc_spectrum(a);
    if (s.indefinite) {
      // Minkowski combination of the two eigendirections; the radii square to
      // -lm/(lp-lm) and lp/(lp-lm), so the four points are unit vectors.
      double rm = std::sqrt(-s.lm / (s.lp - s.lm));
      double rp = std::sqrt(s.lp / (s.lp - s.lm));
      Vecd p1 = normalized(vadd(scaled(rm, s.vm), scaled(rp, s.vp)));
      Vecd p2 = normalized(vsub(scaled(rm, s.vm), scaled(rp, s.vp)));
      set.kind = LaminationSet::Kind::FourPoints;
      set.points = {p1, scaled(-1.0, p1), p2, scaled(-1.0, p2)};
      set.witnesses = set.points;
      return set;
    }
    if (equicompatible_state(op, a)) {
      set.kind = LaminationSet::Kind::FullSphere;
      set.witnesses = {Vecd{1, 0}, Vecd{0, 1}};
      return set;
    }
    set.kind = LaminationSet::Kind::SubsphereOfEigenspace;
    Vecd v = s.pos_semidef ? s.vp : s.vm;
    set.basis = {v};
    set.witnesses = {v, scaled(-1.0, v)};
    return set;
  }

  EigenSym es = sym_eigen(gram(a));
  double scale = std::max(std::abs(es.val[0]), std::abs(es.val[op.d - 1]));
  double tol = 1e-10 * scale;
  double target = (op.kind == OpKind::Curl) ? es.val[op.d - 1] : es.val[0];
  std::vector<Vecd> eigbasis;
  for (int k = 0; k < op.d; ++k)
    if (std::abs(es.val[k] - target) <= tol) eigbasis.push_back(es.eigenvector(k));

  if (static_cast<int>(eigbasis.size()) == op.d) {
    set.kind = LaminationSet::Kind::FullSphere;
    for (int i = 0; i < op.d; ++i) {
      Vecd e(op.d, 0.0);
      e[i] = 1.0;
      set.witnesses.push_back(e);
    }
    return set;
  }
  set.kind = LaminationSet::Kind::SubsphereOfEigenspace;
  set.basis = eigbasis;
  set.witnesses = eigbasis;
  for (auto& w : set.witnesses) w = normalized(w);
  return set;
}

double multiplier_p(const DiffOp& op, const Mat& a, const Direction& xi) {
  CompatQuantifiers q = quantifiers(op, a);
  double p = q.g - fnorm2(project_compatible(op, xi, a));
  return std::max(0.0, p);
}

double vanishing_order_fit(const DiffOp& op, const Mat& a) {
  CompatQuantifiers q = quantifiers(op, a);
  if (q.equicompatible)
    throw std::invalid_argument("vanishing_order_fit: equicompatible state, p vanishes identically");
  LaminationSet set = optimal_directions(op, a);
  const Vecd xi0 = set.witnesses.front();
  const int d = op.d;

  // Tangent candidates at xi0: orthonormalized coordinate axes.  Keep the one
  // along which p grows the most; tangents inside S itself keep p = 0 and are
  // discarded this way.
  std::vector<Vecd> cands;
  for (int i = 0; i < d; ++i) {
    Vecd t(d, 0.0);
    t[i] = 1.0;
    Vecd proj = scaled(dot(t, xi0), xi0);
    Vecd tan = vsub(t, proj);
    if (norm(tan) > 1e-6) cands.push_back(normalized(tan));
  }
  double best_p = -1.0;
  Vecd nu;
  for (const auto& t : cands) {
    double p = multiplier_p(op, a, Direction(vadd(xi0, scaled(0.1, t))));
    if (p > best_p) {
      best_p = p;
      nu = t;
    }
  }
  if (best_p < 1e-14)
    throw std::runtime_error(
        "vanishing_order_fit: degenerate fit, p below noise along every tangent "
        "(equicompatible-suspect)");

  const int n_samples = 25;
  const double noise_floor = 1e-12 * std::max(q.g, 1e-300);
  std::vector<double> log_dist, log_p;
  for (int i = 0; i < n_samples; ++i) {
    double rho = 1e-4 * std::pow(1e3, static_cast<double>(i) / (n_samples - 1));
    Direction xi(vadd(xi0, scaled(rho, nu)));
    double p = multiplier_p(op, a, xi);
    double dist = set.dist(xi.xi);
    if (p <= noise_floor || dist <= 0) continue;
    log_dist.push_back(std::log(dist));
    log_p.push_back(std::log(p));
  }
  if (log_dist.size() < 4)
    throw std::runtime_error("vanishing_order_fit: degenerate fit, fewer than 4 usable samples");
  return fit_line(log_dist, log_p).slope / 2.0;
}

namespace {

// Deterministic direction grids with precomputed kernel bases, cached per
// (operator, dimension, grid size).  The bases come from the SVD oracle; they
// are what keeps the brute scan independent of the closed forms.
using DirGrid = std::vector<std::pair<Vecd, std::vector<Mat>>>;

const DirGrid& dir_grid(const DiffOp& op, int n_dirs) {
  static std::map<std::tuple<OpKind, int, int>, std::unique_ptr<DirGrid>> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_tuple(op.kind, op.d, n_dirs);
  auto it = cache.find(key);
  if (it != cache.end()) return *it->second;

  auto grid = std::make_unique<DirGrid>();
  grid->reserve(n_dirs);
  if (op.d == 2) {
    for (int i = 0; i < n_dirs; ++i) {
      double t = 2.0 * M_PI * i / n_dirs;
      Vecd xi{std::cos(t), std::sin(t)};
      grid->emplace_back(xi, kernel_basis_oracle(op, Direction(xi)));
    }
  } else if (op.d == 3) {
    const double ga = M_PI * (3.0 - std::sqrt(5.0));  // golden angle
    for (int i = 0; i < n_dirs; ++i) {
      double z = 1.0 - (2.0 * i + 1.0) / n_dirs;
      double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      double t = ga * i;
      Vecd xi{r * std::cos(t), r * std::sin(t), z};
      grid->emplace_back(normalized(xi), kernel_basis_oracle(op, Direction(xi)));
    }
  } else {
    Rng rng(0xD1CE5EEDull + op.d);
    for (int i = 0; i < n_dirs; ++i) {
      Vecd xi = rng.unit_vector(op.d);
      grid->emplace_back(xi, kernel_basis_oracle(op, Direction(xi)));
    }
  }
  auto& ref = *grid;
  cache[key] = std::move(grid);
  return ref;
}

double residual2_with_basis(const Mat& a, const std::vector<Mat>& basis) {
  Mat r = a;
  for (const Mat& b : basis) {
    double c = fdot(a, b);
    for (size_t t = 0; t < r.e.size(); ++t) r.e[t] -= c * b.e[t];
  }
  return fnorm2(r);
}

double proj2_with_basis(const Mat& a, const std::vector<Mat>& basis) {
  double s = 0;
  for (const Mat& b : basis) {
    double c = fdot(a, b);
    s += c * c;
  }
  return s;
}

// On-sphere pattern search.  obj is minimized; evaluations go through the
// nullspace oracle at arbitrary directions.
template <class F>
std::pair<double, Vecd> pattern_search(F&& obj, Vecd xi, double step) {
  const int d = static_cast<int>(xi.size());
  double val = obj(xi);
  while (step > 1e-13) {
    // tangent frame at xi
    std::vector<Vecd> frame;
    for (int i = 0; i < d && static_cast<int>(frame.size()) < d - 1; ++i) {
      Vecd t(d, 0.0);
      t[i] = 1.0;
      Vecd tan = vsub(t, scaled(dot(t, xi), xi));
      for (const auto& f : frame) tan = vsub(tan, scaled(dot(f, tan), f));
      if (norm(tan) > 1e-8) frame.push_back(normalized(tan));
    }
    bool moved = false;
    for (const auto& t : frame) {
      for (double s : {step, -step}) {
        Vecd cand = normalized(vadd(xi, scaled(s, t)));
        double v = obj(cand);
        if (v < val - 1e-18) {
          val = v;
          xi = cand;
          moved = true;
        }
      }
    }
    if (!moved) step *= 0.5;
  }
  return {val, xi};
}

}  // namespace

SphereScan quantifiers_sphere_oracle(const DiffOp& op, const Mat& a, int n_dirs, bool refine) {
  check_state(op, a, "quantifiers_sphere_oracle");
  if (n_dirs < 8) throw std::invalid_argument("quantifiers_sphere_oracle: need >= 8 directions");
  const DirGrid& grid = dir_grid(op, n_dirs);

  SphereScan out;
  double best_h = std::numeric_limits<double>::infinity();
  double best_g = -std::numeric_limits<double>::infinity();
  for (const auto& [xi, basis] : grid) {
    double r2 = residual2_with_basis(a, basis);
    double p2 = proj2_with_basis(a, basis);
    if (r2 < best_h) {
      best_h = r2;
      out.argmin = xi;
    }
    if (p2 > best_g) {
      best_g = p2;
      out.argmax = xi;
    }
  }
  out.h = best_h;
  out.g = best_g;

  if (refine) {
    double step = (op.d == 2) ? 2.0 * M_PI / n_dirs : 2.0 / std::sqrt(static_cast<double>(n_dirs));
    auto obj_h = [&](const Vecd& xi) {
      return residual2_with_basis(a, kernel_basis_oracle(op, Direction(xi)));
    };
    auto obj_g = [&](const Vecd& xi) {
      return -proj2_with_basis(a, kernel_basis_oracle(op, Direction(xi)));
    };
    auto [h, argmin] = pattern_search(obj_h, out.argmin, step);
    auto [ng, argmax] = pattern_search(obj_g, out.argmax, step);
    out.h = h;
    out.argmin = argmin;
    out.g = -ng;
    out.argmax = argmax;
  }
  return out;
}

}  // namespace tw
