#include "twowell/linalg.hpp"

#include <algorithm>
#include <cmath>

namespace tw {

namespace {
void check_same_dim(const Mat& a, const Mat& b, const char* who) {
  if (a.d != b.d) throw std::invalid_argument(std::string(who) + ": dimension mismatch");
}
}  // namespace

Mat identity(int d) {
  Mat m(d);
  for (int i = 0; i < d; ++i) m(i, i) = 1.0;
  return m;
}

Mat operator+(const Mat& a, const Mat& b) {
  check_same_dim(a, b, "Mat+");
  Mat r(a.d);
  for (size_t k = 0; k < r.e.size(); ++k) r.e[k] = a.e[k] + b.e[k];
  return r;
}

Mat operator-(const Mat& a, const Mat& b) {
  check_same_dim(a, b, "Mat-");
  Mat r(a.d);
  for (size_t k = 0; k < r.e.size(); ++k) r.e[k] = a.e[k] - b.e[k];
  return r;
}

Mat operator*(double s, const Mat& a) {
  Mat r(a.d);
  for (size_t k = 0; k < r.e.size(); ++k) r.e[k] = s * a.e[k];
  return r;
}

Mat matmul(const Mat& a, const Mat& b) {
  check_same_dim(a, b, "matmul");
  int d = a.d;
  Mat r(d);
  for (int i = 0; i < d; ++i)
    for (int k = 0; k < d; ++k) {
      double aik = a(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < d; ++j) r(i, j) += aik * b(k, j);
    }
  return r;
}

Mat transpose(const Mat& a) {
  Mat r(a.d);
  for (int i = 0; i < a.d; ++i)
    for (int j = 0; j < a.d; ++j) r(i, j) = a(j, i);
  return r;
}

Mat sym_part(const Mat& a) {
  Mat r(a.d);
  for (int i = 0; i < a.d; ++i) {
    r(i, i) = a(i, i);
    for (int j = i + 1; j < a.d; ++j) {
      double v = 0.5 * (a(i, j) + a(j, i));
      r(i, j) = v;
      r(j, i) = v;  // bitwise equal by construction
    }
  }
  return r;
}

Mat skew_part(const Mat& a) {
  Mat r(a.d);
  for (int i = 0; i < a.d; ++i)
    for (int j = 0; j < a.d; ++j) r(i, j) = 0.5 * (a(i, j) - a(j, i));
  return r;
}

double trace(const Mat& a) {
  double t = 0;
  for (int i = 0; i < a.d; ++i) t += a(i, i);
  return t;
}

double fdot(const Mat& a, const Mat& b) {
  check_same_dim(a, b, "fdot");
  double s = 0;
  for (size_t k = 0; k < a.e.size(); ++k) s += a.e[k] * b.e[k];
  return s;
}

double fnorm2(const Mat& a) { return fdot(a, a); }
double fnorm(const Mat& a) { return std::sqrt(fnorm2(a)); }

bool is_symmetric(const Mat& a, double tol) {
  for (int i = 0; i < a.d; ++i)
    for (int j = i + 1; j < a.d; ++j)
      if (std::abs(a(i, j) - a(j, i)) > tol) return false;
  return true;
}

bool all_finite(const Mat& a) {
  for (double v : a.e)
    if (!std::isfinite(v)) return false;
  return true;
}

Vecd matvec(const Mat& a, const Vecd& x) {
  if (static_cast<int>(x.size()) != a.d) throw std::invalid_argument("matvec: dimension mismatch");
  Vecd y(a.d, 0.0);
  for (int i = 0; i < a.d; ++i) {
    double s = 0;
    for (int j = 0; j < a.d; ++j) s += a(i, j) * x[j];
    y[i] = s;
  }
  return y;
}

Mat outer(const Vecd& u, const Vecd& v) {
  if (u.size() != v.size()) throw std::invalid_argument("outer: dimension mismatch");
  int d = static_cast<int>(u.size());
  Mat r(d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) r(i, j) = u[i] * v[j];
  return r;
}

Mat symprod(const Vecd& u, const Vecd& v) {
  int d = static_cast<int>(u.size());
  Mat r(d);
  for (int i = 0; i < d; ++i) {
    r(i, i) = u[i] * v[i];
    for (int j = i + 1; j < d; ++j) {
      double w = 0.5 * (u[i] * v[j] + u[j] * v[i]);
      r(i, j) = w;
      r(j, i) = w;
    }
  }
  return r;
}

Mat gram(const Mat& a) { return matmul(transpose(a), a); }

double dot(const Vecd& u, const Vecd& v) {
  if (u.size() != v.size()) throw std::invalid_argument("dot: dimension mismatch");
  double s = 0;
  for (size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
  return s;
}

double norm2(const Vecd& u) { return dot(u, u); }
double norm(const Vecd& u) { return std::sqrt(norm2(u)); }

Vecd scaled(double s, const Vecd& u) {
  Vecd r(u);
  for (auto& x : r) x *= s;
  return r;
}

Vecd vadd(const Vecd& u, const Vecd& v) {
  Vecd r(u);
  for (size_t i = 0; i < r.size(); ++i) r[i] += v[i];
  return r;
}

Vecd vsub(const Vecd& u, const Vecd& v) {
  Vecd r(u);
  for (size_t i = 0; i < r.size(); ++i) r[i] -= v[i];
  return r;
}

Vecd normalized(const Vecd& u) {
  double n = norm(u);
  if (n < 1e-12) throw std::invalid_argument("normalized: vector norm below 1e-12");
  return scaled(1.0 / n, u);
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("fit_line: need >= 2 paired samples");
  const int n = static_cast<int>(x.size());
  double mx = 0, my = 0;
  for (int i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (int i = 0; i < n; ++i) {
    double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx <= 0) throw std::invalid_argument("fit_line: degenerate abscissae");
  LineFit f;
  f.n = n;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss_res = std::max(0.0, syy - f.slope * sxy);
  f.r2 = (syy > 0) ? 1.0 - ss_res / syy : 1.0;
  f.stderr_slope = (n > 2) ? std::sqrt(ss_res / (n - 2) / sxx) : 0.0;
  return f;
}

namespace {

EigenSym sym_eigen_2x2(const Mat& s) {
  // Closed form via trace/determinant.  Eigenvectors from the column of
  // (s - lambda I) with the larger residual row, second vector is the
  // in-plane rotation of the first so orthonormality is exact.
  double a = s(0, 0), b = s(0, 1), c = s(1, 1);
  double m = 0.5 * (a + c);
  double half_diff = 0.5 * (a - c);
  double disc = std::hypot(half_diff, b);
  double lo = m - disc, hi = m + disc;

  EigenSym out;
  out.val = {lo, hi};
  out.vec = Mat(2);
  if (disc <= 0.0) {
    out.vec = identity(2);
    return out;
  }
  // Eigenvector for hi: (s - hi I) v = 0.  Both rows are parallel; use the
  // numerically larger option between (b, hi - a) and (hi - c, b).
  double v0, v1;
  if (std::abs(hi - a) > std::abs(hi - c)) {
    v0 = b;
    v1 = hi - a;
  } else {
    v0 = hi - c;
    v1 = b;
  }
  double n = std::hypot(v0, v1);
  if (n == 0.0) {  // b == 0, diagonal matrix
    v0 = (a >= c) ? 1.0 : 0.0;
    v1 = (a >= c) ? 0.0 : 1.0;
    n = 1.0;
  }
  v0 /= n;
  v1 /= n;
  // columns: [lo-vector, hi-vector], lo-vector = rot90(hi-vector)
  out.vec(0, 0) = -v1;
  out.vec(1, 0) = v0;
  out.vec(0, 1) = v0;
  out.vec(1, 1) = v1;
  return out;
}

EigenSym sym_eigen_jacobi(const Mat& s_in) {
  int d = s_in.d;
  Mat s = s_in;
  Mat v = identity(d);
  const int max_sweeps = 64;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0;
    for (int i = 0; i < d; ++i)
      for (int j = i + 1; j < d; ++j) off += s(i, j) * s(i, j);
    if (off <= 1e-30 * std::max(1.0, fnorm2(s))) break;
    for (int p = 0; p < d; ++p)
      for (int q = p + 1; q < d; ++q) {
        double apq = s(p, q);
        if (apq == 0.0) continue;
        double theta = 0.5 * (s(q, q) - s(p, p)) / apq;
        double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double sn = t * c;
        for (int k = 0; k < d; ++k) {
          double skp = s(k, p), skq = s(k, q);
          s(k, p) = c * skp - sn * skq;
          s(k, q) = sn * skp + c * skq;
        }
        for (int k = 0; k < d; ++k) {
          double spk = s(p, k), sqk = s(q, k);
          s(p, k) = c * spk - sn * sqk;
          s(q, k) = sn * spk + c * sqk;
        }
        for (int k = 0; k < d; ++k) {
          double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - sn * vkq;
          v(k, q) = sn * vkp + c * vkq;
        }
      }
  }
  std::vector<int> order(d);
  for (int i = 0; i < d; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int i, int j) { return s(i, i) < s(j, j); });
  EigenSym out;
  out.val.resize(d);
  out.vec = Mat(d);
  for (int k = 0; k < d; ++k) {
    out.val[k] = s(order[k], order[k]);
    for (int i = 0; i < d; ++i) out.vec(i, k) = v(i, order[k]);
  }
  return out;
}

}  // namespace

EigenSym sym_eigen(const Mat& s) {
  if (!is_symmetric(s, 1e-9 * std::max(1.0, fnorm(s))))
    throw std::invalid_argument("sym_eigen: matrix not symmetric");
  Mat sy = sym_part(s);
  if (s.d == 1) {
    EigenSym out;
    out.val = {sy(0, 0)};
    out.vec = identity(1);
    return out;
  }
  if (s.d == 2) return sym_eigen_2x2(sy);
  return sym_eigen_jacobi(sy);
}

}  // namespace tw
