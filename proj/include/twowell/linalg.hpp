#pragma once

// Small dense linear algebra for d x d states (d is runtime data, d <= 4 in
// practice).  Row-major storage throughout.  Everything here is value
// semantics and reentrant.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace tw {

using Vecd = std::vector<double>;

struct Mat {
  int d = 0;
  std::vector<double> e;  // row-major, size d*d

  Mat() = default;
  explicit Mat(int dim) : d(dim), e(static_cast<size_t>(dim) * dim, 0.0) {
    if (dim < 1) throw std::invalid_argument("Mat: dimension must be >= 1");
  }
  Mat(int dim, std::initializer_list<double> vals) : Mat(dim) {
    if (static_cast<int>(vals.size()) != dim * dim)
      throw std::invalid_argument("Mat: initializer size mismatch");
    size_t k = 0;
    for (double v : vals) e[k++] = v;
  }

  double& operator()(int i, int j) { return e[static_cast<size_t>(i) * d + j]; }
  double operator()(int i, int j) const { return e[static_cast<size_t>(i) * d + j]; }
};

Mat identity(int d);
Mat operator+(const Mat& a, const Mat& b);
Mat operator-(const Mat& a, const Mat& b);
Mat operator*(double s, const Mat& a);
Mat matmul(const Mat& a, const Mat& b);
Mat transpose(const Mat& a);
Mat sym_part(const Mat& a);   // (a + a^T)/2 with exact entry symmetry
Mat skew_part(const Mat& a);  // (a - a^T)/2
double trace(const Mat& a);
double fdot(const Mat& a, const Mat& b);  // Frobenius inner product
double fnorm2(const Mat& a);
double fnorm(const Mat& a);
bool is_symmetric(const Mat& a, double tol);
bool all_finite(const Mat& a);

Vecd matvec(const Mat& a, const Vecd& x);        // a x
Mat outer(const Vecd& u, const Vecd& v);         // u (x) v
Mat symprod(const Vecd& u, const Vecd& v);       // u (.) v = (u(x)v + v(x)u)/2
Mat gram(const Mat& a);                          // a^T a

double dot(const Vecd& u, const Vecd& v);
double norm2(const Vecd& u);
double norm(const Vecd& u);
Vecd scaled(double s, const Vecd& u);
Vecd vadd(const Vecd& u, const Vecd& v);
Vecd vsub(const Vecd& u, const Vecd& v);
Vecd normalized(const Vecd& u);  // throws if |u| < 1e-12

// Ordinary least squares for y = slope*x + intercept.
struct LineFit {
  double slope = 0, intercept = 0, r2 = 0, stderr_slope = 0;
  int n = 0;
};
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

// Symmetric matrix wrapper: constructed by exact symmetrization, so
// entries(i,j) == entries(j,i) bitwise.
struct SymMatrix {
  Mat m;
  explicit SymMatrix(const Mat& a) : m(sym_part(a)) {}
};

// Eigendecomposition of a symmetric matrix.  Values ascending, vec columns
// hold the corresponding orthonormal eigenvectors.  2x2 is closed form
// (trace/determinant), d >= 3 uses cyclic Jacobi sweeps.
struct EigenSym {
  std::vector<double> val;
  Mat vec;
  Vecd eigenvector(int k) const {
    Vecd v(vec.d);
    for (int i = 0; i < vec.d; ++i) v[i] = vec(i, k);
    return v;
  }
};
EigenSym sym_eigen(const Mat& s);

// Deterministic RNG (splitmix64 core).  std:: distributions are
// implementation-defined, and sweep/oracle outputs must be byte-identical
// across toolchains, so we roll the two draws we need.
struct Rng {
  uint64_t state;
  explicit Rng(uint64_t seed) : state(seed) {}
  uint64_t next_u64() {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Marsaglia polar method, no trig so no libm cross-platform wobble.
  double gaussian() {
    for (;;) {
      double u = 2.0 * uniform() - 1.0;
      double v = 2.0 * uniform() - 1.0;
      double s = u * u + v * v;
      if (s > 0.0 && s < 1.0) {
        double f = std::sqrt(-2.0 * std::log(s) / s);
        return u * f;
      }
    }
  }
  Vecd unit_vector(int d) {
    for (;;) {
      Vecd v(d);
      double n2 = 0;
      for (int i = 0; i < d; ++i) {
        v[i] = gaussian();
        n2 += v[i] * v[i];
      }
      if (n2 > 1e-12) {
        double inv = 1.0 / std::sqrt(n2);
        for (auto& x : v) x *= inv;
        return v;
      }
    }
  }
  Mat matrix(int d, double lo = -1.0, double hi = 1.0) {
    Mat a(d);
    for (auto& x : a.e) x = uniform(lo, hi);
    return a;
  }
  Mat sym_matrix(int d, double lo = -1.0, double hi = 1.0) { return sym_part(matrix(d, lo, hi)); }
};

}  // namespace tw
