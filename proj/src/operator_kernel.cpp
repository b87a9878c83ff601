#include "twowell/operator_kernel.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace tw {

const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::Curl: return "curl";
    case OpKind::Div: return "div";
    case OpKind::CurlCurl: return "curlcurl";
  }
  return "?";
}

namespace {

void check_dims(const DiffOp& op, const Direction& xi, const Mat& a, const char* who) {
  if (xi.dim() != op.d || a.d != op.d)
    throw std::invalid_argument(std::string(who) + ": dimension mismatch");
  if (!all_finite(a)) throw std::invalid_argument(std::string(who) + ": non-finite entries");
}

void check_cc_symmetric(const Mat& a, const char* who) {
  if (!is_symmetric(a, 1e-9 * std::max(1.0, fnorm(a))))
    throw std::invalid_argument(std::string(who) + ": curlcurl requires a symmetric state");
}

}  // namespace

std::vector<double> symbol_apply(const DiffOp& op, const Direction& xi, const Mat& a) {
  check_dims(op, xi, a, "symbol_apply");
  const int d = op.d;
  const Vecd& x = xi.xi;
  switch (op.kind) {
    case OpKind::Curl: {
      std::vector<double> out(static_cast<size_t>(d) * d * d);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
          for (int k = 0; k < d; ++k)
            out[(static_cast<size_t>(i) * d + j) * d + k] = a(i, j) * x[k] - a(i, k) * x[j];
      return out;
    }
    case OpKind::Div:
      return matvec(a, x);
    case OpKind::CurlCurl: {
      check_cc_symmetric(a, "symbol_apply");
      std::vector<double> out(static_cast<size_t>(d) * d * d * d);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
          for (int k = 0; k < d; ++k)
            for (int l = 0; l < d; ++l)
              out[((static_cast<size_t>(i) * d + j) * d + k) * d + l] =
                  x[i] * x[j] * a(k, l) + x[k] * x[l] * a(i, j) - x[i] * x[l] * a(k, j) -
                  x[k] * x[j] * a(i, l);
      return out;
    }
  }
  throw std::logic_error("symbol_apply: unreachable");
}

Mat project_compatible(const DiffOp& op, const Direction& xi, const Mat& a) {
  check_dims(op, xi, a, "project_compatible");
  const Vecd& x = xi.xi;
  switch (op.kind) {
    case OpKind::Curl:
      return outer(matvec(a, x), x);
    case OpKind::Div:
      return a - outer(matvec(a, x), x);
    case OpKind::CurlCurl: {
      if (op.d != 2)
        throw std::invalid_argument("project_compatible: curlcurl closed form requires d = 2");
      check_cc_symmetric(a, "project_compatible");
      Vecd w = matvec(sym_part(a), x);
      Vecd g = vsub(scaled(2.0, w), scaled(dot(x, w), x));
      return symprod(g, x);
    }
  }
  throw std::logic_error("project_compatible: unreachable");
}

namespace {

// Frobenius-orthonormal basis of the state space the operator acts on:
// all of R^{dxd} for Curl/Div, the symmetric subspace for CurlCurl.
std::vector<Mat> state_basis(const DiffOp& op) {
  std::vector<Mat> basis;
  const int d = op.d;
  if (op.kind == OpKind::CurlCurl) {
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    for (int i = 0; i < d; ++i) {
      Mat b(d);
      b(i, i) = 1.0;
      basis.push_back(b);
    }
    for (int i = 0; i < d; ++i)
      for (int j = i + 1; j < d; ++j) {
        Mat b(d);
        b(i, j) = inv_sqrt2;
        b(j, i) = inv_sqrt2;
        basis.push_back(b);
      }
  } else {
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        Mat b(d);
        b(i, j) = 1.0;
        basis.push_back(b);
      }
  }
  return basis;
}

}  // namespace

std::vector<Mat> kernel_basis_oracle(const DiffOp& op, const Direction& xi) {
  if (xi.dim() != op.d) throw std::invalid_argument("kernel_basis_oracle: dimension mismatch");
  std::vector<Mat> basis = state_basis(op);
  const int ncols = static_cast<int>(basis.size());
  std::vector<std::vector<double>> cols;
  cols.reserve(ncols);
  for (const Mat& b : basis) cols.push_back(symbol_apply(op, xi, b));
  const int nrows = static_cast<int>(cols[0].size());

  Eigen::MatrixXd m(nrows, ncols);
  for (int c = 0; c < ncols; ++c)
    for (int r = 0; r < nrows; ++r) m(r, c) = cols[c][r];

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  double smax = sv.size() ? sv(0) : 0.0;
  double tol = 1e-9 * smax;
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > tol) ++rank;

  std::vector<Mat> kernel;
  for (int c = rank; c < ncols; ++c) {
    Mat k(op.d);
    for (int b = 0; b < ncols; ++b) {
      double w = svd.matrixV()(b, c);
      if (w == 0.0) continue;
      for (size_t t = 0; t < k.e.size(); ++t) k.e[t] += w * basis[b].e[t];
    }
    kernel.push_back(k);
  }
  return kernel;
}

Mat project_compatible_oracle(const DiffOp& op, const Direction& xi, const Mat& a) {
  check_dims(op, xi, a, "project_compatible_oracle");
  if (op.kind == OpKind::CurlCurl) check_cc_symmetric(a, "project_compatible_oracle");
  std::vector<Mat> kernel = kernel_basis_oracle(op, xi);
  Mat p(op.d);
  for (const Mat& b : kernel) {
    double w = fdot(a, b);
    for (size_t t = 0; t < p.e.size(); ++t) p.e[t] += w * b.e[t];
  }
  return p;
}

std::vector<int> wave_cone_rank(const DiffOp& op, int samples) {
  if (samples < 1) throw std::invalid_argument("wave_cone_rank: samples must be >= 1");
  Rng rng(0x9d2c5680u ^ static_cast<uint64_t>(op.d) << 8 ^ static_cast<uint64_t>(op.kind));
  std::vector<int> dims;
  dims.reserve(samples);
  for (int s = 0; s < samples; ++s) {
    Direction xi(rng.unit_vector(op.d));
    dims.push_back(static_cast<int>(kernel_basis_oracle(op, xi).size()));
  }
  return dims;
}

}  // namespace tw
