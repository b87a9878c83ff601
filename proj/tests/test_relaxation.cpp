#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "twowell/relaxation.hpp"

using namespace tw;

namespace {
Mat mat2(double a, double b, double c, double d) { return Mat(2, {a, b, c, d}); }

const DiffOp kCurl2(OpKind::Curl, 2);

// the running example: wells 0 and diag(2,1) under curl, datum on the segment
ProblemData diag_example(double theta_F = 0.5) {
  Mat a1 = mat2(2, 0, 0, 1);
  return ProblemData(kCurl2, theta_F * a1, Mat(2), a1);
}

// compatible wells: a1 - a0 rank one, datum on the segment
ProblemData compatible_example(double lambda) {
  Mat a0 = mat2(0.3, -0.2, 0.1, 0.4);
  Mat a = outer(Vecd{1.0, 2.0}, Vecd{1.0, 0.0});  // b (x) e1, curl-compatible
  Mat a1 = a0 + a;
  Mat F = a0 + lambda * a;
  return ProblemData(kCurl2, F, a0, a1);
}
}  // namespace

TEST_CASE("envelope examples") {
  CHECK(envelope_at_fraction(compatible_example(0.5), 0.5) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(envelope_at_fraction(diag_example(), 0.5) == doctest::Approx(0.25).epsilon(1e-12));

  ProblemData d = diag_example(0.3);
  CHECK(envelope_at_fraction(d, 0.0) == doctest::Approx(fnorm2(d.F - d.a0)).epsilon(1e-12));
}

TEST_CASE("optimal fraction matches grid search") {
  auto [theta, e0] = optimal_fraction(diag_example());
  CHECK(theta == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(e0 == doctest::Approx(0.25).epsilon(1e-12));

  Rng rng(314);
  for (int t = 0; t < 60; ++t) {
    OpKind kind = static_cast<OpKind>(t % 3);
    DiffOp op(kind, 2);
    Mat F = (kind == OpKind::CurlCurl) ? rng.sym_matrix(2) : rng.matrix(2);
    Mat a0 = (kind == OpKind::CurlCurl) ? rng.sym_matrix(2) : rng.matrix(2);
    Mat a1 = (kind == OpKind::CurlCurl) ? rng.sym_matrix(2) : rng.matrix(2);
    if (fnorm(a1 - a0) < 1e-3) continue;
    ProblemData data(op, 1.5 * F, a0, a1);
    // the oracle gets its h from the sampling path, not the closed form
    double h_oracle = quantifiers_sphere_oracle(op, data.a(), 4096).h;
    auto [tc, ec] = optimal_fraction(data);
    auto [tg, eg] = optimal_fraction_grid_oracle(data, h_oracle);
    CHECK(std::abs(tc - tg) <= 1e-6);
    CHECK(std::abs(ec - eg) <= 1e-9 * std::max(1.0, ec));
  }
}

TEST_CASE("compatible data relaxes to zero and reproduces the wells") {
  for (double lambda : {0.25, 0.5, 0.8}) {
    ProblemData data = compatible_example(lambda);
    auto [theta, e0] = optimal_fraction(data);
    CHECK(theta == doctest::Approx(lambda).epsilon(1e-10));
    CHECK(e0 <= 1e-20);

    auto ca = compatible_approximation(data, Direction(Vecd{1, 0}));
    CHECK(fnorm(ca.a0t - data.a0) <= 1e-12);
    CHECK(fnorm(ca.a1t - data.a1) <= 1e-12);
  }
}

TEST_CASE("pure regimes and slab geometry") {
  Mat a1 = mat2(2, 0, 0, 1);
  // datum far beyond a1 along a: projection coefficient > 1 - R_A
  ProblemData far(kCurl2, 3.0 * a1, Mat(2), a1);
  RelaxReport r = relax_report(far);
  CHECK(r.regime == Regime::Pure1);
  CHECK(r.theta_tilde == 1.0);
  CHECK(!r.tilde_wells.has_value());

  // slab test: theta_tilde = 0 exactly when the projection coefficient
  // <= R_A = h/(2|a|^2)
  Rng rng(2718);
  for (int t = 0; t < 200; ++t) {
    Mat a0 = rng.matrix(2), da = rng.matrix(2);
    if (fnorm(da) < 1e-3) continue;
    ProblemData data(kCurl2, a0 + rng.uniform(-0.6, 1.2) * da + 0.3 * rng.matrix(2), a0, a0 + da);
    RelaxReport rr = relax_report(data);
    double proj = fdot(data.F - data.a0, data.a()) / fnorm2(data.a());
    bool inside_slab0 = proj <= rr.R_A + 1e-12;
    CHECK((rr.theta_tilde == 0.0) == inside_slab0);
    // grid search lands in the same regime
    auto [tg, eg] = optimal_fraction_grid_oracle(data, rr.h);
    (void)eg;
    CHECK(std::abs(tg - rr.theta_tilde) <= 1e-6);
  }
}

TEST_CASE("envelope is strictly convex and translation invariant") {
  Rng rng(99);
  ProblemData data = diag_example(0.37);
  Mat a = data.a();

  for (int i = 1; i < 999; ++i) {
    double t = i * 1e-3;
    double second =
        envelope_at_fraction(data, t + 1e-3) - 2 * envelope_at_fraction(data, t) +
        envelope_at_fraction(data, t - 1e-3);
    CHECK(second > 0.0);
  }

  auto [theta0, e0] = optimal_fraction(data);
  (void)e0;
  int tested = 0;
  for (int t = 0; t < 100; ++t) {
    Mat v = rng.matrix(2);
    v = v - (fdot(v, a) / fnorm2(a)) * a;  // <v, a> = 0
    ProblemData shifted(data.op, data.F + v, data.a0, data.a1);
    auto [theta1, e1] = optimal_fraction(shifted);
    (void)e1;
    CHECK(theta1 == doctest::Approx(theta0).epsilon(1e-10));
    ++tested;
  }
  CHECK(tested == 100);
}

TEST_CASE("E0 vanishes exactly for compatible data or data on a well") {
  // compatible family
  for (double lam : {0.1, 0.5, 0.9}) {
    auto [t, e] = optimal_fraction(compatible_example(lam));
    (void)t;
    CHECK(e <= 1e-18);
  }
  // incompatible family: E0 > 0 away from the wells
  for (double lam : {0.2, 0.5, 0.7}) {
    auto [t, e] = optimal_fraction(diag_example(lam));
    (void)t;
    CHECK(e > 1e-4);
  }
  // datum on a well: E0 = 0 even for incompatible wells
  Mat a1 = mat2(2, 0, 0, 1);
  auto [t0, e0] = optimal_fraction(ProblemData(kCurl2, Mat(2), Mat(2), a1));
  CHECK(t0 == 0.0);
  CHECK(e0 <= 1e-18);
  auto [t1, e1] = optimal_fraction(ProblemData(kCurl2, a1, Mat(2), a1));
  CHECK(t1 == 1.0);
  CHECK(e1 <= 1e-18);
}

TEST_CASE("compatible approximation invariants") {
  ProblemData data = diag_example();
  auto ca = compatible_approximation(data, Direction(Vecd{1, 0}));
  CHECK(fnorm(ca.a0t - mat2(0, 0, 0, 0.5)) <= 1e-12);
  CHECK(fnorm(ca.a1t - mat2(2, 0, 0, 0.5)) <= 1e-12);
  CHECK(norm(vsub(ca.b, Vecd{2, 0})) <= 1e-12);

  // non-optimal direction rejected with the measured multiplier value
  CHECK_THROWS_AS(compatible_approximation(data, Direction(Vecd{0, 1})), std::invalid_argument);

  Rng rng(55);
  for (int t = 0; t < 100; ++t) {
    OpKind kind = static_cast<OpKind>(t % 3);
    DiffOp op(kind, 2);
    Mat F = (kind == OpKind::CurlCurl) ? rng.sym_matrix(2) : rng.matrix(2);
    Mat a0 = (kind == OpKind::CurlCurl) ? rng.sym_matrix(2) : rng.matrix(2);
    Mat a1 = (kind == OpKind::CurlCurl) ? rng.sym_matrix(2) : rng.matrix(2);
    if (fnorm(a1 - a0) < 1e-3) continue;
    ProblemData d(op, F, a0, a1);
    RelaxReport r = relax_report(d);
    CHECK(std::abs(envelope_at_fraction(d, r.theta_tilde) - r.E0_density) <= 1e-10);
    if (r.regime != Regime::Mixing) continue;
    REQUIRE(r.tilde_wells.has_value());
    const TildeWells& tw_ = *r.tilde_wells;
    // mean recovers the datum
    Mat mean = (1.0 - r.theta_tilde) * tw_.a0t + r.theta_tilde * tw_.a1t;
    CHECK(fnorm(mean - d.F) <= 1e-10);
    // difference is the projected state
    Mat pa = project_compatible(op, Direction(tw_.xi_star), d.a());
    CHECK(fnorm((tw_.a1t - tw_.a0t) - pa) <= 1e-10);
    // |tilde difference|^2 attains g
    CHECK(fnorm2(tw_.a1t - tw_.a0t) == doctest::Approx(r.g).epsilon(1e-10));
    // amplitude factors the projection through the witness direction
    if (kind == OpKind::Curl)
      CHECK(fnorm(pa - outer(tw_.b, tw_.xi_star)) <= 1e-10);
    if (kind == OpKind::CurlCurl)
      CHECK(fnorm(pa - symprod(tw_.b, tw_.xi_star)) <= 1e-10);
    // compatible approximation reproduces E0 through the identity
    double lhs = fnorm2(d.F - (d.a0 + r.theta_tilde * d.a())) +
                 r.theta_tilde * (1 - r.theta_tilde) * fnorm2(d.a() - pa);
    CHECK(lhs == doctest::Approx(r.E0_density).epsilon(1e-10));
  }
}
