#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ecpsim/mncp.hpp"

using namespace ecpsim;

TEST_CASE("fischer burmeister function") {
  CHECK(fb(0, 0) == 0.0);
  CHECK(fb(3, 0) == doctest::Approx(0.0));
  CHECK(fb(0, 5) == doctest::Approx(0.0));
  CHECK(fb(2, 3) == doctest::Approx(std::sqrt(13.0) - 5.0));
  // Zero exactly on the complementarity set.
  CHECK(std::abs(fb(-1, 2)) > 0.1);
  CHECK(std::abs(fb(1, 1)) > 0.1);
}

namespace {

MixedNCP one_d(double shift) {
  MixedNCP p;
  p.n_eq = 0;
  p.n_comp = 1;
  p.residual = [shift](const VecX& z, VecX&, VecX& fc) { fc[0] = z[0] + shift; };
  return p;
}

MixedNCP lcp_2x2() {
  MixedNCP p;
  p.n_eq = 0;
  p.n_comp = 2;
  p.residual = [](const VecX& z, VecX&, VecX& fc) {
    fc[0] = 2 * z[0] + z[1] - 1;
    fc[1] = z[0] + 2 * z[1] - 1;
  };
  return p;
}

}  // namespace

TEST_CASE("one dimensional problems") {
  SolveOptions opts;
  {
    auto [z, rep] = solve(one_d(-1.0), VecX::Constant(1, 0.3), opts);
    CHECK(rep.converged);
    CHECK(z[0] == doctest::Approx(1.0).epsilon(1e-8));
  }
  {
    auto [z, rep] = solve(one_d(1.0), VecX::Constant(1, 0.3), opts);
    CHECK(rep.converged);
    CHECK(std::abs(z[0]) < 1e-8);
  }
}

TEST_CASE("2x2 lcp solved by active-set enumeration oracle") {
  // 0 <= v perp Mv + q >= 0 with M = [[2,1],[1,2]], q = [-1,-1].
  // Enumerating active sets: v = M^{-1} (-q) = (1/3, 1/3) with w = 0 is the
  // unique feasible combination.
  const Vec2 expected(1.0 / 3.0, 1.0 / 3.0);
  SolveOptions opts;
  auto [z, rep] = solve(lcp_2x2(), VecX::Zero(2), opts);
  CHECK(rep.converged);
  CHECK((z - VecX(expected)).norm() < 1e-8);
}

TEST_CASE("solver determinism") {
  SolveOptions opts;
  auto [z1, r1] = solve(lcp_2x2(), VecX::Constant(2, 0.77), opts);
  auto [z2, r2] = solve(lcp_2x2(), VecX::Constant(2, 0.77), opts);
  CHECK((z1 - z2).norm() == 0.0);
  CHECK(r1.iterations == r2.iterations);
  CHECK(r1.residual == r2.residual);
}

TEST_CASE("monotone merit descent") {
  SolveOptions opts;
  auto [z, rep] = solve(lcp_2x2(), VecX::Constant(2, 3.0), opts);
  CHECK(rep.converged);
  CHECK(rep.monotone_descent);
}

TEST_CASE("residual norm behaviour") {
  const MixedNCP p = lcp_2x2();
  VecX z(2);
  z << 1.0 / 3.0, 1.0 / 3.0;
  CHECK(residual_norm(p, z) < 1e-14);

  // Continuity under small perturbations.
  const double base = residual_norm(p, z);
  for (double delta : {1e-6, 1e-4, 1e-2}) {
    VecX zp = z;
    zp[0] += delta;
    // Jacobian entries are O(1); the residual may not jump by more than ~4 delta.
    CHECK(std::abs(residual_norm(p, zp) - base) < 4.0 * delta);
  }
}

TEST_CASE("complementarity satisfied at solutions") {
  SolveOptions opts;
  auto [z, rep] = solve(lcp_2x2(), VecX::Zero(2), opts);
  REQUIRE(rep.converged);
  VecX fe(0), fc(2);
  lcp_2x2().residual(z, fe, fc);
  for (int k = 0; k < 2; ++k) {
    CHECK(z[k] >= -opts.tolerance);
    CHECK(fc[k] >= -opts.tolerance);
    CHECK(std::abs(z[k] * fc[k]) <= 10 * opts.tolerance);
  }
}
