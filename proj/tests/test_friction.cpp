#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "ecpsim/friction.hpp"
#include "ecpsim/mncp.hpp"

using namespace ecpsim;

namespace {

const ContactFrame kGround{Vec3(0, 0, 1), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3::Zero()};

}  // namespace

TEST_CASE("slip velocities") {
  const WrenchBases w = wrench_bases(Vec3(0, 0, -0.5), kGround);
  CHECK(slip_velocities(Vec6::Zero(), w).norm() == 0.0);

  Vec6 nu;
  nu << 4, 3, 0, 0, 0, 0;
  const Vec3 s = slip_velocities(nu, w);
  CHECK(s[0] == doctest::Approx(4.0));
  CHECK(s[1] == doctest::Approx(3.0));
  CHECK(s[2] == doctest::Approx(0.0));

  Vec6 spin;
  spin << 0, 0, 0, 0, 0, 0.2;
  const WrenchBases w2 = wrench_bases(Vec3(0.3, -0.1, -0.5), kGround);
  const Vec3 s2 = slip_velocities(spin, w2);
  CHECK(s2[2] == doctest::Approx(0.2));
  CHECK(s2[0] == doctest::Approx(0.2 * 0.1));   // -w r_y ... (r x t).z = -r_y
  CHECK(s2[1] == doctest::Approx(0.2 * 0.3));   // (r x o).z = r_x
}

TEST_CASE("dissipation") {
  CHECK(dissipation(0, 0, 0, 0.1, -0.2, 0.0) == 0.0);
  CHECK(dissipation(4, 0, 0, -0.009408, 0, 0) == doctest::Approx(0.037632));
  // Friction opposing slip dissipates.
  std::mt19937 rng(3);
  std::normal_distribution<double> gauss;
  for (int i = 0; i < 100; ++i) {
    const Vec3 v(gauss(rng), gauss(rng), gauss(rng));
    const Vec3 p = -0.37 * v;
    CHECK(dissipation(v[0], v[1], v[2], p[0], p[1], p[2]) >= 0.0);
  }
}

TEST_CASE("fritz john residuals") {
  FrictionParams fp;
  fp.mu = 0.12;

  SUBCASE("sticking branch") {
    const auto fj = fritz_john_residuals(0, 0, 0, 0.098, 0.001, -0.002, 0.0005, 0.0, fp);
    CHECK(fj.eq.norm() == 0.0);
    CHECK(fj.zeta > 0.0);
  }

  SUBCASE("scenario-1 sliding values") {
    const double p_n = 0.098;
    const double p_t = -0.009408, p_o = -0.007056;
    // Pre-step slip (4, 3) with sigma' = 5.
    auto fj = fritz_john_residuals(4.0, 3.0, 0.0, p_n, p_t, p_o, 0.0, 5.0, fp);
    CHECK(fj.eq.norm() < 1e-12);
    CHECK(std::abs(fj.zeta) < 1e-12);
    // Post-step slip with sigma = sigma' - e^2 mu p_n / m (m = 1).
    fj = fritz_john_residuals(3.990592, 2.992944, 0.0, p_n, p_t, p_o, 0.0,
                              5.0 - 0.12 * 0.098, fp);
    CHECK(fj.eq.norm() < 1e-12);
    CHECK(std::abs(fj.zeta) < 1e-12);
  }

  SUBCASE("sigma with positive slack violates complementarity") {
    const auto fj = fritz_john_residuals(0, 0, 0, 0.098, 0, 0, 0, 2.0, fp);
    CHECK(fj.zeta > 0.0);
    CHECK(std::abs(fb(2.0, fj.zeta)) > 1e-6);
  }
}

TEST_CASE("maximum dissipation at the fritz john solution") {
  FrictionParams fp;
  fp.mu = 0.3;
  fp.e_t = 1.0;
  fp.e_o = 1.0;
  fp.e_r = 0.6;
  const double p_n = 0.5;

  std::mt19937 rng(19);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec3 v(gauss(rng), gauss(rng), gauss(rng));
    if (v.norm() < 1e-3) continue;
    // Closed-form maximizer of -(v . p) over the ellipsoid.
    const Vec3 scaled(fp.e_t * fp.e_t * v[0], fp.e_o * fp.e_o * v[1], fp.e_r * fp.e_r * v[2]);
    const double denom = std::sqrt((scaled[0] / fp.e_t) * (scaled[0] / fp.e_t) +
                                   (scaled[1] / fp.e_o) * (scaled[1] / fp.e_o) +
                                   (scaled[2] / fp.e_r) * (scaled[2] / fp.e_r));
    const Vec3 p_star = -fp.mu * p_n * scaled / denom;
    const double best = dissipation(v[0], v[1], v[2], p_star[0], p_star[1], p_star[2]);

    for (int k = 0; k < 100; ++k) {
      Vec3 dir(gauss(rng), gauss(rng), gauss(rng));
      dir.normalize();
      const double radius = std::cbrt(uni(rng));
      const Vec3 p = fp.mu * p_n * radius *
                     Vec3(fp.e_t * dir[0], fp.e_o * dir[1], fp.e_r * dir[2]);
      CHECK(best >= dissipation(v[0], v[1], v[2], p[0], p[1], p[2]) - 1e-12);
    }
  }
}
