#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "ecpsim/algebra.hpp"
#include "ecpsim/errors.hpp"

using namespace ecpsim;

TEST_CASE("skew matrix reproduces the cross product") {
  CHECK(skew(Vec3::Zero()).isZero(0.0));
  CHECK((skew(Vec3(1, 0, 0)) * Vec3(0, 1, 0) - Vec3(0, 0, 1)).norm() == doctest::Approx(0.0));
  const Vec3 v(1, 2, 3), u(4, 5, 6);
  CHECK((skew(v) * u - Vec3(-3, 6, -3)).norm() == doctest::Approx(0.0));
  CHECK((skew(v).transpose() + skew(v)).norm() == doctest::Approx(0.0));

  std::mt19937 rng(7);
  std::uniform_real_distribution<double> uni(-2.0, 2.0);
  for (int i = 0; i < 100; ++i) {
    const Vec3 a(uni(rng), uni(rng), uni(rng));
    const Vec3 b(uni(rng), uni(rng), uni(rng));
    CHECK((skew(a) * b + skew(b) * a).norm() < 1e-14);
    CHECK((skew(a) * b - a.cross(b)).norm() < 1e-14);
  }
}

TEST_CASE("quaternion to rotation") {
  CHECK((quat_to_rotation(Quat::Identity()) - Mat3::Identity()).norm() < 1e-15);

  const double c = std::cos(M_PI / 4), s = std::sin(M_PI / 4);
  const Mat3 R = quat_to_rotation(Quat(c, 0, 0, s));  // 90 deg about Z
  CHECK((R * Vec3(1, 0, 0) - Vec3(0, 1, 0)).norm() < 1e-12);

  // Scenario-3 initial attitude: the cube diagonal becomes vertical.
  const double theta = std::atan(std::sqrt(2.0));
  const Quat q(std::cos(theta / 2), std::sin(theta / 2) / std::sqrt(2.0),
               -std::sin(theta / 2) / std::sqrt(2.0), 0.0);
  const Mat3 R3 = quat_to_rotation(q);
  CHECK((R3 * Vec3(0, 0, 1)).z() == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-12));
  CHECK((R3 * Vec3(1, 1, 1).normalized() - Vec3(0, 0, 1)).norm() < 1e-12);

  CHECK_THROWS_AS(quat_to_rotation(Quat(1.1, 0, 0, 0)), NonUnitQuaternion);

  std::mt19937 rng(11);
  std::normal_distribution<double> gauss;
  for (int i = 0; i < 1000; ++i) {
    Quat r(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
    r.normalize();
    const Mat3 M = quat_to_rotation(r);
    CHECK((M * M.transpose() - Mat3::Identity()).norm() < 1e-9);
    CHECK(M.determinant() == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("kinematic map") {
  const Quat q = Quat::Identity();
  CHECK(quat_rate(q, Vec3::Zero()).norm() == 0.0);
  const Vec4 rate = quat_rate(q, Vec3(0, 0, 2));
  CHECK((rate - Vec4(0, 0, 0, 1)).norm() < 1e-15);

  std::mt19937 rng(3);
  std::normal_distribution<double> gauss;
  for (int i = 0; i < 100; ++i) {
    Quat r(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
    r.normalize();
    const Vec3 w(gauss(rng), gauss(rng), gauss(rng));
    const Vec4 d = quat_rate(r, w);
    // d/dt ||q||^2 = 2 q . qdot = 0
    CHECK(std::abs(d.dot(Vec4(r.w(), r.x(), r.y(), r.z()))) < 1e-12);
  }
}

TEST_CASE("quaternion integration matches axis-angle to O(h^2)") {
  const Vec3 w(0.3, -0.2, 0.9);
  const double h = 1e-4;
  Quat q = Quat::Identity();
  q = integrate_quat(q, w, h);
  CHECK(q.norm() == doctest::Approx(1.0).epsilon(1e-15));
  const Quat exact(Eigen::AngleAxisd(w.norm() * h, w.normalized()));
  CHECK(std::abs(q.w() - exact.w()) < 1e-8);
  CHECK(std::abs(q.x() - exact.x()) < 1e-8);
}

TEST_CASE("tangent basis") {
  const auto [t, o] = tangent_basis(Vec3(0, 0, 1));
  CHECK((t - Vec3(1, 0, 0)).norm() < 1e-15);
  CHECK((o - Vec3(0, 1, 0)).norm() < 1e-15);

  CHECK_THROWS_AS(tangent_basis(Vec3::Zero()), ZeroNormal);

  std::mt19937 rng(5);
  std::normal_distribution<double> gauss;
  auto check_frame = [](const Vec3& n) {
    const auto [t, o] = tangent_basis(n);
    const Vec3 nu = n.normalized();
    CHECK(std::abs(t.dot(nu)) < 1e-12);
    CHECK(std::abs(o.dot(nu)) < 1e-12);
    CHECK(std::abs(t.norm() - 1.0) < 1e-12);
    CHECK((t.cross(o) - nu).norm() < 1e-12);
    // Determinism.
    const auto [t2, o2] = tangent_basis(n);
    CHECK((t - t2).norm() == 0.0);
    CHECK((o - o2).norm() == 0.0);
  };
  check_frame(Vec3(0, 1, 0));
  check_frame(Vec3(1, 1, 1).normalized());
  for (int i = 0; i < 200; ++i) {
    Vec3 n(gauss(rng), gauss(rng), gauss(rng));
    if (n.norm() < 1e-6) continue;
    check_frame(n.normalized());
  }
}

TEST_CASE("implicit pose derivative factors match finite differences") {
  std::mt19937 rng(13);
  std::normal_distribution<double> gauss;
  for (int trial = 0; trial < 20; ++trial) {
    Quat q(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
    q.normalize();
    const Vec3 v(gauss(rng), gauss(rng), gauss(rng));
    const Vec3 w(gauss(rng), gauss(rng), gauss(rng));
    const double h = 0.01;
    const ImplicitPose pose = implicit_pose(Vec3(0.1, -0.2, 0.3), q, v, w, h);

    for (int k = 0; k < 3; ++k) {
      Vec3 wp = w;
      const double dw = 1e-7;
      wp[k] += dw;
      const ImplicitPose pert = implicit_pose(Vec3(0.1, -0.2, 0.3), q, v, wp, h);
      const Mat3 fd = (pert.rotation - pose.rotation) / dw;
      CHECK((fd - pose.drot_dw[k]).norm() < 1e-6);
    }
  }
}
