#pragma once

#include <array>
#include <cmath>
#include <utility>

#include "ecpsim/errors.hpp"
#include "ecpsim/types.hpp"

// Small fixed-size kinematics helpers shared by every module. All functions
// are pure; quaternions are Hamilton convention with spatial (inertial-frame)
// angular velocity throughout.

namespace ecpsim {

/// Cross-product matrix: skew(v) * u == v.cross(u).
inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
      -v.y(), v.x(), 0.0;
  return m;
}

/// Rotation matrix of a unit quaternion. Throws NonUnitQuaternion if the
/// norm deviates from 1 by more than 1e-6.
inline Mat3 quat_to_rotation(const Quat& q) {
  const double n = q.norm();
  if (std::abs(n - 1.0) > 1e-6) {
    throw NonUnitQuaternion("quaternion norm " + std::to_string(n));
  }
  return q.toRotationMatrix();
}

/// Quaternion rate under spatial angular velocity: qdot = 1/2 (0, w) * q.
/// Returned as (w, x, y, z) coefficients.
inline Vec4 quat_rate(const Quat& q, const Vec3& w) {
  const Quat wq(0.0, w.x(), w.y(), w.z());
  const Quat d = wq * q;
  return 0.5 * Vec4(d.w(), d.x(), d.y(), d.z());
}

/// One backward-Euler quaternion update q <- normalize(q + h qdot(w)).
inline Quat integrate_quat(const Quat& q, const Vec3& w, double h) {
  const Vec4 rate = quat_rate(q, w);
  Quat out(q.w() + h * rate[0], q.x() + h * rate[1], q.y() + h * rate[2],
           q.z() + h * rate[3]);
  out.normalize();
  return out;
}

/// Deterministic right-handed tangent basis {n, t, o}: project the
/// coordinate axis with the smallest |n| component onto the tangent plane.
/// n = +z yields the canonical frame t = +x, o = +y. Throws ZeroNormal for
/// ||n|| < 1e-9.
inline std::pair<Vec3, Vec3> tangent_basis(const Vec3& n) {
  if (n.norm() < 1e-9) {
    throw ZeroNormal("tangent_basis: zero normal");
  }
  const Vec3 nu = n.normalized();
  int k = 0;
  if (std::abs(nu.y()) < std::abs(nu[k])) k = 1;
  if (std::abs(nu.z()) < std::abs(nu[k])) k = 2;
  Vec3 axis = Vec3::Zero();
  axis[k] = 1.0;
  const Vec3 t = (axis - axis.dot(nu) * nu).normalized();
  const Vec3 o = nu.cross(t);
  return {t, o};
}

/// d(R)/d(q_k) of the unit-quaternion rotation formula, k in {w,x,y,z}.
/// Valid for directions tangent to the unit sphere.
inline std::array<Mat3, 4> rotation_quat_derivatives(const Quat& q) {
  const double w = q.w(), x = q.x(), y = q.y(), z = q.z();
  std::array<Mat3, 4> d;
  d[0] << 0, -2 * z, 2 * y,
          2 * z, 0, -2 * x,
          -2 * y, 2 * x, 0;
  d[1] << 0, 2 * y, 2 * z,
          2 * y, -4 * x, -2 * w,
          2 * z, 2 * w, -4 * x;
  d[2] << -4 * y, 2 * x, 2 * w,
          2 * x, 0, 2 * z,
          -2 * w, 2 * z, -4 * y;
  d[3] << -4 * z, -2 * w, 2 * x,
          2 * w, -4 * z, 2 * y,
          2 * x, 2 * y, 0;
  return d;
}

/// End-of-step pose of one body under the implicit update
///   qbar+ = qbar + h v,  Q+ = normalize(Q + h/2 (0,w) Q),
/// together with the chain-rule factors needed by analytic Jacobians:
/// dQ+/dw (4x3) and dR(Q+)/dw_k (three 3x3 matrices).
struct ImplicitPose {
  Vec3 position;
  Quat orientation;
  Mat3 rotation;
  Eigen::Matrix<double, 4, 3> dquat_dw;
  std::array<Mat3, 3> drot_dw;
  double h = 0.0;
};

inline ImplicitPose implicit_pose(const Vec3& q0, const Quat& Q0, const Vec3& v,
                                  const Vec3& w, double h) {
  ImplicitPose out;
  out.h = h;
  out.position = q0 + h * v;

  // s = Q0 + h/2 * (0,w) x Q0; linear in w with 4x3 factor K.
  Eigen::Matrix<double, 4, 3> K;
  const Vec3 qv(Q0.x(), Q0.y(), Q0.z());
  K.row(0) = -qv.transpose();
  K.block<3, 3>(1, 0) = Q0.w() * Mat3::Identity() - skew(qv);

  Vec4 s = Vec4(Q0.w(), Q0.x(), Q0.y(), Q0.z()) + 0.5 * h * K * w;
  const double sn = s.norm();
  const Vec4 u = s / sn;
  out.orientation = Quat(u[0], u[1], u[2], u[3]);
  out.rotation = out.orientation.toRotationMatrix();

  const Mat4 proj = (Mat4::Identity() - u * u.transpose()) / sn;
  out.dquat_dw = proj * (0.5 * h * K);

  const std::array<Mat3, 4> dR = rotation_quat_derivatives(out.orientation);
  for (int k = 0; k < 3; ++k) {
    out.drot_dw[k] = Mat3::Zero();
    for (int m = 0; m < 4; ++m) {
      out.drot_dw[k] += dR[m] * out.dquat_dw(m, k);
    }
  }
  return out;
}

/// Fixed pose (static bodies); derivative factors are zero.
inline ImplicitPose fixed_pose(const Vec3& q0, const Quat& Q0) {
  ImplicitPose out;
  out.position = q0;
  out.orientation = Q0.normalized();
  out.rotation = out.orientation.toRotationMatrix();
  out.dquat_dw.setZero();
  for (auto& m : out.drot_dw) m.setZero();
  return out;
}

}  // namespace ecpsim
