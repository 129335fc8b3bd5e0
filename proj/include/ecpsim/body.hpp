#pragma once

#include <memory>
#include <string>

#include "ecpsim/algebra.hpp"
#include "ecpsim/types.hpp"

namespace ecpsim {

class ConvexGeometry;

/// Rigid body mass properties. Inertia is expressed in the body frame
/// (assumed principal). Fixed bodies are environment geometry: their mass
/// properties are ignored and they contribute no unknowns to a step.
struct RigidBody {
  std::string name;
  double mass = 1.0;                              // kg
  Mat3 inertia_body = Mat3::Identity();           // kg m^2
  std::shared_ptr<const ConvexGeometry> geometry;
  bool fixed = false;
};

/// Configuration and generalized velocity of one body. Angular velocity is
/// spatial (inertial frame).
struct State {
  Vec3 position = Vec3::Zero();
  Quat orientation = Quat::Identity();
  Vec3 linear_velocity = Vec3::Zero();
  Vec3 angular_velocity = Vec3::Zero();

  Vec6 generalized_velocity() const {
    Vec6 nu;
    nu << linear_velocity, angular_velocity;
    return nu;
  }
};

/// I' = R I_body R^T.
inline Mat3 world_inertia(const RigidBody& body, const Quat& orientation) {
  const Mat3 R = quat_to_rotation(orientation);
  return R * body.inertia_body * R.transpose();
}

/// diag(m I3, I').
inline Mat6 generalized_mass(const RigidBody& body, const Quat& orientation) {
  Mat6 M = Mat6::Zero();
  M.topLeftCorner<3, 3>() = body.mass * Mat3::Identity();
  M.bottomRightCorner<3, 3>() = world_inertia(body, orientation);
  return M;
}

/// Gyroscopic moment -w x (I' w).
inline Vec3 coriolis_moment(const Mat3& inertia_world, const Vec3& w) {
  return -w.cross(inertia_world * w);
}

}  // namespace ecpsim
