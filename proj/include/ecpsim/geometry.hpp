#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ecpsim/algebra.hpp"
#include "ecpsim/body.hpp"
#include "ecpsim/types.hpp"

namespace ecpsim {

/// World pose used for constraint evaluation.
struct Pose {
  Vec3 position = Vec3::Zero();
  Mat3 rotation = Mat3::Identity();
};

inline Pose pose_of(const State& s) {
  return {s.position, quat_to_rotation(s.orientation)};
}

/// One C^2 convex inequality in the body frame, f(y) <= 0.
struct SmoothConstraint {
  enum class Kind {
    HalfSpace,        // normal . y - offset
    CylinderLateral,  // y_x^2 + y_z^2 - radius^2 (axis along body Y)
    Sphere,           // |y|^2 - radius^2
  };
  Kind kind = Kind::HalfSpace;
  Vec3 normal = Vec3::UnitZ();
  double offset = 0.0;
  double radius = 1.0;
};

struct ConstraintEval {
  double value = 0.0;
  Vec3 grad = Vec3::Zero();  // world frame
  Mat3 hess = Mat3::Zero();  // world frame
};

/// ConstraintEval plus sensitivities to the owning body's end-of-step
/// angular velocity (through the implicit orientation update), at fixed
/// world point. Position sensitivities follow from grad/hess directly.
struct ConstraintChainEval : ConstraintEval {
  Vec3 dvalue_dw = Vec3::Zero();
  Mat3 dgrad_dw = Mat3::Zero();  // column k = d(grad)/d(w_k)
};

ConstraintEval eval_constraint(const SmoothConstraint& c, const Pose& pose,
                               const Vec3& x);
ConstraintChainEval eval_constraint_chain(const SmoothConstraint& c,
                                          const ImplicitPose& pose, const Vec3& x);

/// A convex body as an intersection of smooth convex inequalities with
/// gradient oracles. Immutable after construction.
class ConvexGeometry {
 public:
  enum class Shape { HalfSpace, Cuboid, Cylinder, Sphere };

  static ConvexGeometry half_space();                      // occupies z <= 0
  static ConvexGeometry cuboid(const Vec3& full_extents);  // centered box
  static ConvexGeometry cylinder(double radius, double length);  // axis = body Y
  static ConvexGeometry sphere(double radius);

  Shape shape() const { return shape_; }
  const std::vector<SmoothConstraint>& constraints() const { return constraints_; }
  int num_constraints() const { return static_cast<int>(constraints_.size()); }
  bool bounded() const { return shape_ != Shape::HalfSpace; }
  const Vec3& extents() const { return extents_; }
  double radius() const { return radius_; }
  double length() const { return length_; }

  /// Body-frame boundary points for penetration probing (vertices, rims, ...).
  const std::vector<Vec3>& boundary_probes() const { return probes_; }

  /// Dense body-frame boundary sampling for the brute-force closest point
  /// oracle; density scales the number of subdivisions per face/arc.
  std::vector<Vec3> surface_samples(int density) const;

  /// Exact Euclidean projection of a world point onto the body (world out).
  Vec3 project(const Pose& pose, const Vec3& x) const;

 private:
  Shape shape_ = Shape::HalfSpace;
  std::vector<SmoothConstraint> constraints_;
  Vec3 extents_ = Vec3::Zero();
  double radius_ = 0.0;
  double length_ = 0.0;
  std::vector<Vec3> probes_;
};

/// f_i(x) for every constraint, world frame.
VecX eval_constraints(const ConvexGeometry& geom, const Pose& pose, const Vec3& x);

/// World-frame gradients of every constraint at x.
std::vector<Vec3> eval_gradients(const ConvexGeometry& geom, const Pose& pose,
                                 const Vec3& x);

/// max_i f_i(x); index of the attaining constraint (lowest on ties) optional.
double max_violation(const ConvexGeometry& geom, const Pose& pose, const Vec3& x,
                     int* argmax = nullptr);

/// Whether dir lies in the normal cone at boundary point x (conic hull of
/// active constraint gradients). Throws NotOnBoundary when x is not on the
/// boundary within tol.
bool normal_cone_contains(const ConvexGeometry& geom, const Pose& pose,
                          const Vec3& x, const Vec3& dir, double tol);

struct ClosestPoints {
  Vec3 a1 = Vec3::Zero();  // on F
  Vec3 a2 = Vec3::Zero();  // on G
  double distance = 0.0;
};

/// Brute-force closest points between two bodies: dense boundary sampling
/// plus alternating-projection refinement. Accuracy is limited by the grid;
/// intended as an independent test oracle and a warm-start seed.
ClosestPoints closest_points_oracle(const ConvexGeometry& geom_f, const Pose& pose_f,
                                    const ConvexGeometry& geom_g, const Pose& pose_g,
                                    int grid_density);

}  // namespace ecpsim
