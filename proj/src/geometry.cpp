#include "ecpsim/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ecpsim/errors.hpp"

namespace ecpsim {

namespace {

// Body-frame value/gradient/Hessian of one constraint.
void body_frame_terms(const SmoothConstraint& c, const Vec3& y, double& f,
                      Vec3& grad, Mat3& hess) {
  switch (c.kind) {
    case SmoothConstraint::Kind::HalfSpace:
      f = c.normal.dot(y) - c.offset;
      grad = c.normal;
      hess.setZero();
      break;
    case SmoothConstraint::Kind::CylinderLateral:
      f = y.x() * y.x() + y.z() * y.z() - c.radius * c.radius;
      grad = Vec3(2.0 * y.x(), 0.0, 2.0 * y.z());
      hess = Vec3(2.0, 0.0, 2.0).asDiagonal();
      break;
    case SmoothConstraint::Kind::Sphere:
      f = y.squaredNorm() - c.radius * c.radius;
      grad = 2.0 * y;
      hess = 2.0 * Mat3::Identity();
      break;
  }
}

}  // namespace

ConstraintEval eval_constraint(const SmoothConstraint& c, const Pose& pose,
                               const Vec3& x) {
  const Vec3 d = x - pose.position;
  const Vec3 y = pose.rotation.transpose() * d;
  double f;
  Vec3 g;
  Mat3 H;
  body_frame_terms(c, y, f, g, H);
  ConstraintEval out;
  out.value = f;
  out.grad = pose.rotation * g;
  out.hess = pose.rotation * H * pose.rotation.transpose();
  return out;
}

ConstraintChainEval eval_constraint_chain(const SmoothConstraint& c,
                                          const ImplicitPose& pose, const Vec3& x) {
  const Vec3 d = x - pose.position;
  const Vec3 y = pose.rotation.transpose() * d;
  double f;
  Vec3 g;
  Mat3 H;
  body_frame_terms(c, y, f, g, H);

  ConstraintChainEval out;
  out.value = f;
  out.grad = pose.rotation * g;
  out.hess = pose.rotation * H * pose.rotation.transpose();
  for (int k = 0; k < 3; ++k) {
    const Mat3& dRk = pose.drot_dw[k];
    out.dvalue_dw[k] = (dRk * g).dot(d);
    out.dgrad_dw.col(k) = dRk * g + pose.rotation * (H * (dRk.transpose() * d));
  }
  return out;
}

ConvexGeometry ConvexGeometry::half_space() {
  ConvexGeometry geom;
  geom.shape_ = Shape::HalfSpace;
  SmoothConstraint c;
  c.kind = SmoothConstraint::Kind::HalfSpace;
  c.normal = Vec3::UnitZ();
  c.offset = 0.0;
  geom.constraints_.push_back(c);
  return geom;
}

ConvexGeometry ConvexGeometry::cuboid(const Vec3& full_extents) {
  ConvexGeometry geom;
  geom.shape_ = Shape::Cuboid;
  geom.extents_ = full_extents;
  const Vec3 half = 0.5 * full_extents;
  for (int a = 0; a < 3; ++a) {
    for (double s : {1.0, -1.0}) {
      SmoothConstraint c;
      c.kind = SmoothConstraint::Kind::HalfSpace;
      c.normal = Vec3::Zero();
      c.normal[a] = s;
      c.offset = half[a];
      geom.constraints_.push_back(c);
    }
  }
  // Vertices, edge midpoints and face centers as penetration probes.
  for (double sx : {-1.0, 1.0})
    for (double sy : {-1.0, 1.0})
      for (double sz : {-1.0, 1.0})
        geom.probes_.emplace_back(sx * half.x(), sy * half.y(), sz * half.z());
  for (int a = 0; a < 3; ++a) {
    const int b = (a + 1) % 3, c = (a + 2) % 3;
    for (double sb : {-1.0, 1.0})
      for (double sc : {-1.0, 1.0}) {
        Vec3 p = Vec3::Zero();
        p[b] = sb * half[b];
        p[c] = sc * half[c];
        geom.probes_.push_back(p);
      }
    for (double sa : {-1.0, 1.0}) {
      Vec3 p = Vec3::Zero();
      p[a] = sa * half[a];
      geom.probes_.push_back(p);
    }
  }
  return geom;
}

ConvexGeometry ConvexGeometry::cylinder(double radius, double length) {
  ConvexGeometry geom;
  geom.shape_ = Shape::Cylinder;
  geom.radius_ = radius;
  geom.length_ = length;
  SmoothConstraint lateral;
  lateral.kind = SmoothConstraint::Kind::CylinderLateral;
  lateral.radius = radius;
  geom.constraints_.push_back(lateral);
  for (double s : {1.0, -1.0}) {
    SmoothConstraint cap;
    cap.kind = SmoothConstraint::Kind::HalfSpace;
    cap.normal = Vec3(0.0, s, 0.0);
    cap.offset = 0.5 * length;
    geom.constraints_.push_back(cap);
  }
  const int n_angle = 24;
  for (int i = 0; i < n_angle; ++i) {
    const double th = 2.0 * M_PI * i / n_angle;
    const double cx = radius * std::cos(th);
    const double cz = radius * std::sin(th);
    for (double ay : {-0.5 * length, -0.25 * length, 0.0, 0.25 * length, 0.5 * length}) {
      geom.probes_.emplace_back(cx, ay, cz);
    }
  }
  geom.probes_.emplace_back(0.0, 0.5 * length, 0.0);
  geom.probes_.emplace_back(0.0, -0.5 * length, 0.0);
  return geom;
}

ConvexGeometry ConvexGeometry::sphere(double radius) {
  ConvexGeometry geom;
  geom.shape_ = Shape::Sphere;
  geom.radius_ = radius;
  SmoothConstraint c;
  c.kind = SmoothConstraint::Kind::Sphere;
  c.radius = radius;
  geom.constraints_.push_back(c);
  const int n = 16;
  for (int i = 0; i < n; ++i) {
    for (int j = 1; j < n; ++j) {
      const double az = 2.0 * M_PI * i / n;
      const double pol = M_PI * j / n;
      geom.probes_.emplace_back(radius * std::sin(pol) * std::cos(az),
                                radius * std::sin(pol) * std::sin(az),
                                radius * std::cos(pol));
    }
  }
  geom.probes_.emplace_back(0.0, 0.0, radius);
  geom.probes_.emplace_back(0.0, 0.0, -radius);
  return geom;
}

std::vector<Vec3> ConvexGeometry::surface_samples(int density) const {
  std::vector<Vec3> pts;
  const int n = std::max(2, density);
  switch (shape_) {
    case Shape::HalfSpace:
      break;  // handled by projection, never sampled
    case Shape::Cuboid: {
      const Vec3 half = 0.5 * extents_;
      for (int a = 0; a < 3; ++a) {
        const int b = (a + 1) % 3, c = (a + 2) % 3;
        for (double sa : {-1.0, 1.0}) {
          for (int i = 0; i <= n; ++i) {
            for (int j = 0; j <= n; ++j) {
              Vec3 p;
              p[a] = sa * half[a];
              p[b] = (-1.0 + 2.0 * i / n) * half[b];
              p[c] = (-1.0 + 2.0 * j / n) * half[c];
              pts.push_back(p);
            }
          }
        }
      }
      break;
    }
    case Shape::Cylinder: {
      const int na = 4 * n;
      for (int i = 0; i < na; ++i) {
        const double th = 2.0 * M_PI * i / na;
        const double cx = radius_ * std::cos(th);
        const double cz = radius_ * std::sin(th);
        for (int j = 0; j <= n; ++j) {
          const double y = (-0.5 + static_cast<double>(j) / n) * length_;
          pts.emplace_back(cx, y, cz);
        }
        for (int j = 0; j <= n; ++j) {
          const double rr = radius_ * j / n;
          pts.emplace_back(rr * std::cos(th), 0.5 * length_, rr * std::sin(th));
          pts.emplace_back(rr * std::cos(th), -0.5 * length_, rr * std::sin(th));
        }
      }
      break;
    }
    case Shape::Sphere: {
      const int na = 4 * n;
      for (int i = 0; i < na; ++i) {
        for (int j = 0; j <= n; ++j) {
          const double az = 2.0 * M_PI * i / na;
          const double pol = M_PI * j / n;
          pts.emplace_back(radius_ * std::sin(pol) * std::cos(az),
                           radius_ * std::sin(pol) * std::sin(az),
                           radius_ * std::cos(pol));
        }
      }
      break;
    }
  }
  return pts;
}

Vec3 ConvexGeometry::project(const Pose& pose, const Vec3& x) const {
  const Vec3 y = pose.rotation.transpose() * (x - pose.position);
  Vec3 p = y;
  switch (shape_) {
    case Shape::HalfSpace:
      p.z() = std::min(y.z(), 0.0);
      break;
    case Shape::Cuboid: {
      const Vec3 half = 0.5 * extents_;
      p = y.cwiseMax(-half).cwiseMin(half);
      break;
    }
    case Shape::Cylinder: {
      p.y() = std::clamp(y.y(), -0.5 * length_, 0.5 * length_);
      const double rr = std::hypot(y.x(), y.z());
      if (rr > radius_) {
        p.x() = y.x() * radius_ / rr;
        p.z() = y.z() * radius_ / rr;
      }
      break;
    }
    case Shape::Sphere: {
      const double rr = y.norm();
      if (rr > radius_) p = y * (radius_ / rr);
      break;
    }
  }
  return pose.position + pose.rotation * p;
}

VecX eval_constraints(const ConvexGeometry& geom, const Pose& pose, const Vec3& x) {
  VecX out(geom.num_constraints());
  for (int i = 0; i < geom.num_constraints(); ++i) {
    out[i] = eval_constraint(geom.constraints()[i], pose, x).value;
  }
  return out;
}

std::vector<Vec3> eval_gradients(const ConvexGeometry& geom, const Pose& pose,
                                 const Vec3& x) {
  std::vector<Vec3> out;
  out.reserve(geom.num_constraints());
  for (const auto& c : geom.constraints()) {
    out.push_back(eval_constraint(c, pose, x).grad);
  }
  return out;
}

double max_violation(const ConvexGeometry& geom, const Pose& pose, const Vec3& x,
                     int* argmax) {
  double best = -std::numeric_limits<double>::infinity();
  int best_i = 0;
  for (int i = 0; i < geom.num_constraints(); ++i) {
    const double f = eval_constraint(geom.constraints()[i], pose, x).value;
    if (f > best) {
      best = f;
      best_i = i;
    }
  }
  if (argmax != nullptr) *argmax = best_i;
  return best;
}

bool normal_cone_contains(const ConvexGeometry& geom, const Pose& pose,
                          const Vec3& x, const Vec3& dir, double tol) {
  if (std::abs(max_violation(geom, pose, x)) > tol) {
    throw NotOnBoundary("normal_cone_contains: point not on boundary");
  }
  std::vector<Vec3> active;
  const double act_tol = std::max(tol, 1e-6);
  for (const auto& c : geom.constraints()) {
    const ConstraintEval e = eval_constraint(c, pose, x);
    if (std::abs(e.value) <= act_tol) active.push_back(e.grad);
  }
  if (active.empty()) return dir.norm() <= tol;

  // Feasibility of dir = sum beta_i grad_i, beta >= 0: enumerate support
  // subsets (few active constraints) and accept the best nonnegative fit.
  const int m = static_cast<int>(active.size());
  const double scale = std::max(1.0, dir.norm());
  for (int mask = 0; mask < (1 << m); ++mask) {
    std::vector<int> idx;
    for (int i = 0; i < m; ++i)
      if (mask & (1 << i)) idx.push_back(i);
    MatX A(3, std::max<size_t>(idx.size(), 1));
    A.setZero();
    for (size_t k = 0; k < idx.size(); ++k) A.col(k) = active[idx[k]];
    VecX beta;
    if (idx.empty()) {
      beta.resize(0);
    } else {
      beta = A.colPivHouseholderQr().solve(dir);
    }
    if ((beta.array() < -1e-9).any()) continue;
    const Vec3 resid = (idx.empty() ? dir : Vec3(dir - A * beta));
    if (resid.norm() <= tol * scale) return true;
  }
  return false;
}

ClosestPoints closest_points_oracle(const ConvexGeometry& geom_f, const Pose& pose_f,
                                    const ConvexGeometry& geom_g, const Pose& pose_g,
                                    int grid_density) {
  ClosestPoints best;
  double best_d = std::numeric_limits<double>::infinity();

  auto consider = [&](const Vec3& a1, const Vec3& a2) {
    const double d = (a1 - a2).norm();
    if (d < best_d) {
      best_d = d;
      best.a1 = a1;
      best.a2 = a2;
    }
  };

  std::vector<std::pair<Vec3, Vec3>> pairs;
  for (const Vec3& yb : geom_f.surface_samples(grid_density)) {
    const Vec3 a1 = pose_f.position + pose_f.rotation * yb;
    const Vec3 a2 = geom_g.project(pose_g, a1);
    pairs.emplace_back(a1, a2);
    consider(a1, a2);
  }
  if (geom_g.bounded()) {
    for (const Vec3& yb : geom_g.surface_samples(grid_density)) {
      const Vec3 a2 = pose_g.position + pose_g.rotation * yb;
      const Vec3 a1 = geom_f.project(pose_f, a2);
      pairs.emplace_back(a1, a2);
      consider(a1, a2);
    }
  }

  // The minimizer may be a whole patch (line or surface contact). Take the
  // centroid of the near-optimal pairs so the seed lands in the patch
  // interior rather than at a corner of the tie set.
  {
    Vec3 c1 = Vec3::Zero(), c2 = Vec3::Zero();
    int count = 0;
    const double tol = best_d + 1e-7 * (1.0 + best_d);
    for (const auto& [p1, p2] : pairs) {
      if ((p1 - p2).norm() <= tol) {
        c1 += p1;
        c2 += p2;
        ++count;
      }
    }
    if (count > 0) {
      c1 /= count;
      c2 /= count;
      const Vec3 r1 = geom_f.project(pose_f, c1);
      const Vec3 r2 = geom_g.project(pose_g, c2);
      if ((r1 - r2).norm() <= best_d + 1e-9) {
        best.a1 = r1;
        best.a2 = r2;
        best_d = std::min(best_d, (r1 - r2).norm());
      }
    }
  }

  // Alternating projection refinement from the best sampled pair.
  Vec3 a1 = best.a1, a2 = best.a2;
  for (int it = 0; it < 64; ++it) {
    const Vec3 na1 = geom_f.project(pose_f, a2);
    const Vec3 na2 = geom_g.project(pose_g, na1);
    if ((na1 - a1).norm() + (na2 - a2).norm() < 1e-14) {
      a1 = na1;
      a2 = na2;
      break;
    }
    a1 = na1;
    a2 = na2;
  }
  consider(a1, a2);
  best.distance = (best.a1 - best.a2).norm();
  return best;
}

}  // namespace ecpsim
