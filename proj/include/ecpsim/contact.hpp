#pragma once

#include <utility>
#include <vector>

#include "ecpsim/geometry.hpp"
#include "ecpsim/types.hpp"

namespace ecpsim {

/// Friction ellipsoid parameters. e_t, e_o are dimensionless; e_r carries
/// meters so that the ellipsoid slack is dimensionally consistent.
struct FrictionParams {
  double mu = 0.0;
  double e_t = 1.0;
  double e_o = 1.0;
  double e_r = 1.0;
};

/// One contact pair: F is the moving body, G a body it may touch (the
/// environment plane or an obstacle).
struct ContactPair {
  int body_f = 0;
  int body_g = 1;
  FrictionParams friction;
};

/// Per-contact MNCP unknowns. l_f/l_g are the modified-KKT multipliers of
/// the F/G constraint sets; k1 is the pivot index of the active F constraint
/// whose conic coefficient is fixed to one.
struct ContactUnknowns {
  Vec3 a1 = Vec3::Zero();
  Vec3 a2 = Vec3::Zero();
  VecX l_f;
  VecX l_g;
  double p_n = 0.0;
  double p_t = 0.0;
  double p_o = 0.0;
  double p_r = 0.0;
  double sigma = 0.0;
  int k1 = 0;
};

struct ContactFrame {
  Vec3 n = Vec3::UnitZ();
  Vec3 t = Vec3::UnitX();
  Vec3 o = Vec3::UnitY();
  Vec3 origin = Vec3::Zero();
};

/// Frame from the G-side KKT gradient combination sum_j l_j grad g_j(a2);
/// n points from G into F. Throws DegenerateNormal below 1e-9.
ContactFrame contact_frame(const Vec3& grad_g_combo, const Vec3& origin);

struct WrenchBases {
  Vec6 n, t, o, r;
};

/// Unit wrenches at lever arm r (CM to ECP): W_n=[n; r x n], ..., W_r=[0; n].
WrenchBases wrench_bases(const Vec3& lever, const ContactFrame& frame);

/// Residuals of the modified-KKT equivalent-contact-point equations.
struct KktResiduals {
  Vec3 point_eq;     // a1 - a2 + l_k1 (grad f_k1 + sum_{i != k1} l_i grad f_i)
  Vec3 gradient_eq;  // the same combination + sum_j l_j grad g_j
  // (multiplier, partner) complementarity pairs: (l_i, -f_i(a1)), (l_j,
  // -g_j(a2)), and last (p_n, max_i f_i(a2)).
  std::vector<std::pair<double, double>> comp_pairs;
};

KktResiduals kkt_residuals(const ConvexGeometry& geom_f, const Pose& pose_f,
                           const ConvexGeometry& geom_g, const Pose& pose_g,
                           const ContactUnknowns& u);

}  // namespace ecpsim
