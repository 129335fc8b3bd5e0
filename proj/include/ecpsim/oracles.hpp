#pragma once

#include "ecpsim/contact.hpp"
#include "ecpsim/stepper.hpp"
#include "ecpsim/types.hpp"

// Closed-form single-step solutions for pure translation and pure rotation
// in surface and line contact against the plane z = 0, used as independent
// ground truth for the MNCP stepper. Each oracle validates its own regime
// preconditions and refuses out-of-regime inputs.

namespace ecpsim::oracles {

struct SurfaceTranslationSolution {
  double p_n = 0.0, p_t = 0.0, p_o = 0.0, p_r = 0.0;
  Vec2 v_next = Vec2::Zero();
  Vec2 ecp_offset = Vec2::Zero();  // a2 - qbar^{u+1}, horizontal components
  Vec3 a2 = Vec3::Zero();
  double sigma_prime = 0.0;
};

/// Sliding without rotation on the plane. v is the horizontal velocity at the
/// start of the step, q_z the (constant) CM height, q_xy the CM position at
/// the start of the step. Requires e_t == e_o. Throws StickingRegime when
/// m sigma' < e_t^2 mu p_n and IncompatibleImpulse when the applied-impulse
/// compatibility constraint fails.
SurfaceTranslationSolution surface_translation_step(double m, double beta, double h,
                                                    const FrictionParams& fp,
                                                    const Vec2& v,
                                                    const AppliedImpulse& p_app,
                                                    double q_z,
                                                    const Vec2& q_xy = Vec2::Zero());

struct SurfaceRotationSolution {
  double p_n = 0.0, p_t = 0.0, p_o = 0.0, p_r = 0.0;
  double w_next = 0.0;
  Vec2 v_next = Vec2::Zero();
  double sigma_prime = 0.0;
};

/// Spinning about the contact normal only. I_z is the inertia about the
/// vertical axis through the CM; v is the pre-step horizontal velocity used
/// by the compatibility check.
SurfaceRotationSolution surface_rotation_step(double m, double beta, double h,
                                              double I_z, const FrictionParams& fp,
                                              double w_z, const AppliedImpulse& p_app,
                                              const Vec2& v = Vec2::Zero());

struct LineTranslationSolution {
  double p_n = 0.0;
  double p_t_star = 0.0, p_o_star = 0.0, p_r_star = 0.0;
  Vec2 p_world = Vec2::Zero();  // (p_t, p_o) rotated back to the world frame
  Vec2 v_next = Vec2::Zero();   // world frame
  double sigma_prime = 0.0;
  double L = 0.0, D = 0.0;  // ECP coordinates along/orthogonal to the line
};

/// Pure translation in line contact: the surface-contact solution expressed
/// in the starred frame *W = R1(theta_z)^T W (contact line along *y). H is
/// the CM height above the plane.
LineTranslationSolution line_translation_step(double m, double beta, double h,
                                              const FrictionParams& fp, const Vec2& v,
                                              const AppliedImpulse& p_app, double H,
                                              double theta_z,
                                              const Vec2& q_xy = Vec2::Zero());

struct LineRotationSolution {
  double p_n = 0.0, p_r_star = 0.0;
  double w_next = 0.0;
  Vec2 v_next_star = Vec2::Zero();
  double sigma_prime = 0.0;
  double L = 0.0, D = 0.0;
};

/// Pure rotation about the contact normal in line contact; starred applied
/// moments, I_z about the vertical axis through the CM.
LineRotationSolution line_rotation_step(double m, double beta, double h, double I_z,
                                        const FrictionParams& fp, double w_z,
                                        const AppliedImpulse& p_app_star,
                                        const Vec2& v_star = Vec2::Zero());

struct LineContactCoords {
  double L = 0.0;
  double D = 0.0;
  double H = 0.0;
};

/// ECP coordinates along (L) and orthogonal to (D) a contact line whose
/// direction makes angle theta_z with the world X axis; H is the CM height.
LineContactCoords line_coords(const Vec3& a, const Vec3& q, double theta_z);

}  // namespace ecpsim::oracles
