#include "ecpsim/oracles.hpp"

#include <cmath>

#include "ecpsim/errors.hpp"

namespace ecpsim::oracles {

namespace {

void require_isotropic(const FrictionParams& fp) {
  if (std::abs(fp.e_t - fp.e_o) > 1e-12) {
    throw ConfigError("closed-form solution assumes e_t = e_o");
  }
}

Eigen::Matrix2d rot2(double theta) {
  Eigen::Matrix2d R;
  R << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
  return R;
}

}  // namespace

SurfaceTranslationSolution surface_translation_step(double m, double beta, double h,
                                                    const FrictionParams& fp,
                                                    const Vec2& v,
                                                    const AppliedImpulse& p_app,
                                                    double q_z, const Vec2& q_xy) {
  require_isotropic(fp);
  const double px = p_app.linear.x(), py = p_app.linear.y(), pz = p_app.linear.z();
  const double pxt = p_app.angular.x(), pyt = p_app.angular.y(), pzt = p_app.angular.z();

  SurfaceTranslationSolution out;
  out.p_n = m * beta * h - pz;

  const double ux = v.x() + px / m;
  const double uy = v.y() + py / m;
  out.sigma_prime = std::sqrt(fp.e_t * fp.e_t * ux * ux + fp.e_o * fp.e_o * uy * uy);
  const double cap = fp.e_t * fp.e_t * fp.mu * out.p_n;
  if (m * out.sigma_prime - cap < 0.0) {
    throw StickingRegime("surface_translation_step: m sigma' < e^2 mu p_n");
  }

  const double compat = pzt * out.sigma_prime - fp.e_o * pyt * uy - fp.e_t * pxt * ux;
  if (std::abs(compat) > 1e-9 * std::max(1.0, out.sigma_prime)) {
    throw IncompatibleImpulse("surface_translation_step: applied impulses violate the pure-translation constraint");
  }

  out.p_t = -fp.e_t * fp.e_t * fp.mu * out.p_n * (px + m * v.x()) / (m * out.sigma_prime);
  out.p_o = -fp.e_o * fp.e_o * fp.mu * out.p_n * (py + m * v.y()) / (m * out.sigma_prime);
  out.p_r = 0.0;
  out.v_next = Vec2((out.p_t + px) / m + v.x(), (out.p_o + py) / m + v.y());

  // Moment balance about the CM (Eqs. for the horizontal angular rows):
  // p_n (a - q)_xy = (p_yt - p_t q_z, -(p_xt + p_o q_z)).
  out.ecp_offset = Vec2((pyt - out.p_t * q_z) / out.p_n, -(pxt + out.p_o * q_z) / out.p_n);
  const Vec2 q_next = q_xy + h * out.v_next;
  out.a2 = Vec3(q_next.x() + out.ecp_offset.x(), q_next.y() + out.ecp_offset.y(), 0.0);
  return out;
}

SurfaceRotationSolution surface_rotation_step(double m, double beta, double h,
                                              double I_z, const FrictionParams& fp,
                                              double w_z, const AppliedImpulse& p_app,
                                              const Vec2& v) {
  const double px = p_app.linear.x(), py = p_app.linear.y(), pz = p_app.linear.z();
  const double pxt = p_app.angular.x(), pyt = p_app.angular.y(), pzt = p_app.angular.z();

  SurfaceRotationSolution out;
  out.p_n = m * beta * h - pz;
  out.sigma_prime = fp.e_r * std::abs(w_z + pzt / I_z);
  const double cap = fp.e_r * fp.e_r * fp.mu * out.p_n;
  if (I_z * out.sigma_prime - cap < 0.0) {
    throw StickingRegime("surface_rotation_step: I_z sigma' < e_r^2 mu p_n");
  }
  const double compat = pxt * (v.y() + py / m) - pyt * (v.x() + px / m);
  if (std::abs(compat) > 1e-9 * std::max(1.0, out.sigma_prime)) {
    throw IncompatibleImpulse("surface_rotation_step: applied impulses violate the pure-rotation constraint");
  }

  out.p_t = 0.0;
  out.p_o = 0.0;
  out.p_r = -cap * (pzt + I_z * w_z) / (I_z * out.sigma_prime);
  out.w_next = (out.p_r + pzt) / I_z + w_z;
  out.v_next = Vec2(-out.w_next * pxt / out.p_n, -out.w_next * pyt / out.p_n);
  return out;
}

LineTranslationSolution line_translation_step(double m, double beta, double h,
                                              const FrictionParams& fp, const Vec2& v,
                                              const AppliedImpulse& p_app, double H,
                                              double theta_z, const Vec2& q_xy) {
  require_isotropic(fp);
  const Eigen::Matrix2d R1t = rot2(theta_z).transpose();

  AppliedImpulse starred;
  starred.linear.head<2>() = R1t * p_app.linear.head<2>();
  starred.linear.z() = p_app.linear.z();
  starred.angular.head<2>() = R1t * p_app.angular.head<2>();
  starred.angular.z() = p_app.angular.z();
  const Vec2 v_star = R1t * v;

  const SurfaceTranslationSolution s =
      surface_translation_step(m, beta, h, fp, v_star, starred, H, R1t * q_xy);

  LineTranslationSolution out;
  out.p_n = s.p_n;
  out.p_t_star = s.p_t;
  out.p_o_star = s.p_o;
  out.p_r_star = 0.0;
  out.p_world = rot2(theta_z) * Vec2(s.p_t, s.p_o);
  out.v_next = rot2(theta_z) * s.v_next;
  out.sigma_prime = s.sigma_prime;
  // Starred moment rows: the contact line runs along *y, so the ECP offset
  // components map to (D, L).
  out.D = s.ecp_offset.x();
  out.L = s.ecp_offset.y();
  return out;
}

LineRotationSolution line_rotation_step(double m, double beta, double h, double I_z,
                                        const FrictionParams& fp, double w_z,
                                        const AppliedImpulse& p_app_star,
                                        const Vec2& v_star) {
  const double px = p_app_star.linear.x(), py = p_app_star.linear.y();
  const double pz = p_app_star.linear.z();
  const double pxt = p_app_star.angular.x(), pyt = p_app_star.angular.y();
  const double pzt = p_app_star.angular.z();

  LineRotationSolution out;
  out.p_n = m * beta * h - pz;
  out.sigma_prime = fp.e_r * std::abs(w_z + pzt / I_z);
  const double cap = fp.e_r * fp.e_r * fp.mu * out.p_n;
  if (I_z * out.sigma_prime - cap < 0.0) {
    throw StickingRegime("line_rotation_step: I_z sigma' < e_r^2 mu p_n");
  }
  const double compat = (m * v_star.x() + px) * pyt - (m * v_star.y() + py) * pxt;
  if (std::abs(compat) > 1e-9 * std::max(1.0, out.sigma_prime)) {
    throw IncompatibleImpulse("line_rotation_step: applied impulses violate the pure-rotation constraint");
  }

  out.p_r_star = -cap * (pzt + I_z * w_z) / (I_z * out.sigma_prime);
  out.w_next = (out.p_r_star + pzt) / I_z + w_z;
  out.L = -pxt / out.p_n;
  out.D = pyt / out.p_n;
  out.v_next_star = Vec2(-out.w_next * pxt / out.p_n, -out.w_next * pyt / out.p_n);
  return out;
}

LineContactCoords line_coords(const Vec3& a, const Vec3& q, double theta_z) {
  const double dx = a.x() - q.x();
  const double dy = a.y() - q.y();
  LineContactCoords out;
  out.L = std::cos(theta_z) * dx + std::sin(theta_z) * dy;
  out.D = std::sin(theta_z) * dx - std::cos(theta_z) * dy;
  out.H = q.z();
  return out;
}

}  // namespace ecpsim::oracles
