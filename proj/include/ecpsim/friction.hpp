#pragma once

#include "ecpsim/contact.hpp"
#include "ecpsim/types.hpp"

namespace ecpsim {

/// Slip at the ECP: (v_t, v_o, v_r) = (W_t' nu, W_o' nu, W_r' nu).
inline Vec3 slip_velocities(const Vec6& nu, const WrenchBases& bases) {
  return Vec3(bases.t.dot(nu), bases.o.dot(nu), bases.r.dot(nu));
}

/// Power dissipated by the friction wrench (impulse-scaled):
/// -(v_t p_t + v_o p_o + v_r p_r). Nonnegative for feasible solutions.
inline double dissipation(double v_t, double v_o, double v_r, double p_t,
                          double p_o, double p_r) {
  return -(v_t * p_t + v_o * p_o + v_r * p_r);
}

struct FritzJohnResiduals {
  Vec3 eq;      // e^2 mu p_n v + p sigma, componentwise in (t, o, r)
  double zeta;  // (mu p_n)^2 - (p_t/e_t)^2 - (p_o/e_o)^2 - (p_r/e_r)^2
};

/// First-order conditions of the maximum-dissipation friction optimization;
/// zeta pairs with sigma in the complementarity 0 <= zeta perp sigma >= 0.
inline FritzJohnResiduals fritz_john_residuals(double v_t, double v_o, double v_r,
                                               double p_n, double p_t, double p_o,
                                               double p_r, double sigma,
                                               const FrictionParams& fp) {
  FritzJohnResiduals out;
  out.eq[0] = fp.e_t * fp.e_t * fp.mu * p_n * v_t + p_t * sigma;
  out.eq[1] = fp.e_o * fp.e_o * fp.mu * p_n * v_o + p_o * sigma;
  out.eq[2] = fp.e_r * fp.e_r * fp.mu * p_n * v_r + p_r * sigma;
  const double mp = fp.mu * p_n;
  out.zeta = mp * mp - (p_t / fp.e_t) * (p_t / fp.e_t) -
             (p_o / fp.e_o) * (p_o / fp.e_o) - (p_r / fp.e_r) * (p_r / fp.e_r);
  return out;
}

}  // namespace ecpsim
