#include "ecpsim/contact.hpp"

#include "ecpsim/algebra.hpp"
#include "ecpsim/errors.hpp"

namespace ecpsim {

ContactFrame contact_frame(const Vec3& grad_g_combo, const Vec3& origin) {
  if (grad_g_combo.norm() < 1e-9) {
    throw DegenerateNormal("contact_frame: degenerate G-side gradient combination");
  }
  ContactFrame frame;
  frame.n = grad_g_combo.normalized();
  const auto [t, o] = tangent_basis(frame.n);
  frame.t = t;
  frame.o = o;
  frame.origin = origin;
  return frame;
}

WrenchBases wrench_bases(const Vec3& lever, const ContactFrame& frame) {
  WrenchBases w;
  w.n << frame.n, lever.cross(frame.n);
  w.t << frame.t, lever.cross(frame.t);
  w.o << frame.o, lever.cross(frame.o);
  w.r << Vec3::Zero(), frame.n;
  return w;
}

KktResiduals kkt_residuals(const ConvexGeometry& geom_f, const Pose& pose_f,
                           const ConvexGeometry& geom_g, const Pose& pose_g,
                           const ContactUnknowns& u) {
  const int mf = geom_f.num_constraints();
  const int mg = geom_g.num_constraints();

  Vec3 eta = Vec3::Zero();
  KktResiduals out;
  out.comp_pairs.reserve(mf + mg + 1);

  std::vector<double> f_vals(mf);
  for (int i = 0; i < mf; ++i) {
    const ConstraintEval e = eval_constraint(geom_f.constraints()[i], pose_f, u.a1);
    f_vals[i] = e.value;
    eta += (i == u.k1 ? 1.0 : u.l_f[i]) * e.grad;
  }
  out.point_eq = u.a1 - u.a2 + u.l_f[u.k1] * eta;

  out.gradient_eq = eta;
  for (int j = 0; j < mg; ++j) {
    const ConstraintEval e = eval_constraint(geom_g.constraints()[j], pose_g, u.a2);
    out.gradient_eq += u.l_g[j] * e.grad;
    out.comp_pairs.emplace_back(u.l_g[j], -e.value);
  }
  for (int i = 0; i < mf; ++i) {
    if (i == u.k1) continue;
    out.comp_pairs.emplace_back(u.l_f[i], -f_vals[i]);
  }
  out.comp_pairs.emplace_back(u.l_f[u.k1], -f_vals[u.k1]);
  out.comp_pairs.emplace_back(u.p_n, max_violation(geom_f, pose_f, u.a2));
  return out;
}

}  // namespace ecpsim
