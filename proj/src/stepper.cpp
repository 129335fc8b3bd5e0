#include "ecpsim/stepper.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <sstream>
#include <string>

#include "ecpsim/errors.hpp"
#include "ecpsim/friction.hpp"
#include "ecpsim/geometry.hpp"
#include "ecpsim/log.hpp"

namespace ecpsim {

namespace {

struct BodyCtx {
  bool dynamic = false;
  double mass = 1.0;
  Mat3 inertia_world = Mat3::Identity();  // at start-of-step orientation
  Vec3 q0 = Vec3::Zero();
  Quat Q0 = Quat::Identity();
  Vec6 nu0 = Vec6::Zero();
  Vec3 app_lin = Vec3::Zero();
  Vec3 app_ang = Vec3::Zero();
  const ConvexGeometry* geom = nullptr;
};

struct ContactCtx {
  int f = 0, g = 0;
  FrictionParams fp;
  Pose pose_g;  // static G
  const ConvexGeometry* geom_f = nullptr;
  const ConvexGeometry* geom_g = nullptr;
};

struct StepCtx {
  std::vector<BodyCtx> bodies;
  std::vector<ContactCtx> contacts;
  StepLayout layout;
  double h = 0.01;
  double beta = 9.8;
};

// Residual and (optionally) the analytic Jacobian of the raw stacked
// residual [F_eq; F_comp].
void eval_step(const StepCtx& ctx, const VecX& z, VecX& f_eq, VecX& f_comp,
               MatX* jac) {
  const StepLayout& lay = ctx.layout;
  const int n_eq = lay.n_eq;
  const int n = n_eq + lay.n_comp;
  const double h = ctx.h;

  f_eq.setZero(n_eq);
  f_comp.setZero(lay.n_comp);
  if (jac != nullptr) jac->setZero(n, n);

  // End-of-step poses of dynamic bodies under the implicit update.
  std::vector<ImplicitPose> poses(ctx.bodies.size());
  for (size_t b = 0; b < ctx.bodies.size(); ++b) {
    const BodyCtx& bc = ctx.bodies[b];
    if (bc.dynamic) {
      const int c0 = lay.nu_col[b];
      poses[b] = implicit_pose(bc.q0, bc.Q0, z.segment<3>(c0), z.segment<3>(c0 + 3), h);
    } else {
      poses[b] = fixed_pose(bc.q0, bc.Q0);
    }
  }

  // Dynamics rows, applied and gravity impulses, inertia terms.
  for (size_t b = 0; b < ctx.bodies.size(); ++b) {
    const BodyCtx& bc = ctx.bodies[b];
    if (!bc.dynamic) continue;
    const int r0 = lay.dyn_row0[b];
    const int c0 = lay.nu_col[b];
    const Vec3 v = z.segment<3>(c0);
    const Vec3 w = z.segment<3>(c0 + 3);
    const Mat3& Iw = bc.inertia_world;

    f_eq.segment<3>(r0) = bc.mass * (bc.nu0.head<3>() - v) + bc.app_lin +
                          Vec3(0.0, 0.0, -bc.mass * ctx.beta * h);
    f_eq.segment<3>(r0 + 3) =
        Iw * (bc.nu0.tail<3>() - w) - h * w.cross(Iw * w) + bc.app_ang;

    if (jac != nullptr) {
      jac->block<3, 3>(r0, c0) = -bc.mass * Mat3::Identity();
      jac->block<3, 3>(r0 + 3, c0 + 3) =
          -Iw - h * (skew(w) * Iw - skew(Iw * w));
    }
  }

  for (size_t c = 0; c < ctx.contacts.size(); ++c) {
    const ContactCtx& cc = ctx.contacts[c];
    const StepLayout::Contact& lc = lay.contacts[c];
    const ImplicitPose& pf = poses[cc.f];
    const int cf = lay.nu_col[cc.f];
    const int rd = lay.dyn_row0[cc.f];

    const Vec3 a1 = z.segment<3>(lc.a1_col);
    const Vec3 a2 = z.segment<3>(lc.a2_col);
    const double p_t = z[lc.pt_col];
    const double p_o = z[lc.po_col];
    const double p_r = z[lc.pr_col];
    const double p_n = z[n_eq + lc.pn_idx];
    const double sigma = z[n_eq + lc.sigma_idx];

    const Vec3 v = z.segment<3>(cf);
    const Vec3 w = z.segment<3>(cf + 3);

    // F-side constraints at a1 and a2 (end-of-step pose), G-side at a2.
    std::vector<ConstraintChainEval> Fa1(lc.mf), Fa2(lc.mf);
    for (int i = 0; i < lc.mf; ++i) {
      Fa1[i] = eval_constraint_chain(cc.geom_f->constraints()[i], pf, a1);
      Fa2[i] = eval_constraint_chain(cc.geom_f->constraints()[i], pf, a2);
    }
    std::vector<ConstraintEval> Gb(lc.mg);
    Pose pg{cc.pose_g.position, cc.pose_g.rotation};
    for (int j = 0; j < lc.mg; ++j) {
      Gb[j] = eval_constraint(cc.geom_g->constraints()[j], pg, a2);
    }

    // Normal-cone combination on F with the k1 coefficient pinned to one.
    Vec3 eta = Vec3::Zero();
    Mat3 h_sum = Mat3::Zero();
    Mat3 deta_dw = Mat3::Zero();
    for (int i = 0; i < lc.mf; ++i) {
      const double coef = (i == lc.k1) ? 1.0 : z[n_eq + lc.lf0 + i];
      eta += coef * Fa1[i].grad;
      h_sum += coef * Fa1[i].hess;
      deta_dw += coef * Fa1[i].dgrad_dw;
    }
    const double l_k1 = z[n_eq + lc.lf0 + lc.k1];

    const int r1 = lc.eq_row0;      // kkt point equation
    const int r2 = lc.eq_row0 + 3;  // kkt gradient equation
    const int r3 = lc.eq_row0 + 6;  // friction equalities

    f_eq.segment<3>(r1) = a1 - a2 + l_k1 * eta;
    Vec3 g_combo = Vec3::Zero();
    for (int j = 0; j < lc.mg; ++j) g_combo += z[n_eq + lc.lg0 + j] * Gb[j].grad;
    f_eq.segment<3>(r2) = eta + g_combo;

    // Friction Fritz-John equalities with bases at a2^{u+1}.
    const Vec3& fn = lc.frame.n;
    const Vec3& ft = lc.frame.t;
    const Vec3& fo = lc.frame.o;
    const Vec3 lever = a2 - pf.position;
    const double v_t = ft.dot(v) + lever.dot(ft.cross(w));
    const double v_o = fo.dot(v) + lever.dot(fo.cross(w));
    const double v_r = fn.dot(w);
    const double mu = cc.fp.mu;
    const double cet = cc.fp.e_t * cc.fp.e_t * mu;
    const double ceo = cc.fp.e_o * cc.fp.e_o * mu;
    const double cer = cc.fp.e_r * cc.fp.e_r * mu;
    f_eq[r3 + 0] = cet * p_n * v_t + p_t * sigma;
    f_eq[r3 + 1] = ceo * p_n * v_o + p_o * sigma;
    f_eq[r3 + 2] = cer * p_n * v_r + p_r * sigma;

    // Contact wrench into the owning body's dynamics rows.
    const Vec3 lin_impulse = p_n * fn + p_t * ft + p_o * fo;
    f_eq.segment<3>(rd) += lin_impulse;
    f_eq.segment<3>(rd + 3) +=
        p_n * lever.cross(fn) + p_t * lever.cross(ft) + p_o * lever.cross(fo) + p_r * fn;

    // Complementarity partners.
    for (int i = 0; i < lc.mf; ++i) f_comp[lc.lf0 + i] = -Fa1[i].value;
    for (int j = 0; j < lc.mg; ++j) f_comp[lc.lg0 + j] = -Gb[j].value;
    int att = 0;
    for (int i = 1; i < lc.mf; ++i)
      if (Fa2[i].value > Fa2[att].value) att = i;
    f_comp[lc.pn_idx] = Fa2[att].value;
    const double mp = mu * p_n;
    f_comp[lc.sigma_idx] = mp * mp - (p_t / cc.fp.e_t) * (p_t / cc.fp.e_t) -
                           (p_o / cc.fp.e_o) * (p_o / cc.fp.e_o) -
                           (p_r / cc.fp.e_r) * (p_r / cc.fp.e_r);

    if (jac == nullptr) continue;
    MatX& J = *jac;

    // Dynamics rows: impulse columns and lever sensitivities.
    J.block<3, 1>(rd, n_eq + lc.pn_idx) += fn;
    J.block<3, 1>(rd, lc.pt_col) += ft;
    J.block<3, 1>(rd, lc.po_col) += fo;
    J.block<3, 1>(rd + 3, n_eq + lc.pn_idx) += lever.cross(fn);
    J.block<3, 1>(rd + 3, lc.pt_col) += lever.cross(ft);
    J.block<3, 1>(rd + 3, lc.po_col) += lever.cross(fo);
    J.block<3, 1>(rd + 3, lc.pr_col) += fn;
    const Mat3 wrench_sens = p_n * skew(fn) + p_t * skew(ft) + p_o * skew(fo);
    J.block<3, 3>(rd + 3, lc.a2_col) -= wrench_sens;
    J.block<3, 3>(rd + 3, cf) += h * wrench_sens;

    // KKT point equation.
    J.block<3, 3>(r1, lc.a1_col) = Mat3::Identity() + l_k1 * h_sum;
    J.block<3, 3>(r1, lc.a2_col) = -Mat3::Identity();
    J.block<3, 1>(r1, n_eq + lc.lf0 + lc.k1) = eta;
    for (int i = 0; i < lc.mf; ++i) {
      if (i == lc.k1) continue;
      J.block<3, 1>(r1, n_eq + lc.lf0 + i) = l_k1 * Fa1[i].grad;
    }
    J.block<3, 3>(r1, cf) = -h * l_k1 * h_sum;
    J.block<3, 3>(r1, cf + 3) = l_k1 * deta_dw;

    // KKT gradient equation.
    J.block<3, 3>(r2, lc.a1_col) = h_sum;
    Mat3 g_hess = Mat3::Zero();
    for (int j = 0; j < lc.mg; ++j) {
      g_hess += z[n_eq + lc.lg0 + j] * Gb[j].hess;
      J.block<3, 1>(r2, n_eq + lc.lg0 + j) = Gb[j].grad;
    }
    J.block<3, 3>(r2, lc.a2_col) = g_hess;
    for (int i = 0; i < lc.mf; ++i) {
      if (i == lc.k1) continue;
      J.block<3, 1>(r2, n_eq + lc.lf0 + i) = Fa1[i].grad;
    }
    J.block<3, 3>(r2, cf) = -h * h_sum;
    J.block<3, 3>(r2, cf + 3) = deta_dw;

    // Friction equalities.
    const Vec3 txw = ft.cross(w);
    const Vec3 oxw = fo.cross(w);
    J(r3 + 0, n_eq + lc.pn_idx) = cet * v_t;
    J(r3 + 0, lc.pt_col) = sigma;
    J(r3 + 0, n_eq + lc.sigma_idx) = p_t;
    J.block<1, 3>(r3 + 0, cf) = (cet * p_n) * (ft - h * txw).transpose();
    J.block<1, 3>(r3 + 0, cf + 3) = (cet * p_n) * lever.cross(ft).transpose();
    J.block<1, 3>(r3 + 0, lc.a2_col) = (cet * p_n) * txw.transpose();

    J(r3 + 1, n_eq + lc.pn_idx) = ceo * v_o;
    J(r3 + 1, lc.po_col) = sigma;
    J(r3 + 1, n_eq + lc.sigma_idx) = p_o;
    J.block<1, 3>(r3 + 1, cf) = (ceo * p_n) * (fo - h * oxw).transpose();
    J.block<1, 3>(r3 + 1, cf + 3) = (ceo * p_n) * lever.cross(fo).transpose();
    J.block<1, 3>(r3 + 1, lc.a2_col) = (ceo * p_n) * oxw.transpose();

    J(r3 + 2, n_eq + lc.pn_idx) = cer * v_r;
    J(r3 + 2, lc.pr_col) = sigma;
    J(r3 + 2, n_eq + lc.sigma_idx) = p_r;
    J.block<1, 3>(r3 + 2, cf + 3) = (cer * p_n) * fn.transpose();

    // Complementarity partner rows.
    for (int i = 0; i < lc.mf; ++i) {
      const int row = n_eq + lc.lf0 + i;
      J.block<1, 3>(row, lc.a1_col) = -Fa1[i].grad.transpose();
      J.block<1, 3>(row, cf) = h * Fa1[i].grad.transpose();
      J.block<1, 3>(row, cf + 3) = -Fa1[i].dvalue_dw.transpose();
    }
    for (int j = 0; j < lc.mg; ++j) {
      const int row = n_eq + lc.lg0 + j;
      J.block<1, 3>(row, lc.a2_col) = -Gb[j].grad.transpose();
    }
    {
      const int row = n_eq + lc.pn_idx;
      J.block<1, 3>(row, lc.a2_col) = Fa2[att].grad.transpose();
      J.block<1, 3>(row, cf) = -h * Fa2[att].grad.transpose();
      J.block<1, 3>(row, cf + 3) = Fa2[att].dvalue_dw.transpose();
    }
    {
      const int row = n_eq + lc.sigma_idx;
      J(row, n_eq + lc.pn_idx) = 2.0 * mu * mu * p_n;
      J(row, lc.pt_col) = -2.0 * p_t / (cc.fp.e_t * cc.fp.e_t);
      J(row, lc.po_col) = -2.0 * p_o / (cc.fp.e_o * cc.fp.e_o);
      J(row, lc.pr_col) = -2.0 * p_r / (cc.fp.e_r * cc.fp.e_r);
    }
  }
}

// k1 pivot: the most-active F constraint at the previous ECP. Near-ties
// (vertices, edges) are broken toward the face whose outward normal best
// supports the contact direction; a pivot inactive at the solution makes the
// gradient equation infeasible.
int select_k1(const ConvexGeometry& geom, const Pose& pose, const Vec3& a1,
              const Vec3& support_dir) {
  int best = 0;
  max_violation(geom, pose, a1, &best);
  const double fmax = eval_constraint(geom.constraints()[best], pose, a1).value;
  double best_align = -std::numeric_limits<double>::infinity();
  int k1 = best;
  for (int i = 0; i < geom.num_constraints(); ++i) {
    const ConstraintEval e = eval_constraint(geom.constraints()[i], pose, a1);
    if (e.value < fmax - 1e-9) continue;
    const double align = e.grad.normalized().dot(support_dir);
    if (align > best_align + 1e-12) {
      best_align = align;
      k1 = i;
    }
  }
  return k1;
}

// Exact multiplier remap when the k1 pivot changes between steps. Pivots
// near the placeholder scale are not inverted (the fresh seed is better
// than a blown-up remap).
VecX remap_pivot(const VecX& l_old, int k_old, int k_new) {
  if (k_old == k_new) return l_old;
  VecX l = VecX::Constant(l_old.size(), 1e-6);
  const double pivot = l_old[k_new];
  if (pivot > 1e-4) {
    for (int i = 0; i < l_old.size(); ++i) {
      if (i == k_new || i == k_old) continue;
      l[i] = l_old[i] / pivot;
    }
    l[k_old] = 1.0 / pivot;
    l[k_new] = l_old[k_old] * pivot;
  } else {
    l[k_new] = l_old[k_old];
  }
  return l;
}

}  // namespace

StepProblem assemble_step(const std::vector<RigidBody>& bodies,
                          const std::vector<State>& states,
                          const std::vector<ContactPair>& contacts,
                          const std::vector<AppliedImpulse>& impulses,
                          const StepParams& params,
                          const std::vector<ContactUnknowns>* warm) {
  if (states.size() != bodies.size() || impulses.size() != bodies.size()) {
    throw ConfigError("assemble_step: bodies/states/impulses size mismatch");
  }
  if (warm != nullptr && warm->size() != contacts.size()) {
    throw ConfigError("assemble_step: warm start size mismatch");
  }

  auto ctx = std::make_shared<StepCtx>();
  ctx->h = params.h;
  ctx->beta = params.beta;
  StepLayout& lay = ctx->layout;

  ctx->bodies.resize(bodies.size());
  lay.nu_col.assign(bodies.size(), -1);
  lay.dyn_row0.assign(bodies.size(), -1);
  int col = 0;
  int row = 0;
  for (size_t b = 0; b < bodies.size(); ++b) {
    BodyCtx& bc = ctx->bodies[b];
    bc.dynamic = !bodies[b].fixed;
    bc.mass = bodies[b].mass;
    bc.q0 = states[b].position;
    bc.Q0 = states[b].orientation.normalized();
    bc.nu0 = states[b].generalized_velocity();
    bc.app_lin = impulses[b].linear;
    bc.app_ang = impulses[b].angular;
    bc.geom = bodies[b].geometry.get();
    if (bc.dynamic) {
      if (bodies[b].mass <= 0.0) throw ConfigError("dynamic body needs mass > 0");
      bc.inertia_world = world_inertia(bodies[b], bc.Q0);
      lay.nu_col[b] = col;
      lay.dyn_row0[b] = row;
      col += 6;
      row += 6;
    }
  }

  ctx->contacts.resize(contacts.size());
  lay.contacts.resize(contacts.size());
  int comp = 0;
  for (size_t c = 0; c < contacts.size(); ++c) {
    const ContactPair& pair = contacts[c];
    if (pair.body_f < 0 || pair.body_f >= static_cast<int>(bodies.size()) ||
        pair.body_g < 0 || pair.body_g >= static_cast<int>(bodies.size())) {
      throw ConfigError("contact pair references unknown body");
    }
    if (bodies[pair.body_f].fixed) throw ConfigError("contact body_f must be dynamic");
    if (!bodies[pair.body_g].fixed) throw ConfigError("contact body_g must be fixed");
    if (!bodies[pair.body_f].geometry || !bodies[pair.body_g].geometry) {
      throw ConfigError("contact bodies need geometry");
    }
    ContactCtx& cc = ctx->contacts[c];
    cc.f = pair.body_f;
    cc.g = pair.body_g;
    cc.fp = pair.friction;
    cc.geom_f = bodies[pair.body_f].geometry.get();
    cc.geom_g = bodies[pair.body_g].geometry.get();
    cc.pose_g = pose_of(states[pair.body_g]);

    StepLayout::Contact& lc = lay.contacts[c];
    lc.mf = cc.geom_f->num_constraints();
    lc.mg = cc.geom_g->num_constraints();
    lc.a1_col = col;
    lc.a2_col = col + 3;
    lc.pt_col = col + 6;
    lc.po_col = col + 7;
    lc.pr_col = col + 8;
    col += 9;
    lc.eq_row0 = row;
    row += 9;
    lc.lf0 = comp;
    lc.lg0 = comp + lc.mf;
    lc.pn_idx = comp + lc.mf + lc.mg;
    lc.sigma_idx = lc.pn_idx + 1;
    comp += lc.mf + lc.mg + 2;
  }
  lay.n_eq = col;
  lay.n_comp = comp;

  // Warm start / cold start per contact.
  VecX z0 = VecX::Zero(lay.n_eq + lay.n_comp);
  for (size_t b = 0; b < bodies.size(); ++b) {
    if (lay.nu_col[b] >= 0) z0.segment<6>(lay.nu_col[b]) = ctx->bodies[b].nu0;
  }
  for (size_t c = 0; c < contacts.size(); ++c) {
    StepLayout::Contact& lc = lay.contacts[c];
    const ContactCtx& cc = ctx->contacts[c];
    const Pose pose_f0 = pose_of(states[cc.f]);

    ContactUnknowns u;
    bool cold = true;
    double cold_distance = 0.0;
    if (warm != nullptr) {
      u = (*warm)[c];
      cold = u.l_f.size() != lc.mf || u.l_g.size() != lc.mg;
    }
    if (cold) {
      // Cold start from the brute-force closest points.
      const ClosestPoints cp =
          closest_points_oracle(*cc.geom_f, pose_f0, *cc.geom_g, cc.pose_g, 12);
      u.a1 = cp.a1;
      u.a2 = cp.a2;
      cold_distance = cp.distance;
      u.l_f = VecX::Constant(lc.mf, 1e-6);
      u.l_g = VecX::Constant(lc.mg, 1e-6);
      u.p_n = u.p_t = u.p_o = u.p_r = 0.0;
    }

    // Step frame from the supporting face of the environment body.
    int jstar = 0;
    max_violation(*cc.geom_g, cc.pose_g, u.a2, &jstar);
    const Vec3 gn = eval_constraint(cc.geom_g->constraints()[jstar], cc.pose_g, u.a2).grad;
    lc.frame = contact_frame(gn, u.a2);

    const int k_new = select_k1(*cc.geom_f, pose_f0, u.a1, -lc.frame.n);
    if (cold) {
      u.k1 = k_new;
      // Sliding-branch sigma scale; zero at rest.
      const WrenchBases wb = wrench_bases(u.a2 - states[cc.f].position, lc.frame);
      const Vec3 slip = slip_velocities(ctx->bodies[cc.f].nu0, wb);
      u.sigma = Vec3(cc.fp.e_t * slip[0], cc.fp.e_o * slip[1], cc.fp.e_r * slip[2]).norm();
      const Vec3 grad_k1 =
          eval_constraint(cc.geom_f->constraints()[k_new], pose_f0, u.a1).grad;
      u.l_f[k_new] = cold_distance / std::max(grad_k1.norm(), 1e-9);
    } else {
      if (u.k1 >= 0) u.l_f = remap_pivot(u.l_f, u.k1, k_new);  // k1 < 0: fresh seed
      u.k1 = k_new;
    }
    lc.k1 = u.k1;

    // Impact step: the contact activates within this step while the carried
    // normal impulse is still zero. Seed the load-bearing branch (stopping
    // impulse plus weight) so Newton starts in the right basin.
    {
      const double mass = ctx->bodies[cc.f].mass;
      const double weight = mass * ctx->beta * ctx->h;
      if (u.p_n < 0.5 * weight) {
        const double gap = max_violation(*cc.geom_f, pose_f0, u.a2);
        const WrenchBases wb = wrench_bases(u.a2 - states[cc.f].position, lc.frame);
        const double v_n = wb.n.dot(ctx->bodies[cc.f].nu0);
        if (gap + ctx->h * (v_n - ctx->beta * ctx->h) <= 1e-6) {
          u.p_n = std::max(weight, mass * (ctx->beta * ctx->h - v_n));
          const Vec3 grad_k1 =
              eval_constraint(cc.geom_f->constraints()[u.k1], pose_f0, u.a1).grad;
          u.l_g[jstar] = std::max(u.l_g[jstar],
                                  grad_k1.norm() / std::max(gn.norm(), 1e-9));
        }
      }
    }

    contact_into_z(lay, static_cast<int>(c), u, z0);
  }

  StepProblem out;
  out.layout = lay;
  out.z0 = z0;
  out.problem.n_eq = lay.n_eq;
  out.problem.n_comp = lay.n_comp;
  out.problem.residual = [ctx](const VecX& z, VecX& fe, VecX& fc) {
    eval_step(*ctx, z, fe, fc, nullptr);
  };
  out.problem.jacobian = [ctx](const VecX& z, MatX& jac) {
    VecX fe, fc;
    eval_step(*ctx, z, fe, fc, &jac);
  };

  out.problem.names.resize(lay.n_eq + lay.n_comp);
  for (size_t b = 0; b < bodies.size(); ++b) {
    if (lay.dyn_row0[b] < 0) continue;
    static const char* dyn[6] = {"px", "py", "pz", "Lx", "Ly", "Lz"};
    for (int k = 0; k < 6; ++k)
      out.problem.names[lay.dyn_row0[b] + k] =
          bodies[b].name + ".momentum." + dyn[k];
  }
  for (size_t c = 0; c < contacts.size(); ++c) {
    const auto& lc = lay.contacts[c];
    const std::string base = "contact" + std::to_string(c);
    static const char* axes[3] = {"x", "y", "z"};
    for (int k = 0; k < 3; ++k) {
      out.problem.names[lc.eq_row0 + k] = base + ".kkt_point." + axes[k];
      out.problem.names[lc.eq_row0 + 3 + k] = base + ".kkt_grad." + axes[k];
    }
    out.problem.names[lc.eq_row0 + 6] = base + ".friction.t";
    out.problem.names[lc.eq_row0 + 7] = base + ".friction.o";
    out.problem.names[lc.eq_row0 + 8] = base + ".friction.r";
    for (int i = 0; i < lc.mf; ++i)
      out.problem.names[lay.n_eq + lc.lf0 + i] = base + ".l_f" + std::to_string(i);
    for (int j = 0; j < lc.mg; ++j)
      out.problem.names[lay.n_eq + lc.lg0 + j] = base + ".l_g" + std::to_string(j);
    out.problem.names[lay.n_eq + lc.pn_idx] = base + ".p_n";
    out.problem.names[lay.n_eq + lc.sigma_idx] = base + ".sigma";
  }
  return out;
}

ContactUnknowns contact_from_z(const StepLayout& layout, int contact_index,
                               const VecX& z) {
  const StepLayout::Contact& lc = layout.contacts[contact_index];
  ContactUnknowns u;
  u.a1 = z.segment<3>(lc.a1_col);
  u.a2 = z.segment<3>(lc.a2_col);
  u.p_t = z[lc.pt_col];
  u.p_o = z[lc.po_col];
  u.p_r = z[lc.pr_col];
  u.l_f = z.segment(layout.n_eq + lc.lf0, lc.mf);
  u.l_g = z.segment(layout.n_eq + lc.lg0, lc.mg);
  u.p_n = z[layout.n_eq + lc.pn_idx];
  u.sigma = z[layout.n_eq + lc.sigma_idx];
  u.k1 = lc.k1;
  return u;
}

void contact_into_z(const StepLayout& layout, int contact_index,
                    const ContactUnknowns& u, VecX& z) {
  const StepLayout::Contact& lc = layout.contacts[contact_index];
  z.segment<3>(lc.a1_col) = u.a1;
  z.segment<3>(lc.a2_col) = u.a2;
  z[lc.pt_col] = u.p_t;
  z[lc.po_col] = u.p_o;
  z[lc.pr_col] = u.p_r;
  z.segment(layout.n_eq + lc.lf0, lc.mf) = u.l_f;
  z.segment(layout.n_eq + lc.lg0, lc.mg) = u.l_g;
  z[layout.n_eq + lc.pn_idx] = u.p_n;
  z[layout.n_eq + lc.sigma_idx] = u.sigma;
}

namespace {

// Deepest boundary-probe penetration of the moving bodies into their
// contact partners at the candidate end-of-step poses. Converged iterates
// that still interpenetrate are spurious roots of the KKT system (the k1
// gradient is not forced active) and must be rejected. per_pair, when
// given, receives the body-frame probe of the deepest violation per contact.
double contact_penetration(const std::vector<RigidBody>& bodies,
                           const std::vector<ContactPair>& contacts,
                           const std::vector<State>& end_states,
                           std::vector<std::pair<double, Vec3>>* per_pair = nullptr) {
  double depth = 0.0;
  if (per_pair != nullptr) per_pair->assign(contacts.size(), {0.0, Vec3::Zero()});
  for (size_t c = 0; c < contacts.size(); ++c) {
    const ContactPair& pair = contacts[c];
    const Pose pf = pose_of(end_states[pair.body_f]);
    const Pose pg = pose_of(end_states[pair.body_g]);
    for (const Vec3& probe : bodies[pair.body_f].geometry->boundary_probes()) {
      const Vec3 x = pf.position + pf.rotation * probe;
      const double d = -max_violation(*bodies[pair.body_g].geometry, pg, x);
      depth = std::max(depth, d);
      if (per_pair != nullptr && d > (*per_pair)[c].first) {
        (*per_pair)[c] = {d, probe};
      }
    }
  }
  return depth;
}

// Impact site for one contact pair: among boundary probes that penetrate at
// the trial end pose, the one approaching fastest along the local contact
// normal (ties broken by depth). The old pivot point of a toppling body
// barely moves; the newly landing feature is the one that needs the impulse.
struct ImpactSite {
  bool found = false;
  Vec3 probe_body = Vec3::Zero();
  double depth = 0.0;
  double v_n = 0.0;
};

ImpactSite pick_impact_site(const std::vector<RigidBody>& bodies,
                            const ContactPair& pair,
                            const std::vector<State>& start_states,
                            const std::vector<State>& end_states) {
  ImpactSite best;
  const Pose pf_end = pose_of(end_states[pair.body_f]);
  const Pose pf0 = pose_of(start_states[pair.body_f]);
  const Pose pg0 = pose_of(start_states[pair.body_g]);
  const State& sf = start_states[pair.body_f];
  for (const Vec3& probe : bodies[pair.body_f].geometry->boundary_probes()) {
    const Vec3 x_end = pf_end.position + pf_end.rotation * probe;
    const double depth = -max_violation(*bodies[pair.body_g].geometry,
                                        pose_of(end_states[pair.body_g]), x_end);
    if (depth <= 1e-6) continue;
    const Vec3 x0 = pf0.position + pf0.rotation * probe;
    int jstar = 0;
    max_violation(*bodies[pair.body_g].geometry, pg0,
                  bodies[pair.body_g].geometry->project(pg0, x0), &jstar);
    const Vec3 n = eval_constraint(bodies[pair.body_g].geometry->constraints()[jstar],
                                   pg0, x0)
                       .grad.normalized();
    const double v_n =
        (sf.linear_velocity + sf.angular_velocity.cross(x0 - sf.position)).dot(n);
    const bool better = !best.found || v_n < best.v_n - 1e-12 ||
                        (std::abs(v_n - best.v_n) <= 1e-12 && depth > best.depth);
    if (better) {
      best.found = true;
      best.probe_body = probe;
      best.depth = depth;
      best.v_n = v_n;
    }
  }
  return best;
}

std::vector<State> integrate_states(const std::vector<RigidBody>& bodies,
                                    const std::vector<State>& states,
                                    const StepLayout& layout, const VecX& z, double h) {
  std::vector<State> out = states;
  for (size_t b = 0; b < bodies.size(); ++b) {
    const int c0 = layout.nu_col[b];
    if (c0 < 0) continue;
    const Vec3 v = z.segment<3>(c0);
    const Vec3 w = z.segment<3>(c0 + 3);
    State& s = out[b];
    s.position += h * v;
    s.orientation = integrate_quat(s.orientation, w, h);
    s.linear_velocity = v;
    s.angular_velocity = w;
  }
  return out;
}

}  // namespace

StepResult advance(const std::vector<RigidBody>& bodies,
                   const std::vector<State>& states,
                   const std::vector<ContactPair>& contacts,
                   const std::vector<AppliedImpulse>& impulses,
                   const StepParams& params, const SolveOptions& opts,
                   const std::vector<ContactUnknowns>* warm) {
  StepProblem prob = assemble_step(bodies, states, contacts, impulses, params, warm);
  auto [z, report] = solve(prob.problem, prob.z0, opts);

  if (report.converged && !contacts.empty()) {
    const std::vector<State> trial = integrate_states(bodies, states, prob.layout, z, params.h);
    if (contact_penetration(bodies, contacts, trial) > 1e-6) {
      // An undetected part of the body crossed its contact partner: the ECP
      // must jump there (an impact inside the step). Re-seed the violating
      // contacts at the deepest probe and re-solve.
      log_line(1, "converged iterate interpenetrates; re-seeding at the impact site");
      std::vector<ContactUnknowns> seeded(contacts.size());
      std::vector<ImpactSite> sites(contacts.size());
      for (size_t c = 0; c < contacts.size(); ++c) {
        seeded[c] = contact_from_z(prob.layout, static_cast<int>(c), z);
        sites[c] = pick_impact_site(bodies, contacts[c], states, trial);
        if (!sites[c].found) continue;
        const Pose pf0 = pose_of(states[contacts[c].body_f]);
        const Vec3 site = pf0.position + pf0.rotation * sites[c].probe_body;
        ContactUnknowns& u = seeded[c];
        u.k1 = -1;  // fresh pivot selection, no remap
        u.a1 = site;
        const Pose pg0 = pose_of(states[contacts[c].body_g]);
        u.a2 = bodies[contacts[c].body_g].geometry->project(pg0, site);
        u.p_n = u.p_t = u.p_o = u.p_r = 0.0;
        u.l_f = VecX::Constant(prob.layout.contacts[c].mf, 1e-6);
        u.l_g = VecX::Constant(prob.layout.contacts[c].mg, 1e-6);
        int jstar = 0;
        max_violation(*bodies[contacts[c].body_g].geometry, pg0, u.a2, &jstar);
        const Vec3 gn = eval_constraint(
            bodies[contacts[c].body_g].geometry->constraints()[jstar], pg0, u.a2).grad;
        const WrenchBases wb =
            wrench_bases(u.a2 - states[contacts[c].body_f].position, contact_frame(gn, u.a2));
        const Vec3 slip =
            slip_velocities(states[contacts[c].body_f].generalized_velocity(), wb);
        const FrictionParams& fp = contacts[c].friction;
        u.sigma = Vec3(fp.e_t * slip[0], fp.e_o * slip[1], fp.e_r * slip[2]).norm();
      }
      prob = assemble_step(bodies, states, contacts, impulses, params, &seeded);
      // Seed the post-impact velocity and normal impulse from the
      // single-contact inelastic impact law at the chosen site.
      for (size_t c = 0; c < contacts.size(); ++c) {
        if (!sites[c].found || sites[c].v_n >= 0.0) continue;
        const int f = contacts[c].body_f;
        const int nu0_col = prob.layout.nu_col[f];
        if (nu0_col < 0) continue;
        const WrenchBases wb =
            wrench_bases(seeded[c].a2 - states[f].position, prob.layout.contacts[c].frame);
        const Vec6 nu_pre = prob.z0.segment<6>(nu0_col);
        const double v_n = wb.n.dot(nu_pre);
        if (v_n >= 0.0) continue;
        const Mat6 M = generalized_mass(bodies[f], states[f].orientation);
        const Vec6 minv_wn = M.ldlt().solve(wb.n);
        const double lambda = -v_n / wb.n.dot(minv_wn);
        prob.z0.segment<6>(nu0_col) = nu_pre + minv_wn * lambda;
        prob.z0[prob.layout.n_eq + prob.layout.contacts[c].pn_idx] =
            lambda + bodies[f].mass * params.beta * params.h;
        if (log_level() >= 2) {
          std::ostringstream oss;
          oss << "impact seed c" << c << ": site a2=(" << seeded[c].a2.transpose()
              << ") probe=(" << sites[c].probe_body.transpose() << ") v_n=" << v_n
              << " lambda=" << lambda;
          log_line(2, oss.str());
        }
      }
      std::tie(z, report) = solve(prob.problem, prob.z0, opts);
      bool still_bad = !report.converged;
      if (report.converged) {
        const std::vector<State> again =
            integrate_states(bodies, states, prob.layout, z, params.h);
        still_bad = contact_penetration(bodies, contacts, again) > 1e-6;
      }
      if (log_level() >= 2) {
        std::ostringstream oss;
        oss << "impact re-seed: converged=" << report.converged << " residual "
            << report.residual << " still_bad=" << still_bad;
        for (size_t c = 0; c < contacts.size(); ++c) {
          const ContactUnknowns uc = contact_from_z(prob.layout, static_cast<int>(c), z);
          oss << "; c" << c << " a2=(" << uc.a2.transpose() << ") p_n=" << uc.p_n;
        }
        std::vector<std::pair<double, Vec3>> worst2;
        contact_penetration(bodies, contacts,
                            integrate_states(bodies, states, prob.layout, z, params.h),
                            &worst2);
        for (size_t c = 0; c < contacts.size(); ++c) {
          oss << "; depth" << c << "=" << worst2[c].first << " at ("
              << worst2[c].second.transpose() << ")";
        }
        log_line(2, oss.str());
      }
      if (still_bad) {
        log_line(1, "impact re-seed failed; retrying from a cold start");
        prob = assemble_step(bodies, states, contacts, impulses, params, nullptr);
        SolveOptions retry = opts;
        retry.seed += 0x9e37u;
        std::tie(z, report) = solve(prob.problem, prob.z0, retry);
        if (report.converged) {
          const std::vector<State> again =
              integrate_states(bodies, states, prob.layout, z, params.h);
          if (contact_penetration(bodies, contacts, again) > 1e-6) {
            report.converged = false;
            log_line(1, "cold retry still interpenetrates; refusing the step");
          }
        }
      }
    }
  }

  StepResult result;
  result.report = report;
  result.states = states;
  result.contacts.resize(contacts.size());
  result.frames.resize(contacts.size());
  result.gap.assign(contacts.size(), 0.0);
  result.facets.assign(contacts.size(), 0);
  for (size_t c = 0; c < contacts.size(); ++c) {
    result.contacts[c] = contact_from_z(prob.layout, static_cast<int>(c), z);
    result.frames[c] = prob.layout.contacts[c].frame;
  }
  if (!report.converged) {
    return result;  // step refused
  }
  result.stepped = true;
  result.states = integrate_states(bodies, states, prob.layout, z, params.h);
  for (size_t c = 0; c < contacts.size(); ++c) {
    const ContactUnknowns& u = result.contacts[c];
    const Pose pf = pose_of(result.states[contacts[c].body_f]);
    result.gap[c] = max_violation(*bodies[contacts[c].body_f].geometry, pf, u.a2);
    int n = (u.p_n > 1e-6) ? 1 : 0;
    for (int i = 0; i < u.l_f.size(); ++i) {
      if (i != u.k1 && u.l_f[i] > 1e-6) ++n;
    }
    result.facets[c] = n;
  }
  return result;
}

int active_facet_count(const StepResult& result, int contact_index) {
  return result.facets.at(contact_index);
}

EcpWrench ecp_wrench_from_state(const State& state_new, const RigidBody& body,
                                const Vec3& plane_normal, double plane_offset,
                                const AppliedImpulse& impulse,
                                const StepParams& params, const State& state_old) {
  const Vec3 n = plane_normal.normalized();

  if (body.geometry) {
    const Pose pose = pose_of(state_new);
    double support = std::numeric_limits<double>::infinity();
    for (const Vec3& p : body.geometry->boundary_probes()) {
      support = std::min(support, n.dot(pose.position + pose.rotation * p) - plane_offset);
    }
    if (support > 1e-6) throw NoContact("ecp_wrench_from_state: gap above tolerance");
  }

  const auto [t, o] = tangent_basis(n);
  const double m = body.mass;
  const double h = params.h;

  // Linear rows: C [p_n p_t p_o]' = m dv - applied - gravity.
  const Vec3 rhs = m * (state_new.linear_velocity - state_old.linear_velocity) -
                   impulse.linear - Vec3(0.0, 0.0, -m * params.beta * h);
  Mat3 C;
  C.col(0) = n;
  C.col(1) = t;
  C.col(2) = o;
  const Vec3 pnto = C.transpose() * rhs;

  // Angular rows: [A]x^T r + p_r n = B with the plane constraint n.r = d - n.qbar.
  const Vec3 A = rhs;
  if (std::abs(A.dot(n)) < 1e-12) {
    throw SingularD("ecp_wrench_from_state: A.n vanishes (p_n = 0)");
  }
  const Mat3 I_u = world_inertia(body, state_old.orientation);
  const Vec3& w_new = state_new.angular_velocity;
  const Vec3 B = I_u * (w_new - state_old.angular_velocity) +
                 h * w_new.cross(I_u * w_new) - impulse.angular;

  Mat4 D = Mat4::Zero();
  D.topLeftCorner<3, 3>() = skew(A).transpose();
  D.topRightCorner<3, 1>() = n;
  D.bottomLeftCorner<1, 3>() = n.transpose();
  Vec4 rhs4;
  rhs4 << B, plane_offset - n.dot(state_new.position);
  const Vec4 sol = D.fullPivLu().solve(rhs4);

  EcpWrench out;
  out.p_n = pnto[0];
  out.p_t = pnto[1];
  out.p_o = pnto[2];
  out.p_r = sol[3];
  out.a2 = state_new.position + sol.head<3>();
  return out;
}

Simulation::Simulation(std::vector<RigidBody> bodies, std::vector<State> states,
                       std::vector<ContactPair> contacts, StepParams params,
                       SolveOptions opts)
    : bodies_(std::move(bodies)),
      states_(std::move(states)),
      contacts_(std::move(contacts)),
      params_(params),
      opts_(opts) {}

StepResult Simulation::step(const std::vector<AppliedImpulse>& impulses) {
  StepResult result = advance(bodies_, states_, contacts_, impulses, params_, opts_,
                              has_warm_ ? &warm_ : nullptr);
  if (result.stepped) {
    states_ = result.states;
    warm_ = result.contacts;
    has_warm_ = true;
  }
  return result;
}

}  // namespace ecpsim
