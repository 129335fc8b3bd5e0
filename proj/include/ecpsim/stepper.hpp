#pragma once

#include <optional>
#include <vector>

#include "ecpsim/body.hpp"
#include "ecpsim/contact.hpp"
#include "ecpsim/mncp.hpp"

namespace ecpsim {

struct StepParams {
  double h = 0.01;    // s
  double beta = 9.8;  // m/s^2, gravity along -Z
};

/// External impulse on one body over one step (excluding gravity).
struct AppliedImpulse {
  Vec3 linear = Vec3::Zero();   // N s
  Vec3 angular = Vec3::Zero();  // N m s
};

/// Index bookkeeping of the assembled per-step MNCP.
/// z_u = [nu per dynamic body; per contact: a1, a2, p_t, p_o, p_r],
/// z_v = [per contact: l_f, l_g, p_n, sigma].
struct StepLayout {
  struct Contact {
    int a1_col = 0, a2_col = 0, pt_col = 0, po_col = 0, pr_col = 0;
    int lf0 = 0, lg0 = 0, pn_idx = 0, sigma_idx = 0;  // comp indices (z col = n_eq + idx)
    int eq_row0 = 0;                                  // kkt1(3), kkt2(3), friction(3)
    int mf = 0, mg = 0;
    int k1 = 0;
    ContactFrame frame;
  };
  int n_eq = 0;
  int n_comp = 0;
  std::vector<int> nu_col;   // per body; -1 for fixed bodies
  std::vector<int> dyn_row0; // per body; -1 for fixed bodies
  std::vector<Contact> contacts;
};

struct StepProblem {
  MixedNCP problem;
  StepLayout layout;
  VecX z0;
};

struct StepResult {
  bool stepped = false;  // false: solver failed, states unchanged
  std::vector<State> states;
  std::vector<ContactUnknowns> contacts;
  std::vector<ContactFrame> frames;
  std::vector<double> gap;      // max_i f_i(a2) at end-of-step pose
  std::vector<int> facets;      // active facet count N per contact
  SolveReport report;
};

/// Builds the per-step MNCP: discrete Newton-Euler rows per dynamic body
/// plus modified-KKT and Fritz-John rows per contact, with the warm-started
/// initial iterate. Warm unknowns, when absent, are seeded from the
/// closest-point oracle. Throws ConfigError on inconsistent indices.
StepProblem assemble_step(const std::vector<RigidBody>& bodies,
                          const std::vector<State>& states,
                          const std::vector<ContactPair>& contacts,
                          const std::vector<AppliedImpulse>& impulses,
                          const StepParams& params,
                          const std::vector<ContactUnknowns>* warm = nullptr);

/// One backward-Euler step: solves the MNCP and advances configurations by
/// q^{u+1} = q^u + h G^u nu^{u+1} with quaternion renormalization. On solver
/// failure the step is refused (states returned unchanged, stepped=false).
StepResult advance(const std::vector<RigidBody>& bodies,
                   const std::vector<State>& states,
                   const std::vector<ContactPair>& contacts,
                   const std::vector<AppliedImpulse>& impulses,
                   const StepParams& params, const SolveOptions& opts,
                   const std::vector<ContactUnknowns>* warm = nullptr);

/// Unpacks one contact's unknowns from a solution vector.
ContactUnknowns contact_from_z(const StepLayout& layout, int contact_index,
                               const VecX& z);

/// Packs one contact's unknowns into z (inverse of contact_from_z).
void contact_into_z(const StepLayout& layout, int contact_index,
                    const ContactUnknowns& u, VecX& z);

/// Active facet count N: conic-combination coefficients of the normal cone
/// at a1 above 1e-6 (the k1 facet carries implicit coefficient 1 and is
/// counted whenever p_n > 1e-6).
int active_facet_count(const StepResult& result, int contact_index);

struct EcpWrench {
  Vec3 a2 = Vec3::Zero();
  double p_n = 0.0, p_t = 0.0, p_o = 0.0, p_r = 0.0;
};

/// Direct recovery of the ECP and contact wrench from a known end-of-step
/// state against a plane n.x = d: impulses from the orthogonal frame matrix
/// C = [n t o], then the 4x4 bordered system [[A]x^T n; n^T 0][r; p_r] =
/// [B; d - n.qbar]. Throws NoContact when the body clears the plane and
/// SingularD when |A.n| < 1e-12 (p_n = 0).
EcpWrench ecp_wrench_from_state(const State& state_new, const RigidBody& body,
                                const Vec3& plane_normal, double plane_offset,
                                const AppliedImpulse& impulse,
                                const StepParams& params, const State& state_old);

/// Warm-start bookkeeping for a stepped simulation: carries per-contact
/// unknowns between steps, re-selects the k1 pivot, and remaps multipliers
/// when the pivot changes.
class Simulation {
 public:
  Simulation(std::vector<RigidBody> bodies, std::vector<State> states,
             std::vector<ContactPair> contacts, StepParams params,
             SolveOptions opts);

  const std::vector<State>& states() const { return states_; }
  const std::vector<RigidBody>& bodies() const { return bodies_; }
  const std::vector<ContactPair>& contacts() const { return contacts_; }
  const StepParams& params() const { return params_; }

  /// Advances one step; on success internal state moves forward.
  StepResult step(const std::vector<AppliedImpulse>& impulses);

 private:
  std::vector<RigidBody> bodies_;
  std::vector<State> states_;
  std::vector<ContactPair> contacts_;
  StepParams params_;
  SolveOptions opts_;
  std::vector<ContactUnknowns> warm_;
  bool has_warm_ = false;
};

}  // namespace ecpsim
