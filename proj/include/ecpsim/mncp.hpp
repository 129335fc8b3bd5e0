#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ecpsim/types.hpp"

namespace ecpsim {

/// Mixed nonlinear complementarity problem
///   F_eq(z) = 0,  0 <= z_v  perp  F_comp(z) >= 0,
/// with z = [z_u; z_v], |z_u| = n_eq equality unknowns and |z_v| = n_comp
/// complementarity unknowns. The residual fills F_eq (n_eq rows) and F_comp
/// (n_comp rows). jacobian, when provided, is the analytic Jacobian of the
/// raw stacked residual [F_eq; F_comp] with respect to z; otherwise forward
/// finite differences are used.
struct MixedNCP {
  int n_eq = 0;
  int n_comp = 0;
  std::function<void(const VecX& z, VecX& f_eq, VecX& f_comp)> residual;
  std::function<void(const VecX& z, MatX& jac)> jacobian;
  std::vector<std::string> names;  // per-unknown labels for diagnostics

  int size() const { return n_eq + n_comp; }
};

struct SolveOptions {
  double tolerance = 1e-8;
  int max_iterations = 200;
  double backtrack_factor = 0.5;
  int restarts = 5;
  double perturbation = 1e-3;
  unsigned seed = 0x5eedu;
};

struct SolveReport {
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;
  int restarts_used = 0;
  bool monotone_descent = true;  // within each line-search attempt
};

/// Fischer-Burmeister function: zero iff a >= 0, b >= 0, a b = 0.
inline double fb(double a, double b) {
  return std::sqrt(a * a + b * b) - a - b;
}

/// Semismooth residual [F_eq; fb(z_v, F_comp) elementwise].
VecX semismooth_residual(const MixedNCP& problem, const VecX& z);

/// Merit value ||semismooth_residual||_2.
double residual_norm(const MixedNCP& problem, const VecX& z);

/// Forward-difference Jacobian of the raw residual, h = 1e-7 (1 + |z_i|).
MatX fd_jacobian(const MixedNCP& problem, const VecX& z);

/// Damped semismooth Newton with Armijo backtracking and deterministic
/// perturbation restarts. Returns the best iterate with its report.
std::pair<VecX, SolveReport> solve(const MixedNCP& problem, const VecX& z0,
                                   const SolveOptions& opts);

}  // namespace ecpsim
