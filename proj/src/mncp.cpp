#include "ecpsim/mncp.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "ecpsim/log.hpp"

namespace ecpsim {

namespace {

constexpr double kFbOriginSlope = 1.0 / M_SQRT2 - 1.0;

void raw_residual(const MixedNCP& p, const VecX& z, VecX& f_eq, VecX& f_comp) {
  f_eq.resize(p.n_eq);
  f_comp.resize(p.n_comp);
  p.residual(z, f_eq, f_comp);
}

VecX compose_fb(const MixedNCP& p, const VecX& z, const VecX& f_eq,
                const VecX& f_comp) {
  VecX psi(p.size());
  psi.head(p.n_eq) = f_eq;
  for (int k = 0; k < p.n_comp; ++k) {
    psi[p.n_eq + k] = fb(z[p.n_eq + k], f_comp[k]);
  }
  return psi;
}

/// Jacobian of the composed semismooth residual from the raw Jacobian.
MatX compose_fb_jacobian(const MixedNCP& p, const VecX& z, const VecX& f_comp,
                         const MatX& raw_jac) {
  MatX jac(p.size(), p.size());
  jac.topRows(p.n_eq) = raw_jac.topRows(p.n_eq);
  for (int k = 0; k < p.n_comp; ++k) {
    const double a = z[p.n_eq + k];
    const double b = f_comp[k];
    const double rho = std::hypot(a, b);
    double da, db;
    if (rho > 1e-14) {
      da = a / rho - 1.0;
      db = b / rho - 1.0;
    } else {
      da = db = kFbOriginSlope;
    }
    jac.row(p.n_eq + k) = db * raw_jac.row(p.n_eq + k);
    jac(p.n_eq + k, p.n_eq + k) += da;
  }
  return jac;
}

}  // namespace

VecX semismooth_residual(const MixedNCP& problem, const VecX& z) {
  VecX f_eq, f_comp;
  raw_residual(problem, z, f_eq, f_comp);
  return compose_fb(problem, z, f_eq, f_comp);
}

double residual_norm(const MixedNCP& problem, const VecX& z) {
  return semismooth_residual(problem, z).norm();
}

MatX fd_jacobian(const MixedNCP& problem, const VecX& z) {
  VecX f_eq, f_comp;
  raw_residual(problem, z, f_eq, f_comp);
  VecX base(problem.size());
  base << f_eq, f_comp;

  MatX jac(problem.size(), problem.size());
  VecX zp = z;
  for (int j = 0; j < problem.size(); ++j) {
    const double h = 1e-7 * (1.0 + std::abs(z[j]));
    zp[j] = z[j] + h;
    VecX fe, fc;
    raw_residual(problem, zp, fe, fc);
    VecX pert(problem.size());
    pert << fe, fc;
    jac.col(j) = (pert - base) / h;
    zp[j] = z[j];
  }
  return jac;
}

std::pair<VecX, SolveReport> solve(const MixedNCP& problem, const VecX& z0,
                                   const SolveOptions& opts) {
  SolveReport report;
  VecX z = z0;

  VecX f_eq, f_comp;
  raw_residual(problem, z, f_eq, f_comp);
  VecX psi = compose_fb(problem, z, f_eq, f_comp);
  double merit = psi.norm();

  VecX best_z = z;
  double best_merit = merit;

  const int n = problem.size();
  int iter = 0;
  int restart = 0;

  while (iter < opts.max_iterations) {
    if (merit <= opts.tolerance) break;
    ++iter;

    MatX raw_jac;
    if (problem.jacobian) {
      problem.jacobian(z, raw_jac);
    } else {
      raw_jac = fd_jacobian(problem, z);
    }
    const MatX jac = compose_fb_jacobian(problem, z, f_comp, raw_jac);

    // Minimum-norm least-squares Newton step. Flat contact patches make the
    // system singular along the ECP translation family; the rank-revealing
    // decomposition zeroes the step there instead of drifting along the
    // null space, without the conditioning loss of normal equations.
    Eigen::CompleteOrthogonalDecomposition<MatX> cod(jac);
    cod.setThreshold(1e-6);
    VecX step = cod.solve(-psi);
    if (!step.allFinite()) {
      MatX jtj = jac.transpose() * jac;
      jtj.diagonal().array() += 1e-10 * std::max(1.0, jtj.diagonal().maxCoeff());
      step = jtj.ldlt().solve(-jac.transpose() * psi);
      if (!step.allFinite()) step = -jac.transpose() * psi;
    }

    const VecX grad = jac.transpose() * psi;  // gradient of 1/2 ||psi||^2
    double slope = grad.dot(step);
    if (!step.allFinite() || slope > -1e-16 * std::max(1.0, grad.norm())) {
      step = -grad;
      slope = -grad.squaredNorm();
    }

    // Armijo backtracking on 1/2 ||psi||^2.
    const double theta0 = 0.5 * merit * merit;
    double alpha = 1.0;
    bool accepted = false;
    VecX z_try, fe_try, fc_try, psi_try;
    double merit_try = merit;
    while (alpha >= 1e-12) {
      z_try = z + alpha * step;
      raw_residual(problem, z_try, fe_try, fc_try);
      psi_try = compose_fb(problem, z_try, fe_try, fc_try);
      merit_try = psi_try.norm();
      const double theta = 0.5 * merit_try * merit_try;
      if (psi_try.allFinite() && theta <= theta0 + 1e-4 * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= opts.backtrack_factor;
    }

    if (accepted) {
      if (merit_try > merit + 1e-15) report.monotone_descent = false;
      z = z_try;
      f_comp = fc_try;
      psi = psi_try;
      merit = merit_try;
      if (log_level() >= 3) {
        std::ostringstream oss;
        oss << "iter " << iter << " merit " << merit << " alpha " << alpha;
        log_line(3, oss.str());
      }
      if (merit < best_merit) {
        best_merit = merit;
        best_z = z;
      }
      continue;
    }

    // Stalled: deterministic perturbation restart on the z_v block.
    if (restart >= opts.restarts) break;
    ++restart;
    std::mt19937 rng(opts.seed + 7919u * static_cast<unsigned>(restart));
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    z = best_z;
    for (int k = 0; k < problem.n_comp; ++k) {
      const int j = problem.n_eq + k;
      z[j] += opts.perturbation * (1.0 + std::abs(z[j])) * uni(rng);
    }
    raw_residual(problem, z, f_eq, f_comp);
    psi = compose_fb(problem, z, f_eq, f_comp);
    merit = psi.norm();
  }

  if (merit <= opts.tolerance) {
    report.converged = true;
    best_merit = merit;
    best_z = z;
  }
  report.iterations = iter;
  report.residual = best_merit;
  report.restarts_used = restart;

  if (!report.converged) {
    std::ostringstream oss;
    oss << "solver did not converge: residual " << best_merit << " after " << iter
        << " iterations, " << restart << " restarts";
    log_line(1, oss.str());
    const VecX psi_best = semismooth_residual(problem, best_z);
    for (int i = 0; i < problem.size(); ++i) {
      if (std::abs(psi_best[i]) < 10.0 * opts.tolerance) continue;
      std::ostringstream row;
      row << "  residual[" << i << "]"
          << (i < static_cast<int>(problem.names.size()) ? " (" + problem.names[i] + ")"
                                                         : std::string())
          << " = " << psi_best[i];
      log_line(1, row.str());
    }
  }
  return {best_z, report};
}

}  // namespace ecpsim
