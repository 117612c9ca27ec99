#pragma once

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "sigmadiff/assembly.hpp"
#include "sigmadiff/interpolate.hpp"
#include "sigmadiff/spectral.hpp"

namespace sigmadiff {

struct NewtonConfig {
  double tol = 1e-10;        // l2 norm of the interior residual
  int max_iterations = 50;
  int max_backtracks = 40;   // Armijo halving steps
  double trivial_l2 = 1e-12; // iterates below this L2 norm are the zero root

  void validate() const {
    if (!(tol > 0.0)) throw ValidationError("newton: tolerance must be positive");
    if (max_iterations < 1)
      throw ValidationError("newton: max_iterations must be >= 1");
  }
};

/// Converged stationary state, or the trivial marker (empty solution) when
/// Newton collapses onto the zero root.
struct StationaryResult {
  std::optional<Field> solution;
  int iterations = 0;
  std::vector<double> residual_history;

  bool trivial() const { return !solution.has_value(); }
};

namespace detail {

inline Eigen::VectorXd solve_symmetric(const SpMat& A, const Eigen::VectorXd& b,
                                       const char* context) {
  Eigen::SimplicialLDLT<SpMat> ldlt(A);
  if (ldlt.info() == Eigen::Success) {
    Eigen::VectorXd x = ldlt.solve(b);
    if (ldlt.info() == Eigen::Success && x.allFinite()) return x;
  }
  // Indefinite transients can defeat the unpivoted LDLT.
  Eigen::SparseLU<SpMat> lu(A);
  if (lu.info() != Eigen::Success)
    throw SolverError(std::string(context) + ": linear solve failed");
  Eigen::VectorXd x = lu.solve(b);
  if (!x.allFinite())
    throw SolverError(std::string(context) + ": linear solve returned non-finite values");
  return x;
}

}  // namespace detail

/// Damped Newton iteration on the interior residual of the stationary
/// problem at the given lambda. Backtracking halves the step until the
/// Armijo condition on 1/2 ||r||^2 holds.
inline StationaryResult solve_stationary(double lambda, ProblemParams params,
                                         const Field& init,
                                         const NewtonConfig& cfg,
                                         const WeightedOperatorSet& ops) {
  cfg.validate();
  params.lambda = lambda;
  params.validate();

  Field u = init;
  StationaryResult out;
  Eigen::VectorXd r = nonlinear_residual(u, params, ops);
  double rn = r.norm();
  out.residual_history.push_back(rn);

  for (int it = 0; it < cfg.max_iterations; ++it) {
    if (l2_norm(u.values, ops.M) < cfg.trivial_l2) {
      out.iterations = it;
      return out;  // trivial marker
    }
    if (rn <= cfg.tol) {
      out.iterations = it;
      out.solution = std::move(u);
      return out;
    }

    const SpMat J = ops.reduce(jacobian(u, params, ops));
    const Eigen::VectorXd step =
        detail::solve_symmetric(J, -r, "stationary newton");

    double s = 1.0;
    Field trial = u;
    Eigen::VectorXd r_trial;
    double rn_trial = 0.0;
    int bt = 0;
    for (; bt <= cfg.max_backtracks; ++bt) {
      trial.values = u.values + s * ops.extend_interior(step);
      r_trial = nonlinear_residual(trial, params, ops);
      rn_trial = r_trial.norm();
      if (rn_trial * rn_trial <= (1.0 - 1e-4 * s) * rn * rn) break;
      s *= 0.5;
    }
    if (bt > cfg.max_backtracks)
      throw SolverError("stationary newton: line search stalled at lambda = " +
                            fmt17(lambda),
                        out.residual_history);
    u = std::move(trial);
    r = std::move(r_trial);
    rn = rn_trial;
    out.residual_history.push_back(rn);
  }
  if (rn <= cfg.tol) {
    out.iterations = cfg.max_iterations;
    if (l2_norm(u.values, ops.M) >= cfg.trivial_l2) out.solution = std::move(u);
    return out;
  }
  throw SolverError("stationary newton: no convergence at lambda = " +
                        fmt17(lambda),
                    out.residual_history);
}

/// Scale t* minimizing the energy along the eigen direction t -> J(t u_1):
/// t* = [ (lambda - lambda_1) ||u_1||_{L2}^2 / ||u_1||_{2g+2}^{2g+2} ]^{1/2g}.
/// This is the natural seed amplitude for the first branch point.
inline double amplitude_seed(double lambda, const EigenPair& eig,
                             const ProblemParams& params,
                             const WeightedOperatorSet& ops) {
  if (!(lambda > eig.lambda))
    throw ValidationError("amplitude_seed requires lambda > lambda_1");
  const double l2sq = eig.u.values.dot(ops.M * eig.u.values);
  const double p = 2.0 * params.gamma + 2.0;
  const double lp = detail::power_integral(eig.u, p, ops.rule);
  return std::pow((lambda - eig.lambda) * l2sq / lp, 1.0 / (2.0 * params.gamma));
}

struct BranchPoint {
  double lambda = 0.0;
  Field u;
  double l2_norm = 0.0;
  double h1_sigma_norm = 0.0;
  double energy = 0.0;
  double mu_1 = 0.0;
  double min_value = 0.0;
  double residual = 0.0;
  int newton_iterations = 0;
};

struct Branch {
  double lambda_1 = 0.0;
  std::vector<BranchPoint> points;
  double fit_exponent = std::numeric_limits<double>::quiet_NaN();
  double fit_prefactor = std::numeric_limits<double>::quiet_NaN();
};

/// Relative defect of the stationarity energy identity
/// u'Ku = lambda u'Mu - int |u|^{2g+2}; vanishes for converged states.
inline double stationarity_identity_defect(const Field& u,
                                           const ProblemParams& params,
                                           const WeightedOperatorSet& ops) {
  const double a = u.values.dot(ops.K * u.values);
  const double b = params.lambda * u.values.dot(ops.M * u.values);
  const double c = detail::power_integral(u, 2.0 * params.gamma + 2.0, ops.rule);
  const double scale = std::abs(a) + std::abs(b) + std::abs(c);
  return scale == 0.0 ? 0.0 : std::abs(a - b + c) / scale;
}

/// Natural continuation of the nonnegative branch over a lambda grid in
/// (lambda_1 (1 + delta0), lambda_max]. The first point is seeded along the
/// eigen direction, later points by a secant predictor. Every accepted point
/// is validated for nonnegativity and carries its stability eigenvalue.
inline Branch continue_branch(double lambda_max, int steps, ProblemParams params,
                              const NewtonConfig& cfg,
                              const WeightedOperatorSet& ops,
                              const EigenPair& eig, double delta0 = 0.02) {
  if (steps < 2) throw ValidationError("continue_branch: need at least 2 steps");
  const double lambda_start = eig.lambda * (1.0 + delta0);
  if (!(lambda_max > lambda_start))
    throw ValidationError(
        "continue_branch: lambda_max must exceed lambda_1 (1 + delta0)");

  Branch branch;
  branch.lambda_1 = eig.lambda;

  for (int i = 0; i < steps; ++i) {
    const double lam =
        lambda_start + (lambda_max - lambda_start) * i / (steps - 1.0);
    Field init = Field::zero(ops.mesh);
    if (branch.points.size() >= 2) {
      const auto& a = branch.points[branch.points.size() - 2];
      const auto& b = branch.points.back();
      const double w = (lam - b.lambda) / (b.lambda - a.lambda);
      init.values = b.u.values + w * (b.u.values - a.u.values);
    } else if (!branch.points.empty()) {
      init = branch.points.back().u;
    } else {
      init.values = amplitude_seed(lam, eig, params, ops) * eig.u.values;
    }

    auto sol = solve_stationary(lam, params, init, cfg, ops);
    if (sol.trivial()) {
      // A secant predictor can undershoot right after onset; reseed once.
      init.values = amplitude_seed(lam, eig, params, ops) * eig.u.values;
      sol = solve_stationary(lam, params, init, cfg, ops);
      if (sol.trivial())
        throw SolverError("continue_branch: fell onto the trivial root at "
                          "lambda = " + fmt17(lam));
    }

    BranchPoint pt;
    pt.lambda = lam;
    pt.u = *sol.solution;
    pt.newton_iterations = sol.iterations;
    pt.residual = sol.residual_history.back();
    pt.min_value = pt.u.values.minCoeff();
    if (pt.min_value < -1e-8)
      throw SolverError("continue_branch: positivity violated at lambda = " +
                        fmt17(lam) + " (min " + fmt17(pt.min_value) + ")");
    params.lambda = lam;
    const Norms n = norms(pt.u, ops);
    pt.l2_norm = n.l2;
    pt.h1_sigma_norm = n.weighted_h1;
    pt.energy = lyapunov(pt.u, params, ops);
    pt.mu_1 = linearized_spectrum(pt.u, params, ops, 100.0 * cfg.tol).mu_1;
    branch.points.push_back(std::move(pt));
  }

  // Small-amplitude fit ||u||_{L2} ~ C (lambda - lambda_1)^q over the first
  // quartile of the grid.
  const std::size_t q = std::max<std::size_t>(2, branch.points.size() / 4);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < q; ++i) {
    const double x = std::log(branch.points[i].lambda - branch.lambda_1);
    const double y = std::log(branch.points[i].l2_norm);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  branch.fit_exponent = (q * sxy - sx * sy) / (q * sxx - sx * sx);
  branch.fit_prefactor = std::exp((sy - branch.fit_exponent * sx) / q);
  return branch;
}

enum class ProbeOutcome { nontrivial, trivial, rejected_subcritical, failed };

struct UniquenessReport {
  std::vector<ProbeOutcome> outcomes;
  int nontrivial_count = 0;
  double max_pairwise_distance = 0.0;  // weighted H1
  double max_relative_distance = 0.0;  // scaled by the largest solution norm
};

/// Runs Newton from several distinct positive initial fields and measures
/// the spread of the nontrivial limits. Under uniqueness all nontrivial
/// limits coincide to solver accuracy.
inline UniquenessReport uniqueness_probe(double lambda, ProblemParams params,
                                         const NewtonConfig& cfg,
                                         const WeightedOperatorSet& ops,
                                         const EigenPair& eig, int n_starts,
                                         std::uint64_t seed = 2024) {
  if (n_starts < 3)
    throw ValidationError("uniqueness_probe: need at least 3 starts");

  const double scale = lambda > eig.lambda
                           ? amplitude_seed(lambda, eig, params, ops)
                           : 0.5;
  std::vector<Field> starts;
  for (int s = 0; s < n_starts; ++s) {
    Field f = Field::zero(ops.mesh);
    switch (s % 4) {
      case 0:
        f.values = scale * eig.u.values;
        break;
      case 1:
        f.values = 2.0 * scale * eig.u.values;
        break;
      case 2: {  // random positive bumps
        CounterRng rng(seed, static_cast<std::uint64_t>(s));
        for (int idx : ops.interior)
          f.values[idx] = scale * (0.25 + rng.uniform());
        break;
      }
      case 3:
        for (int idx : ops.interior) f.values[idx] = scale;
        break;
    }
    starts.push_back(std::move(f));
  }

  UniquenessReport rep;
  rep.outcomes.assign(n_starts, ProbeOutcome::failed);
  std::vector<std::optional<Field>> limits(n_starts);
  parallel_for(n_starts, [&](std::size_t s) {
    try {
      auto sol = solve_stationary(lambda, params, starts[s], cfg, ops);
      if (sol.trivial()) {
        rep.outcomes[s] = ProbeOutcome::trivial;
      } else if (lambda <= eig.lambda) {
        // The variational identity forbids nontrivial nonnegative states at
        // or below lambda_1; never accept one.
        rep.outcomes[s] = ProbeOutcome::rejected_subcritical;
      } else {
        rep.outcomes[s] = ProbeOutcome::nontrivial;
        limits[s] = std::move(*sol.solution);
      }
    } catch (const SolverError&) {
      rep.outcomes[s] = ProbeOutcome::failed;
    }
  });

  double max_norm = 0.0;
  for (int a = 0; a < n_starts; ++a) {
    if (!limits[a]) continue;
    ++rep.nontrivial_count;
    max_norm = std::max(max_norm, norms(*limits[a], ops).weighted_h1);
    for (int b = 0; b < a; ++b) {
      if (!limits[b]) continue;
      Field diff = *limits[a];
      diff.values -= limits[b]->values;
      rep.max_pairwise_distance =
          std::max(rep.max_pairwise_distance, norms(diff, ops).weighted_h1);
    }
  }
  rep.max_relative_distance =
      max_norm > 0.0 ? rep.max_pairwise_distance / max_norm : 0.0;
  return rep;
}

struct ComparisonReport {
  double lambda = 0.0;
  double disk_lambda1 = 0.0;
  double annulus_lambda1 = 0.0;
  double max_difference = 0.0;  // max over shared vertices of u_r - u (signed)
  double max_violation = 0.0;   // positive part of the above
};

/// Solves the stationary problem on the disk and on the annulus with the
/// inner ball of radius r removed, at matched refinement level, and checks
/// the ordering u_r <= u on the shared region.
inline ComparisonReport truncation_comparison(double lambda,
                                              ProblemParams params,
                                              const DiffusionCoefficient& coeff,
                                              const DomainSpec& disk_spec, double r,
                                              int level, const NewtonConfig& cfg) {
  if (disk_spec.kind != DomainSpec::Kind::disk)
    throw ValidationError("truncation_comparison expects a disk base domain");

  auto ops_disk = assemble_operators(make_mesh(disk_spec, level), coeff);
  auto ops_ann = assemble_operators(
      make_mesh(DomainSpec::annulus(disk_spec.radius, r), level), coeff);

  const auto eig_disk = principal_eigenpair(ops_disk, cfg.tol);
  const auto eig_ann = principal_eigenpair(ops_ann, cfg.tol);
  if (!(lambda > eig_ann.lambda))
    throw ValidationError(
        "truncation_comparison: lambda <= lambda_{1,r}; the annulus problem "
        "only has the trivial solution");

  Field seed_disk = Field::zero(ops_disk.mesh);
  seed_disk.values =
      amplitude_seed(lambda, eig_disk, params, ops_disk) * eig_disk.u.values;
  const auto disk_sol = solve_stationary(lambda, params, seed_disk, cfg, ops_disk);

  Field seed_ann = Field::zero(ops_ann.mesh);
  seed_ann.values =
      amplitude_seed(lambda, eig_ann, params, ops_ann) * eig_ann.u.values;
  const auto ann_sol = solve_stationary(lambda, params, seed_ann, cfg, ops_ann);

  if (disk_sol.trivial() || ann_sol.trivial())
    throw SolverError("truncation_comparison: unexpected trivial limit");

  const Field disk_on_ann = transfer(*disk_sol.solution, ops_ann.mesh);
  ComparisonReport rep;
  rep.lambda = lambda;
  rep.disk_lambda1 = eig_disk.lambda;
  rep.annulus_lambda1 = eig_ann.lambda;
  rep.max_difference = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < ops_ann.mesh->num_vertices(); ++i)
    rep.max_difference = std::max(
        rep.max_difference, ann_sol.solution->values[i] - disk_on_ann.values[i]);
  rep.max_violation = std::max(0.0, rep.max_difference);
  return rep;
}

}  // namespace sigmadiff
