#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "sigmadiff/assembly.hpp"
#include "sigmadiff/stationary.hpp"

namespace sigmadiff {

struct EvolutionConfig {
  double dt0 = 1e-2;
  double t_max = 50.0;
  double dt_min = 1e-6;
  double dt_max = 1.0;
  double growth = 1.2;       // step growth after easy Newton convergence
  int easy_iterations = 4;
  double newton_tol = 1e-10;
  int newton_max_iterations = 50;
  double stationarity_tol = 1e-8;    // ||phi_{n+1} - phi_n||_{L2} / dt
  double classification_tol = 1e-6;  // weighted-H1 distance to an equilibrium
  int max_steps = 500000;

  void validate() const {
    if (!(dt_min > 0.0 && dt_max >= dt_min))
      throw ValidationError("evolution: dt bounds must be positive and ordered");
    if (!(dt0 >= dt_min && dt0 <= dt_max))
      throw ValidationError("evolution: dt0 must lie within [dt_min, dt_max]");
    if (!(t_max > 0.0)) throw ValidationError("evolution: t_max must be positive");
  }
};

struct StepResult {
  Field phi;
  int newton_iterations = 0;
  bool ok = false;
};

/// One implicit Euler step: solve
///   M (phi_next - phi)/dt + K phi_next - lambda M phi_next + N(phi_next) = 0
/// by Newton, reusing the stationary jacobian plus M/dt. A failed Newton is
/// reported to the caller (the step controller), not thrown.
inline StepResult step(const Field& phi_n, double dt, const ProblemParams& params,
                       const EvolutionConfig& cfg, const WeightedOperatorSet& ops) {
  detail::require_boundary_zeros(phi_n);
  const SpMat Mr = ops.reduce(ops.M);
  const Eigen::VectorXd phi_n_red = ops.restrict_interior(phi_n.values);

  StepResult out;
  out.phi = phi_n;
  Field& u = out.phi;

  auto residual = [&](const Field& v) -> Eigen::VectorXd {
    return Mr * (ops.restrict_interior(v.values) - phi_n_red) / dt +
           nonlinear_residual(v, params, ops);
  };

  Eigen::VectorXd r = residual(u);
  double rn = r.norm();
  for (int it = 0; it < cfg.newton_max_iterations; ++it) {
    if (rn <= cfg.newton_tol) {
      out.newton_iterations = it;
      out.ok = true;
      return out;
    }
    SpMat J = ops.reduce(jacobian(u, params, ops));
    J += SpMat((1.0 / dt) * Mr);
    Eigen::VectorXd delta;
    try {
      delta = detail::solve_symmetric(J, -r, "implicit euler");
    } catch (const SolverError&) {
      return out;  // controller shrinks dt
    }

    double s = 1.0;
    Field trial = u;
    Eigen::VectorXd r_trial;
    double rn_trial = 0.0;
    int bt = 0;
    for (; bt <= 40; ++bt) {
      trial.values = u.values + s * ops.extend_interior(delta);
      r_trial = residual(trial);
      rn_trial = r_trial.norm();
      if (rn_trial * rn_trial <= (1.0 - 1e-4 * s) * rn * rn) break;
      s *= 0.5;
    }
    if (bt > 40) return out;
    u = std::move(trial);
    r = std::move(r_trial);
    rn = rn_trial;
  }
  out.ok = rn <= cfg.newton_tol;
  return out;
}

enum class OmegaLimit { trivial, nonneg_equilibrium, undecided };

inline const char* to_string(OmegaLimit c) {
  switch (c) {
    case OmegaLimit::trivial: return "trivial";
    case OmegaLimit::nonneg_equilibrium: return "nonneg_equilibrium";
    default: return "undecided";
  }
}

/// Per-step diagnostics of one trajectory. Entry 0 describes the initial
/// state (dissipation 0 by convention).
struct TrajectoryRecord {
  std::vector<double> times;
  std::vector<double> energy;       // J(phi_n)
  std::vector<double> l2;           // ||phi_n||_{L2}
  std::vector<double> min_value;    // min vertex value
  std::vector<double> dissipation;  // -||(phi_n - phi_{n-1})/dt||^2_{L2}
  std::vector<double> dist_trivial; // ||phi_n||_{H1,sigma}
  std::vector<std::vector<double>> dist_equilibria;  // one series per target
  double initial_min = 0.0;
  OmegaLimit classification = OmegaLimit::undecided;
  bool reached_stationarity = false;
  bool dt_floor_failure = false;

  std::size_t steps() const { return times.empty() ? 0 : times.size() - 1; }
};

/// Integrates the gradient flow to stationarity or t_max with an
/// accept/shrink/grow step controller. A step is accepted only if it
/// decreases J by at least the squared increment over 2 dt (the minimizing
/// movement inequality), which makes the discrete Lyapunov monotonicity an
/// enforced invariant rather than a hope.
inline TrajectoryRecord evolve(const Field& phi_0, const ProblemParams& params,
                               const EvolutionConfig& cfg,
                               const WeightedOperatorSet& ops,
                               const std::vector<Field>& known_equilibria = {}) {
  cfg.validate();
  params.validate();

  TrajectoryRecord rec;
  rec.dist_equilibria.resize(known_equilibria.size());
  rec.initial_min = phi_0.values.minCoeff();

  Field phi = phi_0;
  double t = 0.0;
  double dt = cfg.dt0;

  auto record_state = [&](const Field& f, double dissipation) {
    rec.times.push_back(t);
    rec.energy.push_back(lyapunov(f, params, ops));
    rec.l2.push_back(l2_norm(f.values, ops.M));
    rec.min_value.push_back(f.values.minCoeff());
    rec.dissipation.push_back(dissipation);
    rec.dist_trivial.push_back(std::sqrt(
        std::max(0.0, f.values.dot(ops.K * f.values))));
    for (std::size_t e = 0; e < known_equilibria.size(); ++e) {
      Eigen::VectorXd d = f.values - known_equilibria[e].values;
      rec.dist_equilibria[e].push_back(std::sqrt(std::max(0.0, d.dot(ops.K * d))));
    }
  };
  record_state(phi, 0.0);

  auto classify = [&](const Field& f) {
    double best = rec.dist_trivial.back();
    OmegaLimit what = OmegaLimit::trivial;
    for (std::size_t e = 0; e < known_equilibria.size(); ++e)
      if (rec.dist_equilibria[e].back() < best) {
        best = rec.dist_equilibria[e].back();
        what = OmegaLimit::nonneg_equilibrium;
      }
    (void)f;
    if (best <= cfg.classification_tol) rec.classification = what;
  };

  int steps_taken = 0;
  while (t < cfg.t_max && steps_taken < cfg.max_steps) {
    const StepResult candidate = step(phi, dt, params, cfg, ops);
    bool accept = candidate.ok;
    double increment_l2 = 0.0;
    if (accept) {
      const Eigen::VectorXd d = candidate.phi.values - phi.values;
      increment_l2 = std::sqrt(std::max(0.0, d.dot(ops.M * d)));
      const double j_old = rec.energy.back();
      const double j_new = lyapunov(candidate.phi, params, ops);
      accept = j_new + increment_l2 * increment_l2 / (2.0 * dt) <= j_old + 1e-12;
    }
    if (!accept) {
      if (dt <= cfg.dt_min * (1.0 + 1e-12)) {
        rec.dt_floor_failure = true;
        return rec;
      }
      dt = std::max(cfg.dt_min, 0.5 * dt);
      continue;
    }

    t += dt;
    ++steps_taken;
    const double rate = increment_l2 / dt;
    phi = candidate.phi;
    record_state(phi, -rate * rate);

    if (rate <= cfg.stationarity_tol) {
      rec.reached_stationarity = true;
      classify(phi);
      return rec;
    }
    if (candidate.newton_iterations <= cfg.easy_iterations)
      dt = std::min(cfg.dt_max, dt * cfg.growth);
  }
  // t_max reached without stationarity: an honest undecided. Distance alone
  // is not enough near the slow manifold.
  return rec;
}

struct DissipationCheck {
  double max_defect = 0.0;  // |dJ + dt ||dphi/dt||^2| per step, maximized
  double mean_defect = 0.0;
};

/// Discrete residual of the dissipation identity dJ/dt = -||d phi/dt||^2.
/// First order in dt for the implicit Euler scheme: the defect halves when
/// dt halves.
inline DissipationCheck lyapunov_dissipation_check(const TrajectoryRecord& rec) {
  if (rec.steps() < 2)
    throw ValidationError("dissipation check needs at least 2 steps");
  DissipationCheck out;
  double acc = 0.0;
  for (std::size_t n = 1; n < rec.times.size(); ++n) {
    const double dt = rec.times[n] - rec.times[n - 1];
    const double defect =
        std::abs(rec.energy[n] - rec.energy[n - 1] - dt * rec.dissipation[n]);
    out.max_defect = std::max(out.max_defect, defect);
    acc += defect;
  }
  out.mean_defect = acc / static_cast<double>(rec.steps());
  return out;
}

enum class PositivityStatus { pass, fail, not_applicable };

struct PositivityReport {
  PositivityStatus status = PositivityStatus::not_applicable;
  double min_over_time = 0.0;
};

/// Minimum vertex value over the whole trajectory; applicable only to
/// nonnegative initial data (the invariant-cone statement).
inline PositivityReport positivity_check(const TrajectoryRecord& rec,
                                         double tol = 1e-8) {
  PositivityReport rep;
  if (rec.min_value.empty()) return rep;
  rep.min_over_time = *std::min_element(rec.min_value.begin(), rec.min_value.end());
  if (rec.initial_min < 0.0) {
    rep.status = PositivityStatus::not_applicable;
    return rep;
  }
  rep.status = rep.min_over_time >= -tol ? PositivityStatus::pass
                                         : PositivityStatus::fail;
  return rep;
}

/// Least-squares decay exponent of log ||phi||_{L2} against t, over the last
/// half of the samples whose norm has dropped below 1e-2 of the initial one
/// (the linear regime near the trivial state).
inline std::optional<double> decay_exponent(const TrajectoryRecord& rec) {
  std::vector<std::size_t> idx;
  for (std::size_t n = 0; n < rec.times.size(); ++n)
    if (rec.l2[n] > 0.0 && rec.l2[n] <= 1e-2 * rec.l2.front()) idx.push_back(n);
  if (idx.size() < 4) return std::nullopt;
  idx.erase(idx.begin(), idx.begin() + idx.size() / 2);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (auto n : idx) {
    const double x = rec.times[n], y = std::log(rec.l2[n]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double m = static_cast<double>(idx.size());
  return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

/// Absorbing-set constants for the superquadratic-growth model: the
/// interpolation exponent theta, the Young constant c1, the Gronwall source
/// R1 and the absorbing radius rho^2 = 1/(lambda R1). The embedding constant
/// C_beta is only estimable from below, so these are reported diagnostics,
/// not sharp bounds.
struct AbsorbingSetDiagnostics {
  double theta = 0.0;
  double c_1 = 0.0;
  double R_1 = 0.0;
  double rho_squared = 0.0;
};

inline AbsorbingSetDiagnostics absorbing_diagnostics(
    const ProblemParams& params, const DiffusionCoefficient& coeff,
    double C_beta) {
  if (coeff.model != DiffusionCoefficient::Model::power_sum || !(coeff.beta > 2.0))
    throw ValidationError(
        "absorbing_diagnostics requires the power_sum model with beta > 2");
  params.validate();
  if (!(params.lambda > 0.0))
    throw ValidationError("absorbing_diagnostics: lambda must be positive");

  const double N = static_cast<double>(params.dim);
  const double g = params.gamma, b = coeff.beta;
  AbsorbingSetDiagnostics d;
  d.theta = (g + 1.0) * (b - 2.0) / ((N + b - 2.0) * (g + 1.0) - N);
  d.c_1 = C_beta * C_beta * std::pow(2.0 * params.lambda, 1.0 / (1.0 - d.theta)) *
          (1.0 - d.theta) * std::pow(2.0 * d.theta, d.theta / (1.0 - d.theta));
  d.R_1 = std::pow(d.c_1, (g + 1.0) / g) * std::pow(2.0, 1.0 / g) * g /
          std::pow(g + 1.0, g + 1.0);
  d.rho_squared = 1.0 / (params.lambda * d.R_1);
  return d;
}

}  // namespace sigmadiff
