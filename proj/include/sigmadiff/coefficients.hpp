#pragma once

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "sigmadiff/util.hpp"

namespace sigmadiff {

/// Diffusion coefficient sigma(x), vanishing exactly at the origin.
///
/// power:      sigma(x) = |x|^alpha, alpha in (0,2)
/// power_sum:  sigma(x) = |x|^alpha + |x|^beta, beta > 2 (superquadratic
///             growth at infinity, needed for compactness on unbounded
///             domains)
///
/// alpha == 0 is accepted as a validation mode (sigma == 1, the classical
/// Laplacian); it lies outside the degenerate theory and is flagged as such
/// by validate_assumptions.
struct DiffusionCoefficient {
  enum class Model { power, power_sum };

  Model model = Model::power;
  double alpha = 0.5;
  double beta = 0.0;  // power_sum only

  static DiffusionCoefficient power(double alpha) {
    return {Model::power, alpha, 0.0};
  }
  static DiffusionCoefficient power_sum(double alpha, double beta) {
    return {Model::power_sum, alpha, beta};
  }

  bool validation_mode() const { return alpha == 0.0 && model == Model::power; }

  void validate() const {
    if (!(alpha >= 0.0 && alpha < 2.0))
      throw ValidationError("coefficient: alpha = " + std::to_string(alpha) +
                            " outside [0,2)");
    if (model == Model::power_sum) {
      if (!(alpha > 0.0))
        throw ValidationError("coefficient: power_sum requires alpha > 0");
      if (!(beta > 2.0))
        throw ValidationError("coefficient: power_sum requires beta > 2, got " +
                              std::to_string(beta));
    }
  }
};

inline double sigma_eval(const DiffusionCoefficient& c,
                         const Eigen::Vector2d& x) {
  if (c.validation_mode()) return 1.0;
  const double r = x.norm();
  if (r == 0.0) return 0.0;
  double s = std::pow(r, c.alpha);
  if (c.model == DiffusionCoefficient::Model::power_sum)
    s += std::pow(r, c.beta);
  return s;
}

/// Problem data for -div(sigma grad u) = lambda u - |u|^{2 gamma} u.
/// `dim` enters only the exponent formulas; the discrete solvers are 2-D.
struct ProblemParams {
  double lambda = 0.0;
  double gamma = 1.0;
  int dim = 2;

  void validate() const {
    if (!(gamma > 0.0))
      throw ValidationError("params: gamma must be positive, got " +
                            std::to_string(gamma));
    if (dim < 2) throw ValidationError("params: dimension must be >= 2");
  }
};

/// Critical exponents attached to the weighted energy space.
struct ExponentTable {
  double two_star_alpha;  // critical Lebesgue exponent of the embedding
  double two_star_beta;   // lower critical exponent (unbounded case), NaN if n/a
  double gamma_star;      // nonlinearity bound for well-posed dynamics
  double gamma_one;       // bound for the energy functional to be defined
  double alpha_star;      // degeneracy bound equivalent to gamma <= gamma_star
};

inline ExponentTable exponents(const ProblemParams& p,
                               const DiffusionCoefficient& c) {
  p.validate();
  const double N = static_cast<double>(p.dim);
  const double a = c.alpha;
  ExponentTable t{};
  const double inf = std::numeric_limits<double>::infinity();
  if (a == 0.0) {
    t.two_star_alpha = (p.dim == 2) ? inf : 2.0 * N / (N - 2.0);
    t.gamma_star = inf;
    t.gamma_one = inf;
  } else {
    t.two_star_alpha = (p.dim == 2) ? 4.0 / a : 2.0 * N / (N - 2.0 + a);
    t.gamma_star = (2.0 - a) / (2.0 * (N - 2.0 + a));
    t.gamma_one = (2.0 - a) / (N - 2.0 + a);
  }
  t.two_star_beta = (c.model == DiffusionCoefficient::Model::power_sum)
                        ? 2.0 * N / (N - 2.0 + c.beta)
                        : std::numeric_limits<double>::quiet_NaN();
  t.alpha_star = 2.0 * (1.0 - p.gamma * (N - 2.0)) / (2.0 * p.gamma + 1.0);
  return t;
}

struct AssumptionCheck {
  std::string constraint;
  bool satisfied;
  std::string message;
};

struct AssumptionReport {
  std::vector<AssumptionCheck> checks;
  bool out_of_theory = false;  // alpha == 0 validation mode

  bool ok() const {
    for (const auto& c : checks)
      if (!c.satisfied) return false;
    return true;
  }
};

/// Checks the standing assumptions on (coefficient, nonlinearity, domain).
/// Reports every violation instead of throwing, so a run can surface all
/// problems at once.
template <class Domain>
AssumptionReport validate_assumptions(const DiffusionCoefficient& c,
                                      const ProblemParams& p,
                                      const Domain& domain) {
  AssumptionReport rep;
  const bool unbounded = domain.models_unbounded();

  if (c.validation_mode()) {
    rep.out_of_theory = true;
    rep.checks.push_back({"alpha_range", true,
                          "alpha = 0 validation mode (classical Laplacian, "
                          "outside the degenerate theory)"});
  } else {
    const bool ok = c.alpha > 0.0 && c.alpha < 2.0;
    rep.checks.push_back(
        {"alpha_range", ok,
         ok ? "alpha in (0,2)"
            : "alpha = " + std::to_string(c.alpha) + " not in (0,2)"});
  }

  if (c.model == DiffusionCoefficient::Model::power_sum) {
    const bool ok = c.beta > 2.0;
    rep.checks.push_back(
        {"beta_range", ok,
         ok ? "beta > 2"
            : "beta <= 2 breaks compact embedding (growth at infinity must "
              "be superquadratic)"});
  }

  if (unbounded) {
    const bool ok = c.model == DiffusionCoefficient::Model::power_sum;
    rep.checks.push_back(
        {"unbounded_coefficient", ok,
         ok ? "power_sum model on truncated plane"
            : "truncated_plane requires the power_sum model (coefficient must "
              "grow at infinity)"});
  }

  {
    const bool ok = p.gamma > 0.0;
    rep.checks.push_back({"gamma_positive", ok,
                          ok ? "gamma > 0" : "gamma must be positive"});
  }

  const ExponentTable t = exponents(p, c);
  {
    const bool ok = p.gamma <= t.gamma_star;
    rep.checks.push_back(
        {"gamma_leq_gamma_star", ok,
         ok ? "gamma <= gamma_star (well-posed gradient flow regime)"
            : "gamma = " + std::to_string(p.gamma) + " exceeds gamma_star = " +
                  std::to_string(t.gamma_star)});
  }
  {
    const bool ok = p.gamma < t.gamma_star;
    rep.checks.push_back(
        {"gamma_lt_gamma_star", ok,
         ok ? "gamma < gamma_star (global branch regime)"
            : "branch theory needs strict inequality gamma < gamma_star"});
  }
  return rep;
}

}  // namespace sigmadiff
