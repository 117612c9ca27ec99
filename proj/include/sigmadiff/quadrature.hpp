#pragma once

#include <Eigen/Core>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "sigmadiff/coefficients.hpp"
#include "sigmadiff/mesh.hpp"
#include "sigmadiff/util.hpp"

namespace sigmadiff {

/// Symmetric 7-point rule, exact to degree 5, in barycentric coordinates.
/// Weights sum to the reference-triangle area 1/2. The adaptive parameters
/// drive the subdivision used for the singular weight sigma.
struct QuadratureRule {
  std::array<std::array<double, 3>, 7> points;
  std::array<double, 7> weights;
  int adaptive_depth = 12;
  double adaptive_rtol = 1e-10;

  static QuadratureRule order5() {
    QuadratureRule q;
    const double s15 = std::sqrt(15.0);
    const double a = (6.0 - s15) / 21.0, wa = (155.0 - s15) / 1200.0;
    const double b = (6.0 + s15) / 21.0, wb = (155.0 + s15) / 1200.0;
    q.points = {{{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0},
                 {1.0 - 2.0 * a, a, a},
                 {a, 1.0 - 2.0 * a, a},
                 {a, a, 1.0 - 2.0 * a},
                 {1.0 - 2.0 * b, b, b},
                 {b, 1.0 - 2.0 * b, b},
                 {b, b, 1.0 - 2.0 * b}}};
    q.weights = {9.0 / 40.0, wa, wa, wa, wb, wb, wb};
    for (double& w : q.weights) w *= 0.5;
    return q;
  }
};

/// Integral of f over the physical triangle (p0,p1,p2).
template <class F>
double integrate_triangle(const QuadratureRule& q, const Eigen::Vector2d& p0,
                          const Eigen::Vector2d& p1, const Eigen::Vector2d& p2,
                          F&& f) {
  const double jac = 2.0 * std::abs(triangle_signed_area(p0, p1, p2));
  double acc = 0.0;
  for (int i = 0; i < 7; ++i) {
    const auto& l = q.points[i];
    const Eigen::Vector2d x = l[0] * p0 + l[1] * p1 + l[2] * p2;
    acc += q.weights[i] * f(x);
  }
  return jac * acc;
}

namespace detail {

template <class F>
double adaptive_triangle(const QuadratureRule& q, const Eigen::Vector2d& p0,
                         const Eigen::Vector2d& p1, const Eigen::Vector2d& p2,
                         F&& f, double coarse, int depth) {
  const Eigen::Vector2d m01 = 0.5 * (p0 + p1);
  const Eigen::Vector2d m12 = 0.5 * (p1 + p2);
  const Eigen::Vector2d m02 = 0.5 * (p0 + p2);
  const double c0 = integrate_triangle(q, p0, m01, m02, f);
  const double c1 = integrate_triangle(q, p1, m12, m01, f);
  const double c2 = integrate_triangle(q, p2, m02, m12, f);
  const double c3 = integrate_triangle(q, m01, m12, m02, f);
  const double fine = c0 + c1 + c2 + c3;
  if (std::abs(fine - coarse) <=
      q.adaptive_rtol * std::max(std::abs(fine), 1e-300))
    return fine;
  if (depth <= 0) return std::numeric_limits<double>::quiet_NaN();

  double acc = 0.0;
  acc += adaptive_triangle(q, p0, m01, m02, f, c0, depth - 1);
  acc += adaptive_triangle(q, p1, m12, m01, f, c1, depth - 1);
  acc += adaptive_triangle(q, p2, m02, m12, f, c2, depth - 1);
  acc += adaptive_triangle(q, m01, m12, m02, f, c3, depth - 1);
  return acc;
}

}  // namespace detail

/// Adaptive quadrisection until the order-5 estimate is relatively stable.
/// The integrand must be smooth inside the triangle (singularities at a
/// vertex defeat the relative test; see integrate_sigma for that case).
/// `label` names the triangle in the non-convergence error.
template <class F>
double integrate_adaptive(const QuadratureRule& q, const Eigen::Vector2d& p0,
                          const Eigen::Vector2d& p1, const Eigen::Vector2d& p2,
                          F&& f, const std::string& label = {}) {
  const double coarse = integrate_triangle(q, p0, p1, p2, f);
  const double v = detail::adaptive_triangle(q, p0, p1, p2, f, coarse,
                                             q.adaptive_depth);
  if (std::isnan(v))
    throw SolverError("adaptive quadrature did not converge at depth " +
                      std::to_string(q.adaptive_depth) +
                      (label.empty() ? std::string{} : " on triangle " + label));
  return v;
}

namespace detail {

/// Integral of |x|^p over a triangle whose first vertex is exactly the
/// origin. Quadrisection about the origin reproduces the triangle scaled by
/// 1/2, so the singular corner sums as a geometric series:
///   I(T) = I(non-corner children) / (1 - 2^{-(2+p)}).
inline double origin_power_integral(const QuadratureRule& q,
                                    const Eigen::Vector2d& a,
                                    const Eigen::Vector2d& b, double p,
                                    const std::string& label) {
  auto f = [p](const Eigen::Vector2d& x) { return std::pow(x.norm(), p); };
  const Eigen::Vector2d m01 = 0.5 * a, m02 = 0.5 * b, m12 = 0.5 * (a + b);
  const double nc = integrate_adaptive(q, m01, a, m12, f, label) +
                    integrate_adaptive(q, m02, m12, b, f, label) +
                    integrate_adaptive(q, m01, m12, m02, f, label);
  return nc / (1.0 - std::pow(2.0, -(2.0 + p)));
}

}  // namespace detail

/// Integral of the diffusion coefficient over a physical triangle. Triangles
/// with a vertex pinned at the origin (the zero of sigma) use the exact
/// homogeneous decomposition; all others use plain adaptive subdivision.
inline double integrate_sigma(const QuadratureRule& q,
                              const DiffusionCoefficient& coeff,
                              const Eigen::Vector2d& p0,
                              const Eigen::Vector2d& p1,
                              const Eigen::Vector2d& p2,
                              const std::string& label = {}) {
  if (coeff.validation_mode())
    return std::abs(triangle_signed_area(p0, p1, p2));

  std::array<Eigen::Vector2d, 3> v{p0, p1, p2};
  int origin = -1;
  for (int i = 0; i < 3; ++i)
    if (v[i].norm() == 0.0) origin = i;

  if (origin < 0)
    return integrate_adaptive(
        q, p0, p1, p2,
        [&coeff](const Eigen::Vector2d& x) { return sigma_eval(coeff, x); },
        label);

  const Eigen::Vector2d a = v[(origin + 1) % 3], b = v[(origin + 2) % 3];
  double total = detail::origin_power_integral(q, a, b, coeff.alpha, label);
  if (coeff.model == DiffusionCoefficient::Model::power_sum)
    total += detail::origin_power_integral(q, a, b, coeff.beta, label);
  return total;
}

}  // namespace sigmadiff
