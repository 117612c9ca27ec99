#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include "sigmadiff/coefficients.hpp"
#include "sigmadiff/mesh.hpp"
#include "sigmadiff/quadrature.hpp"
#include "sigmadiff/util.hpp"

namespace sigmadiff {

using SpMat = Eigen::SparseMatrix<double>;

/// Nodal coefficients of a continuous piecewise-linear function on a mesh.
struct Field {
  Eigen::VectorXd values;
  MeshPtr mesh;

  static Field zero(MeshPtr m) {
    Field f;
    f.values = Eigen::VectorXd::Zero(m->num_vertices());
    f.mesh = std::move(m);
    return f;
  }
};

namespace detail {

/// Constant gradients of the three P1 basis functions on a triangle, plus
/// its area.
struct ElementGeometry {
  std::array<Eigen::Vector2d, 3> grad;
  double area;
};

inline ElementGeometry element_geometry(const Mesh& m, int t) {
  const auto& tri = m.triangles[t];
  const Eigen::Vector2d& a = m.vertices[tri[0]];
  const Eigen::Vector2d& b = m.vertices[tri[1]];
  const Eigen::Vector2d& c = m.vertices[tri[2]];
  ElementGeometry g;
  g.area = triangle_signed_area(a, b, c);
  const double inv = 1.0 / (2.0 * g.area);
  g.grad[0] = inv * Eigen::Vector2d(b.y() - c.y(), c.x() - b.x());
  g.grad[1] = inv * Eigen::Vector2d(c.y() - a.y(), a.x() - c.x());
  g.grad[2] = inv * Eigen::Vector2d(a.y() - b.y(), b.x() - a.x());
  return g;
}

inline void require_boundary_zeros(const Field& u) {
  const Mesh& m = *u.mesh;
  const double tol = 1e-10 * (1.0 + u.values.cwiseAbs().maxCoeff());
  for (int i = 0; i < m.num_vertices(); ++i)
    if (m.boundary_flags[i] && std::abs(u.values[i]) > tol)
      throw ValidationError(
          "field violates the homogeneous Dirichlet condition at vertex " +
          std::to_string(i));
}

}  // namespace detail

/// Weighted stiffness K_ij = int sigma grad phi_i . grad phi_j. With P1
/// elements the gradients are constant per triangle, so the weight enters
/// only through int_T sigma, computed adaptively near the degeneracy.
inline SpMat assemble_stiffness(const Mesh& m, const DiffusionCoefficient& coeff,
                                const QuadratureRule& rule = QuadratureRule::order5()) {
  coeff.validate();
  const int nt = m.num_triangles();
  std::vector<double> sigma_integral(nt);
  std::vector<detail::ElementGeometry> geom(nt);
  parallel_for(nt, [&](std::size_t t) {
    const auto& tri = m.triangles[t];
    geom[t] = detail::element_geometry(m, static_cast<int>(t));
    sigma_integral[t] = integrate_sigma(rule, coeff, m.vertices[tri[0]],
                                        m.vertices[tri[1]], m.vertices[tri[2]],
                                        std::to_string(t));
  });

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(nt) * 9);
  for (int t = 0; t < nt; ++t) {
    const auto& tri = m.triangles[t];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        trip.emplace_back(tri[i], tri[j],
                          sigma_integral[t] * geom[t].grad[i].dot(geom[t].grad[j]));
  }
  SpMat K(m.num_vertices(), m.num_vertices());
  K.setFromTriplets(trip.begin(), trip.end());
  return K;
}

/// Consistent P1 mass matrix (closed form: A/6 diagonal, A/12 off-diagonal
/// per element).
inline SpMat assemble_mass(const Mesh& m) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(m.num_triangles()) * 9);
  for (int t = 0; t < m.num_triangles(); ++t) {
    const auto& tri = m.triangles[t];
    const double A = triangle_area(m, t);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        trip.emplace_back(tri[i], tri[j], i == j ? A / 6.0 : A / 12.0);
  }
  SpMat M(m.num_vertices(), m.num_vertices());
  M.setFromTriplets(trip.begin(), trip.end());
  return M;
}

/// Stiffness/mass pair with the interior (non-Dirichlet) index set.
/// Operators are kept at full size; solvers reduce to the interior block.
struct WeightedOperatorSet {
  MeshPtr mesh;
  DiffusionCoefficient coeff;
  QuadratureRule rule;
  SpMat K, M;
  std::vector<int> interior;
  std::vector<int> full_to_interior;  // -1 on the boundary

  int interior_size() const { return static_cast<int>(interior.size()); }

  Eigen::VectorXd restrict_interior(const Eigen::VectorXd& full) const {
    Eigen::VectorXd v(interior.size());
    for (std::size_t i = 0; i < interior.size(); ++i) v[i] = full[interior[i]];
    return v;
  }

  Eigen::VectorXd extend_interior(const Eigen::VectorXd& reduced) const {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(mesh->num_vertices());
    for (std::size_t i = 0; i < interior.size(); ++i) v[interior[i]] = reduced[i];
    return v;
  }

  SpMat reduce(const SpMat& A) const {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(A.nonZeros());
    for (int k = 0; k < A.outerSize(); ++k)
      for (SpMat::InnerIterator it(A, k); it; ++it) {
        const int r = full_to_interior[it.row()];
        const int c = full_to_interior[it.col()];
        if (r >= 0 && c >= 0) trip.emplace_back(r, c, it.value());
      }
    SpMat R(interior_size(), interior_size());
    R.setFromTriplets(trip.begin(), trip.end());
    return R;
  }
};

inline WeightedOperatorSet assemble_operators(
    MeshPtr mesh, const DiffusionCoefficient& coeff,
    const QuadratureRule& rule = QuadratureRule::order5()) {
  WeightedOperatorSet ops;
  ops.mesh = std::move(mesh);
  ops.coeff = coeff;
  ops.rule = rule;
  ops.K = assemble_stiffness(*ops.mesh, coeff, rule);
  ops.M = assemble_mass(*ops.mesh);
  ops.full_to_interior.assign(ops.mesh->num_vertices(), -1);
  for (int i = 0; i < ops.mesh->num_vertices(); ++i)
    if (!ops.mesh->boundary_flags[i]) {
      ops.full_to_interior[i] = static_cast<int>(ops.interior.size());
      ops.interior.push_back(i);
    }
  return ops;
}

namespace detail {

/// Accumulates the nonlinear load vector int |u|^{2 gamma} u phi_i with the
/// fixed order-5 rule. Using one rule for every nonlinear integral keeps the
/// residual the exact gradient of the discrete energy.
inline Eigen::VectorXd nonlinear_load(const Field& u, double gamma,
                                      const QuadratureRule& rule) {
  const Mesh& m = *u.mesh;
  Eigen::VectorXd N = Eigen::VectorXd::Zero(m.num_vertices());
  for (int t = 0; t < m.num_triangles(); ++t) {
    const auto& tri = m.triangles[t];
    const double jac = 2.0 * triangle_area(m, t);
    for (int q = 0; q < 7; ++q) {
      const auto& l = rule.points[q];
      const double uq = l[0] * u.values[tri[0]] + l[1] * u.values[tri[1]] +
                        l[2] * u.values[tri[2]];
      const double s = std::pow(std::abs(uq), 2.0 * gamma) * uq;
      const double w = rule.weights[q] * jac * s;
      for (int i = 0; i < 3; ++i) N[tri[i]] += w * l[i];
    }
  }
  return N;
}

inline double power_integral(const Field& u, double p, const QuadratureRule& rule) {
  const Mesh& m = *u.mesh;
  double acc = 0.0;
  for (int t = 0; t < m.num_triangles(); ++t) {
    const auto& tri = m.triangles[t];
    const double jac = 2.0 * triangle_area(m, t);
    double local = 0.0;
    for (int q = 0; q < 7; ++q) {
      const auto& l = rule.points[q];
      const double uq = l[0] * u.values[tri[0]] + l[1] * u.values[tri[1]] +
                        l[2] * u.values[tri[2]];
      local += rule.weights[q] * std::pow(std::abs(uq), p);
    }
    acc += jac * local;
  }
  return acc;
}

}  // namespace detail

/// Interior residual of the stationary equation:
/// r_i = (K u)_i - lambda (M u)_i + int |u|^{2 gamma} u phi_i.
inline Eigen::VectorXd nonlinear_residual(const Field& u, const ProblemParams& p,
                                          const WeightedOperatorSet& ops) {
  p.validate();
  detail::require_boundary_zeros(u);
  Eigen::VectorXd full = ops.K * u.values - p.lambda * (ops.M * u.values) +
                         detail::nonlinear_load(u, p.gamma, ops.rule);
  return ops.restrict_interior(full);
}

/// Weighted potential matrix W(u)_ij = int |u|^{2 gamma} phi_i phi_j.
inline SpMat potential_matrix(const Field& u, double gamma,
                              const QuadratureRule& rule) {
  const Mesh& m = *u.mesh;
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(m.num_triangles()) * 9);
  for (int t = 0; t < m.num_triangles(); ++t) {
    const auto& tri = m.triangles[t];
    const double jac = 2.0 * triangle_area(m, t);
    double e[3][3] = {};
    for (int q = 0; q < 7; ++q) {
      const auto& l = rule.points[q];
      const double uq = l[0] * u.values[tri[0]] + l[1] * u.values[tri[1]] +
                        l[2] * u.values[tri[2]];
      const double w = rule.weights[q] * jac * std::pow(std::abs(uq), 2.0 * gamma);
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) e[i][j] += w * l[i] * l[j];
    }
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) trip.emplace_back(tri[i], tri[j], e[i][j]);
  }
  SpMat W(m.num_vertices(), m.num_vertices());
  W.setFromTriplets(trip.begin(), trip.end());
  return W;
}

/// Linearization K - lambda M + (2 gamma + 1) W(u) of the residual.
inline SpMat jacobian(const Field& u, const ProblemParams& p,
                      const WeightedOperatorSet& ops) {
  p.validate();
  detail::require_boundary_zeros(u);
  return ops.K - p.lambda * ops.M +
         (2.0 * p.gamma + 1.0) * potential_matrix(u, p.gamma, ops.rule);
}

/// Energy functional driving the evolution:
/// J(u) = 1/2 u'Ku - lambda/2 u'Mu + 1/(2 gamma + 2) int |u|^{2 gamma + 2}.
/// nonlinear_residual is its exact discrete gradient.
inline double lyapunov(const Field& u, const ProblemParams& p,
                       const WeightedOperatorSet& ops) {
  p.validate();
  detail::require_boundary_zeros(u);
  const double quad = 0.5 * u.values.dot(ops.K * u.values) -
                      0.5 * p.lambda * u.values.dot(ops.M * u.values);
  return quad + detail::power_integral(u, 2.0 * p.gamma + 2.0, ops.rule) /
                    (2.0 * p.gamma + 2.0);
}

struct Norms {
  double l2 = 0.0;
  double weighted_h1 = 0.0;
  double lp = 0.0;
};

inline Norms norms(const Field& u, const WeightedOperatorSet& ops,
                   std::optional<double> p = std::nullopt) {
  Norms n;
  n.l2 = std::sqrt(std::max(0.0, u.values.dot(ops.M * u.values)));
  n.weighted_h1 = std::sqrt(std::max(0.0, u.values.dot(ops.K * u.values)));
  if (p) {
    if (*p < 1.0) throw ValidationError("norms: lp requires p >= 1");
    n.lp = std::pow(detail::power_integral(u, *p, ops.rule), 1.0 / *p);
  }
  return n;
}

inline double l2_norm(const Eigen::VectorXd& v, const SpMat& M) {
  return std::sqrt(std::max(0.0, v.dot(M * v)));
}

}  // namespace sigmadiff
