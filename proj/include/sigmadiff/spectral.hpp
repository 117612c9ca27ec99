#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <cmath>
#include <vector>

#include "sigmadiff/assembly.hpp"
#include "sigmadiff/mesh.hpp"

namespace sigmadiff {

/// Eigenpair of K u = lambda M u on the interior space, normalized to
/// ||u||_{L2} = 1 with nonnegative integral.
struct EigenPair {
  double lambda = 0.0;
  Field u;
  double residual = 0.0;
  int iterations = 0;
};

namespace detail {

struct SmallestPair {
  double value;
  Eigen::VectorXd vector;  // M-normalized
  double residual;
  int iterations;
};

/// Smallest eigenvalue of A x = mu M x by shift-inverted power iteration
/// with Rayleigh-quotient polishing. `shift` must lie strictly below the
/// smallest eigenvalue so that A - shift M is positive definite.
inline SmallestPair smallest_eigenpair(const SpMat& A, const SpMat& M,
                                       double shift, double tol,
                                       int max_iterations = 400) {
  const int n = static_cast<int>(A.rows());
  if (n == 0) throw ValidationError("eigen solve on empty interior system");

  Eigen::SimplicialLDLT<SpMat> factor;
  factor.compute(A - shift * M);
  if (factor.info() != Eigen::Success)
    throw SolverError("eigen solve: factorization of the shifted operator failed");

  Eigen::VectorXd x = Eigen::VectorXd::Ones(n);
  x /= l2_norm(x, M);
  std::vector<double> history;
  double rho = x.dot(A * x);
  double res = std::numeric_limits<double>::infinity();
  int it = 0;

  auto update_residual = [&] {
    const Eigen::VectorXd Mx = M * x;
    rho = x.dot(A * x);
    res = (A * x - rho * Mx).norm() / Mx.norm();
    history.push_back(res);
  };

  for (; it < max_iterations; ++it) {
    Eigen::VectorXd y = factor.solve(M * x);
    const double nrm = l2_norm(y, M);
    if (!(nrm > 0.0) || !std::isfinite(nrm))
      throw SolverError("eigen solve: iteration produced a degenerate vector",
                        history);
    x = y / nrm;
    update_residual();
    if (res <= tol) break;
    // Geometric phase done; switch to Rayleigh shifts for the last digits.
    if (res <= 1e-6 || it > 60) {
      for (int polish = 0; polish < 8 && res > tol; ++polish, ++it) {
        Eigen::SimplicialLDLT<SpMat> rq;
        rq.compute(A - (rho * (1.0 - 1e-12)) * M);
        if (rq.info() != Eigen::Success) break;
        Eigen::VectorXd z = rq.solve(M * x);
        const double zn = l2_norm(z, M);
        if (!(zn > 0.0) || !std::isfinite(zn)) break;
        x = z / zn;
        update_residual();
      }
      if (res <= tol) break;
    }
  }
  if (res > tol)
    throw SolverError("eigen solve stagnated at residual " + fmt17(res),
                      history);
  return {rho, x, res, it + 1};
}

inline void fix_sign(Eigen::VectorXd& full, const SpMat& M) {
  const double mass = Eigen::VectorXd::Ones(full.size()).dot(M * full);
  if (mass < 0.0) full = -full;
}

}  // namespace detail

inline EigenPair principal_eigenpair(const WeightedOperatorSet& ops,
                                     double tol = 1e-10) {
  const SpMat Kr = ops.reduce(ops.K);
  const SpMat Mr = ops.reduce(ops.M);
  auto pair = detail::smallest_eigenpair(Kr, Mr, 0.0, tol);
  Eigen::VectorXd full = ops.extend_interior(pair.vector);
  full /= l2_norm(full, ops.M);
  detail::fix_sign(full, ops.M);
  EigenPair out;
  out.lambda = pair.value;
  out.u = Field{full, ops.mesh};
  out.residual = pair.residual;
  out.iterations = pair.iterations;
  return out;
}

/// First k eigenpairs, ascending and M-orthonormal, by blocked inverse
/// iteration with Rayleigh-Ritz projection.
inline std::vector<EigenPair> eigen_modes(const WeightedOperatorSet& ops, int k,
                                          double tol = 1e-10) {
  const int n = ops.interior_size();
  if (k < 1 || k > n)
    throw ValidationError("eigen_modes: k must lie in [1, interior size]");
  const int p = std::min(k + 2, n);

  const SpMat Kr = ops.reduce(ops.K);
  const SpMat Mr = ops.reduce(ops.M);
  Eigen::SimplicialLDLT<SpMat> factor;
  factor.compute(Kr);
  if (factor.info() != Eigen::Success)
    throw SolverError("eigen_modes: stiffness factorization failed");

  Eigen::MatrixXd X(n, p);
  CounterRng rng(0x5eed, 1);
  X.col(0).setOnes();
  for (int j = 1; j < p; ++j)
    for (int i = 0; i < n; ++i) X(i, j) = rng.uniform(-1.0, 1.0);

  auto m_orthonormalize = [&](Eigen::MatrixXd& Y) {
    for (int j = 0; j < Y.cols(); ++j) {
      for (int i = 0; i < j; ++i)
        Y.col(j) -= Y.col(i).dot(Mr * Y.col(j)) * Y.col(i);
      const double nrm = l2_norm(Y.col(j), Mr);
      if (!(nrm > 1e-300))
        throw SolverError("eigen_modes: block became rank deficient");
      Y.col(j) /= nrm;
    }
  };

  Eigen::VectorXd values(p);
  std::vector<double> history;
  for (int it = 0; it < 500; ++it) {
    Eigen::MatrixXd Y(n, p);
    for (int j = 0; j < p; ++j) Y.col(j) = factor.solve(Mr * X.col(j));
    m_orthonormalize(Y);
    const Eigen::MatrixXd Ap = Y.transpose() * (Kr * Y);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
        0.5 * (Ap + Ap.transpose()));
    X = Y * es.eigenvectors();
    values = es.eigenvalues();

    double worst = 0.0;
    for (int j = 0; j < k; ++j) {
      const Eigen::VectorXd Mx = Mr * X.col(j);
      worst = std::max(worst,
                       (Kr * X.col(j) - values[j] * Mx).norm() / Mx.norm());
    }
    history.push_back(worst);
    if (worst <= tol) {
      std::vector<EigenPair> out;
      out.reserve(k);
      for (int j = 0; j < k; ++j) {
        Eigen::VectorXd full = ops.extend_interior(X.col(j));
        full /= l2_norm(full, ops.M);
        detail::fix_sign(full, ops.M);
        EigenPair e;
        e.lambda = values[j];
        e.u = Field{full, ops.mesh};
        e.residual = worst;
        e.iterations = it + 1;
        out.push_back(std::move(e));
      }
      return out;
    }
  }
  throw SolverError("eigen_modes stagnated", history);
}

/// Principal eigendata of one truncated domain.
struct EigenFamilyRecord {
  double radius = 0.0;
  double lambda_1 = 0.0;
  Field eigenfunction;     // on the truncated mesh
  double residual = 0.0;
  bool extended_by_zero = false;
};

struct TruncationStudy {
  std::vector<EigenFamilyRecord> records;
  bool monotone_decreasing = false;
  bool above_reference = false;       // inner family: all >= reference - 1e-8
  double reference_lambda1 = std::numeric_limits<double>::quiet_NaN();
  double extrapolated_limit = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> successive_differences;  // outer family
  bool stabilizing = false;
};

namespace detail {

inline std::vector<EigenFamilyRecord> solve_family(
    const std::vector<Mesh>& meshes, const std::vector<double>& radii,
    const DiffusionCoefficient& coeff, double tol) {
  std::vector<EigenFamilyRecord> records(meshes.size());
  std::vector<std::exception_ptr> errors(meshes.size());
  parallel_for(meshes.size(), [&](std::size_t i) {
    try {
      auto ops = assemble_operators(std::make_shared<const Mesh>(meshes[i]), coeff);
      auto pair = principal_eigenpair(ops, tol);
      records[i] = {radii[i], pair.lambda, pair.u, pair.residual, false};
    } catch (...) {
      errors[i] = std::current_exception();
    }
  });
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return records;
}

inline bool strictly_decreasing(const std::vector<EigenFamilyRecord>& r) {
  for (std::size_t i = 0; i + 1 < r.size(); ++i)
    if (!(r[i].lambda_1 > r[i + 1].lambda_1)) return false;
  return true;
}

}  // namespace detail

/// Principal eigenvalues on annuli Omega \ B_r as r decreases toward the
/// degenerate limit. The sequence decreases toward the full-domain value;
/// the study extrapolates the limit from the last three radii.
inline TruncationStudy inner_truncation_study(const DomainSpec& spec,
                                              const DiffusionCoefficient& coeff,
                                              const std::vector<double>& r_list,
                                              int level, double tol = 1e-10) {
  if (spec.kind != DomainSpec::Kind::disk)
    throw ValidationError("inner_truncation_study expects a disk base domain");
  const auto meshes = truncation_family(spec, r_list, level);

  TruncationStudy study;
  study.records = detail::solve_family(meshes, r_list, coeff, tol);

  auto full_ops = assemble_operators(make_mesh(spec, level), coeff);
  study.reference_lambda1 = principal_eigenpair(full_ops, tol).lambda;

  study.monotone_decreasing = detail::strictly_decreasing(study.records);
  study.above_reference = true;
  for (const auto& rec : study.records)
    if (rec.lambda_1 < study.reference_lambda1 - 1e-8)
      study.above_reference = false;

  const std::size_t n = study.records.size();
  if (n >= 3) {
    const double a0 = study.records[n - 3].lambda_1;
    const double a1 = study.records[n - 2].lambda_1;
    const double a2 = study.records[n - 1].lambda_1;
    const double denom = (a2 - a1) - (a1 - a0);
    study.extrapolated_limit =
        std::abs(denom) > 1e-14 * std::abs(a2) ? a2 - (a2 - a1) * (a2 - a1) / denom
                                               : a2;
  } else if (n > 0) {
    study.extrapolated_limit = study.records[n - 1].lambda_1;
  }
  return study;
}

/// Principal eigenvalues on B_R as R grows. Requires superquadratic growth
/// (power_sum); the sequence decreases and its decrements shrink as the
/// eigenfunction decouples from the artificial boundary.
inline TruncationStudy outer_truncation_study(const DiffusionCoefficient& coeff,
                                              const std::vector<double>& R_list,
                                              int level, double tol = 1e-10) {
  if (coeff.model != DiffusionCoefficient::Model::power_sum)
    throw ValidationError(
        "outer_truncation_study requires the power_sum coefficient (beta > 2); "
        "compactness fails otherwise");
  coeff.validate();
  const auto meshes =
      truncation_family(DomainSpec::truncated_plane(R_list.empty() ? 1.0 : R_list.back()),
                        R_list, level);

  TruncationStudy study;
  study.records = detail::solve_family(meshes, R_list, coeff, tol);
  study.monotone_decreasing = detail::strictly_decreasing(study.records);
  for (std::size_t i = 0; i + 1 < study.records.size(); ++i)
    study.successive_differences.push_back(study.records[i].lambda_1 -
                                           study.records[i + 1].lambda_1);
  study.stabilizing = true;
  for (std::size_t i = 0; i + 1 < study.successive_differences.size(); ++i)
    if (!(study.successive_differences[i] > study.successive_differences[i + 1]))
      study.stabilizing = false;
  return study;
}

/// Principal eigendata of the linearization at an equilibrium, with the
/// defect of the identity 2 gamma int |u|^{2g} u psi = mu_1 int u psi that
/// certifies mu_1 > 0 on the branch.
struct StabilityReport {
  double mu_1 = 0.0;
  Field psi_1;
  double identity_residual = 0.0;
  double eigen_residual = 0.0;
};

namespace detail {

inline double weighted_product_integral(const Field& u, const Field& psi,
                                        double twogamma,
                                        const QuadratureRule& rule) {
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
      const double pq = l[0] * psi.values[tri[0]] + l[1] * psi.values[tri[1]] +
                        l[2] * psi.values[tri[2]];
      local += rule.weights[q] * std::pow(std::abs(uq), twogamma) * uq * pq;
    }
    acc += jac * local;
  }
  return acc;
}

}  // namespace detail

inline StabilityReport linearized_spectrum(const Field& u_eq,
                                           const ProblemParams& params,
                                           const WeightedOperatorSet& ops,
                                           double stationarity_tol = 1e-8,
                                           double tol = 1e-10) {
  const double res_norm = nonlinear_residual(u_eq, params, ops).norm();
  if (res_norm > stationarity_tol)
    throw ValidationError(
        "linearized_spectrum: field is not stationary (residual " +
        fmt17(res_norm) + ")");

  const SpMat Jr = ops.reduce(jacobian(u_eq, params, ops));
  const SpMat Mr = ops.reduce(ops.M);
  // J + (lambda + 1) M = K + M + (2g+1) W is positive definite, so this
  // shift is always safely below mu_1.
  auto pair = detail::smallest_eigenpair(Jr, Mr, -(params.lambda + 1.0), tol);

  Eigen::VectorXd full = ops.extend_interior(pair.vector);
  full /= l2_norm(full, ops.M);
  detail::fix_sign(full, ops.M);

  StabilityReport rep;
  rep.mu_1 = pair.value;
  rep.psi_1 = Field{full, ops.mesh};
  rep.eigen_residual = pair.residual;

  const double scale = u_eq.values.cwiseAbs().maxCoeff();
  if (scale == 0.0) {
    rep.identity_residual = 0.0;
  } else {
    const double lhs = 2.0 * params.gamma *
                       detail::weighted_product_integral(
                           u_eq, rep.psi_1, 2.0 * params.gamma, ops.rule);
    const double rhs = rep.mu_1 * u_eq.values.dot(ops.M * rep.psi_1.values);
    rep.identity_residual = std::abs(lhs - rhs) / std::max(std::abs(rhs), 1e-300);
  }
  return rep;
}

/// Transfers a truncated-domain field to a larger mesh by zero extension
/// outside its support (nodal transfer happens in interpolate.hpp; vertices
/// of the target that lie outside the source mesh receive zero).
inline bool annulus_contains(const Mesh& annulus, const Eigen::Vector2d& x) {
  const double r = x.norm();
  return r >= annulus.spec.inner_radius && r <= annulus.spec.radius;
}

}  // namespace sigmadiff
