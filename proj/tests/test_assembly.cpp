#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "sigmadiff/assembly.hpp"

using namespace sigmadiff;

namespace {

Field random_interior_field(const WeightedOperatorSet& ops, CounterRng& rng,
                            double lo = 0.0, double hi = 1.0) {
  Field f = Field::zero(ops.mesh);
  for (int idx : ops.interior) f.values[idx] = rng.uniform(lo, hi);
  return f;
}

}  // namespace

TEST_CASE("stiffness in validation mode equals the unweighted Laplacian") {
  const auto mesh = make_mesh(DomainSpec::disk(1.0), 2);
  const SpMat K = assemble_stiffness(*mesh, DiffusionCoefficient::power(0.0));

  // Oracle: closed-form P1 Laplacian stiffness, gradients constant and
  // sigma == 1 so each element entry is area * grad_i . grad_j.
  std::vector<Eigen::Triplet<double>> trip;
  for (int t = 0; t < mesh->num_triangles(); ++t) {
    const auto g = detail::element_geometry(*mesh, t);
    const auto& tri = mesh->triangles[t];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        trip.emplace_back(tri[i], tri[j], g.area * g.grad[i].dot(g.grad[j]));
  }
  SpMat K0(mesh->num_vertices(), mesh->num_vertices());
  K0.setFromTriplets(trip.begin(), trip.end());

  const SpMat diff = K - K0;
  double max_abs = 0.0;
  for (int k = 0; k < diff.outerSize(); ++k)
    for (SpMat::InnerIterator it(diff, k); it; ++it)
      max_abs = std::max(max_abs, std::abs(it.value()));
  CHECK(max_abs <= 1e-12);
}

TEST_CASE("stiffness row sums vanish (constants in the kernel)") {
  const auto mesh = make_mesh(DomainSpec::disk(1.0), 2);
  for (double alpha : {0.5, 1.0, 1.5}) {
    const SpMat K = assemble_stiffness(*mesh, DiffusionCoefficient::power(alpha));
    const Eigen::VectorXd rowsum = K * Eigen::VectorXd::Ones(K.cols());
    CHECK(rowsum.cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("stiffness and mass are symmetric") {
  const auto mesh = make_mesh(DomainSpec::annulus(1.0, 0.2), 2);
  const SpMat K = assemble_stiffness(*mesh, DiffusionCoefficient::power(0.7));
  const SpMat M = assemble_mass(*mesh);
  const double kscale = Eigen::MatrixXd(K).cwiseAbs().maxCoeff();
  CHECK(Eigen::MatrixXd(SpMat(K - SpMat(K.transpose()))).cwiseAbs().maxCoeff() <=
        1e-14 * kscale);
  CHECK(Eigen::MatrixXd(SpMat(M - SpMat(M.transpose()))).cwiseAbs().maxCoeff() <=
        1e-14);
}

TEST_CASE("adaptive weight integration matches the polar closed form") {
  // Triangle with a vertex at the origin, where |x|^alpha loses smoothness.
  const Eigen::Vector2d a(0.31, 0.05), b(0.12, 0.4);
  const auto rule = QuadratureRule::order5();
  for (double alpha : {0.3, 0.5, 1.0, 1.5, 1.9}) {
    const double exact = oracles::origin_triangle_power_integral(a, b, alpha);
    const double got = integrate_sigma(rule, DiffusionCoefficient::power(alpha),
                                       {0.0, 0.0}, a, b);
    CHECK(got == Catch::Approx(exact).epsilon(1e-9));
  }
  // power_sum with the singular vertex away from the origin
  const auto ps = DiffusionCoefficient::power_sum(0.5, 3.0);
  const double away = integrate_sigma(rule, ps, {1.0, 0.2}, {1.4, 0.3}, {1.1, 0.8});
  const double away_ref = integrate_adaptive(
      rule, {1.0, 0.2}, {1.4, 0.3}, {1.1, 0.8},
      [&](const Eigen::Vector2d& x) { return sigma_eval(ps, x); });
  CHECK(away == Catch::Approx(away_ref).epsilon(1e-12));
}

TEST_CASE("mass matrix closed form on one triangle") {
  Mesh m;
  m.spec = DomainSpec::disk(1.0);
  m.vertices = {{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}};
  m.triangles = {{0, 1, 2}};
  m.boundary_flags = {1, 1, 1};
  detail::finalize_mesh(m);
  const SpMat M = assemble_mass(m);
  const double A = 0.5;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(M.coeff(i, j) ==
            Catch::Approx(i == j ? A / 6.0 : A / 12.0).epsilon(1e-14));
}

TEST_CASE("mass matrix partitions the area and is positive definite") {
  const auto mesh = make_mesh(DomainSpec::disk(1.0), 2);
  const SpMat M = assemble_mass(*mesh);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(mesh->num_vertices());
  CHECK(ones.dot(M * ones) == Catch::Approx(mesh_area(*mesh)).epsilon(1e-12));

  // dense oracle at coarse scale
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(M)};
  CHECK(es.eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("residual of the zero field vanishes") {
  const auto ops =
      assemble_operators(make_mesh(DomainSpec::disk(1.0), 2),
                         DiffusionCoefficient::power(0.5));
  const Field zero = Field::zero(ops.mesh);
  const Eigen::VectorXd r = nonlinear_residual(zero, {2.0, 1.0, 2}, ops);
  CHECK(r.norm() == 0.0);
}

TEST_CASE("jacobian at zero is K - lambda M") {
  const auto ops = assemble_operators(make_mesh(DomainSpec::disk(1.0), 2),
                                      DiffusionCoefficient::power(0.5));
  const ProblemParams p{3.0, 1.0, 2};
  const SpMat J = jacobian(Field::zero(ops.mesh), p, ops);
  const SpMat expect = ops.K - p.lambda * ops.M;
  CHECK(Eigen::MatrixXd(SpMat(J - expect)).cwiseAbs().maxCoeff() <= 1e-13);
}

TEST_CASE("jacobian symmetry") {
  const auto ops = assemble_operators(make_mesh(DomainSpec::disk(1.0), 2),
                                      DiffusionCoefficient::power(0.5));
  CounterRng rng(7);
  const Field u = random_interior_field(ops, rng, 0.0, 2.0);
  const SpMat J = jacobian(u, {2.0, 1.0, 2}, ops);
  CHECK(Eigen::MatrixXd(SpMat(J - SpMat(J.transpose()))).cwiseAbs().maxCoeff() <=
        1e-13);
}

TEST_CASE("jacobian agrees with finite differences of the residual") {
  const auto ops = assemble_operators(make_mesh(DomainSpec::disk(1.0), 2),
                                      DiffusionCoefficient::power(0.5));
  const ProblemParams p{2.0, 1.0, 2};
  CounterRng rng(11);
  const Field u = random_interior_field(ops, rng, 0.1, 1.0);
  const SpMat Jr = ops.reduce(jacobian(u, p, ops));

  for (int probe = 0; probe < 3; ++probe) {
    Eigen::VectorXd dir(ops.interior_size());
    for (int i = 0; i < dir.size(); ++i) dir[i] = rng.uniform(-1.0, 1.0);
    dir.normalize();

    const double eps = 1e-6;
    Field up = u, um = u;
    up.values += eps * ops.extend_interior(dir);
    um.values -= eps * ops.extend_interior(dir);
    const Eigen::VectorXd fd =
        (nonlinear_residual(up, p, ops) - nonlinear_residual(um, p, ops)) /
        (2.0 * eps);
    const Eigen::VectorXd jd = Jr * dir;
    CHECK((fd - jd).norm() <= 1e-6 * std::max(1.0, jd.norm()));
  }
}

TEST_CASE("residual is the exact gradient of the energy") {
  const auto ops = assemble_operators(make_mesh(DomainSpec::disk(1.0), 2),
                                      DiffusionCoefficient::power(0.5));
  const ProblemParams p{2.5, 1.0, 2};
  CounterRng rng(13);
  const Field u = random_interior_field(ops, rng, 0.0, 0.5);
  const Eigen::VectorXd r = nonlinear_residual(u, p, ops);

  for (int probe = 0; probe < 10; ++probe) {
    Eigen::VectorXd dir(ops.interior_size());
    for (int i = 0; i < dir.size(); ++i) dir[i] = rng.uniform(-1.0, 1.0);
    dir.normalize();
    const Eigen::VectorXd dir_full = ops.extend_interior(dir);

    // eps balances O(eps^2) truncation against roundoff in J at ~1e-11 each
    const double eps = 1e-5;
    const double fd = oracles::directional_derivative(
        [&](double s) {
          Field v = u;
          v.values += s * dir_full;
          return lyapunov(v, p, ops);
        },
        eps);
    CHECK(fd == Catch::Approx(r.dot(dir)).margin(1e-10));
  }
}

TEST_CASE("energy of the zero field is zero") {
  const auto ops = assemble_operators(make_mesh(DomainSpec::disk(1.0), 1),
                                      DiffusionCoefficient::power(0.5));
  CHECK(lyapunov(Field::zero(ops.mesh), {2.0, 1.0, 2}, ops) == 0.0);
}

TEST_CASE("norms") {
  const auto ops = assemble_operators(make_mesh(DomainSpec::disk(1.0), 2),
                                      DiffusionCoefficient::power(0.5));
  const Field zero = Field::zero(ops.mesh);
  const Norms nz = norms(zero, ops, 3.0);
  CHECK(nz.l2 == 0.0);
  CHECK(nz.weighted_h1 == 0.0);
  CHECK(nz.lp == 0.0);

  CounterRng rng(17);
  const Field u = random_interior_field(ops, rng, 0.0, 1.0);
  const Norms n = norms(u, ops, 2.0);
  CHECK(n.lp == Catch::Approx(n.l2).epsilon(1e-10));

  CHECK_THROWS_AS(norms(u, ops, 0.5), ValidationError);
}

TEST_CASE("boundary-zero precondition is enforced") {
  const auto ops = assemble_operators(make_mesh(DomainSpec::disk(1.0), 1),
                                      DiffusionCoefficient::power(0.5));
  Field bad = Field::zero(ops.mesh);
  for (int i = 0; i < ops.mesh->num_vertices(); ++i)
    if (ops.mesh->boundary_flags[i]) bad.values[i] = 1.0;
  CHECK_THROWS_AS(nonlinear_residual(bad, {1.0, 1.0, 2}, ops), ValidationError);
}

TEST_CASE("gamma must be positive in the residual") {
  const auto ops = assemble_operators(make_mesh(DomainSpec::disk(1.0), 1),
                                      DiffusionCoefficient::power(0.5));
  CHECK_THROWS_AS(nonlinear_residual(Field::zero(ops.mesh), {1.0, -0.5, 2}, ops),
                  ValidationError);
}

TEST_CASE("odd symmetry of the residual") {
  const auto ops = assemble_operators(make_mesh(DomainSpec::disk(1.0), 2),
                                      DiffusionCoefficient::power(0.5));
  const ProblemParams p{2.0, 1.0, 2};
  CounterRng rng(23);
  const Field u = random_interior_field(ops, rng, -1.0, 1.0);
  Field neg = u;
  neg.values = -neg.values;
  const Eigen::VectorXd a = nonlinear_residual(u, p, ops);
  const Eigen::VectorXd b = nonlinear_residual(neg, p, ops);
  CHECK((a + b).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, a.cwiseAbs().maxCoeff()));
}
