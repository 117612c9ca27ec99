#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "sigmadiff/dynamics.hpp"

using namespace sigmadiff;

namespace {

struct Setup {
  WeightedOperatorSet ops;
  EigenPair eig;
};

Setup disk_setup(double alpha, int level) {
  auto ops = assemble_operators(make_mesh(DomainSpec::disk(1.0), level),
                                DiffusionCoefficient::power(alpha));
  auto eig = principal_eigenpair(ops, 1e-11);
  return {std::move(ops), std::move(eig)};
}

Field branch_state(const Setup& s, double lambda) {
  const ProblemParams p{0.0, 1.0, 2};
  Field init = Field::zero(s.ops.mesh);
  init.values = amplitude_seed(lambda, s.eig, p, s.ops) * s.eig.u.values;
  auto res = solve_stationary(lambda, p, init, {}, s.ops);
  REQUIRE_FALSE(res.trivial());
  return *res.solution;
}

}  // namespace

TEST_CASE("equilibria are fixed points of the step") {
  auto s = disk_setup(0.5, 2);

  SECTION("trivial state") {
    const ProblemParams p{2.0 * s.eig.lambda, 1.0, 2};
    const auto out = step(Field::zero(s.ops.mesh), 0.1, p, {}, s.ops);
    REQUIRE(out.ok);
    CHECK(out.phi.values.cwiseAbs().maxCoeff() == 0.0);
  }
  SECTION("branch state") {
    const double lam = 2.0 * s.eig.lambda;
    const Field u = branch_state(s, lam);
    const ProblemParams p{lam, 1.0, 2};
    const auto out = step(u, 0.25, p, {}, s.ops);
    REQUIRE(out.ok);
    CHECK(l2_norm(Eigen::VectorXd(out.phi.values - u.values), s.ops.M) <= 1e-9);
  }
}

TEST_CASE("accepted steps satisfy the minimizing movement inequality") {
  auto s = disk_setup(0.5, 2);
  const ProblemParams p{1.5 * s.eig.lambda, 1.0, 2};
  CounterRng rng(3);
  Field phi = Field::zero(s.ops.mesh);
  for (int idx : s.ops.interior) phi.values[idx] = rng.uniform(0.0, 1.0);

  double dt = 0.05;
  for (int n = 0; n < 5; ++n) {
    const double j_old = lyapunov(phi, p, s.ops);
    const auto out = step(phi, dt, p, {}, s.ops);
    REQUIRE(out.ok);
    const Eigen::VectorXd d = out.phi.values - phi.values;
    const double inc = d.dot(s.ops.M * d);
    CHECK(lyapunov(out.phi, p, s.ops) + inc / (2.0 * dt) <= j_old + 1e-12);
    phi = out.phi;
  }
}

TEST_CASE("subcritical evolution decays to the trivial state at the linear rate") {
  auto s = disk_setup(0.5, 3);
  const double lam = 0.5 * s.eig.lambda;
  const ProblemParams p{lam, 1.0, 2};

  EvolutionConfig cfg;
  cfg.dt0 = 0.01;
  cfg.dt_max = 0.02;  // keep the discrete rate within a few percent
  cfg.t_max = 12.0;
  Field phi0 = s.eig.u;

  const auto rec = evolve(phi0, p, cfg, s.ops);
  CHECK(rec.reached_stationarity);
  CHECK(rec.classification == OmegaLimit::trivial);

  const auto slope = decay_exponent(rec);
  REQUIRE(slope.has_value());
  CHECK(*slope == Catch::Approx(-(s.eig.lambda - lam)).epsilon(0.05));
}

TEST_CASE("supercritical evolution converges to the nonnegative equilibrium") {
  auto s = disk_setup(0.5, 2);
  const double lam = 2.0 * s.eig.lambda;
  const ProblemParams p{lam, 1.0, 2};
  const Field target = branch_state(s, lam);

  EvolutionConfig cfg;
  cfg.t_max = 100.0;

  SECTION("from below") {
    Field phi0 = Field::zero(s.ops.mesh);
    phi0.values = 0.1 * s.eig.u.values;
    const auto rec = evolve(phi0, p, cfg, s.ops, {target});
    CHECK(rec.reached_stationarity);
    CHECK(rec.classification == OmegaLimit::nonneg_equilibrium);
    CHECK(rec.dist_equilibria[0].back() <= 1e-6);
  }
  SECTION("from above, with monotone energy") {
    Field phi0 = Field::zero(s.ops.mesh);
    phi0.values = 10.0 * s.eig.u.values;
    const auto rec = evolve(phi0, p, cfg, s.ops, {target});
    CHECK(rec.classification == OmegaLimit::nonneg_equilibrium);
    for (std::size_t n = 1; n < rec.energy.size(); ++n)
      CHECK(rec.energy[n] <= rec.energy[n - 1] + 1e-12);
  }
}

TEST_CASE("dissipation identity defect is first order in dt") {
  auto s = disk_setup(0.5, 2);
  const ProblemParams p{1.5 * s.eig.lambda, 1.0, 2};
  Field phi0 = Field::zero(s.ops.mesh);
  phi0.values = 0.3 * s.eig.u.values;

  auto run = [&](double dt) {
    EvolutionConfig cfg;
    cfg.dt0 = cfg.dt_min = cfg.dt_max = dt;  // fixed step
    cfg.t_max = 0.5;
    return evolve(phi0, p, cfg, s.ops);
  };
  const auto coarse = lyapunov_dissipation_check(run(0.01));
  const auto fine = lyapunov_dissipation_check(run(0.005));
  const double ratio = fine.max_defect / coarse.max_defect;
  CHECK(ratio > 0.3);
  CHECK(ratio < 0.7);
}

TEST_CASE("stationary trajectories have zero dissipation defect") {
  auto s = disk_setup(0.5, 2);
  const double lam = 2.0 * s.eig.lambda;
  const Field u = branch_state(s, lam);
  EvolutionConfig cfg;
  cfg.dt0 = cfg.dt_min = cfg.dt_max = 0.05;
  cfg.t_max = 0.3;
  cfg.stationarity_tol = 0.0;  // force a few steps
  const auto rec = evolve(u, {lam, 1.0, 2}, cfg, s.ops);
  REQUIRE(rec.steps() >= 2);
  CHECK(lyapunov_dissipation_check(rec).max_defect <= 1e-12);
}

TEST_CASE("positivity is preserved and reported") {
  auto s = disk_setup(0.5, 2);
  EvolutionConfig cfg;
  cfg.t_max = 5.0;

  SECTION("nonnegative data stays nonnegative") {
    const ProblemParams p{2.0 * s.eig.lambda, 1.0, 2};
    const auto rec = evolve(s.eig.u, p, cfg, s.ops);
    const auto rep = positivity_check(rec);
    CHECK(rep.status == PositivityStatus::pass);
    CHECK(rep.min_over_time >= -1e-8);
  }
  SECTION("sign-changing data is not applicable") {
    const ProblemParams p{0.5 * s.eig.lambda, 1.0, 2};
    Field phi0 = s.eig.u;
    phi0.values[s.ops.interior[0]] = -0.5;
    const auto rec = evolve(phi0, p, cfg, s.ops);
    CHECK(positivity_check(rec).status == PositivityStatus::not_applicable);
  }
  SECTION("zero data stays exactly zero") {
    const ProblemParams p{2.0 * s.eig.lambda, 1.0, 2};
    const auto rec = evolve(Field::zero(s.ops.mesh), p, cfg, s.ops);
    CHECK(rec.min_value.back() == 0.0);
    CHECK(positivity_check(rec).min_over_time == 0.0);
  }
}

TEST_CASE("undecided classification when t_max is too short") {
  auto s = disk_setup(0.5, 2);
  const ProblemParams p{2.0 * s.eig.lambda, 1.0, 2};
  EvolutionConfig cfg;
  cfg.dt0 = cfg.dt_min = cfg.dt_max = 1e-3;
  cfg.t_max = 5e-3;
  Field phi0 = Field::zero(s.ops.mesh);
  phi0.values = 0.1 * s.eig.u.values;
  const auto rec = evolve(phi0, p, cfg, s.ops);
  CHECK_FALSE(rec.reached_stationarity);
  CHECK(rec.classification == OmegaLimit::undecided);
}

TEST_CASE("absorbing set diagnostics") {
  SECTION("interpolation exponent closed form") {
    const auto d = absorbing_diagnostics({1.0, 1.0, 2},
                                         DiffusionCoefficient::power_sum(0.5, 3.0),
                                         1.0);
    CHECK(d.theta == Catch::Approx(0.5).epsilon(1e-14));
    CHECK(d.rho_squared == Catch::Approx(1.0 / d.R_1).epsilon(1e-12));
  }
  SECTION("theta stays in (0,1) over a parameter grid") {
    for (double g : {0.2, 0.5, 1.0, 2.0})
      for (double b : {2.5, 3.0, 4.0, 6.0}) {
        const auto d = absorbing_diagnostics(
            {2.0, g, 2}, DiffusionCoefficient::power_sum(0.5, b), 0.7);
        CHECK(d.theta > 0.0);
        CHECK(d.theta < 1.0);
      }
  }
  SECTION("requires superquadratic growth") {
    CHECK_THROWS_AS(absorbing_diagnostics({1.0, 1.0, 2},
                                          DiffusionCoefficient::power(0.5), 1.0),
                    ValidationError);
  }
}

TEST_CASE("dissipation check needs at least two steps") {
  TrajectoryRecord rec;
  rec.times = {0.0, 0.1};
  rec.energy = {1.0, 0.9};
  rec.dissipation = {0.0, -1.0};
  CHECK_THROWS_AS(lyapunov_dissipation_check(rec), ValidationError);
}
