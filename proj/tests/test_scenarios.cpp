#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "refield/integrator.hpp"
#include "refield/scenarios.hpp"

using namespace refield;

TEST_CASE("build_k3p3 reproduces the worked example") {
  Scenario s = build_k3p3();
  SUBCASE("residual vanishes at Z*") {
    CHECK(residual_norm(s.z_star, s.cfg, s.params) < 1e-13);
  }
  SUBCASE("the kernel budget matches the closed-form coupling constant") {
    double expected = (std::sqrt(15.0) / 2.0) * (0.05 + 0.05);
    CHECK(family_budget(s.cfg.kernel) == doctest::Approx(expected).epsilon(1e-14));
    CHECK(s.cfg.coupling_budget() == doctest::Approx(expected).epsilon(1e-14));
  }
  SUBCASE("spectral-gap floors hold over the whole modulation range") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
      Eigen::VectorXd y = Eigen::VectorXd::Constant(1, unif(rng));
      Eigen::VectorXd q = scenario_precision_conductance(y, s.cfg, s.params);
      WeightedGraph g = s.cfg.g_symbolic;
      g.weights = q;
      CHECK(spectral_gap(symmetrize_conductance(g)) >= 3.0 * (1.0 - s.cfg.delta_Q) - 1e-9);
    }
  }
  SUBCASE("parameter validation") {
    CHECK_THROWS_AS(build_k3p3(0.05, 0.05, 0.05, 1.0, 0.05), std::invalid_argument);
    CHECK_THROWS_AS(build_k3p3(0.05, 0.05, 0.05, 0.05, 0.05, -1.0), std::invalid_argument);
  }
}

TEST_CASE("build_k3p3_valuation") {
  Scenario s = build_k3p3_valuation();
  const ValuativeParams& vp = s.params.valuative;
  const ExecutiveParams& ep = s.params.executive;
  SUBCASE("readouts are centered at the equilibrium") {
    Eigen::VectorXd h = Eigen::Map<const Eigen::VectorXd>(s.z_star.H_L.data(), 3);
    Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(s.z_star.X_R.data(), 3);
    Eigen::VectorXd r_y = vp.w_H * (h - vp.c_H) + vp.w_X * (x - vp.c_X);
    CHECK(r_y.norm() < 1e-15);
    Eigen::VectorXd r_p = ep.w_H * (h - ep.c_H) + ep.w_X * (x - ep.c_X);
    CHECK(r_p.norm() < 1e-15);
  }
  SUBCASE("equilibrium retained") {
    EquilibriumResult eq = find_equilibrium(s.cfg, s.params, 1e-10);
    CHECK(eq.converged);
    CHECK((eq.z.H_L - s.z_star.H_L).norm() < 1e-9);
    CHECK((eq.z.X_R - s.z_star.X_R).norm() < 1e-9);
    CHECK(eq.z.Y.norm() < 1e-9);
    CHECK(eq.z.P.norm() < 1e-9);
  }
  SUBCASE("viability inequalities are enforced") {
    CHECK_THROWS_AS(build_k3p3_valuation(0.05, 0.05, 0.05, 0.05, 0.05, 1, 1, 1, 1, 2.0, 0.5),
                    std::invalid_argument);
    CHECK_THROWS_AS(build_k3p3_valuation(0.05, 0.05, 0.05, 0.05, 0.05, 1, 1, 1, 1, 0.5, 2.0),
                    std::invalid_argument);
  }
}

TEST_CASE("scenario determinism") {
  Scenario a = build_k3p3();
  Scenario b = build_k3p3();
  CHECK((a.z_star.flatten() - b.z_star.flatten()).norm() == 0.0);
  CHECK((a.params.symbolic.offset - b.params.symbolic.offset).norm() == 0.0);

  HistoryBuffer ha = make_history(a.cfg, a.z_star);
  HistoryBuffer hb = make_history(b.cfg, b.z_star);
  IntegrateOptions opts;
  opts.record_every = 100;
  Trajectory ta = integrate(a.cfg, a.params, ha, 500, opts);
  Trajectory tb = integrate(b.cfg, b.params, hb, 500, opts);
  for (size_t k = 0; k < ta.states.size(); ++k)
    CHECK((ta.states[k].flatten() - tb.states[k].flatten()).norm() == 0.0);
}

TEST_CASE("shipped defaults witness the nonempty small-parameter region") {
  Scenario s = build_k3p3();
  double ck = s.cfg.coupling_budget();
  double msdc = std::sqrt(15.0) / 2.0 * 0.05 + 3.0 * 0.05;
  CHECK(ck * ck + msdc * msdc < s.cfg.mu_L * s.cfg.mu_R);
}

TEST_CASE("coarse_grain_report") {
  Scenario s = build_k3p3();
  SUBCASE("the worked example passes all nine classes") {
    CoarseGrainReport rep = coarse_grain_report(s.cfg, s.params);
    REQUIRE(rep.checks.size() == 9);
    for (const auto& c : rep.checks) {
      INFO(c.name, " measured=", c.measured, " threshold=", c.threshold);
      CHECK(c.pass);
    }
    CHECK(rep.all_pass);
  }
  SUBCASE("eps_Q = 0 fails the precision-floor class") {
    ArchitectureConfig cfg = s.cfg;
    cfg.bounds.eps_Q = 0.0;
    CoarseGrainReport rep = coarse_grain_report(cfg, s.params);
    bool q_fail = false;
    for (const auto& c : rep.checks)
      if (c.name == "A_QL") q_fail = !c.pass;
    CHECK(q_fail);
    CHECK_FALSE(rep.all_pass);
  }
  SUBCASE("eta lambda_reg = 1.5 fails the contractive-policy class") {
    FieldParams p = s.params;
    p.policy.eta = Eigen::VectorXd::Constant(1, 1.5 / (s.cfg.dt * p.policy.lambda_reg));
    CoarseGrainReport rep = coarse_grain_report(s.cfg, p);
    bool theta_fail = false;
    for (const auto& c : rep.checks)
      if (c.name == "A_theta") theta_fail = !c.pass && c.measured == doctest::Approx(1.5);
    CHECK(theta_fail);
  }
}

TEST_CASE("random scenarios are valid and integrate cleanly") {
  for (unsigned long seed : {10ul, 11ul, 12ul}) {
    Scenario s = random_scenario(seed);
    CHECK_NOTHROW(validate_config(s.cfg, s.params));
    std::mt19937_64 rng(seed);
    StateVector z0 = project_state(s.z_star, s.cfg);
    HistoryBuffer hist = make_history(s.cfg, z0);
    IntegrateOptions opts;
    opts.record_every = 200;
    opts.validate_every_step = false;
    Trajectory traj = integrate(s.cfg, s.params, hist, 1000, opts);
    for (const auto& z : traj.states) CHECK(validate_state(z, s.cfg).empty());
    (void)rng;
  }
}

TEST_CASE("scenario_by_name") {
  CHECK(scenario_by_name("k3p3").name == "k3p3");
  CHECK(scenario_by_name("k3p3-valuation").name == "k3p3-valuation");
  CHECK_THROWS_AS(scenario_by_name("nope"), std::invalid_argument);
}
