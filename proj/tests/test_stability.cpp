#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "refield/scenarios.hpp"
#include "refield/stability.hpp"

using namespace refield;

TEST_CASE("small_gain_check") {
  SUBCASE("zero coupling passes with half margins") {
    auto [ok, al, ar] = small_gain_check(0.0, 2.0, 3.0);
    CHECK(ok);
    CHECK(al == doctest::Approx(1.0));
    CHECK(ar == doctest::Approx(1.5));
  }
  SUBCASE("the boundary case fails (strict inequality)") {
    auto [ok, al, ar] = small_gain_check(2.0, 2.0, 2.0);  // C_K^2 = mu_L mu_R exactly
    CHECK_FALSE(ok);
    CHECK(al == doctest::Approx(0.0));
    CHECK(ar == doctest::Approx(0.0));
  }
  SUBCASE("worked-example constants") {
    double ck = (std::sqrt(15.0) / 2.0) * 0.1;  // k = sigma = 0.05
    auto [ok, al, ar] = small_gain_check(ck, 1.0, 1.0);
    CHECK(ok);
    CHECK(ck * ck == doctest::Approx(15.0 / 4.0 * 0.01));
    CHECK(al == doctest::Approx(0.5 - ck * ck / 2.0));
    CHECK(al == ar);
  }
  SUBCASE("nonpositive dissipativity rejected") {
    CHECK_THROWS_AS(small_gain_check(0.1, 0.0, 1.0), std::invalid_argument);
  }
  SUBCASE("consistency: small gain iff both margins positive") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> unif(0.05, 3.0);
    for (int trial = 0; trial < 500; ++trial) {
      double ck = unif(rng), ml = unif(rng), mr = unif(rng);
      auto [ok, al, ar] = small_gain_check(ck, ml, mr);
      CHECK(ok == (al > 0.0 && ar > 0.0));
    }
  }
  SUBCASE("uniqueness quadratic form is positive under small gain") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> unif(-2.0, 2.0);
    double ck = 0.4, ml = 1.0, mr = 0.5;
    REQUIRE(std::get<0>(small_gain_check(ck, ml, mr)));
    for (int trial = 0; trial < 2000; ++trial) {
      double a = unif(rng), b = unif(rng);
      if (std::abs(a) + std::abs(b) < 1e-9) continue;
      CHECK(ml * a * a + mr * b * b - 2.0 * ck * std::abs(a) * std::abs(b) > 0.0);
    }
  }
}

TEST_CASE("radial_margin_check") {
  CHECK(radial_margin_check(0.1, 0.1, 1.0, 1.0, 0.0));      // zero coupling
  CHECK(radial_margin_check(2.0, 2.0, 1.0, 2.0, 1.0));      // exactly at the bound
  CHECK_FALSE(radial_margin_check(1.9, 2.0, 1.0, 2.0, 1.0));
}

TEST_CASE("lyapunov_value") {
  Scenario s = build_k3p3();
  double ck = s.cfg.coupling_budget();
  SUBCASE("zero at an equilibrium-pinned history") {
    HistoryBuffer hist = make_history(s.cfg, s.z_star);
    CHECK(lyapunov_value(hist, ck, 1.0, 1.0, s.z_star, s.cfg.tau_r_to_l, s.cfg.tau_l_to_r) ==
          doctest::Approx(0.0));
  }
  SUBCASE("zero coupling leaves only the three half squared norms") {
    StateVector z = s.z_star;
    z.H_L(1, 0) += 0.3;
    z.P[0] = 0.2;
    HistoryBuffer hist = make_history(s.cfg, z);
    double v = lyapunov_value(hist, 0.0, 1.0, 1.0, s.z_star, s.cfg.tau_r_to_l, s.cfg.tau_l_to_r);
    CHECK(v == doctest::Approx(0.5 * 0.09 + 0.5 * 0.04).epsilon(1e-12));
  }
  SUBCASE("quadratic homogeneity: doubling the deviation quadruples V") {
    StateVector z1 = s.z_star;
    z1.H_L(2, 0) += 0.1;
    z1.X_R(1, 0) += 0.2;
    StateVector z2 = s.z_star;
    z2.H_L(2, 0) += 0.2;
    z2.X_R(1, 0) += 0.4;
    HistoryBuffer h1 = make_history(s.cfg, z1);
    HistoryBuffer h2 = make_history(s.cfg, z2);
    double v1 = lyapunov_value(h1, ck, 1.0, 1.0, s.z_star, s.cfg.tau_r_to_l, s.cfg.tau_l_to_r);
    double v2 = lyapunov_value(h2, ck, 1.0, 1.0, s.z_star, s.cfg.tau_r_to_l, s.cfg.tau_l_to_r);
    CHECK(v2 == doctest::Approx(4.0 * v1).epsilon(1e-12));
  }
  SUBCASE("insufficient history is rejected") {
    HistoryBuffer shallow(2, s.cfg.dt);
    shallow.init_constant(s.z_star);
    CHECK_THROWS_AS(lyapunov_value(shallow, ck, 1.0, 1.0, s.z_star, 0.5, 0.5),
                    std::invalid_argument);
  }
}

TEST_CASE("lyapunov monotonicity in the closed principal regime") {
  Scenario s = frozen_principal_regime(build_k3p3());
  double ck_frozen = s.cfg.k_gain * std::sqrt(15.0) / 2.0;  // gates frozen at k
  std::mt19937_64 rng(7);
  StateVector z0 = s.z_star;
  z0.H_L += oracles::random_matrix(rng, 3, 1, 0.2);
  z0.X_R += oracles::random_matrix(rng, 3, 1, 0.2);
  z0.P[0] = 0.3;
  z0 = project_state(z0, s.cfg);
  z0.Q_L = s.z_star.Q_L;
  z0.W_R = s.z_star.W_R;
  z0.R_Theta = s.z_star.R_Theta;
  z0.Y = s.z_star.Y;
  z0.M = s.z_star.M;
  z0.rho = s.z_star.rho;

  auto [ok, al, ar] = small_gain_check(ck_frozen, s.cfg.mu_L, s.cfg.mu_R);
  REQUIRE(ok);
  IntegrateOptions opts;
  opts.record_every = 1000000;
  opts.diag_every = 1;
  opts.equilibrium = s.z_star;
  LyapunovSpec spec;
  spec.C_K = ck_frozen;
  spec.mu_L = s.cfg.mu_L;
  spec.mu_R = s.cfg.mu_R;
  opts.lyapunov = spec;
  HistoryBuffer hist = make_history(s.cfg, z0);
  Trajectory traj = integrate(s.cfg, s.params, hist, 2000, opts);
  MonotonicityResult mono = lyapunov_monotonicity(traj, al, ar, s.cfg.mu_P);
  CHECK(mono.max_increment <= 1e-2);

  SUBCASE("at the equilibrium the increment vanishes") {
    HistoryBuffer eq = make_history(s.cfg, s.z_star);
    Trajectory flat = integrate(s.cfg, s.params, eq, 100, opts);
    MonotonicityResult m2 = lyapunov_monotonicity(flat, al, ar, s.cfg.mu_P);
    CHECK(std::abs(m2.max_increment) < 1e-12);
  }
}

TEST_CASE("decoupled run has strictly nonincreasing V") {
  Scenario s = frozen_principal_regime(build_k3p3(0.0, 0.0, 0.0, 0.05, 0.05));
  std::mt19937_64 rng(11);
  StateVector z0 = s.z_star;
  z0.H_L += oracles::random_matrix(rng, 3, 1, 0.3);
  z0.X_R += oracles::random_matrix(rng, 3, 1, 0.3);
  z0 = project_state(z0, s.cfg);
  z0.Q_L = s.z_star.Q_L;
  z0.W_R = s.z_star.W_R;
  z0.R_Theta = s.z_star.R_Theta;
  z0.Y = s.z_star.Y;
  z0.M = s.z_star.M;
  z0.rho = s.z_star.rho;
  IntegrateOptions opts;
  opts.record_every = 1000000;
  opts.diag_every = 1;
  opts.equilibrium = s.z_star;
  LyapunovSpec spec;  // C_K = 0
  opts.lyapunov = spec;
  Trajectory traj = integrate(s.cfg, s.params, make_history(s.cfg, z0), 1000, opts);
  for (size_t k = 0; k + 1 < traj.diag.size(); ++k)
    CHECK(traj.diag[k + 1].lyapunov <= traj.diag[k].lyapunov + 1e-15);
}

TEST_CASE("state_dependent_margin") {
  SUBCASE("zero constants recover the plain small-gain setting") {
    auto [ml, mr, msdc] = state_dependent_margin(0, 0, 0, 0, 1.0, 1.0);
    CHECK(ml == 0.0);
    CHECK(mr == 0.0);
    CHECK(msdc == 0.0);
  }
  SUBCASE("worked-example bounds") {
    double s15 = std::sqrt(15.0) / 2.0;
    auto [ml, mr, msdc] = state_dependent_margin(s15 * 0.05, s15 * 0.05, 3.0 * 0.05, 3.0 * 0.05,
                                                 1.0, 1.0);
    CHECK(ml == doctest::Approx(s15 * 0.05 + 0.15).epsilon(1e-14));
    CHECK(msdc == doctest::Approx(ml));
    double ck = s15 * 0.1;
    CHECK(msdc * msdc + ck * ck < 1.0);  // strengthened condition at the defaults
    CHECK(mr == ml);
  }
  SUBCASE("negative inputs rejected") {
    CHECK_THROWS_AS(state_dependent_margin(-1, 0, 0, 0, 1, 1), std::invalid_argument);
  }
}

TEST_CASE("executive_crossgain") {
  SUBCASE("zero cross gains: diagonal, positive iff all margins positive") {
    auto [m, ok] = executive_crossgain(0.4, 0.3, 0, 0, 0, 0, 0, 1.0);
    CHECK(ok);
    CHECK(m(0, 1) == 0.0);
    CHECK(m(0, 2) == 0.0);
    auto [m2, ok2] = executive_crossgain(-0.1, 0.3, 0, 0, 0, 0, 0, 1.0);
    CHECK_FALSE(ok2);
    (void)m2;
  }
  SUBCASE("matrix matches its displayed form entrywise") {
    auto [m, ok] = executive_crossgain(0.5, 0.4, 0.1, 0.2, 0.3, 0.6, 0.7, 1.1);
    double eff_h = 0.1 + 0.3 * 0.6;
    double eff_x = 0.2 + 0.3 * 0.7;
    CHECK(m(0, 0) == doctest::Approx(0.5));
    CHECK(m(1, 1) == doctest::Approx(0.4));
    CHECK(m(2, 2) == doctest::Approx(1.1));
    CHECK(m(0, 2) == doctest::Approx(-0.5 * eff_h));
    CHECK(m(2, 0) == doctest::Approx(-0.5 * eff_h));
    CHECK(m(1, 2) == doctest::Approx(-0.5 * eff_x));
    CHECK(m(0, 1) == 0.0);
    CHECK((m - m.transpose()).norm() == doctest::Approx(0.0));
    (void)ok;
  }
  SUBCASE("growing cross gain eventually breaks positive-definiteness") {
    bool prev = true;
    bool flipped = false;
    for (double c = 0.0; c < 5.0; c += 0.05) {
      auto [m, ok] = executive_crossgain(0.4, 0.4, c, 0, 0, 0, 0, 1.0);
      (void)m;
      if (prev && !ok) flipped = true;
      CHECK(ok == (c < std::sqrt(4.0 * 0.4 * 1.0)));  // 2x2 Schur threshold
      prev = ok;
    }
    CHECK(flipped);
  }
}

TEST_CASE("slowfast bound") {
  SUBCASE("constant quasi-steady readout with matched start never violates") {
    Scenario s = build_k3p3();  // a_Y = 0: phi = 0, Y(0) = 0
    HistoryBuffer hist = make_history(s.cfg, s.z_star);
    IntegrateOptions opts;
    opts.record_every = 10;
    Trajectory traj = integrate(s.cfg, s.params, hist, 500, opts);
    auto phi = [&](const StateVector&) { return Eigen::VectorXd::Zero(1); };
    SlowFastResult r = slowfast_bound_check(traj, s.cfg.kappa_Y, phi);
    CHECK(r.G1 == doctest::Approx(0.0));
    CHECK(r.max_violation <= 1e-12);
  }
  SUBCASE("pure relaxation toward a constant stays within the decay envelope") {
    Scenario s = build_k3p3();
    std::mt19937_64 rng(13);
    StateVector z0 = s.z_star;
    z0.Y[0] = 0.9;
    HistoryBuffer hist = make_history(s.cfg, z0);
    IntegrateOptions opts;
    opts.record_every = 5;
    Trajectory traj = integrate(s.cfg, s.params, hist, 2000, opts);
    auto phi = [&](const StateVector&) { return Eigen::VectorXd::Zero(1); };
    SlowFastResult r = slowfast_bound_check(traj, s.cfg.kappa_Y, phi);
    CHECK(r.max_violation <= 1e-3);  // Euler discretization allowance
    (void)rng;
  }
  SUBCASE("the tracking violation shrinks with the step size") {
    auto violation_at = [](double dt) {
      Scenario s =
          build_k3p3_valuation(0.05, 0.05, 0.05, 0.05, 0.05, 1.0, 1.0, 10.0, 1.0, 5.0, 0.5);
      s.cfg.dt = dt;
      std::mt19937_64 rng(17);
      StateVector z0 = s.z_star;
      z0.H_L += oracles::random_matrix(rng, 3, 1, 0.4);
      z0.X_R += oracles::random_matrix(rng, 3, 1, 0.4);
      z0.Y[0] = 0.8;
      z0 = project_state(z0, s.cfg);
      IntegrateOptions opts;
      opts.record_every = 1;
      long steps = static_cast<long>(std::round(2.0 / dt));
      Trajectory traj = integrate(s.cfg, s.params, make_history(s.cfg, z0), steps, opts);
      const ValuativeParams& vp = s.params.valuative;
      auto phi = [&](const StateVector& z) -> Eigen::VectorXd {
        Eigen::VectorXd r =
            vp.w_H * (Eigen::Map<const Eigen::VectorXd>(z.H_L.data(), 3) - vp.c_H) +
            vp.w_X * (Eigen::Map<const Eigen::VectorXd>(z.X_R.data(), 3) - vp.c_X) +
            vp.w_P * z.P;
        return (vp.a_Y / vp.kappa_Y) * r.array().tanh().matrix();
      };
      return slowfast_bound_check(traj, vp.kappa_Y, phi).max_violation;
    };
    double coarse = violation_at(1e-3);
    double fine = violation_at(2e-4);
    CHECK(coarse <= 1e-3);
    CHECK(fine <= 1e-3);  // the refined run stays within the same budget
    // the discrete violation sits near its continuum value at both steps
    CHECK(std::abs(fine - coarse) < 1e-4);
  }
}

TEST_CASE("one_sided_lipschitz_estimate") {
  std::mt19937_64 rng(17);
  auto sampler = [](std::mt19937_64& r) { return oracles::random_vector(r, 4, 1.0); };
  SUBCASE("pure decay estimates -1") {
    auto map = [](const Eigen::VectorXd& x) { return Eigen::VectorXd(-x); };
    CHECK(one_sided_lipschitz_estimate(map, sampler, 3000, rng) == doctest::Approx(-1.0));
  }
  SUBCASE("damped tanh perturbation keeps mu >= alpha - |W|") {
    Eigen::MatrixXd w = 0.3 * Eigen::MatrixXd::Identity(4, 4);
    auto map = [&](const Eigen::VectorXd& x) {
      return Eigen::VectorXd(-x + (w * x).array().tanh().matrix());
    };
    double est = one_sided_lipschitz_estimate(map, sampler, 10000, rng);
    CHECK(est <= -0.7 + 1e-6);
  }
  SUBCASE("the identity fails the certificate") {
    auto map = [](const Eigen::VectorXd& x) { return x; };
    CHECK(one_sided_lipschitz_estimate(map, sampler, 3000, rng) == doctest::Approx(1.0));
  }
}

TEST_CASE("build_stability_report on the default scenario") {
  Scenario s = build_k3p3();
  ReportOptions opts;
  opts.osl_pairs = 2000;
  opts.lipschitz_samples = 400;
  StabilityReport rep = build_stability_report(s.cfg, s.params, opts);
  CHECK(rep.C_K == doctest::Approx((std::sqrt(15.0) / 2.0) * 0.1).epsilon(1e-12));
  CHECK(rep.small_gain_ok);
  CHECK(rep.alpha_L == doctest::Approx(0.5 - rep.C_K * rep.C_K / 2.0));
  CHECK(rep.strengthened_ok);
  CHECK(rep.M_sdc == doctest::Approx(std::sqrt(15.0) / 2.0 * 0.05 + 0.15).epsilon(1e-12));
  CHECK(rep.crossgain_ok);
  CHECK(rep.osl_ok);
  CHECK(rep.osl_FL <= -0.9 * rep.mu_L);
  CHECK(rep.assumptions.all_checked_ok());
  // sampled operator Lipschitz constants stay below the analytic bounds
  CHECK(rep.L_alpha_sampled <= rep.L_alpha + 1e-9);
  CHECK(rep.L_Q_sampled <= rep.L_Q + 1e-9);
  SUBCASE("report flags a coupling above the small-gain threshold") {
    Scenario big = build_k3p3(0.8, 0.3, 0.3, 0.05, 0.05);
    StabilityReport r2 = build_stability_report(big.cfg, big.params, opts);
    CHECK_FALSE(r2.small_gain_ok);  // C_K = 1.936 * 1.1 > 1
    CHECK_FALSE(r2.strengthened_ok);
  }
}
