#include <doctest.h>

#include <cmath>

#include "stackelberg/best_response.hpp"
#include "stackelberg/error.hpp"
#include "stackelberg/game.hpp"
#include "stackelberg/process_space.hpp"

using namespace stackelberg;

TEST_SUITE("best_response") {
  TEST_CASE("slope helpers") {
    CHECK(loglog_slope({1, 2, 4, 8}, {3, 6, 12, 24}) == doctest::Approx(1.0));
    CHECK(loglog_slope({1, 4, 9, 0}, {1, 2, 3, 5}) == doctest::Approx(0.5));
    CHECK(linear_slope({0, 1, 2}, {1, 3, 5}) == doctest::Approx(2.0));
  }

  TEST_CASE("solver config validation") {
    ResponseSolveConfig c;
    CHECK_NOTHROW(c.validate());
    c.d1_basis = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.max_iters = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }

  TEST_CASE("tracking response is recovered exactly inside the span") {
    const BrownianEnsemble ens({1.0, 16, 1}, 128, 3);
    const GameSpec g = catalog_tracking(0.3, -2.0);
    const ProjectionBasis basis = ProjectionBasis::first(8, ens.config());
    const std::vector<double> beta{0.4, -0.2, 0.1, 0.0, 0.3, 0.0, -0.1, 0.2};
    const AdaptedProcess u0 = synthesize(beta, basis, ens);
    ResponseSolveConfig cfg;
    cfg.d1_basis = 8;
    const ResponseResult r = solve(g, u0, cfg, ens);
    // u1 = 0.3 + (-2) u0, and 0.3 = 0.3 * s_0 on [0,1]
    CHECK(r.coeffs[0] == doctest::Approx(0.3 - 2.0 * 0.4).epsilon(1e-6));
    for (std::size_t i = 1; i < beta.size(); ++i) CHECK(r.coeffs[i] == doctest::Approx(-2.0 * beta[i]).epsilon(1e-5));
    CHECK(r.J1_value < 1e-10);
    CHECK(r.grad_norm <= cfg.grad_tol);
    CHECK(check_adapted(r.process, ens));
  }

  TEST_CASE("fixed-step and restarts agree") {
    const BrownianEnsemble ens({1.0, 16, 1}, 256, 5);
    const GameSpec g = catalog_scalar_quadratic();
    const AdaptedProcess u0 = AdaptedProcess::deterministic(ens, [](double t) { return std::sin(3 * t); });
    ResponseSolveConfig bt;
    bt.d1_basis = 8;
    bt.restarts = 3;
    bt.seed = 9;
    ResponseSolveConfig fx = bt;
    fx.step_rule = StepRule::Fixed;
    fx.fixed_step = 0.2;
    fx.max_iters = 5000;
    fx.restarts = 1;
    const ResponseResult a = solve(g, u0, bt, ens), b = solve(g, u0, fx, ens);
    CHECK(a.restart_spread < 1e-5);
    for (std::size_t i = 0; i < a.coeffs.size(); ++i) CHECK(std::abs(a.coeffs[i] - b.coeffs[i]) < 1e-5);
    CHECK(a.J1_value == doctest::Approx(b.J1_value).epsilon(1e-9));
  }

  TEST_CASE("refusal without kappa") {
    const BrownianEnsemble ens({1.0, 8, 1}, 8, 1);
    CHECK_THROWS_AS(solve(catalog_gbm(0.1, 0.2), AdaptedProcess::zeros(ens), {}, ens), RefusalError);
    CHECK_THROWS_AS(solve(catalog_counterexample(), AdaptedProcess::zeros(ens), {}, ens), RefusalError);
  }

  TEST_CASE("iteration budget exhaustion reports the last iterate") {
    const BrownianEnsemble ens({1.0, 16, 1}, 64, 1);
    ResponseSolveConfig cfg;
    cfg.d1_basis = 8;
    cfg.max_iters = 1;
    cfg.grad_tol = 1e-14;
    try {
      solve(catalog_scalar_quadratic(), AdaptedProcess::constant(ens, 1.0), cfg, ens);
      FAIL("expected ConvergenceError");
    } catch (const ConvergenceError& e) {
      CHECK(e.last_iterate().size() == 8);
      CHECK(e.last_grad_norm() > 1e-14);
    }
  }

  TEST_CASE("enumeration picks the minimizer, lowest index on ties") {
    const BrownianEnsemble ens({1.0, 8, 1}, 4, 1);
    const GameSpec g = catalog_tracking(1.0, 0.0);
    const AdaptedProcess u0 = AdaptedProcess::zeros(ens);
    std::vector<AdaptedProcess> cands{AdaptedProcess::constant(ens, 0.0), AdaptedProcess::constant(ens, 1.0),
                                      AdaptedProcess::constant(ens, 2.0), AdaptedProcess::constant(ens, 1.0)};
    const auto [k, v] = enumerate_best_response(g, u0, cands, ens);
    CHECK(k == 1);
    CHECK(v == 0.0);
    CHECK(enumerate_best_response(g, u0, {cands[0], cands[2]}, ens).first == 0);
  }

  TEST_CASE("convexity certificate holds for solved responses") {
    const BrownianEnsemble ens({1.0, 16, 1}, 256, 7);
    const GameSpec g = catalog_scalar_quadratic();
    ResponseSolveConfig cfg;
    cfg.d1_basis = 8;
    const AdaptedProcess a = AdaptedProcess::constant(ens, 0.5);
    const AdaptedProcess b = AdaptedProcess::deterministic(ens, [](double t) { return 0.5 + 0.2 * t; });
    const ResponseResult ra = solve(g, a, cfg, ens), rb = solve(g, b, cfg, ens);
    const ConvexityReport rep = convexity_certificate(g, a, b, ra.process, rb.process, ens);
    CHECK(rep.pass);
    CHECK(rep.rhs >= rep.lhs - rep.tolerance - 3 * rep.slack_std_error);
    // swapping in a non-optimal response breaks the inequality
    const ConvexityReport bad = convexity_certificate(g, a, b, AdaptedProcess::constant(ens, 3.0), rb.process, ens);
    CHECK_FALSE(bad.pass);
  }

  TEST_CASE("Holder diagnostic on close pairs") {
    const BrownianEnsemble ens({1.0, 16, 1}, 256, 2);
    const GameSpec g = catalog_scalar_quadratic();
    ResponseSolveConfig cfg;
    cfg.d1_basis = 8;
    std::vector<std::pair<AdaptedProcess, AdaptedProcess>> pairs;
    for (double eps : {0.01, 0.03, 0.1}) {
      pairs.emplace_back(AdaptedProcess::constant(ens, 0.2), AdaptedProcess::constant(ens, 0.2 + eps));
    }
    const HolderTable t = holder_diagnostic(g, pairs, cfg, ens);
    REQUIRE(t.rows.size() == 3);
    CHECK(t.pass);
    CHECK(t.C_hat > 0.0);
    for (const auto& row : t.rows) CHECK(row.dU_norm <= row.bound);
    CHECK(t.slope > 0.4);
  }
}
