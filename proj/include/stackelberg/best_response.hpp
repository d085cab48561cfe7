#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "stackelberg/game.hpp"
#include "stackelberg/process_space.hpp"

namespace stackelberg {

enum class StepRule { Fixed, Backtracking };

struct ResponseSolveConfig {
  int d1_basis = 16;
  int max_iters = 500;
  StepRule step_rule = StepRule::Backtracking;
  double fixed_step = 0.25;
  double grad_tol = 1e-7;
  int restarts = 1;
  std::uint64_t seed = 0;
  double init_scale = 0.5;  // std of the random restart coefficients

  void validate() const;
};

struct ConvexityReport {
  double lhs = 0.0;    // (kappa/2) ||U(u0) - U(u0~)||^2
  double rhs = 0.0;    // J1(u0, U(u0~)) - J1(u0, U(u0))
  double slack = 0.0;  // rhs - lhs
  double slack_std_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;  // slack >= -(3 SE + tolerance)
};

struct ResponseResult {
  std::vector<double> coeffs;  // d1_basis x d1, row-major
  AdaptedProcess process;
  double J1_value = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  double restart_spread = 0.0;  // largest coefficient distance between restart solutions
  std::optional<ConvexityReport> certificate;
};

// Follower response minimizing beta -> J1(u0, sum_i beta_i s_i) over the first
// d1_basis elements. Refuses games without kappa; ConvergenceError when the
// coefficient gradient stays above grad_tol after max_iters.
ResponseResult solve(const GameSpec& spec, const AdaptedProcess& u0, const ResponseSolveConfig& cfg,
                     const BrownianEnsemble& ens);
// Same with a caller-provided follower basis (shared evaluation cache).
ResponseResult solve(const GameSpec& spec, const AdaptedProcess& u0, const ResponseSolveConfig& cfg,
                     const BrownianEnsemble& ens, const ProjectionBasis& basis);

// argmin_k J1(u0, candidates[k]); ties go to the lowest index.
std::pair<std::size_t, double> enumerate_best_response(const GameSpec& spec, const AdaptedProcess& u0,
                                                       const std::vector<AdaptedProcess>& candidates,
                                                       const BrownianEnsemble& ens);

ConvexityReport convexity_certificate(const GameSpec& spec, const AdaptedProcess& u0, const AdaptedProcess& u0_tilde,
                                      const AdaptedProcess& U_u0, const AdaptedProcess& U_u0_tilde,
                                      const BrownianEnsemble& ens, double tolerance = 1e-4);

struct HolderRow {
  double du0_norm = 0.0;
  double dU_norm = 0.0;
  double bound = 0.0;  // (2/sqrt(kappa)) (2 C du0)^{1/2}
  ConvexityReport certificate;
  bool pass = false;
};

struct HolderTable {
  std::vector<HolderRow> rows;
  double C_hat = 0.0;  // max over pairs of |J1(u0,v) - J1(u0~,v)| / ||u0 - u0~||, v in {U(u0), U(u0~)}
  double slope = 0.0;  // least-squares slope of log dU vs log du0 (pairs with du0 > 0)
  bool pass = false;
};

HolderTable holder_diagnostic(const GameSpec& spec, const std::vector<std::pair<AdaptedProcess, AdaptedProcess>>& pairs,
                              const ResponseSolveConfig& cfg, const BrownianEnsemble& ens,
                              double tolerance = 1e-4);

// Least-squares slope of log(y) against log(x); pairs with a nonpositive entry are skipped.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);
// Least-squares slope of y against x.
double linear_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace stackelberg
