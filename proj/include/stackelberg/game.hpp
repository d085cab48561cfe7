#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stackelberg/ad.hpp"
#include "stackelberg/ensemble.hpp"

namespace stackelberg {

using VarSpan = std::span<const ad::Var>;
// (x, u0, u1) -> vector
using GameVectorFn = std::function<std::vector<ad::Var>(VarSpan x, VarSpan u0, VarSpan u1)>;
// (x, u0, u1) -> scalar
using GameScalarFn = std::function<ad::Var(VarSpan x, VarSpan u0, VarSpan u1)>;
using TerminalFn = std::function<ad::Var(VarSpan x)>;

// dX = f(X,u0,u1) dt + sigma(X,u0,u1) dW,  J_i = E[ int_0^T L_i dt + g_i(X_T) ].
struct GameSpec {
  std::string name;
  int d = 1;   // state
  int d0 = 1;  // leader control
  int d1 = 1;  // follower control
  GameVectorFn drift;      // length d
  GameVectorFn diffusion;  // d x (Brownian dim), row-major
  GameScalarFn running0;
  GameScalarFn running1;
  TerminalFn terminal0;
  TerminalFn terminal1;
  std::vector<double> X0;
  std::optional<double> K;      // declared Lipschitz constant
  std::optional<double> kappa;  // strong convexity modulus of the follower Hamiltonian in u1

  // Throws ConfigError on missing callables, wrong X0 length or kappa <= 0.
  void validate() const;
};

// X at nodes 0..M: P x (M+1) x d.
struct StatePath {
  std::size_t paths = 0;
  int steps = 0;
  int dim = 0;
  std::vector<double> X;
  double operator()(std::size_t p, int m, int c = 0) const {
    return X[(p * static_cast<std::size_t>(steps + 1) + static_cast<std::size_t>(m)) * static_cast<std::size_t>(dim) +
             static_cast<std::size_t>(c)];
  }
};

constexpr double kExplosionBound = 1e8;

// Euler-Maruyama; SimulationError names the first (scenario, step) whose state is
// non-finite or exceeds kExplosionBound in absolute value.
StatePath simulate(const GameSpec& spec, const AdaptedProcess& u0, const AdaptedProcess& u1,
                   const BrownianEnsemble& ens);

// Per-scenario realized costs sum_{m<M} L(X_m,u0_m,u1_m) dt + g(X_M).
std::vector<double> cost_samples(const GameSpec& spec, int player, const AdaptedProcess& u0, const AdaptedProcess& u1,
                                 const BrownianEnsemble& ens);
double cost(const GameSpec& spec, int player, const AdaptedProcess& u0, const AdaptedProcess& u1,
            const BrownianEnsemble& ens);

struct CostGradient {
  double value = 0.0;
  std::vector<double> d_u0;  // same layout as u0.values()
  std::vector<double> d_u1;  // same layout as u1.values()
};

// Cost of `player` with its gradient w.r.t. every control value (of the MC mean).
CostGradient cost_with_gradient(const GameSpec& spec, int player, const AdaptedProcess& u0, const AdaptedProcess& u1,
                                const BrownianEnsemble& ens, bool want_u0 = true, bool want_u1 = true);

// Largest sampled difference quotient of (f, sigma, L_0, L_1, g_0, g_1) over random
// points in a box; a warning is printed to `warn` when it exceeds the declared K.
struct LipschitzCheck {
  double max_ratio = 0.0;
  bool within_declared = true;
};
LipschitzCheck lipschitz_spot_check(const GameSpec& spec, std::size_t samples, std::uint64_t seed, double radius = 1.0,
                                    std::ostream* warn = nullptr);

// ---- catalog ---------------------------------------------------------------

// f = C(u0)(A x + B u1) + D(u0), sigma = Cs(u0)(As x + Bs u1) + Ds(u0) (one noise
// column per Brownian coordinate), L1 = CL(u0) L11(x,u1) + L21(u0).
// kappa = l11_modulus * cl_lower_bound.
struct StronglyConvexParams {
  int d = 1;
  int d0 = 1;
  int d1 = 1;
  int noise_dim = 1;
  Eigen::MatrixXd A, B;    // d x d, d x d1
  Eigen::MatrixXd As, Bs;  // (d*noise_dim) x d, (d*noise_dim) x d1
  std::function<ad::Var(VarSpan u0)> C = [](VarSpan) { return ad::Var(1.0); };
  std::function<ad::Var(VarSpan u0)> Cs = [](VarSpan) { return ad::Var(1.0); };
  std::function<ad::Var(VarSpan u0)> CL = [](VarSpan) { return ad::Var(1.0); };
  double cl_lower_bound = 1.0;
  std::function<std::vector<ad::Var>(VarSpan u0)> D;   // length d, zero if unset
  std::function<std::vector<ad::Var>(VarSpan u0)> Ds;  // length d*noise_dim, zero if unset
  std::function<ad::Var(VarSpan x, VarSpan u1)> L11;
  double l11_modulus = 0.0;
  std::function<ad::Var(VarSpan u0)> L21 = [](VarSpan) { return ad::Var(0.0); };
  TerminalFn g1 = [](VarSpan) { return ad::Var(0.0); };
  GameScalarFn L0 = [](VarSpan, VarSpan, VarSpan) { return ad::Var(0.0); };
  TerminalFn g0 = [](VarSpan) { return ad::Var(0.0); };
  std::vector<double> X0 = {0.0};
  std::optional<double> K;
};
GameSpec catalog_strongly_convex(const StronglyConvexParams& params);

// Scalar game f = u0 + u1, sigma = s, L1 = (u1 - u0)^2 + q x^2, g1 = x^2, kappa = 2;
// leader L0 = x^2 + u0^2, g0 = 0.
GameSpec catalog_scalar_quadratic(double sigma = 0.2, double q = 0.1, double X0 = 1.0);

// f = sigma = 0, L1 = (u1 - (a + b u0))^2, g1 = 0 (kappa = 2),
// L0 = w0 u0^2 + w1 u1^2, g0 = 0.  Follower optimum u1 = a + b u0 pointwise.
GameSpec catalog_tracking(double a = 0.0, double b = 1.0, double w0 = 1.0, double w1 = 1.0);

// f = mu x, sigma = eta x, no running cost, g_i(x) = x (kappa absent).
GameSpec catalog_gbm(double mu, double eta, double X0 = 1.0);

// Single-period game on [0,1]^2: l1 = u0 u1, l0 = -u1 (no strong convexity).
struct StaticGame {
  std::function<double(double, double)> loss0;
  std::function<double(double, double)> loss1;
};
StaticGame counterexample_game();
// inf over best responses of l0: -1 at u0 = 0, 0 otherwise.
double counterexample_value(double u0);
// Same quantity with u1 enumerated over {0, 1/G, ..., 1}.
double counterexample_value_grid(double u0, int G);
// The static game as a dynamic game with f = sigma = 0, L1 = u0 u1, L0 = -u1: with
// T = 1 and constant controls the costs are the static losses. kappa absent.
GameSpec catalog_counterexample();

}  // namespace stackelberg
