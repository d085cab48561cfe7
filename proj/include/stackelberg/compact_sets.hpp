#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "stackelberg/game.hpp"
#include "stackelberg/mlp.hpp"
#include "stackelberg/process_space.hpp"

namespace stackelberg {

struct FiniteSet {
  std::vector<AdaptedProcess> elements;
};

// Deterministic piecewise-linear controls through `knots` equispaced nodes on [0,T]
// with alpha-Holder seminorm at most `bound`.
struct HolderDeterministicSet {
  double alpha = 1.0;
  double bound = 1.0;
  int knots = 9;
};

// Martingales u_t = E[clamp(a W_T + b, -1, 1) | F_t] with |a| <= lip, |b| <= offset
// (first Brownian coordinate).
struct LipschitzConditionedSet {
  double lip = 1.0;
  double offset = 0.0;
};

// ubar + sum_{i=1}^{count} beta_i s_i with |beta_i| <= C e^{-r i}.
struct ExpEllipsoidSet {
  std::optional<AdaptedProcess> ubar;  // zero when absent
  double C = 1.0;
  double r = 0.5;
  std::size_t count = 12;
};

// sum_i net(z)_i s_i, z uniform on [-1,1]^{d_lat}; the net maps R^{d_lat} -> R^{count}.
struct LatentManifoldSet {
  int d_lat = 1;
  Mlp net;
};

using CompactSetSpec =
    std::variant<FiniteSet, HolderDeterministicSet, LipschitzConditionedSet, ExpEllipsoidSet, LatentManifoldSet>;

void validate(const CompactSetSpec& spec);

std::vector<AdaptedProcess> sample(const CompactSetSpec& spec, std::size_t n, std::uint64_t seed,
                                   const BrownianEnsemble& ens);

struct MembershipReport {
  bool pass = true;
  std::string constraint;  // description of the worst constraint
  long index = -1;         // its index (1-based coefficient index, knot pair, ...) or -1
  double value = 0.0;
  double limit = 0.0;
};

// Worst violation (or tightest constraint when all hold) of the set's defining
// inequalities; `tolerance` is added to every limit.
MembershipReport membership_check(const CompactSetSpec& spec, const AdaptedProcess& u, const BrownianEnsemble& ens,
                                  double tolerance = 1e-9);

// Coefficients relative to the first `count` basis elements with the empirical Gram
// inverted, so that they recover the synthesis coefficients exactly.
std::vector<double> gram_coefficients(const AdaptedProcess& u, std::size_t count, const BrownianEnsemble& ens);

// sqrt(C^2 e^{-r d} / (1 - e^{-2r})): bound on ||u - p_d u|| over the set.
double exp_ellipsoid_truncation_bound(double C, double r, int d);

struct AnchorPoint {
  std::vector<double> x;
  std::vector<double> v0;
  std::vector<double> v1;
};

struct LinearizedGame {
  GameSpec spec;
  Eigen::MatrixXd A, B1, B2;  // drift  A x + B1 v0 + B2 v1
  Eigen::MatrixXd C, D1, D2;  // diffusion, (d * dW) rows, row-major in (state, Brownian)
  Eigen::MatrixXd Q[2], R[2], G[2];  // symmetric
  double dynamics_residual = 0.0;  // sum of squared drift and diffusion misfits
  double cost_residual = 0.0;      // sum of squared running and terminal misfits
  bool regularized = false;
};

// Least-squares fit of the linear dynamics and quadratic costs x'Q_i x + v_i'R_i v_i,
// x'G_i x at the anchors. Rank-deficient designs fall back to a ridge of 1e-8 and
// print a warning to `warn`.
LinearizedGame linearize_game(const GameSpec& spec, const std::vector<AnchorPoint>& anchors,
                              std::ostream* warn = nullptr);

}  // namespace stackelberg
