#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "stackelberg/best_response.hpp"
#include "stackelberg/game.hpp"
#include "stackelberg/neural_operator.hpp"

namespace stackelberg {

enum class TrainMode { Supervised, Unsupervised };

struct TrainConfig {
  TrainMode mode = TrainMode::Supervised;
  int epochs = 200;
  int batch_size = 16;
  double learning_rate = 1e-2;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  int eval_count = 16;          // held-out controls for the sup error
  double param_radius = 1e3;    // parameters are projected onto this Euclidean ball
  double leader_learning_rate = 0.2;
  double divergence_limit = 1e6;

  void validate() const;
};

struct LossRow {
  int epoch = 0;
  double loss = 0.0;
  double sup_error = 0.0;
};

// Optimizer state; a run resumed from a saved state reproduces the uninterrupted run.
struct TrainState {
  int epoch = 0;  // completed epochs
  std::vector<double> velocity;
  std::vector<double> leader;  // unsupervised: current leader coefficients
  std::vector<LossRow> curve;
};

struct TrainResult {
  std::vector<LossRow> curve;
  double final_loss = 0.0;
  double sup_error = 0.0;          // max over held-out controls of ||U(u0) - target||
  double target_sup_norm = 0.0;    // max over held-out controls of ||target||
  std::vector<double> leader;      // unsupervised only
  double leader_J0 = 0.0;          // unsupervised only
};

// Follower best responses for each control; a failed solve is rethrown naming the control.
std::vector<AdaptedProcess> best_response_targets(const GameSpec& game, const std::vector<AdaptedProcess>& controls,
                                                  const ResponseSolveConfig& solve_cfg, const BrownianEnsemble& ens);

// Minimizes the mean of ||U(u_k) - t_k||^2 by minibatch momentum SGD.
TrainResult train_supervised(AttentionalNO& no, const std::vector<AdaptedProcess>& samples,
                             const std::vector<AdaptedProcess>& targets, const std::vector<AdaptedProcess>& held_out,
                             const std::vector<AdaptedProcess>& held_out_targets, const TrainConfig& cfg,
                             const BrownianEnsemble& ens, TrainState* state = nullptr);
// Same with targets from best_response::solve.
TrainResult train_supervised(AttentionalNO& no, const GameSpec& game, const std::vector<AdaptedProcess>& samples,
                             const std::vector<AdaptedProcess>& held_out, const ResponseSolveConfig& solve_cfg,
                             const TrainConfig& cfg, const BrownianEnsemble& ens, TrainState* state = nullptr);

// Leader coefficients beta on the first size() basis elements with
// |beta_i - center_i| <= bound_i.
struct CoefficientBox {
  std::vector<double> center;
  std::vector<double> bound;

  // Bounds C e^{-r i}, i = 1..count, centered at zero.
  static CoefficientBox exp_ellipsoid(double C, double r, std::size_t count);
  std::size_t size() const { return bound.size(); }
  std::vector<double> sample(std::uint64_t seed) const;
  void project(std::vector<double>& beta) const;
};

// Alternating scheme: operator steps on the mean follower cost J1(u0, U(u0)) over
// controls drawn from the box (plus the current leader point), leader steps on
// J0(u0, U(u0)) by projected gradient descent. Requires kappa.
TrainResult train_unsupervised(AttentionalNO& no, const GameSpec& game, const CoefficientBox& box,
                               const ResponseSolveConfig& solve_cfg, const TrainConfig& cfg,
                               const BrownianEnsemble& ens, TrainState* state = nullptr);

// Leader descent on J0(u0(beta), U(u0(beta))) with the operator frozen.
std::vector<double> optimize_leader(const AttentionalNO& no, const GameSpec& game, const CoefficientBox& box,
                                    std::vector<double> beta, int steps, double learning_rate,
                                    const BrownianEnsemble& ens, double* J0_out = nullptr);

struct EquilibriumCertificate {
  double eps0 = 0.0;  // J0(u0_hat, U(u0_hat)) - min over probe u0 of J0(u0, U(u0))
  double eps1 = 0.0;  // max over probe (u0, u1) of J1(u0, U(u0)) - J1(u0, u1), clipped at 0
  double eps = 0.0;
  std::size_t worst_u0 = 0;  // eps1 maximizer; index probe_u0.size() is the appended leader
  std::size_t worst_u1 = 0;
  std::size_t probes_u0 = 0;
  std::size_t probes_u1 = 0;
};

// Finite probing only bounds the true epsilon from below. The leader control is
// added to the u0 probes if absent.
EquilibriumCertificate certify(const AttentionalNO& no, const GameSpec& game, const AdaptedProcess& leader,
                               const std::vector<AdaptedProcess>& probe_u0, const std::vector<AdaptedProcess>& probe_u1,
                               const BrownianEnsemble& ens);
void write_certificate(std::ostream& out, const EquilibriumCertificate& c);

struct GapRow {
  double J0_star = 0.0;  // J0(u0, U*(u0))
  double J0_hat = 0.0;   // J0(p_d u0, U(p_d u0))
  double gap = 0.0;
};
struct GapScan {
  std::vector<GapRow> rows;
  double max_gap = 0.0;
};
GapScan objective_gap_scan(const AttentionalNO& no, const GameSpec& game, const std::vector<AdaptedProcess>& samples,
                           const ResponseSolveConfig& solve_cfg, const BrownianEnsemble& ens);
// Same with precomputed best responses.
GapScan objective_gap_scan(const AttentionalNO& no, const GameSpec& game, const std::vector<AdaptedProcess>& samples,
                           const std::vector<AdaptedProcess>& targets, const BrownianEnsemble& ens);

// Operator tensors plus train.epoch, train.velocity, train.leader, train.curve.
void save_checkpoint(const std::string& path, const AttentionalNO& no, const TrainState& state);
void load_checkpoint(const std::string& path, const HorizonConfig& horizon, AttentionalNO& no, TrainState& state);

void write_loss_csv(std::ostream& out, const std::vector<LossRow>& curve);

}  // namespace stackelberg
