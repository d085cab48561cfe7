#include "stackelberg/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "stackelberg/error.hpp"
#include "stackelberg/parallel.hpp"
#include "stackelberg/rng.hpp"
#include "stackelberg/tensor_file.hpp"

namespace stackelberg {

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("training: epochs must be nonnegative");
  if (batch_size < 1) throw ConfigError("training: batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("training: learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("training: momentum must lie in [0,1)");
  if (eval_count < 1) throw ConfigError("training: eval_count must be positive");
  if (!(param_radius > 0.0)) throw ConfigError("training: param_radius must be positive");
  if (!(leader_learning_rate > 0.0)) throw ConfigError("training: leader_learning_rate must be positive");
}

namespace {

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(hash_combine(seed, static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

// Momentum step followed by projection onto the parameter ball.
void momentum_step(std::vector<double>& theta, std::vector<double>& velocity, const std::vector<double>& grad,
                   const TrainConfig& cfg) {
  double nn = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    velocity[i] = cfg.momentum * velocity[i] - cfg.learning_rate * grad[i];
    theta[i] += velocity[i];
    nn += theta[i] * theta[i];
  }
  const double n = std::sqrt(nn);
  if (n > cfg.param_radius) {
    for (double& t : theta) t *= cfg.param_radius / n;
  }
}

// Adjoint of theta for the VJP seeds^T c(x, theta).
std::vector<double> theta_vjp(const AttentionalNO& no, std::span<const double> x, const std::vector<double>& theta,
                              const std::vector<double>& seeds) {
  ad::Tape tape;
  ad::Tape::Scope scope(tape);
  tape.reserve(theta.size() * 4);
  const auto tv = tape.variables(theta);
  const std::vector<ad::Var> xv(x.begin(), x.end());
  const auto c = no.coefficients(xv, tv);
  const auto adj = tape.gradient(c, seeds);
  std::vector<double> g(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) g[i] = ad::adjoint_of(adj, tv[i]);
  return g;
}

// Adjoint of x for the VJP seeds^T c(x, theta) with theta fixed.
std::vector<double> x_vjp(const AttentionalNO& no, std::span<const double> x, const std::vector<double>& theta,
                          const std::vector<double>& seeds) {
  ad::Tape tape;
  ad::Tape::Scope scope(tape);
  const auto xv = tape.variables(x);
  const std::vector<ad::Var> tv(theta.begin(), theta.end());
  const auto c = no.coefficients(xv, tv);
  const auto adj = tape.gradient(c, seeds);
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = ad::adjoint_of(adj, xv[i]);
  return g;
}

struct QuadraticSample {
  std::vector<double> x;
  Eigen::VectorXd b;
  double tt = 0.0;
};

double quadratic_loss(const Eigen::MatrixXd& G, const QuadraticSample& s, const std::vector<double>& c) {
  const Eigen::Map<const Eigen::VectorXd> cv(c.data(), static_cast<Eigen::Index>(c.size()));
  return cv.dot(G * cv) - 2.0 * cv.dot(s.b) + s.tt;
}

std::vector<QuadraticSample> prepare(const AttentionalNO& no, const std::vector<AdaptedProcess>& samples,
                                     const std::vector<AdaptedProcess>& targets, const BrownianEnsemble& ens) {
  if (samples.size() != targets.size()) throw DimensionError("training: samples and targets differ in number");
  std::vector<QuadraticSample> out(samples.size());
  for (std::size_t k = 0; k < samples.size(); ++k) {
    out[k].x = no.encode(samples[k], ens);
    out[k].b = no.value_inner(targets[k], ens);
    out[k].tt = inner_product(targets[k], targets[k]);
  }
  return out;
}

double sup_error_of(const AttentionalNO& no, const Eigen::MatrixXd& G, const std::vector<QuadraticSample>& held) {
  double worst = 0.0;
  for (const auto& s : held) worst = std::max(worst, std::sqrt(std::max(quadratic_loss(G, s, no.coefficients(s.x)), 0.0)));
  return worst;
}

void check_divergence(double loss, int epoch, const TrainConfig& cfg) {
  if (!std::isfinite(loss) || loss > cfg.divergence_limit) {
    throw ConvergenceError("training diverged at epoch " + std::to_string(epoch) + " (loss " + std::to_string(loss) + ")",
                           {}, loss);
  }
}

void init_state(TrainState& st, const AttentionalNO& no) {
  if (st.velocity.empty()) st.velocity.assign(no.parameter_size(), 0.0);
  if (st.velocity.size() != no.parameter_size()) throw DimensionError("training: saved velocity has the wrong size");
}

}  // namespace

std::vector<AdaptedProcess> best_response_targets(const GameSpec& game, const std::vector<AdaptedProcess>& controls,
                                                  const ResponseSolveConfig& solve_cfg, const BrownianEnsemble& ens) {
  const ProjectionBasis basis = ProjectionBasis::first(static_cast<std::size_t>(solve_cfg.d1_basis), ens.config());
  std::vector<AdaptedProcess> out;
  out.reserve(controls.size());
  for (std::size_t k = 0; k < controls.size(); ++k) {
    try {
      out.push_back(solve(game, controls[k], solve_cfg, ens, basis).process);
    } catch (const ConvergenceError& e) {
      throw ConvergenceError("target solve failed for control " + std::to_string(k) + ": " + e.what(), e.last_iterate(),
                             e.last_grad_norm());
    }
  }
  return out;
}

TrainResult train_supervised(AttentionalNO& no, const std::vector<AdaptedProcess>& samples,
                             const std::vector<AdaptedProcess>& targets, const std::vector<AdaptedProcess>& held_out,
                             const std::vector<AdaptedProcess>& held_out_targets, const TrainConfig& cfg,
                             const BrownianEnsemble& ens, TrainState* state) {
  cfg.validate();
  if (samples.empty()) throw DimensionError("training: no training controls");
  TrainState local;
  TrainState& st = state ? *state : local;
  init_state(st, no);
  const Eigen::MatrixXd& G = no.value_gram(ens);
  const auto train = prepare(no, samples, targets, ens);
  const auto held = prepare(no, held_out, held_out_targets, ens);
  std::vector<double> theta = no.parameters();
  const std::size_t B = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = st.epoch; epoch < cfg.epochs; ++epoch) {
    const auto order = shuffled(train.size(), cfg.seed, epoch);
    for (std::size_t start = 0; start < order.size(); start += B) {
      const std::size_t stop = std::min(order.size(), start + B);
      const double scale = 1.0 / static_cast<double>(stop - start);
      std::vector<std::vector<double>> grads(stop - start);
      parallel_for(stop - start, [&](std::size_t j) {
        const QuadraticSample& s = train[order[start + j]];
        const auto c = no.coefficients(s.x);
        const Eigen::Map<const Eigen::VectorXd> cv(c.data(), static_cast<Eigen::Index>(c.size()));
        const Eigen::VectorXd r = 2.0 * scale * (G * cv - s.b);
        grads[j] = theta_vjp(no, s.x, theta, std::vector<double>(r.data(), r.data() + r.size()));
      });
      std::vector<double> g(theta.size(), 0.0);
      for (const auto& gj : grads) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gj[i];
      }
      momentum_step(theta, st.velocity, g, cfg);
      no.set_parameters(theta);
    }
    double loss = 0.0;
    for (const auto& s : train) loss += quadratic_loss(G, s, no.coefficients(s.x));
    loss /= static_cast<double>(train.size());
    check_divergence(loss, epoch, cfg);
    st.curve.push_back({epoch, loss, held.empty() ? 0.0 : sup_error_of(no, G, held)});
    st.epoch = epoch + 1;
  }
  TrainResult res;
  res.curve = st.curve;
  res.final_loss = st.curve.empty() ? 0.0 : st.curve.back().loss;
  res.sup_error = held.empty() ? 0.0 : sup_error_of(no, G, held);
  for (const auto& s : held) res.target_sup_norm = std::max(res.target_sup_norm, std::sqrt(s.tt));
  return res;
}

TrainResult train_supervised(AttentionalNO& no, const GameSpec& game, const std::vector<AdaptedProcess>& samples,
                             const std::vector<AdaptedProcess>& held_out, const ResponseSolveConfig& solve_cfg,
                             const TrainConfig& cfg, const BrownianEnsemble& ens, TrainState* state) {
  const auto targets = best_response_targets(game, samples, solve_cfg, ens);
  const auto held_targets = best_response_targets(game, held_out, solve_cfg, ens);
  return train_supervised(no, samples, targets, held_out, held_targets, cfg, ens, state);
}

CoefficientBox CoefficientBox::exp_ellipsoid(double C, double r, std::size_t count) {
  if (!(C >= 0.0) || !(r > 0.0)) throw ConfigError("coefficient box: need C >= 0 and r > 0");
  CoefficientBox box;
  box.center.assign(count, 0.0);
  for (std::size_t i = 1; i <= count; ++i) box.bound.push_back(C * std::exp(-r * static_cast<double>(i)));
  return box;
}

std::vector<double> CoefficientBox::sample(std::uint64_t seed) const {
  Rng rng(seed);
  std::vector<double> beta(size());
  for (std::size_t i = 0; i < size(); ++i) beta[i] = center[i] + rng.uniform(-bound[i], bound[i]);
  return beta;
}

void CoefficientBox::project(std::vector<double>& beta) const {
  for (std::size_t i = 0; i < size(); ++i) beta[i] = std::clamp(beta[i], center[i] - bound[i], center[i] + bound[i]);
}

namespace {

struct LeaderModel {
  ProjectionBasis basis;
  Eigen::MatrixXd G_el;  // <encoder_j, leader_i>
};

LeaderModel leader_model(const AttentionalNO& no, const CoefficientBox& box, const BrownianEnsemble& ens) {
  if (box.size() == 0 || box.center.size() != box.size()) throw ConfigError("coefficient box: empty or inconsistent");
  LeaderModel lm{ProjectionBasis::first(box.size(), ens.config()), {}};
  const auto enc = no.encoder_basis().evaluated(ens);
  const auto lead = lm.basis.evaluated(ens);
  lm.G_el.resize(static_cast<Eigen::Index>(enc->size()), static_cast<Eigen::Index>(lead->size()));
  for (std::size_t j = 0; j < enc->size(); ++j) {
    for (std::size_t i = 0; i < lead->size(); ++i) {
      lm.G_el(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = inner_product((*enc)[j], (*lead)[i]);
    }
  }
  return lm;
}

std::vector<double> project_onto(const std::vector<double>& dfield, const std::vector<AdaptedProcess>& elems) {
  std::vector<double> g(elems.size());
  for (std::size_t k = 0; k < elems.size(); ++k) {
    const auto s = elems[k].values();
    double acc = 0.0;
    for (std::size_t j = 0; j < s.size(); ++j) acc += dfield[j] * s[j];
    g[k] = acc;
  }
  return g;
}

// J0(u0(beta), U(u0(beta))) and its gradient in beta.
double leader_objective(const AttentionalNO& no, const GameSpec& game, const LeaderModel& lm,
                        const std::vector<double>& beta, const BrownianEnsemble& ens, std::vector<double>* grad) {
  const AdaptedProcess u0 = synthesize(beta, lm.basis, ens);
  const auto x = no.encode(u0, ens);
  const auto c = no.coefficients(x);
  const AdaptedProcess u1 = no.combine(c, ens);
  if (!grad) return cost(game, 0, u0, u1, ens);
  const CostGradient cg = cost_with_gradient(game, 0, u0, u1, ens, true, true);
  std::vector<double> g = project_onto(cg.d_u0, *lm.basis.evaluated(ens));
  const auto gc = project_onto(cg.d_u1, *no.value_basis().evaluated(ens));
  const auto gx = x_vjp(no, x, no.parameters(), gc);
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (std::size_t j = 0; j < gx.size(); ++j) g[i] += lm.G_el(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) * gx[j];
  }
  *grad = std::move(g);
  return cg.value;
}

}  // namespace

std::vector<double> optimize_leader(const AttentionalNO& no, const GameSpec& game, const CoefficientBox& box,
                                    std::vector<double> beta, int steps, double learning_rate,
                                    const BrownianEnsemble& ens, double* J0_out) {
  const LeaderModel lm = leader_model(no, box, ens);
  box.project(beta);
  std::vector<double> g;
  for (int s = 0; s < steps; ++s) {
    leader_objective(no, game, lm, beta, ens, &g);
    for (std::size_t i = 0; i < beta.size(); ++i) beta[i] -= learning_rate * g[i];
    box.project(beta);
  }
  if (J0_out) *J0_out = leader_objective(no, game, lm, beta, ens, nullptr);
  return beta;
}

TrainResult train_unsupervised(AttentionalNO& no, const GameSpec& game, const CoefficientBox& box,
                               const ResponseSolveConfig& solve_cfg, const TrainConfig& cfg,
                               const BrownianEnsemble& ens, TrainState* state) {
  cfg.validate();
  game.validate();
  if (!game.kappa) {
    throw RefusalError("unsupervised training: game '" + game.name +
                       "' declares no kappa, so the detection guarantees do not apply");
  }
  TrainState local;
  TrainState& st = state ? *state : local;
  init_state(st, no);
  const LeaderModel lm = leader_model(no, box, ens);
  if (st.leader.empty()) st.leader = box.sample(hash_combine(cfg.seed, 0x1eadULL));
  if (st.leader.size() != box.size()) throw DimensionError("training: saved leader has the wrong size");

  // held-out controls with solved follower responses
  std::vector<AdaptedProcess> evals;
  for (int k = 0; k < cfg.eval_count; ++k) {
    evals.push_back(synthesize(box.sample(hash_combine(hash_combine(cfg.seed, 0xe7a1ULL), static_cast<std::uint64_t>(k))),
                               lm.basis, ens));
  }
  const auto eval_targets = best_response_targets(game, evals, solve_cfg, ens);
  auto sup_error = [&] {
    double worst = 0.0;
    for (std::size_t k = 0; k < evals.size(); ++k) {
      AdaptedProcess d = no.apply(evals[k], ens);
      d -= eval_targets[k];
      worst = std::max(worst, norm(d));
    }
    return worst;
  };

  const auto vals = no.value_basis().evaluated(ens);
  std::vector<double> theta = no.parameters();
  const auto B = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = st.epoch; epoch < cfg.epochs; ++epoch) {
    std::vector<std::vector<double>> betas{st.leader};
    for (std::size_t k = 1; k < B; ++k) {
      betas.push_back(box.sample(hash_combine(hash_combine(cfg.seed, static_cast<std::uint64_t>(epoch)), k)));
    }
    const double scale = 1.0 / static_cast<double>(betas.size());
    std::vector<double> g(theta.size(), 0.0);
    double loss = 0.0;
    for (const auto& beta : betas) {
      const AdaptedProcess u0 = synthesize(beta, lm.basis, ens);
      const auto x = no.encode(u0, ens);
      const auto c = no.coefficients(x);
      const AdaptedProcess u1 = no.combine(c, ens);
      const CostGradient cg = cost_with_gradient(game, 1, u0, u1, ens, false, true);
      loss += scale * cg.value;
      auto gc = project_onto(cg.d_u1, *vals);
      for (double& v : gc) v *= scale;
      const auto gt = theta_vjp(no, x, theta, gc);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gt[i];
    }
    check_divergence(loss, epoch, cfg);
    momentum_step(theta, st.velocity, g, cfg);
    no.set_parameters(theta);

    std::vector<double> gl;
    leader_objective(no, game, lm, st.leader, ens, &gl);
    for (std::size_t i = 0; i < st.leader.size(); ++i) st.leader[i] -= cfg.leader_learning_rate * gl[i];
    box.project(st.leader);

    st.curve.push_back({epoch, loss, sup_error()});
    st.epoch = epoch + 1;
  }
  TrainResult res;
  res.curve = st.curve;
  res.final_loss = st.curve.empty() ? 0.0 : st.curve.back().loss;
  res.sup_error = sup_error();
  for (const auto& t : eval_targets) res.target_sup_norm = std::max(res.target_sup_norm, norm(t));
  res.leader = st.leader;
  res.leader_J0 = leader_objective(no, game, lm, st.leader, ens, nullptr);
  return res;
}

EquilibriumCertificate certify(const AttentionalNO& no, const GameSpec& game, const AdaptedProcess& leader,
                               const std::vector<AdaptedProcess>& probe_u0, const std::vector<AdaptedProcess>& probe_u1,
                               const BrownianEnsemble& ens) {
  if (probe_u0.empty() || probe_u1.empty()) throw DimensionError("certify: probe sets must be nonempty");
  std::vector<const AdaptedProcess*> u0s;
  bool has_leader = false;
  for (const auto& u : probe_u0) {
    u0s.push_back(&u);
    if (u.same_shape(leader) && std::ranges::equal(u.values(), leader.values())) has_leader = true;
  }
  if (!has_leader) u0s.push_back(&leader);
  EquilibriumCertificate cert;
  cert.probes_u0 = u0s.size();
  cert.probes_u1 = probe_u1.size();
  const double J0_leader = cost(game, 0, leader, no.apply(leader, ens), ens);
  double J0_min = J0_leader;
  for (std::size_t a = 0; a < u0s.size(); ++a) {
    const AdaptedProcess U = no.apply(*u0s[a], ens);
    J0_min = std::min(J0_min, cost(game, 0, *u0s[a], U, ens));
    const double J1_hat = cost(game, 1, *u0s[a], U, ens);
    for (std::size_t b = 0; b < probe_u1.size(); ++b) {
      const double gap = J1_hat - cost(game, 1, *u0s[a], probe_u1[b], ens);
      if (gap > cert.eps1) {
        cert.eps1 = gap;
        cert.worst_u0 = a;
        cert.worst_u1 = b;
      }
    }
  }
  cert.eps0 = J0_leader - J0_min;
  cert.eps = std::max(cert.eps0, cert.eps1);
  return cert;
}

void write_certificate(std::ostream& out, const EquilibriumCertificate& c) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "eps0 %.17g\neps1 %.17g\neps %.17g\nworst_u0 %zu\nworst_u1 %zu\nprobes_u0 %zu\nprobes_u1 %zu\n"
                "note: finite probe sets give a lower bound on the true epsilon\n",
                c.eps0, c.eps1, c.eps, c.worst_u0, c.worst_u1, c.probes_u0, c.probes_u1);
  out << buf;
}

GapScan objective_gap_scan(const AttentionalNO& no, const GameSpec& game, const std::vector<AdaptedProcess>& samples,
                           const ResponseSolveConfig& solve_cfg, const BrownianEnsemble& ens) {
  return objective_gap_scan(no, game, samples, best_response_targets(game, samples, solve_cfg, ens), ens);
}

GapScan objective_gap_scan(const AttentionalNO& no, const GameSpec& game, const std::vector<AdaptedProcess>& samples,
                           const std::vector<AdaptedProcess>& targets, const BrownianEnsemble& ens) {
  if (samples.size() != targets.size()) throw DimensionError("objective_gap_scan: samples and targets differ in number");
  GapScan scan;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    GapRow row;
    row.J0_star = cost(game, 0, samples[k], targets[k], ens);
    const AdaptedProcess pd = project(samples[k], no.encoder_basis(), ens).reconstruction;
    row.J0_hat = cost(game, 0, pd, no.apply(pd, ens), ens);
    row.gap = std::abs(row.J0_star - row.J0_hat);
    scan.max_gap = std::max(scan.max_gap, row.gap);
    scan.rows.push_back(row);
  }
  return scan;
}

void save_checkpoint(const std::string& path, const AttentionalNO& no, const TrainState& state) {
  auto tensors = no.to_tensors();
  tensors.push_back({"train.epoch", {1}, {static_cast<double>(state.epoch)}});
  tensors.push_back({"train.velocity", {state.velocity.size()}, state.velocity});
  tensors.push_back({"train.leader", {state.leader.size()}, state.leader});
  std::vector<double> curve;
  for (const auto& r : state.curve) {
    curve.push_back(r.epoch);
    curve.push_back(r.loss);
    curve.push_back(r.sup_error);
  }
  tensors.push_back({"train.curve", {state.curve.size(), 3}, curve});
  save_tensors(path, tensors);
}

void load_checkpoint(const std::string& path, const HorizonConfig& horizon, AttentionalNO& no, TrainState& state) {
  const auto tensors = load_tensors(path);
  no = AttentionalNO::from_tensors(tensors, horizon);
  state = TrainState{};
  state.epoch = static_cast<int>(find_tensor(tensors, "train.epoch").values.at(0));
  state.velocity = find_tensor(tensors, "train.velocity").values;
  state.leader = find_tensor(tensors, "train.leader").values;
  const auto& c = find_tensor(tensors, "train.curve").values;
  for (std::size_t i = 0; i + 2 < c.size(); i += 3) state.curve.push_back({static_cast<int>(c[i]), c[i + 1], c[i + 2]});
}

void write_loss_csv(std::ostream& out, const std::vector<LossRow>& curve) {
  out << "epoch,loss,sup_error\n";
  char buf[128];
  for (const auto& r : curve) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", r.epoch, r.loss, r.sup_error);
    out << buf;
  }
}

}  // namespace stackelberg
