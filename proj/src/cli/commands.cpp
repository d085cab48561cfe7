#include "commands.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

#include <CLI11.hpp>

#include "stackelberg/chaos_basis.hpp"
#include "stackelberg/error.hpp"
#include "stackelberg/parallel.hpp"
#include "stackelberg/rng.hpp"

namespace stackelberg::cli {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

fs::path prepare_dir(const RunConfig& cfg) {
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  std::ofstream(dir / "config.json") << cfg.raw.dump(2) << "\n";
  return dir;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw ConfigError("cannot write '" + p.string() + "'");
  return out;
}

BrownianEnsemble make_ensemble(const RunConfig& cfg) { return BrownianEnsemble(cfg.horizon, cfg.paths, cfg.seed); }

void require_kappa(const GameSpec& game, const char* what) {
  if (!game.kappa) {
    throw RefusalError(std::string(what) + ": game '" + game.name +
                       "' declares no strong-convexity modulus kappa, so no Holder continuous best-response map is "
                       "guaranteed and the response cannot be certified");
  }
}

}  // namespace

int cmd_basis_check(const RunConfig& cfg, std::ostream& log) {
  const fs::path dir = prepare_dir(cfg);
  const BrownianEnsemble ens = make_ensemble(cfg);
  const auto elems = basis_elements(static_cast<std::size_t>(cfg.basis_count), cfg.horizon);
  const std::size_t n = elems.size();
  std::vector<McEstimate> est(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) est[i * n + j] = est[j * n + i] = mc_estimate(basis_inner_samples(elems[i], elems[j], ens));
  }
  auto out = open_out(dir / "gram.csv");
  out << "i,j,value,std_error,deviation,pass\n";
  bool all = true;
  double max_dev = 0.0, max_se = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const McEstimate& e = est[i * n + j];
      const double dev = e.mean - (i == j ? 1.0 : 0.0);
      const bool pass = std::abs(dev) <= cfg.tolerances.sigma_multiple * e.std_error + 1e-12;
      all = all && pass;
      max_dev = std::max(max_dev, std::abs(dev));
      max_se = std::max(max_se, e.std_error);
      out << i << ',' << j << ',' << fmt(e.mean) << ',' << fmt(e.std_error) << ',' << fmt(dev) << ','
          << (pass ? 1 : 0) << '\n';
    }
  }
  // adaptedness on a smaller ensemble, probing 17 spread steps
  const BrownianEnsemble small(cfg.horizon, std::min<std::size_t>(cfg.paths, 256), hash_combine(cfg.seed, 0xadaULL));
  std::vector<int> probes;
  const int M = cfg.horizon.M;
  for (int k = 0; k < 16; ++k) probes.push_back(k * M / 16);
  probes.push_back(M - 1);
  bool adapted = true;
  for (const auto& e : elems) adapted = adapted && check_adapted(evaluate_basis(e, small), small, probes);
  const bool se_ok = max_se <= cfg.tolerances.max_std_error;
  const bool pass = all && adapted && se_ok;
  auto summary = open_out(dir / "summary.txt");
  summary << "elements " << n << "\nmax_abs_deviation " << fmt(max_dev) << "\nmax_std_error " << fmt(max_se)
          << "\nentries_within_sigma " << (all ? "yes" : "no") << "\nadapted " << (adapted ? "yes" : "no")
          << "\nresult " << (pass ? "pass" : "fail") << "\n";
  log << "basis-check: " << n << "x" << n << " Gram, max |G-I| " << max_dev << ", max SE " << max_se
      << (se_ok ? "" : " (exceeds max_std_error; increase P)") << ", adapted " << (adapted ? "yes" : "no") << ": "
      << (pass ? "pass" : "fail") << "\n";
  return pass ? kExitPass : kExitNumeric;
}

int cmd_best_response(const RunConfig& cfg, std::ostream& log) {
  const GameSpec game = make_game(cfg.game);
  require_kappa(game, "best-response");
  const fs::path dir = prepare_dir(cfg);
  const BrownianEnsemble ens = make_ensemble(cfg);
  const CompactSetSpec set = make_compact_set(cfg.compact_set, ens);
  const auto n = static_cast<std::size_t>(cfg.best_response.pairs);
  const auto u0s = sample(set, n, hash_combine(cfg.seed, 11), ens);
  const auto ws = sample(set, n, hash_combine(cfg.seed, 12), ens);
  std::vector<std::pair<AdaptedProcess, AdaptedProcess>> pairs;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = n > 1 ? static_cast<double>(k) / static_cast<double>(n - 1) : 0.0;
    const double eps = cfg.best_response.eps_min * std::pow(cfg.best_response.eps_max / cfg.best_response.eps_min, t);
    const double wn = norm(ws[k]);
    AdaptedProcess tilde = u0s[k];
    tilde.axpy(wn > 0.0 ? eps / wn : 0.0, ws[k]);
    pairs.emplace_back(u0s[k], std::move(tilde));
  }
  const HolderTable table = holder_diagnostic(game, pairs, cfg.solver, ens, cfg.tolerances.certificate);

  const ResponseResult first = solve(game, u0s.front(), cfg.solver, ens);
  auto resp = open_out(dir / "response.csv");
  write_process_csv(resp, first.process);

  auto cert = open_out(dir / "certificate.csv");
  cert << "pair_id,du0_norm,dU_norm,lhs,rhs,slack\n";
  auto hold = open_out(dir / "holder.csv");
  hold << "pair_id,du0_norm,dU_norm,bound,slack_std_error,pass\n";
  bool all = true;
  for (std::size_t k = 0; k < table.rows.size(); ++k) {
    const HolderRow& r = table.rows[k];
    all = all && r.certificate.pass;
    cert << k << ',' << fmt(r.du0_norm) << ',' << fmt(r.dU_norm) << ',' << fmt(r.certificate.lhs) << ','
         << fmt(r.certificate.rhs) << ',' << fmt(r.certificate.slack) << '\n';
    hold << k << ',' << fmt(r.du0_norm) << ',' << fmt(r.dU_norm) << ',' << fmt(r.bound) << ','
         << fmt(r.certificate.slack_std_error) << ',' << (r.pass ? 1 : 0) << '\n';
  }
  auto summary = open_out(dir / "summary.txt");
  summary << "kappa " << fmt(*game.kappa) << "\nC_hat " << fmt(table.C_hat) << "\nholder_slope " << fmt(table.slope)
          << "\nholder_rows_pass " << (table.pass ? "yes" : "no") << "\nfirst_response_J1 " << fmt(first.J1_value)
          << "\nfirst_response_grad_norm " << fmt(first.grad_norm) << "\nresult " << (all ? "pass" : "fail") << "\n";
  log << "best-response: " << table.rows.size() << " pairs, slope " << table.slope << ", C_hat " << table.C_hat
      << ": " << (all ? "pass" : "fail") << "\n";
  return all ? kExitPass : kExitNumeric;
}

int cmd_train(const RunConfig& cfg, std::ostream& log) {
  const GameSpec game = make_game(cfg.game);
  if (cfg.train.mode == TrainMode::Unsupervised) require_kappa(game, "train");
  const fs::path dir = prepare_dir(cfg);
  const BrownianEnsemble ens = make_ensemble(cfg);
  const CompactSetSpec set = make_compact_set(cfg.compact_set, ens);
  const fs::path ckpt = dir / "checkpoint.tensors";
  AttentionalNO no(cfg.op, cfg.horizon);
  TrainState state;
  if (cfg.resume && fs::exists(ckpt)) {
    load_checkpoint(ckpt.string(), cfg.horizon, no, state);
    log << "train: resuming after epoch " << state.epoch << "\n";
  }
  TrainResult res;
  if (cfg.train.mode == TrainMode::Supervised) {
    const auto samples = sample(set, static_cast<std::size_t>(cfg.train_count), hash_combine(cfg.seed, 21), ens);
    std::vector<AdaptedProcess> held;
    if (cfg.held_out_count > 0) held = sample(set, static_cast<std::size_t>(cfg.held_out_count), hash_combine(cfg.seed, 22), ens);
    res = train_supervised(no, game, samples, held, cfg.solver, cfg.train, ens, &state);
  } else {
    res = train_unsupervised(no, game, make_box(cfg.compact_set), cfg.solver, cfg.train, ens, &state);
  }
  save_checkpoint(ckpt.string(), no, state);
  auto loss = open_out(dir / "loss.csv");
  write_loss_csv(loss, res.curve);
  const BudgetReport budget = no.total_parameters();
  bool pass = true;
  if (cfg.tolerances.sup_error_ratio) pass = res.sup_error <= *cfg.tolerances.sup_error_ratio * res.target_sup_norm;
  auto summary = open_out(dir / "summary.txt");
  summary << "mode " << (cfg.train.mode == TrainMode::Supervised ? "supervised" : "unsupervised")
          << "\nepochs " << state.epoch << "\nfinal_loss " << fmt(res.final_loss) << "\nsup_error "
          << fmt(res.sup_error) << "\ntarget_sup_norm " << fmt(res.target_sup_norm) << "\nparameters "
          << budget.total << "\nbudget " << budget.budget << "\n";
  if (cfg.train.mode == TrainMode::Unsupervised) {
    summary << "objective operator steps minimize the mean follower cost J1(u0, U(u0)) over controls drawn from the "
               "coefficient box plus the current leader point; leader steps minimize J0(u0, U(u0)) by projected "
               "gradient descent\nleader_J0 "
            << fmt(res.leader_J0) << "\nleader";
    for (double b : res.leader) summary << ' ' << fmt(b);
    summary << "\n";
  }
  summary << "result " << (pass ? "pass" : "fail") << "\n";
  log << "train: " << state.epoch << " epochs, final loss " << res.final_loss << ", sup error " << res.sup_error
      << " (target sup norm " << res.target_sup_norm << ")\n";
  return pass ? kExitPass : kExitNumeric;
}

int cmd_certify(const RunConfig& cfg, std::ostream& log) {
  const GameSpec game = make_game(cfg.game);
  require_kappa(game, "certify");
  const fs::path dir(cfg.output_dir);
  const fs::path ckpt = cfg.certify.checkpoint.empty() ? dir / "checkpoint.tensors" : fs::path(cfg.certify.checkpoint);
  if (!fs::exists(ckpt)) throw ConfigError("certify: cannot read checkpoint '" + ckpt.string() + "'");
  fs::create_directories(dir);
  const BrownianEnsemble ens = make_ensemble(cfg);
  AttentionalNO no;
  TrainState state;
  load_checkpoint(ckpt.string(), cfg.horizon, no, state);

  AdaptedProcess leader = AdaptedProcess::zeros(ens);
  if (!state.leader.empty()) {
    const CoefficientBox box = make_box(cfg.compact_set);
    std::vector<double> beta = state.leader;
    if (cfg.certify.leader_steps > 0) {
      beta = optimize_leader(no, game, box, beta, cfg.certify.leader_steps, cfg.train.leader_learning_rate, ens);
    }
    leader = synthesize(beta, ProjectionBasis::first(beta.size(), cfg.horizon), ens);
  }
  const CompactSetSpec set = make_compact_set(cfg.compact_set, ens);
  const auto probes = sample(set, static_cast<std::size_t>(cfg.certify.probes), hash_combine(cfg.seed, 31), ens);
  const auto responses = best_response_targets(game, probes, cfg.solver, ens);
  const EquilibriumCertificate cert = certify(no, game, leader, probes, responses, ens);
  const GapScan gap = objective_gap_scan(no, game, probes, responses, ens);

  auto txt = open_out(dir / "certificate.txt");
  write_certificate(txt, cert);
  txt << "max_objective_gap " << fmt(gap.max_gap) << "\nthreshold " << fmt(cfg.tolerances.epsilon) << "\n";
  auto eps = open_out(dir / "epsilon.csv");
  eps << "eps0,eps1,eps,max_gap,probes_u0,probes_u1\n"
      << fmt(cert.eps0) << ',' << fmt(cert.eps1) << ',' << fmt(cert.eps) << ',' << fmt(gap.max_gap) << ','
      << cert.probes_u0 << ',' << cert.probes_u1 << '\n';
  auto g = open_out(dir / "gap.csv");
  g << "sample_id,J0_star,J0_hat,gap\n";
  for (std::size_t k = 0; k < gap.rows.size(); ++k) {
    g << k << ',' << fmt(gap.rows[k].J0_star) << ',' << fmt(gap.rows[k].J0_hat) << ',' << fmt(gap.rows[k].gap) << '\n';
  }
  const bool pass = cert.eps <= cfg.tolerances.epsilon && gap.max_gap <= cfg.tolerances.epsilon;
  txt << "result " << (pass ? "pass" : "fail") << "\n";
  log << "certify: eps " << cert.eps << " (eps0 " << cert.eps0 << ", eps1 " << cert.eps1 << "), max gap "
      << gap.max_gap << ": " << (pass ? "pass" : "fail") << "\n";
  return pass ? kExitPass : kExitNumeric;
}

int cmd_counterexample(const RunConfig& cfg, std::ostream& log) {
  const fs::path dir = prepare_dir(cfg);
  auto out = open_out(dir / "table.csv");
  out << "u0,value,enum_value\n";
  bool pass = true;
  for (double u0 : cfg.counterexample.grid) {
    const double v = counterexample_value(u0);
    const double e = counterexample_value_grid(u0, cfg.counterexample.G);
    pass = pass && v == e && v == (u0 == 0.0 ? -1.0 : 0.0);
    out << fmt(u0) << ',' << fmt(v) << ',' << fmt(e) << '\n';
  }
  log << "counterexample: " << cfg.counterexample.grid.size() << " grid points, G = " << cfg.counterexample.G << ": "
      << (pass ? "pass" : "fail") << "\n";
  return pass ? kExitPass : kExitNumeric;
}

int cmd_sim(const RunConfig& cfg, std::ostream& log) {
  const GameSpec game = make_game(cfg.game);
  const fs::path dir = prepare_dir(cfg);
  const BrownianEnsemble ens = make_ensemble(cfg);
  const AdaptedProcess u0 = AdaptedProcess::constant(ens, cfg.sim.u0, game.d0);
  const AdaptedProcess u1 = AdaptedProcess::constant(ens, cfg.sim.u1, game.d1);
  const StatePath X = simulate(game, u0, u1, ens);
  auto st = open_out(dir / "state.csv");
  st << "scenario,step,component,value\n";
  for (std::size_t p = 0; p < std::min(X.paths, cfg.sim.export_paths); ++p) {
    for (int m = 0; m <= X.steps; ++m) {
      for (int c = 0; c < X.dim; ++c) st << p << ',' << m << ',' << c << ',' << fmt(X(p, m, c)) << '\n';
    }
  }
  auto co = open_out(dir / "costs.csv");
  co << "player,mean,std_error\n";
  for (int player = 0; player < 2; ++player) {
    const McEstimate e = mc_estimate(cost_samples(game, player, u0, u1, ens));
    co << player << ',' << fmt(e.mean) << ',' << fmt(e.std_error) << '\n';
    log << "sim: J" << player << " = " << e.mean << " +- " << e.std_error << "\n";
  }
  return kExitPass;
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stackelberg games with neural operators"};
  app.require_subcommand(1);
  unsigned threads = 1;
  app.add_option("--threads", threads, "cap on worker threads")->check(CLI::PositiveNumber);
  std::string config_path, output;
  auto add = [&](const char* name, const char* desc, bool needs_config) {
    CLI::App* sub = app.add_subcommand(name, desc);
    auto* opt = sub->add_option("-c,--config", config_path, "run configuration (JSON)");
    if (needs_config) opt->required();
    sub->add_option("-o,--output", output, "output directory (overrides outputs.directory)");
    return sub;
  };
  CLI::App* basis = add("basis-check", "empirical Gram matrix and adaptedness of the first basis elements", true);
  CLI::App* br = add("best-response", "follower best responses with continuity certificates", true);
  CLI::App* train = add("train", "train an attentional neural operator", true);
  CLI::App* cert = add("certify", "equilibrium certificate and objective gap scan from a checkpoint", true);
  CLI::App* cx = add("counterexample", "discontinuous leader value table", false);
  CLI::App* sim = add("sim", "simulate the game state under constant controls", true);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitPass : kExitConfig;
  }
  set_max_threads(threads);
  try {
    RunConfig cfg = config_path.empty() ? parse_config(nlohmann::json::object()) : load_config(config_path);
    if (!output.empty()) cfg.output_dir = output;
    if (basis->parsed()) return cmd_basis_check(cfg, out);
    if (br->parsed()) return cmd_best_response(cfg, out);
    if (train->parsed()) return cmd_train(cfg, out);
    if (cert->parsed()) return cmd_certify(cfg, out);
    if (cx->parsed()) return cmd_counterexample(cfg, out);
    if (sim->parsed()) return cmd_sim(cfg, out);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const RefusalError& e) {
    err << "refused: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DimensionError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DomainError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const SimulationError& e) {
    err << "simulation error: " << e.what() << " (scenario " << e.scenario() << ", step " << e.step() << ")\n";
    return kExitNumeric;
  } catch (const ConvergenceError& e) {
    err << "convergence failure: " << e.what() << " (last gradient norm " << e.last_grad_norm() << ")\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitConfig;
}

}  // namespace stackelberg::cli
