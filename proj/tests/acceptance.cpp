// Acceptance runs A1-A7. Prints one PASS/FAIL line per criterion; exit status is the
// number of failures. Usage: acceptance [output_root] [A1 A2 ...]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "commands.hpp"
#include "config.hpp"
#include "oracles.hpp"
#include "stackelberg/ad.hpp"
#include "stackelberg/best_response.hpp"
#include "stackelberg/chaos_basis.hpp"
#include "stackelberg/compact_sets.hpp"
#include "stackelberg/game.hpp"
#include "stackelberg/mlp.hpp"
#include "stackelberg/neural_operator.hpp"
#include "stackelberg/process_space.hpp"
#include "stackelberg/rng.hpp"
#include "stackelberg/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stackelberg;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

fs::path g_root = "acceptance_runs";

std::map<std::string, std::string> read_summary(const fs::path& p) {
  std::map<std::string, std::string> kv;
  std::ifstream in(p);
  for (std::string line; std::getline(in, line);) {
    const auto sp = line.find(' ');
    if (sp != std::string::npos) kv[line.substr(0, sp)] = line.substr(sp + 1);
  }
  return kv;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

cli::RunConfig config_in(const json& doc, const std::string& dir) {
  cli::RunConfig cfg = cli::parse_config(doc);
  cfg.output_dir = (g_root / dir).string();
  return cfg;
}

// ---- A1 ---------------------------------------------------------------------

void a1(Outcome& o) {
  const HorizonConfig h{1.0, 256, 1};
  const BrownianEnsemble ens(h, 100000, 2024);
  const auto elems = basis_elements(16, h);
  double worst = 0.0;  // largest |G - I| / SE
  int failures = 0;
  for (std::size_t i = 0; i < 16; ++i) {
    for (std::size_t j = i; j < 16; ++j) {
      const McEstimate e = mc_estimate(basis_inner_samples(elems[i], elems[j], ens));
      const double dev = std::abs(e.mean - (i == j ? 1.0 : 0.0));
      if (dev > 3.0 * e.std_error + 1e-12) ++failures;
      if (e.std_error > 0.0) worst = std::max(worst, dev / e.std_error);
    }
  }
  // every step probed on a 512-path copy of the grid
  const BrownianEnsemble small(h, 512, 77);
  int unadapted = 0;
  for (const auto& e : elems) unadapted += check_adapted(evaluate_basis(e, small), small) ? 0 : 1;
  o.detail << "Gram entries outside 3 SE: " << failures << "/136, max |G-I|/SE " << worst
           << ", non-adapted elements: " << unadapted << "/16";
  o.require(failures == 0, "Gram within 3 SE");
  o.require(unadapted == 0, "adaptedness");
}

// ---- A2 ---------------------------------------------------------------------

void a2(Outcome& o) {
  const json doc{{"horizon", {{"M", 32}}},
                 {"ensemble", {{"P", 512}, {"seed", 3}}},
                 {"game", {{"name", "scalar_quadratic"}}},
                 {"basis", {{"d1", 16}}},
                 {"best_response", {{"pairs", 20}, {"eps_min", 0.01}, {"eps_max", 0.1}}},
                 {"compact_set", {{"type", "holder"}, {"alpha", 0.5}, {"bound", 1.0}}}};
  const cli::RunConfig cfg = config_in(doc, "A2");
  std::ostringstream log;
  const int code = cli::cmd_best_response(cfg, log);
  const auto rows = read_csv(fs::path(cfg.output_dir) / "certificate.csv");
  const auto holder = read_csv(fs::path(cfg.output_dir) / "holder.csv");
  const auto summary = read_summary(fs::path(cfg.output_dir) / "summary.txt");
  double min_margin = 1e300;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const double slack = std::stod(rows[k][5]);
    const double se = std::stod(holder[k][4]);
    min_margin = std::min(min_margin, slack + 3.0 * se + 1e-4);
  }
  const double slope = std::stod(summary.at("holder_slope"));
  o.detail << rows.size() << " pairs, min slack margin " << min_margin << ", log-log slope " << slope << ", C_hat "
           << summary.at("C_hat");
  o.require(code == cli::kExitPass && rows.size() == 20 && min_margin >= 0.0, "slack >= -(3 SE + 1e-4)");
  o.require(slope >= 0.4, "slope >= 0.4");
}

// ---- A3 ---------------------------------------------------------------------

json a3_config(int seed, int W) {
  return json{{"horizon", {{"M", 32}}},
              {"ensemble", {{"P", 256}, {"seed", 5}}},
              {"game", {{"name", "tracking"}, {"params", {{"a", 0.5}, {"b", 0.8}}}}},
              {"basis", {{"d1", 8}, {"d_enc", 8}}},
              {"operator", {{"N", 16}, {"Q", 8}, {"J", 3}, {"W", W}, {"seed", seed}}},
              {"training",
               {{"epochs", 600},
                {"batch_size", 16},
                {"learning_rate", 0.01},
                {"momentum", 0.9},
                {"seed", seed},
                {"train_count", 64},
                {"held_out_count", 16}}},
              {"compact_set", {{"type", "holder"}, {"alpha", 0.5}, {"bound", 1.0}}},
              {"tolerances", {{"sup_error_ratio", 0.05}}}};
}

void a3(Outcome& o) {
  for (int seed : {1, 2}) {
    double err[2] = {0.0, 0.0};
    for (int k = 0; k < 2; ++k) {
      const int W = k == 0 ? 32 : 64;
      const cli::RunConfig cfg = config_in(a3_config(seed, W), "A3_seed" + std::to_string(seed) + "_W" + std::to_string(W));
      std::ostringstream log;
      const int code = cli::cmd_train(cfg, log);
      const auto s = read_summary(fs::path(cfg.output_dir) / "summary.txt");
      err[k] = std::stod(s.at("sup_error"));
      const double norm_star = std::stod(s.at("target_sup_norm"));
      o.detail << "seed " << seed << " W " << W << ": sup error " << err[k] << " (limit " << 0.05 * norm_star << "); ";
      o.require(code == cli::kExitPass, "sup error <= 0.05 sup|U*| (seed " + std::to_string(seed) + ", W " +
                                           std::to_string(W) + ")");
      // 10-epoch window means of the loss never increase
      const auto rows = read_csv(fs::path(cfg.output_dir) / "loss.csv");
      std::vector<double> windows;
      for (std::size_t i = 0; i + 10 <= rows.size(); i += 10) {
        double m = 0.0;
        for (std::size_t j = i; j < i + 10; ++j) m += std::stod(rows[j][1]);
        windows.push_back(m / 10.0);
      }
      bool monotone = true;
      for (std::size_t i = 1; i < windows.size(); ++i) monotone = monotone && windows[i] <= windows[i - 1];
      o.require(monotone, "smoothed loss nonincreasing");
    }
    o.require(err[1] < err[0], "W=64 beats W=32 for seed " + std::to_string(seed));
  }
}

// ---- A4 ---------------------------------------------------------------------

void a4(Outcome& o) {
  const json doc{{"horizon", {{"M", 32}}},
                 {"ensemble", {{"P", 256}, {"seed", 7}}},
                 {"game", {{"name", "tracking"}, {"params", {{"a", 0.0}, {"b", 1.0}}}}},
                 {"basis", {{"d1", 16}, {"d_enc", 8}}},
                 {"operator", {{"N", 2}, {"Q", 8}, {"J", 2}, {"W", 16}, {"seed", 1}}},
                 {"training",
                  {{"mode", "unsupervised"},
                   {"epochs", 1500},
                   {"batch_size", 16},
                   {"learning_rate", 0.01},
                   {"momentum", 0.9},
                   {"seed", 1}}},
                 {"compact_set", {{"type", "exp_ellipsoid"}, {"C", 0.5}, {"r", 0.5}, {"count", 12}}},
                 {"certify", {{"probes", 64}}},
                 {"tolerances", {{"epsilon", 5e-2}}}};
  const cli::RunConfig cfg = config_in(doc, "A4");
  std::ostringstream log;
  o.require(cli::cmd_train(cfg, log) == cli::kExitPass, "training");
  const int code = cli::cmd_certify(cfg, log);
  const auto eps = read_csv(fs::path(cfg.output_dir) / "epsilon.csv");
  const double e = std::stod(eps.at(0)[2]), gap = std::stod(eps.at(0)[3]);
  o.detail << "eps " << e << " (eps0 " << eps[0][0] << ", eps1 " << eps[0][1] << "), max objective gap " << gap;
  o.require(code == cli::kExitPass && e <= 5e-2 && gap <= 5e-2, "eps and gap <= 5e-2");

  // superset monotonicity over nested probe prefixes
  const BrownianEnsemble ens(cfg.horizon, cfg.paths, cfg.seed);
  AttentionalNO no;
  TrainState st;
  load_checkpoint((fs::path(cfg.output_dir) / "checkpoint.tensors").string(), cfg.horizon, no, st);
  const AdaptedProcess leader = synthesize(st.leader, ProjectionBasis::first(st.leader.size(), cfg.horizon), ens);
  const auto probes = sample(cli::make_compact_set(cfg.compact_set, ens), 64, hash_combine(cfg.seed, 31), ens);
  const auto responses = best_response_targets(cli::make_game(cfg.game), probes, cfg.solver, ens);
  double prev = -1.0;
  bool monotone = true;
  o.detail << ", nested eps:";
  for (std::size_t n : {4u, 8u, 16u, 32u, 64u}) {
    const std::vector<AdaptedProcess> p0(probes.begin(), probes.begin() + n), p1(responses.begin(), responses.begin() + n);
    const double en = certify(no, cli::make_game(cfg.game), leader, p0, p1, ens).eps;
    o.detail << ' ' << en;
    monotone = monotone && en >= prev;
    prev = en;
  }
  o.require(monotone, "superset monotonicity");
}

// ---- A5 ---------------------------------------------------------------------

void a5(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const cli::RunConfig cfg = config_in(json{{"counterexample", {{"G", 10000}}}}, "A5");
  std::ostringstream log;
  const int code = cli::cmd_counterexample(cfg, log);
  const auto rows = read_csv(fs::path(cfg.output_dir) / "table.csv");
  bool exact = rows.size() == 11;
  for (const auto& r : rows) {
    const double u0 = std::stod(r[0]);
    const double want = u0 == 0.0 ? -1.0 : 0.0;
    exact = exact && std::stod(r[1]) == want && std::stod(r[2]) == want;
  }
  bool no_zero = true;
  for (int k = 1; k <= 10; ++k) no_zero = no_zero && counterexample_value(0.1 * k) == 0.0;
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  o.detail << rows.size() << " grid points, G = 10000, " << secs << " s";
  o.require(code == cli::kExitPass && exact, "table exact");
  o.require(no_zero, "grid without 0 is all zeros");
  o.require(secs < 1.0, "runtime < 1 s");
}

// ---- A6 ---------------------------------------------------------------------

using Unary = std::function<ad::Var(const ad::Var&)>;

double worst_unary(const std::string& name, const Unary& f, double lo, double hi,
                   const std::function<bool(double)>& ok = [](double) { return true; }) {
  Rng rng(std::hash<std::string>{}(name));
  double worst = 0.0;
  for (int checked = 0; checked < 100;) {
    const double x = rng.uniform(lo, hi);
    if (!ok(x)) continue;
    ad::Tape tape;
    ad::Tape::Scope scope(tape);
    const ad::Var v = tape.variable(x);
    const double g = ad::adjoint_of(tape.gradient(f(v)), v);
    const double fd = oracles::derivative([&](double s) { return f(ad::Var(s)).value(); }, x, 1e-4);
    worst = std::max(worst, std::abs(g - fd) / std::max(std::abs(fd), 1e-2));
    ++checked;
  }
  return worst;
}

bool off_even(double t) {
  if (std::abs(t) < 1e-3) return false;
  if (t < 0.0) return true;
  const double r = std::fmod(t, 2.0);
  return r > 1e-3 && r < 2.0 - 1e-3;
}

double a6_autodiff() {
  const ad::Var c(0.7);
  double w = 0.0;
  w = std::max(w, worst_unary("exp", [](const ad::Var& x) { return ad::exp(x); }, -3, 3));
  w = std::max(w, worst_unary("log", [](const ad::Var& x) { return ad::log(x); }, 0.1, 5));
  w = std::max(w, worst_unary("sqrt", [](const ad::Var& x) { return ad::sqrt(x); }, 0.1, 5));
  w = std::max(w, worst_unary("tanh", [](const ad::Var& x) { return ad::tanh(x); }, -3, 3));
  w = std::max(w, worst_unary("sin", [](const ad::Var& x) { return ad::sin(x); }, -3, 3));
  w = std::max(w, worst_unary("cos", [](const ad::Var& x) { return ad::cos(x); }, -3, 3));
  w = std::max(w, worst_unary("abs", [](const ad::Var& x) { return ad::abs(x); }, -3, 3,
                              [](double x) { return std::abs(x) > 1e-3; }));
  w = std::max(w, worst_unary("square", [](const ad::Var& x) { return ad::square(x); }, -3, 3));
  w = std::max(w, worst_unary("pow", [](const ad::Var& x) { return ad::pow(x, 4); }, -2, 2));
  w = std::max(w, worst_unary("relu", [](const ad::Var& x) { return ad::relu(x); }, -3, 3,
                              [](double x) { return std::abs(x) > 1e-3; }));
  w = std::max(w, worst_unary("clamp", [](const ad::Var& x) { return ad::clamp(x, -1.0, 1.0); }, -3, 3,
                              [](double x) { return std::abs(std::abs(x) - 1.0) > 1e-3; }));
  w = std::max(w, worst_unary("add", [c](const ad::Var& x) { return x + c; }, -3, 3));
  w = std::max(w, worst_unary("sub", [c](const ad::Var& x) { return c - x; }, -3, 3));
  w = std::max(w, worst_unary("mul", [c](const ad::Var& x) { return x * c * x; }, -3, 3));
  w = std::max(w, worst_unary("div", [c](const ad::Var& x) { return c / x; }, 0.2, 3));
  w = std::max(w, worst_unary("max", [c](const ad::Var& x) { return ad::max(x, c); }, -3, 3,
                              [](double x) { return std::abs(x - 0.7) > 1e-3; }));
  w = std::max(w, worst_unary("min", [c](const ad::Var& x) { return ad::min(x, c); }, -3, 3,
                              [](double x) { return std::abs(x - 0.7) > 1e-3; }));
  w = std::max(w, worst_unary("se-t", [](const ad::Var& t) { return ad::superexpressive(ad::Var(0.3), t); }, -5, 7,
                              off_even));
  w = std::max(w, worst_unary("se-alpha", [](const ad::Var& a) { return ad::superexpressive(a, ad::Var(2.7)); }, -2,
                              2));
  return w;
}

double a6_simulator_gradient() {
  const BrownianEnsemble ens({1.0, 16, 1}, 64, 9);
  const GameSpec g = catalog_scalar_quadratic(0.3, 0.2, 0.7);
  Rng rng(3);
  std::vector<double> a(ens.paths() * 16), b(ens.paths() * 16);
  for (double& x : a) x = rng.uniform(-1, 1);
  for (double& x : b) x = rng.uniform(-1, 1);
  const AdaptedProcess u0 = AdaptedProcess::unchecked(ens, 1, a), u1 = AdaptedProcess::unchecked(ens, 1, b);
  double worst = 0.0;
  for (int player : {0, 1}) {
    const CostGradient cg = cost_with_gradient(g, player, u0, u1, ens);
    for (std::size_t i = 0; i < a.size(); i += 37) {
      for (int which : {0, 1}) {
        auto f = [&](double s) {
          AdaptedProcess v0 = u0, v1 = u1;
          (which == 0 ? v0 : v1).mutable_values()[i] = s;
          return cost(g, player, v0, v1, ens);
        };
        const double x0 = (which == 0 ? u0 : u1).values()[i];
        const double fd = oracles::derivative(f, x0, 1e-3);
        const double gd = which == 0 ? cg.d_u0[i] : cg.d_u1[i];
        worst = std::max(worst, std::abs(gd - fd) / std::max(std::abs(fd), 1e-8));
      }
    }
  }
  return worst;
}

double a6_strong_order(std::vector<double>& errs) {
  const double mu = 0.5, eta = 0.8, X0 = 1.0;
  const BrownianEnsemble fine({1.0, 512, 1}, 10000, 11);
  const GameSpec g = catalog_gbm(mu, eta, X0);
  std::vector<double> dts;
  for (int M : {64, 128, 256, 512}) {
    const BrownianEnsemble ens = M == 512 ? fine : fine.coarsened(512 / M);
    const AdaptedProcess z = AdaptedProcess::zeros(ens);
    const std::vector<double> xT = cost_samples(g, 1, z, z, ens);
    double e = 0.0;
    for (std::size_t p = 0; p < ens.paths(); ++p) {
      const double exact = X0 * std::exp((mu - 0.5 * eta * eta) + eta * fine.brownian(p, 512));
      e += std::abs(xT[p] - exact);
    }
    errs.push_back(e / static_cast<double>(ens.paths()));
    dts.push_back(1.0 / M);
  }
  return loglog_slope(dts, errs);
}

struct CountCase {
  std::string label;
  OperatorConfig cfg;
  std::size_t hand;  // by hand: sum over layers of d_{j+1} d_j + d_j (+ d_j for alpha), plus the output offset
  bool budget_expected;
};

void a6(Outcome& o) {
  const double ad_err = a6_autodiff();
  const double sim_err = a6_simulator_gradient();
  std::vector<double> errs;
  const double order = a6_strong_order(errs);
  o.detail << "autodiff max rel err " << ad_err << ", simulator gradient max rel err " << sim_err
           << ", GBM strong order " << order << " (errors";
  for (double e : errs) o.detail << ' ' << e;
  o.detail << ")";
  o.require(ad_err < 1e-6, "autodiff vs finite differences");
  o.require(sim_err < 1e-4, "simulator gradient vs finite differences");
  o.require(order >= 0.45, "strong order >= 0.45");

  auto make = [](int d, int N, int Q, int J, int W, ActivationFamily f) {
    OperatorConfig c;
    c.d_enc = d;
    c.N = N;
    c.Q = Q;
    c.J = J;
    c.W = W;
    c.family = f;
    return c;
  };
  // 1 -> 4 -> 1 super-expressive: (4 + 1 + 1) + (4 + 4 + 4) + 1 = 19 per net
  // 8 -> 32 -> 32 -> 16 and 8 -> 32 -> 32 -> 128 super-expressive: 1952 + 5648
  // 4 -> 16 -> 16 -> 2 and 4 -> 16 -> 16 -> 6 standard: 390 + 458
  const std::vector<CountCase> cases{
      {"1-4-1", make(1, 1, 1, 2, 4, ActivationFamily::SuperExpressive), 38, false},
      {"d8-N16-Q8-J3-W32", make(8, 16, 8, 3, 32, ActivationFamily::SuperExpressive), 7600, true},
      {"d4-N2-Q3-J3-W16 standard", make(4, 2, 3, 3, 16, ActivationFamily::Standard), 848, false},
  };
  for (const auto& c : cases) {
    AttentionalNO no(c.cfg, {1.0, 32, 1});
    for (double& p : no.processor().parameters()) p = 0.25;
    for (double& p : no.values_net().parameters()) p = -0.5;
    const BudgetReport r = no.total_parameters();
    const std::size_t arith = dense_parameter_arithmetic(no.processor().dims(), c.cfg.family) +
                              dense_parameter_arithmetic(no.values_net().dims(), c.cfg.family);
    o.detail << "; " << c.label << ": " << r.total << " (arith " << arith << ", budget " << r.budget
             << (r.within ? " within" : " exceeded") << ")";
    o.require(r.total == c.hand && arith == c.hand, "parameter count " + c.label);
    if (c.budget_expected) o.require(r.within, "budget " + c.label);
  }
}

// ---- A7 ---------------------------------------------------------------------

void a7(Outcome& o) {
  const double C = 1.0, r = 0.5;
  const BrownianEnsemble ens({1.0, 64, 1}, 4000, 13);
  const ExpEllipsoidSet set{std::nullopt, C, r, 24};
  const auto samples = sample(set, 20, 21, ens);
  std::vector<double> ds, means;
  int violations = 0;
  for (int d : {2, 4, 8, 12}) {
    const ProjectionBasis basis = ProjectionBasis::first(static_cast<std::size_t>(d), ens.config());
    const double bound = exp_ellipsoid_truncation_bound(C, r, d);
    double mean = 0.0, worst = 0.0;
    for (const auto& u : samples) {
      AdaptedProcess rest = u;
      rest -= project(u, basis, ens).reconstruction;
      const McEstimate e = inner_product_estimate(rest, rest);
      const double measured = std::sqrt(std::max(e.mean, 0.0));
      // 3 sigma on the squared norm
      if (e.mean > bound * bound + 3.0 * e.std_error) ++violations;
      mean += measured / static_cast<double>(samples.size());
      worst = std::max(worst, measured);
    }
    o.detail << "d=" << d << " mean " << mean << " max " << worst << " bound " << bound << "; ";
    ds.push_back(d);
    means.push_back(std::log(mean));
  }
  const double slope = linear_slope(ds, means);
  o.detail << "log-linear slope " << slope;
  o.require(violations == 0, "measured <= bound + 3 sigma");
  o.require(slope <= -r / 2.0 + 0.1, "slope <= -r/2 + 0.1");
}

}  // namespace

int main(int argc, char** argv) {
  std::set<std::string> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a.size() == 2 && a[0] == 'A') {
      only.insert(a);
    } else {
      g_root = a;
    }
  }
  fs::create_directories(g_root);
  const std::vector<std::pair<std::string, void (*)(Outcome&)>> all{
      {"A1", a1}, {"A2", a2}, {"A3", a3}, {"A4", a4}, {"A5", a5}, {"A6", a6}, {"A7", a7}};
  int failures = 0;
  for (const auto& [name, fn] : all) {
    if (!only.empty() && !only.count(name)) continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      fn(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failures;
    std::printf("%s %s (%.1f s) %s\n", name.c_str(), o.pass ? "PASS" : "FAIL", secs, o.detail.str().c_str());
    std::fflush(stdout);
  }
  return failures;
}
