#include "stackelberg/game.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "stackelberg/error.hpp"
#include "stackelberg/parallel.hpp"
#include "stackelberg/rng.hpp"

namespace stackelberg {

void GameSpec::validate() const {
  if (d < 1 || d0 < 1 || d1 < 1) throw ConfigError("game " + name + ": dimensions must be positive");
  if (!drift || !diffusion || !running0 || !running1 || !terminal0 || !terminal1) {
    throw ConfigError("game " + name + ": missing coefficient callable");
  }
  if (X0.size() != static_cast<std::size_t>(d)) throw ConfigError("game " + name + ": X0 has the wrong length");
  if (kappa && !(*kappa > 0.0)) throw ConfigError("game " + name + ": kappa must be positive");
  if (K && !(*K > 0.0)) throw ConfigError("game " + name + ": K must be positive");
}

namespace {

void require_controls(const GameSpec& spec, const AdaptedProcess& u0, const AdaptedProcess& u1,
                      const BrownianEnsemble& ens) {
  spec.validate();
  if (u0.components() != spec.d0 || u1.components() != spec.d1) {
    throw DimensionError("game " + spec.name + ": control dimensions do not match the game definition");
  }
  if (u0.ensemble_fingerprint() != ens.fingerprint() || u1.ensemble_fingerprint() != ens.fingerprint()) {
    throw DimensionError("game " + spec.name + ": controls were not computed on this ensemble");
  }
}

struct ScenarioOutcome {
  ad::Var cost[2];
  int bad_step = -1;
};

// One Euler-Maruyama path; u0v/u1v hold M*d0 and M*d1 values.
ScenarioOutcome run_scenario(const GameSpec& spec, const BrownianEnsemble& ens, std::size_t p,
                             std::span<const ad::Var> u0v, std::span<const ad::Var> u1v, const bool want[2],
                             double* states) {
  const int M = ens.steps();
  const int nd = ens.dim();
  const double dt = ens.config().dt();
  const auto d = static_cast<std::size_t>(spec.d);
  ScenarioOutcome out;
  std::vector<ad::Var> x(spec.X0.begin(), spec.X0.end());
  std::vector<ad::Var> next(d);
  if (states) std::copy(spec.X0.begin(), spec.X0.end(), states);
  for (int m = 0; m < M; ++m) {
    const auto a = u0v.subspan(static_cast<std::size_t>(m) * spec.d0, spec.d0);
    const auto b = u1v.subspan(static_cast<std::size_t>(m) * spec.d1, spec.d1);
    for (int i = 0; i < 2; ++i) {
      if (want[i]) out.cost[i] += (i == 0 ? spec.running0 : spec.running1)(x, a, b) * dt;
    }
    const auto f = spec.drift(x, a, b);
    const auto s = spec.diffusion(x, a, b);
    if (f.size() != d || s.size() != d * static_cast<std::size_t>(nd)) {
      throw DimensionError("game " + spec.name + ": drift/diffusion output has the wrong size");
    }
    for (std::size_t i = 0; i < d; ++i) {
      ad::Var v = x[i] + f[i] * dt;
      for (int c = 0; c < nd; ++c) {
        const ad::Var& sc = s[i * static_cast<std::size_t>(nd) + static_cast<std::size_t>(c)];
        if (sc.recorded() || sc.value() != 0.0) v += sc * ens.increment(p, m, c);
      }
      next[i] = v;
      const double xv = v.value();
      if (!std::isfinite(xv) || std::abs(xv) > kExplosionBound) {
        out.bad_step = m + 1;
        return out;
      }
      if (states) states[(static_cast<std::size_t>(m) + 1) * d + i] = xv;
    }
    std::swap(x, next);
  }
  for (int i = 0; i < 2; ++i) {
    if (want[i]) out.cost[i] += (i == 0 ? spec.terminal0 : spec.terminal1)(x);
  }
  return out;
}

std::vector<ad::Var> constants(std::span<const double> v) { return std::vector<ad::Var>(v.begin(), v.end()); }

[[noreturn]] void explode(const GameSpec& spec, std::size_t p, int step) {
  throw SimulationError("game " + spec.name + ": state exploded (non-finite or |X| > 1e8) in scenario " +
                            std::to_string(p) + " at step " + std::to_string(step),
                        p, static_cast<std::size_t>(step));
}

void raise_first_bad(const GameSpec& spec, const std::vector<int>& bad) {
  for (std::size_t p = 0; p < bad.size(); ++p) {
    if (bad[p] >= 0) explode(spec, p, bad[p]);
  }
}

}  // namespace

StatePath simulate(const GameSpec& spec, const AdaptedProcess& u0, const AdaptedProcess& u1,
                   const BrownianEnsemble& ens) {
  require_controls(spec, u0, u1, ens);
  StatePath path;
  path.paths = ens.paths();
  path.steps = ens.steps();
  path.dim = spec.d;
  const std::size_t stride = (static_cast<std::size_t>(path.steps) + 1) * static_cast<std::size_t>(spec.d);
  path.X.assign(path.paths * stride, 0.0);
  std::vector<int> bad(path.paths, -1);
  const bool want[2] = {false, false};
  parallel_for(path.paths, [&](std::size_t p) {
    const auto a = constants(u0.scenario(p));
    const auto b = constants(u1.scenario(p));
    bad[p] = run_scenario(spec, ens, p, a, b, want, path.X.data() + p * stride).bad_step;
  });
  raise_first_bad(spec, bad);
  return path;
}

std::vector<double> cost_samples(const GameSpec& spec, int player, const AdaptedProcess& u0, const AdaptedProcess& u1,
                                 const BrownianEnsemble& ens) {
  if (player != 0 && player != 1) throw DomainError("cost: player must be 0 or 1");
  require_controls(spec, u0, u1, ens);
  std::vector<double> out(ens.paths());
  std::vector<int> bad(ens.paths(), -1);
  const bool want[2] = {player == 0, player == 1};
  parallel_for(ens.paths(), [&](std::size_t p) {
    const auto a = constants(u0.scenario(p));
    const auto b = constants(u1.scenario(p));
    const auto r = run_scenario(spec, ens, p, a, b, want, nullptr);
    bad[p] = r.bad_step;
    out[p] = r.cost[player].value();
  });
  raise_first_bad(spec, bad);
  return out;
}

double cost(const GameSpec& spec, int player, const AdaptedProcess& u0, const AdaptedProcess& u1,
            const BrownianEnsemble& ens) {
  const auto s = cost_samples(spec, player, u0, u1, ens);
  double acc = 0.0;
  for (double v : s) acc += v;
  return acc / static_cast<double>(s.size());
}

CostGradient cost_with_gradient(const GameSpec& spec, int player, const AdaptedProcess& u0, const AdaptedProcess& u1,
                                const BrownianEnsemble& ens, bool want_u0, bool want_u1) {
  if (player != 0 && player != 1) throw DomainError("cost: player must be 0 or 1");
  require_controls(spec, u0, u1, ens);
  const std::size_t P = ens.paths();
  CostGradient out;
  out.d_u0.assign(want_u0 ? u0.values().size() : 0, 0.0);
  out.d_u1.assign(want_u1 ? u1.values().size() : 0, 0.0);
  std::vector<double> values(P);
  std::vector<int> bad(P, -1);
  const bool want[2] = {player == 0, player == 1};
  const double scale = 1.0 / static_cast<double>(P);
  parallel_for(P, [&](std::size_t p) {
    ad::Tape tape;
    ad::Tape::Scope scope(tape);
    const auto s0 = u0.scenario(p);
    const auto s1 = u1.scenario(p);
    const auto a = want_u0 ? tape.variables(s0) : constants(s0);
    const auto b = want_u1 ? tape.variables(s1) : constants(s1);
    const auto r = run_scenario(spec, ens, p, a, b, want, nullptr);
    bad[p] = r.bad_step;
    if (r.bad_step >= 0) return;
    const ad::Var& J = r.cost[player];
    values[p] = J.value();
    if (!J.recorded()) return;
    const auto adj = tape.gradient(J);
    if (want_u0) {
      for (std::size_t i = 0; i < a.size(); ++i) out.d_u0[p * a.size() + i] = scale * ad::adjoint_of(adj, a[i]);
    }
    if (want_u1) {
      for (std::size_t i = 0; i < b.size(); ++i) out.d_u1[p * b.size() + i] = scale * ad::adjoint_of(adj, b[i]);
    }
  });
  raise_first_bad(spec, bad);
  double acc = 0.0;
  for (double v : values) acc += v;
  out.value = acc * scale;
  return out;
}

LipschitzCheck lipschitz_spot_check(const GameSpec& spec, std::size_t samples, std::uint64_t seed, double radius,
                                    std::ostream* warn) {
  spec.validate();
  Rng rng(seed);
  const std::size_t n = static_cast<std::size_t>(spec.d + spec.d0 + spec.d1);
  auto outputs = [&](const std::vector<double>& z) {
    std::vector<ad::Var> x(z.begin(), z.begin() + spec.d);
    std::vector<ad::Var> a(z.begin() + spec.d, z.begin() + spec.d + spec.d0);
    std::vector<ad::Var> b(z.begin() + spec.d + spec.d0, z.end());
    std::vector<double> out;
    for (const auto& v : spec.drift(x, a, b)) out.push_back(v.value());
    for (const auto& v : spec.diffusion(x, a, b)) out.push_back(v.value());
    out.push_back(spec.running0(x, a, b).value());
    out.push_back(spec.running1(x, a, b).value());
    out.push_back(spec.terminal0(x).value());
    out.push_back(spec.terminal1(x).value());
    return out;
  };
  LipschitzCheck res;
  for (std::size_t s = 0; s < samples; ++s) {
    std::vector<double> z1(n), z2(n);
    for (std::size_t i = 0; i < n; ++i) {
      z1[i] = rng.uniform(-radius, radius);
      z2[i] = rng.uniform(-radius, radius);
    }
    const auto f1 = outputs(z1);
    const auto f2 = outputs(z2);
    double dz = 0.0;
    for (std::size_t i = 0; i < n; ++i) dz += (z1[i] - z2[i]) * (z1[i] - z2[i]);
    if (dz == 0.0) continue;
    for (std::size_t i = 0; i < f1.size(); ++i) {
      res.max_ratio = std::max(res.max_ratio, std::abs(f1[i] - f2[i]) / std::sqrt(dz));
    }
  }
  if (spec.K && res.max_ratio > *spec.K) {
    res.within_declared = false;
    if (warn) {
      *warn << "warning: game " << spec.name << ": sampled Lipschitz quotient " << res.max_ratio
            << " exceeds declared K = " << *spec.K << " on the box of radius " << radius << "\n";
    }
  }
  return res;
}

// ---- catalog ---------------------------------------------------------------

namespace {
std::vector<ad::Var> affine(const Eigen::MatrixXd& A, VarSpan x, const Eigen::MatrixXd& B, VarSpan u) {
  std::vector<ad::Var> out(static_cast<std::size_t>(A.rows()));
  for (Eigen::Index r = 0; r < A.rows(); ++r) {
    ad::Var acc = 0.0;
    for (Eigen::Index c = 0; c < A.cols(); ++c) {
      if (A(r, c) != 0.0) acc += A(r, c) * x[c];
    }
    for (Eigen::Index c = 0; c < B.cols(); ++c) {
      if (B(r, c) != 0.0) acc += B(r, c) * u[c];
    }
    out[r] = acc;
  }
  return out;
}
}  // namespace

GameSpec catalog_strongly_convex(const StronglyConvexParams& pr) {
  if (!(pr.l11_modulus > 0.0)) throw ConfigError("strongly convex game: L11 modulus must be positive");
  if (!(pr.cl_lower_bound > 0.0)) throw ConfigError("strongly convex game: inf C^L must be positive");
  if (!pr.L11) throw ConfigError("strongly convex game: L11 is required");
  const auto rows_s = static_cast<Eigen::Index>(pr.d * pr.noise_dim);
  auto check = [](const Eigen::MatrixXd& m, Eigen::Index r, Eigen::Index c, const char* what) {
    if (m.rows() != r || m.cols() != c) throw ConfigError(std::string("strongly convex game: bad shape for ") + what);
  };
  check(pr.A, pr.d, pr.d, "A");
  check(pr.B, pr.d, pr.d1, "B");
  check(pr.As, rows_s, pr.d, "A^sigma");
  check(pr.Bs, rows_s, pr.d1, "B^sigma");
  GameSpec g;
  g.name = "strongly_convex";
  g.d = pr.d;
  g.d0 = pr.d0;
  g.d1 = pr.d1;
  g.drift = [pr](VarSpan x, VarSpan u0, VarSpan u1) {
    auto v = affine(pr.A, x, pr.B, u1);
    const ad::Var c = pr.C(u0);
    const auto D = pr.D ? pr.D(u0) : std::vector<ad::Var>(v.size(), 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = c * v[i] + D[i];
    return v;
  };
  g.diffusion = [pr](VarSpan x, VarSpan u0, VarSpan u1) {
    auto v = affine(pr.As, x, pr.Bs, u1);
    const ad::Var c = pr.Cs(u0);
    const auto D = pr.Ds ? pr.Ds(u0) : std::vector<ad::Var>(v.size(), 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = c * v[i] + D[i];
    return v;
  };
  g.running1 = [pr](VarSpan x, VarSpan u0, VarSpan u1) { return pr.CL(u0) * pr.L11(x, u1) + pr.L21(u0); };
  g.terminal1 = pr.g1;
  g.running0 = pr.L0;
  g.terminal0 = pr.g0;
  g.X0 = pr.X0;
  g.K = pr.K;
  g.kappa = pr.l11_modulus * pr.cl_lower_bound;
  g.validate();
  return g;
}

GameSpec catalog_scalar_quadratic(double sigma, double q, double X0) {
  GameSpec g;
  g.name = "scalar_quadratic";
  g.drift = [](VarSpan, VarSpan u0, VarSpan u1) { return std::vector<ad::Var>{u0[0] + u1[0]}; };
  g.diffusion = [sigma](VarSpan, VarSpan, VarSpan) { return std::vector<ad::Var>{ad::Var(sigma)}; };
  g.running1 = [q](VarSpan x, VarSpan u0, VarSpan u1) { return ad::square(u1[0] - u0[0]) + q * ad::square(x[0]); };
  g.terminal1 = [](VarSpan x) { return ad::square(x[0]); };
  g.running0 = [](VarSpan x, VarSpan u0, VarSpan) { return ad::square(x[0]) + ad::square(u0[0]); };
  g.terminal0 = [](VarSpan) { return ad::Var(0.0); };
  g.X0 = {X0};
  g.K = 4.0;
  g.kappa = 2.0;
  g.validate();
  return g;
}

GameSpec catalog_tracking(double a, double b, double w0, double w1) {
  GameSpec g;
  g.name = "tracking";
  g.drift = [](VarSpan, VarSpan, VarSpan) { return std::vector<ad::Var>{ad::Var(0.0)}; };
  g.diffusion = [](VarSpan, VarSpan, VarSpan) { return std::vector<ad::Var>{ad::Var(0.0)}; };
  g.running1 = [a, b](VarSpan, VarSpan u0, VarSpan u1) { return ad::square(u1[0] - (a + b * u0[0])); };
  g.terminal1 = [](VarSpan) { return ad::Var(0.0); };
  g.running0 = [w0, w1](VarSpan, VarSpan u0, VarSpan u1) {
    return w0 * ad::square(u0[0]) + w1 * ad::square(u1[0]);
  };
  g.terminal0 = [](VarSpan) { return ad::Var(0.0); };
  g.X0 = {0.0};
  g.K = 4.0 * std::max(1.0, std::abs(b));
  g.kappa = 2.0;
  g.validate();
  return g;
}

GameSpec catalog_gbm(double mu, double eta, double X0) {
  GameSpec g;
  g.name = "gbm";
  g.drift = [mu](VarSpan x, VarSpan, VarSpan) { return std::vector<ad::Var>{mu * x[0]}; };
  g.diffusion = [eta](VarSpan x, VarSpan, VarSpan) { return std::vector<ad::Var>{eta * x[0]}; };
  g.running0 = [](VarSpan, VarSpan, VarSpan) { return ad::Var(0.0); };
  g.running1 = g.running0;
  g.terminal0 = [](VarSpan x) { return x[0]; };
  g.terminal1 = g.terminal0;
  g.X0 = {X0};
  g.K = std::max(std::abs(mu), std::abs(eta));
  g.validate();
  return g;
}

StaticGame counterexample_game() {
  return {[](double, double u1) { return -u1; }, [](double u0, double u1) { return u0 * u1; }};
}

double counterexample_value(double u0) {
  if (!(u0 >= 0.0 && u0 <= 1.0)) throw DomainError("counterexample: u0 must lie in [0,1]");
  return u0 == 0.0 ? -1.0 : 0.0;
}

double counterexample_value_grid(double u0, int G) {
  if (!(u0 >= 0.0 && u0 <= 1.0)) throw DomainError("counterexample: u0 must lie in [0,1]");
  if (G < 1) throw DomainError("counterexample: grid size must be positive");
  const StaticGame game = counterexample_game();
  double best1 = 0.0;
  for (int k = 0; k <= G; ++k) {
    const double v = game.loss1(u0, static_cast<double>(k) / G);
    if (k == 0 || v < best1) best1 = v;
  }
  double value = 0.0;
  bool first = true;
  for (int k = 0; k <= G; ++k) {
    const double u1 = static_cast<double>(k) / G;
    if (game.loss1(u0, u1) > best1) continue;
    const double l0 = game.loss0(u0, u1);
    if (first || l0 < value) value = l0;
    first = false;
  }
  return value + 0.0;
}

GameSpec catalog_counterexample() {
  GameSpec g;
  g.name = "counterexample";
  g.drift = [](VarSpan, VarSpan, VarSpan) { return std::vector<ad::Var>{ad::Var(0.0)}; };
  g.diffusion = [](VarSpan, VarSpan, VarSpan) { return std::vector<ad::Var>{ad::Var(0.0)}; };
  g.running1 = [](VarSpan, VarSpan u0, VarSpan u1) { return u0[0] * u1[0]; };
  g.running0 = [](VarSpan, VarSpan, VarSpan u1) { return -u1[0]; };
  g.terminal0 = [](VarSpan) { return ad::Var(0.0); };
  g.terminal1 = g.terminal0;
  g.X0 = {0.0};
  g.validate();
  return g;
}

}  // namespace stackelberg
