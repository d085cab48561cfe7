#include "stackelberg/best_response.hpp"

#include <algorithm>
#include <cmath>

#include "stackelberg/error.hpp"
#include "stackelberg/rng.hpp"

namespace stackelberg {

void ResponseSolveConfig::validate() const {
  if (d1_basis < 1) throw ConfigError("best response: d1_basis must be >= 1");
  if (!(grad_tol > 0.0)) throw ConfigError("best response: grad_tol must be positive");
  if (max_iters < 1) throw ConfigError("best response: max_iters must be >= 1");
  if (restarts < 1) throw ConfigError("best response: restarts must be >= 1");
  if (step_rule == StepRule::Fixed && !(fixed_step > 0.0)) throw ConfigError("best response: fixed_step must be positive");
}

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

struct Objective {
  const GameSpec& spec;
  const AdaptedProcess& u0;
  const BrownianEnsemble& ens;
  std::shared_ptr<const std::vector<AdaptedProcess>> vals;
  std::size_t n;
  std::size_t k;

  AdaptedProcess control(const std::vector<double>& beta) const {
    AdaptedProcess u = AdaptedProcess::zeros(ens, static_cast<int>(k));
    auto out = u.mutable_values();
    for (std::size_t i = 0; i < n; ++i) {
      const auto s = (*vals)[i].values();
      for (std::size_t c = 0; c < k; ++c) {
        const double w = beta[i * k + c];
        if (w == 0.0) continue;
        for (std::size_t j = 0; j < s.size(); ++j) out[j * k + c] += w * s[j];
      }
    }
    return u;
  }

  double operator()(const std::vector<double>& beta, std::vector<double>& grad) const {
    const AdaptedProcess u1 = control(beta);
    const CostGradient cg = cost_with_gradient(spec, 1, u0, u1, ens, false, true);
    grad.assign(n * k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto s = (*vals)[i].values();
      for (std::size_t c = 0; c < k; ++c) {
        double acc = 0.0;
        for (std::size_t j = 0; j < s.size(); ++j) acc += cg.d_u1[j * k + c] * s[j];
        grad[i * k + c] = acc;
      }
    }
    return cg.value;
  }
};

struct Descent {
  std::vector<double> beta;
  double value = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
};

Descent descend(const Objective& f, std::vector<double> beta, const ResponseSolveConfig& cfg, double kappa) {
  std::vector<double> g;
  double J = f(beta, g);
  double gn = std::sqrt(dot(g, g));
  double bb = 1.0 / kappa;
  constexpr double armijo = 1e-4;
  std::vector<double> trial(beta.size()), gt;
  for (int it = 0; it < cfg.max_iters; ++it) {
    if (gn <= cfg.grad_tol) return {beta, J, gn, it};
    double alpha = cfg.step_rule == StepRule::Fixed ? cfg.fixed_step : bb;
    double Jt = 0.0;
    bool accepted = false;
    for (int k = 0; k < 60; ++k) {
      for (std::size_t i = 0; i < beta.size(); ++i) trial[i] = beta[i] - alpha * g[i];
      Jt = f(trial, gt);
      if (cfg.step_rule == StepRule::Fixed) {
        accepted = std::isfinite(Jt);
        break;
      }
      // round-off allowance: near the optimum the Armijo decrease is below double resolution
      if (Jt <= J - armijo * alpha * gn * gn + 1e-13 * (1.0 + std::abs(J))) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      throw ConvergenceError("best response: line search failed (gradient norm " + std::to_string(gn) + ")", beta, gn);
    }
    double ss = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < beta.size(); ++i) {
      const double s = trial[i] - beta[i];
      const double y = gt[i] - g[i];
      ss += s * s;
      sy += s * y;
    }
    bb = sy > 0.0 ? ss / sy : 2.0 * alpha;
    beta = trial;
    g = gt;
    J = Jt;
    gn = std::sqrt(dot(g, g));
  }
  if (gn <= cfg.grad_tol) return {beta, J, gn, cfg.max_iters};
  throw ConvergenceError("best response: no convergence after " + std::to_string(cfg.max_iters) +
                             " iterations (gradient norm " + std::to_string(gn) + ")",
                         beta, gn);
}

}  // namespace

ResponseResult solve(const GameSpec& spec, const AdaptedProcess& u0, const ResponseSolveConfig& cfg,
                     const BrownianEnsemble& ens) {
  return solve(spec, u0, cfg, ens, ProjectionBasis::first(static_cast<std::size_t>(cfg.d1_basis), ens.config()));
}

ResponseResult solve(const GameSpec& spec, const AdaptedProcess& u0, const ResponseSolveConfig& cfg,
                     const BrownianEnsemble& ens, const ProjectionBasis& basis) {
  cfg.validate();
  spec.validate();
  if (!spec.kappa) {
    throw RefusalError("best response: game '" + spec.name +
                       "' declares no strong-convexity modulus kappa; the response may be set-valued or "
                       "discontinuous, so no selection is certified");
  }
  if (basis.size() < static_cast<std::size_t>(cfg.d1_basis)) throw DimensionError("best response: basis too small");
  const Objective f{spec, u0, ens, basis.evaluated(ens), static_cast<std::size_t>(cfg.d1_basis),
                    static_cast<std::size_t>(spec.d1)};
  const std::size_t dim = f.n * f.k;
  std::vector<Descent> runs;
  Rng rng(hash_combine(cfg.seed, 0xb0e5ULL));
  for (int r = 0; r < cfg.restarts; ++r) {
    std::vector<double> start(dim, 0.0);
    if (r > 0) {
      for (double& v : start) v = cfg.init_scale * rng.normal();
    }
    runs.push_back(descend(f, std::move(start), cfg, *spec.kappa));
  }
  std::size_t best = 0;
  for (std::size_t r = 1; r < runs.size(); ++r) {
    if (runs[r].value < runs[best].value) best = r;
  }
  ResponseResult res;
  for (const auto& run : runs) {
    double d2 = 0.0;
    for (std::size_t i = 0; i < dim; ++i) d2 += (run.beta[i] - runs[best].beta[i]) * (run.beta[i] - runs[best].beta[i]);
    res.restart_spread = std::max(res.restart_spread, std::sqrt(d2));
  }
  res.coeffs = runs[best].beta;
  res.J1_value = runs[best].value;
  res.grad_norm = runs[best].grad_norm;
  res.iterations = runs[best].iterations;
  res.process = synthesize(res.coeffs, basis, ens, spec.d1);
  return res;
}

std::pair<std::size_t, double> enumerate_best_response(const GameSpec& spec, const AdaptedProcess& u0,
                                                       const std::vector<AdaptedProcess>& candidates,
                                                       const BrownianEnsemble& ens) {
  if (candidates.empty()) throw DimensionError("enumerate_best_response: empty candidate list");
  std::size_t best = 0;
  double best_value = cost(spec, 1, u0, candidates[0], ens);
  for (std::size_t k = 1; k < candidates.size(); ++k) {
    const double v = cost(spec, 1, u0, candidates[k], ens);
    if (v < best_value) {
      best = k;
      best_value = v;
    }
  }
  return {best, best_value};
}

ConvexityReport convexity_certificate(const GameSpec& spec, const AdaptedProcess& u0, const AdaptedProcess& u0_tilde,
                                      const AdaptedProcess& U_u0, const AdaptedProcess& U_u0_tilde,
                                      const BrownianEnsemble& ens, double tolerance) {
  if (!spec.kappa) throw RefusalError("convexity certificate: game declares no kappa");
  (void)u0_tilde;
  const double kappa = *spec.kappa;
  const auto Ja = cost_samples(spec, 1, u0, U_u0_tilde, ens);
  const auto Jb = cost_samples(spec, 1, u0, U_u0, ens);
  AdaptedProcess diff = U_u0;
  diff -= U_u0_tilde;
  const auto sq = inner_product_samples(diff, diff);
  std::vector<double> slack(ens.paths());
  ConvexityReport rep;
  for (std::size_t p = 0; p < ens.paths(); ++p) {
    const double lhs = 0.5 * kappa * sq[p];
    const double rhs = Ja[p] - Jb[p];
    slack[p] = rhs - lhs;
    rep.lhs += lhs;
    rep.rhs += rhs;
  }
  const double P = static_cast<double>(ens.paths());
  rep.lhs /= P;
  rep.rhs /= P;
  rep.slack = rep.rhs - rep.lhs;
  rep.slack_std_error = mc_estimate(slack).std_error;
  rep.tolerance = tolerance;
  rep.pass = rep.slack >= -(3.0 * rep.slack_std_error + tolerance);
  return rep;
}

HolderTable holder_diagnostic(const GameSpec& spec, const std::vector<std::pair<AdaptedProcess, AdaptedProcess>>& pairs,
                              const ResponseSolveConfig& cfg, const BrownianEnsemble& ens, double tolerance) {
  if (!spec.kappa) throw RefusalError("holder diagnostic: game declares no kappa");
  const double kappa = *spec.kappa;
  const ProjectionBasis basis = ProjectionBasis::first(static_cast<std::size_t>(cfg.d1_basis), ens.config());
  HolderTable table;
  std::vector<double> quotients;
  for (const auto& [a, b] : pairs) {
    const ResponseResult Ua = solve(spec, a, cfg, ens, basis);
    const ResponseResult Ub = solve(spec, b, cfg, ens, basis);
    HolderRow row;
    AdaptedProcess du0 = a;
    du0 -= b;
    AdaptedProcess dU = Ua.process;
    dU -= Ub.process;
    row.du0_norm = norm(du0);
    row.dU_norm = norm(dU);
    row.certificate = convexity_certificate(spec, a, b, Ua.process, Ub.process, ens, tolerance);
    if (row.du0_norm > 0.0) {
      double q = 0.0;
      for (const AdaptedProcess* v : {&Ua.process, &Ub.process}) {
        q = std::max(q, std::abs(cost(spec, 1, a, *v, ens) - cost(spec, 1, b, *v, ens)) / row.du0_norm);
      }
      quotients.push_back(q);
    }
    table.rows.push_back(row);
  }
  for (double q : quotients) table.C_hat = std::max(table.C_hat, q);
  std::vector<double> xs, ys;
  table.pass = true;
  for (auto& row : table.rows) {
    row.bound = (2.0 / std::sqrt(kappa)) * std::sqrt(2.0 * table.C_hat * row.du0_norm);
    // solver tolerance enters the squared bound through the convexity chain
    const double allowed = std::sqrt(row.bound * row.bound + 2.0 * tolerance / kappa);
    row.pass = row.dU_norm <= allowed && row.certificate.pass;
    table.pass = table.pass && row.pass;
    if (row.du0_norm > 0.0 && row.dU_norm > 0.0) {
      xs.push_back(row.du0_norm);
      ys.push_back(row.dU_norm);
    }
  }
  table.slope = xs.size() >= 2 ? loglog_slope(xs, ys) : 0.0;
  return table;
}

double linear_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw DimensionError("slope: need at least two matching points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) throw DomainError("slope: x values are all equal");
  return sxy / sxx;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < std::min(x.size(), y.size()); ++i) {
    if (x[i] > 0.0 && y[i] > 0.0) {
      lx.push_back(std::log(x[i]));
      ly.push_back(std::log(y[i]));
    }
  }
  return linear_slope(lx, ly);
}

}  // namespace stackelberg
