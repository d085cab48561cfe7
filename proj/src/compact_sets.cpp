#include "stackelberg/compact_sets.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include "stackelberg/error.hpp"
#include "stackelberg/rng.hpp"

namespace stackelberg {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

// E[clamp(Y, -1, 1)] for Y ~ N(m, v^2).
double clamped_normal_mean(double m, double v) {
  if (v <= 0.0) return std::clamp(m, -1.0, 1.0);
  const double lo = (-1.0 - m) / v;
  const double hi = (1.0 - m) / v;
  const double inside = m * (normal_cdf(hi) - normal_cdf(lo)) + v * (normal_pdf(lo) - normal_pdf(hi));
  return -normal_cdf(lo) + (1.0 - normal_cdf(hi)) + inside;
}

// Exact alpha-Holder seminorm of the piecewise-linear interpolant (attained at knots).
double knot_seminorm(const std::vector<double>& t, const std::vector<double>& v, double alpha) {
  double s = 0.0;
  for (std::size_t j = 0; j < t.size(); ++j) {
    for (std::size_t k = j + 1; k < t.size(); ++k) s = std::max(s, std::abs(v[k] - v[j]) / std::pow(t[k] - t[j], alpha));
  }
  return s;
}

AdaptedProcess holder_sample(const HolderDeterministicSet& h, std::uint64_t seed, const BrownianEnsemble& ens) {
  Rng rng(seed);
  const double T = ens.config().T;
  const auto K = static_cast<std::size_t>(h.knots);
  std::vector<double> t(K), v(K, 0.0);
  for (std::size_t k = 0; k < K; ++k) t[k] = T * static_cast<double>(k) / static_cast<double>(K - 1);
  for (std::size_t k = 1; k < K; ++k) v[k] = v[k - 1] + rng.normal() * std::sqrt(t[k] - t[k - 1]);
  const double s = knot_seminorm(t, v, h.alpha);
  const double scale = s > 0.0 ? h.bound * rng.uniform(0.5, 1.0) / s : 0.0;
  const double offset = rng.uniform(-h.bound, h.bound);
  for (double& x : v) x = offset + scale * x;
  return AdaptedProcess::deterministic(ens, [t, v](double s_) {
    const auto it = std::upper_bound(t.begin(), t.end(), s_);
    if (it == t.begin()) return v.front();
    if (it == t.end()) return v.back();
    const auto k = static_cast<std::size_t>(it - t.begin());
    const double w = (s_ - t[k - 1]) / (t[k] - t[k - 1]);
    return (1.0 - w) * v[k - 1] + w * v[k];
  });
}

AdaptedProcess lipschitz_sample(const LipschitzConditionedSet& l, std::uint64_t seed, const BrownianEnsemble& ens) {
  Rng rng(seed);
  const double a = rng.uniform(-l.lip, l.lip);
  const double b = l.offset > 0.0 ? rng.uniform(-l.offset, l.offset) : 0.0;
  return AdaptedProcess::causal(ens, [a, b](const BrownianEnsemble& e) {
    AdaptedProcess u = AdaptedProcess::zeros(e);
    const double T = e.config().T;
    const double dt = e.config().dt();
    for (std::size_t p = 0; p < e.paths(); ++p) {
      double W = 0.0;
      for (int m = 0; m < e.steps(); ++m) {
        // W_T | F_{t_m} ~ N(W_{t_m}, T - t_m)
        u.at(p, m) = clamped_normal_mean(a * W + b, std::abs(a) * std::sqrt(T - m * dt));
        W += e.increment(p, m);
      }
    }
    return u;
  });
}

AdaptedProcess span_sample(const std::vector<double>& beta, const BrownianEnsemble& ens) {
  return synthesize(beta, ProjectionBasis::first(beta.size(), ens.config()), ens);
}

void track(MembershipReport& r, const std::string& what, long index, double value, double limit) {
  const double margin = limit - value;
  const double current = r.constraint.empty() ? std::numeric_limits<double>::infinity() : r.limit - r.value;
  if (margin < current) {
    r.constraint = what;
    r.index = index;
    r.value = value;
    r.limit = limit;
  }
  if (!(value <= limit)) r.pass = false;
}

}  // namespace

void validate(const CompactSetSpec& spec) {
  std::visit(Overloaded{
                 [](const FiniteSet& f) {
                   if (f.elements.empty()) throw ConfigError("finite set: no elements");
                 },
                 [](const HolderDeterministicSet& h) {
                   if (!(h.alpha > 0.0 && h.alpha <= 1.0)) throw ConfigError("holder set: need 0 < alpha <= 1");
                   if (!(h.bound >= 0.0)) throw ConfigError("holder set: bound must be nonnegative");
                   if (h.knots < 2) throw ConfigError("holder set: need at least 2 knots");
                 },
                 [](const LipschitzConditionedSet& l) {
                   if (!(l.lip >= 0.0) || !(l.offset >= 0.0)) throw ConfigError("lipschitz set: lip and offset must be nonnegative");
                 },
                 [](const ExpEllipsoidSet& e) {
                   if (!(e.C >= 0.0)) throw ConfigError("ellipsoid set: need C >= 0");
                   if (!(e.r > 0.0)) throw ConfigError("ellipsoid set: need r > 0");
                   if (e.count == 0) throw ConfigError("ellipsoid set: count must be positive");
                 },
                 [](const LatentManifoldSet& m) {
                   if (m.d_lat < 1 || m.net.dims().empty() || m.net.input_dim() != m.d_lat) {
                     throw ConfigError("latent manifold: net input must have dimension d_lat");
                   }
                 },
             },
             spec);
}

std::vector<AdaptedProcess> sample(const CompactSetSpec& spec, std::size_t n, std::uint64_t seed,
                                   const BrownianEnsemble& ens) {
  validate(spec);
  if (n == 0) throw DomainError("sample: n must be at least 1");
  std::vector<AdaptedProcess> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::uint64_t s = hash_combine(seed, k);
    out.push_back(std::visit(
        Overloaded{
            [&](const FiniteSet& f) {
              Rng rng(s);
              const auto& u = f.elements[rng.below(f.elements.size())];
              return u.provenance() == Provenance::Causal ? u.reevaluate(ens) : u;
            },
            [&](const HolderDeterministicSet& h) { return holder_sample(h, s, ens); },
            [&](const LipschitzConditionedSet& l) { return lipschitz_sample(l, s, ens); },
            [&](const ExpEllipsoidSet& e) {
              Rng rng(s);
              std::vector<double> beta(e.count);
              for (std::size_t i = 0; i < e.count; ++i) {
                const double b = e.C * std::exp(-e.r * static_cast<double>(i + 1));
                beta[i] = rng.uniform(-b, b);
              }
              AdaptedProcess u = span_sample(beta, ens);
              if (e.ubar) u += *e.ubar;
              return u;
            },
            [&](const LatentManifoldSet& m) {
              Rng rng(s);
              Eigen::VectorXd z(m.d_lat);
              for (int i = 0; i < m.d_lat; ++i) z(i) = rng.uniform(-1.0, 1.0);
              const Eigen::VectorXd c = m.net.forward(z);
              return span_sample(std::vector<double>(c.data(), c.data() + c.size()), ens);
            },
        },
        spec));
  }
  return out;
}

std::vector<double> gram_coefficients(const AdaptedProcess& u, std::size_t count, const BrownianEnsemble& ens) {
  const ProjectionBasis basis = ProjectionBasis::first(count, ens.config());
  const auto b = encode(u, basis, ens);
  const auto g = basis.gram(ens);
  const auto n = static_cast<Eigen::Index>(count);
  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> G(g.data(), n, n);
  const Eigen::VectorXd beta = G.ldlt().solve(Eigen::Map<const Eigen::VectorXd>(b.data(), n));
  return {beta.data(), beta.data() + beta.size()};
}

double exp_ellipsoid_truncation_bound(double C, double r, int d) {
  return std::sqrt(C * C * std::exp(-r * d) / (1.0 - std::exp(-2.0 * r)));
}

MembershipReport membership_check(const CompactSetSpec& spec, const AdaptedProcess& u, const BrownianEnsemble& ens,
                                  double tolerance) {
  validate(spec);
  MembershipReport rep;
  std::visit(
      Overloaded{
          [&](const FiniteSet& f) {
            double best = std::numeric_limits<double>::infinity();
            long arg = -1;
            for (std::size_t k = 0; k < f.elements.size(); ++k) {
              if (!f.elements[k].same_shape(u)) continue;
              AdaptedProcess d = u;
              d -= f.elements[k];
              const double n = norm(d);
              if (n < best) {
                best = n;
                arg = static_cast<long>(k);
              }
            }
            track(rep, "distance to nearest element", arg, best, tolerance);
          },
          [&](const HolderDeterministicSet& h) {
            const int M = u.steps();
            double spread = 0.0;
            for (std::size_t p = 1; p < u.paths(); ++p) {
              for (int m = 0; m < M; ++m) spread = std::max(spread, std::abs(u(p, m) - u(0, m)));
            }
            track(rep, "scenario dependence", -1, spread, tolerance);
            const double dt = u.dt();
            for (int m = 0; m < M; ++m) {
              for (int k = m + 1; k < M; ++k) {
                const double q = std::abs(u(0, k) - u(0, m)) / std::pow((k - m) * dt, h.alpha);
                track(rep, "holder quotient from step " + std::to_string(m) + " to " + std::to_string(k),
                      static_cast<long>(m) * M + k, q, h.bound + tolerance);
              }
            }
          },
          [&](const LipschitzConditionedSet&) {
            double sup = 0.0;
            for (double v : u.values()) sup = std::max(sup, std::abs(v));
            track(rep, "sup norm", -1, sup, 1.0 + tolerance);
            double spread = 0.0;
            for (std::size_t p = 1; p < u.paths(); ++p) spread = std::max(spread, std::abs(u(p, 0) - u(0, 0)));
            track(rep, "initial value dependence on scenario", 0, spread, tolerance);
            // E[u_m] = u_0 up to Monte-Carlo error
            for (int m = 1; m < u.steps(); ++m) {
              std::vector<double> diff(u.paths());
              for (std::size_t p = 0; p < u.paths(); ++p) diff[p] = u(p, m) - u(p, 0);
              const McEstimate e = mc_estimate(diff);
              track(rep, "martingale mean drift at step " + std::to_string(m), m, std::abs(e.mean),
                    3.0 * e.std_error + tolerance);
            }
          },
          [&](const ExpEllipsoidSet& e) {
            AdaptedProcess v = u;
            if (e.ubar) v -= *e.ubar;
            const auto beta = gram_coefficients(v, e.count, ens);
            for (std::size_t i = 0; i < e.count; ++i) {
              track(rep, "coefficient " + std::to_string(i + 1), static_cast<long>(i + 1), std::abs(beta[i]),
                    e.C * std::exp(-e.r * static_cast<double>(i + 1)) + tolerance);
            }
            AdaptedProcess rest = v;
            rest -= span_sample(beta, ens);
            const double tail = e.C * std::exp(-e.r * static_cast<double>(e.count + 1)) /
                                std::sqrt(1.0 - std::exp(-2.0 * e.r));
            track(rep, "residual beyond coefficient " + std::to_string(e.count), static_cast<long>(e.count + 1),
                  norm(rest), tail + tolerance);
          },
          [&](const LatentManifoldSet& m) {
            const auto count = static_cast<std::size_t>(m.net.output_dim());
            const auto beta = gram_coefficients(u, count, ens);
            AdaptedProcess rest = u;
            rest -= span_sample(beta, ens);
            track(rep, "residual outside the span", -1, norm(rest), tolerance);
          },
      },
      spec);
  return rep;
}

namespace {

std::vector<ad::Var> as_vars(const std::vector<double>& v) { return {v.begin(), v.end()}; }

// Upper-triangular products v_a v_b, a <= b.
void quad_features(const std::vector<double>& v, std::vector<double>& out) {
  for (std::size_t a = 0; a < v.size(); ++a) {
    for (std::size_t b = a; b < v.size(); ++b) out.push_back(v[a] * v[b]);
  }
}

Eigen::MatrixXd symmetric_from(const Eigen::VectorXd& theta, Eigen::Index offset, int n) {
  Eigen::MatrixXd S(n, n);
  Eigen::Index k = offset;
  for (int a = 0; a < n; ++a) {
    for (int b = a; b < n; ++b) {
      if (a == b) {
        S(a, a) = theta(k);
      } else {
        S(a, b) = S(b, a) = 0.5 * theta(k);
      }
      ++k;
    }
  }
  return S;
}

struct Fit {
  Eigen::MatrixXd theta;  // outputs x features
  double residual = 0.0;
  bool regularized = false;
};

Fit least_squares(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& Y, const std::string& what, std::ostream* warn) {
  Fit fit;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Z);
  if (qr.rank() < Z.cols()) {
    fit.regularized = true;
    if (warn) {
      *warn << "warning: " << what << " design has rank " << qr.rank() << " < " << Z.cols()
            << " (" << Z.rows() << " anchors); using ridge 1e-8\n";
    }
    const Eigen::MatrixXd N = Z.transpose() * Z + 1e-8 * Eigen::MatrixXd::Identity(Z.cols(), Z.cols());
    fit.theta = N.ldlt().solve(Z.transpose() * Y).transpose();
  } else {
    fit.theta = qr.solve(Y).transpose();
  }
  fit.residual = (Z * fit.theta.transpose() - Y).squaredNorm();
  return fit;
}

Eigen::VectorXd to_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<ad::Var> affine(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B1, const Eigen::MatrixXd& B2, VarSpan x,
                            VarSpan u0, VarSpan u1) {
  std::vector<ad::Var> out(static_cast<std::size_t>(A.rows()));
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    ad::Var acc = 0.0;
    for (Eigen::Index j = 0; j < A.cols(); ++j) acc += A(i, j) * x[static_cast<std::size_t>(j)];
    for (Eigen::Index j = 0; j < B1.cols(); ++j) acc += B1(i, j) * u0[static_cast<std::size_t>(j)];
    for (Eigen::Index j = 0; j < B2.cols(); ++j) acc += B2(i, j) * u1[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(i)] = acc;
  }
  return out;
}

ad::Var quadratic(const Eigen::MatrixXd& S, VarSpan v) {
  ad::Var acc = 0.0;
  for (Eigen::Index a = 0; a < S.rows(); ++a) {
    for (Eigen::Index b = 0; b < S.cols(); ++b) acc += S(a, b) * v[static_cast<std::size_t>(a)] * v[static_cast<std::size_t>(b)];
  }
  return acc;
}

}  // namespace

LinearizedGame linearize_game(const GameSpec& spec, const std::vector<AnchorPoint>& anchors, std::ostream* warn) {
  spec.validate();
  if (anchors.empty()) throw ConfigError("linearize_game: no anchor points");
  const int d = spec.d, d0 = spec.d0, d1 = spec.d1;
  const int n = d + d0 + d1;
  const auto N = static_cast<Eigen::Index>(anchors.size());
  for (const auto& a : anchors) {
    if (static_cast<int>(a.x.size()) != d || static_cast<int>(a.v0.size()) != d0 || static_cast<int>(a.v1.size()) != d1) {
      throw DimensionError("linearize_game: anchor dimensions do not match the game");
    }
  }
  const auto first = anchors.front();
  const auto sig0 = spec.diffusion(as_vars(first.x), as_vars(first.v0), as_vars(first.v1));
  if (sig0.size() % static_cast<std::size_t>(d) != 0) throw DimensionError("linearize_game: diffusion size is not a multiple of d");
  const auto ks = static_cast<Eigen::Index>(sig0.size());

  Eigen::MatrixXd Z(N, n), Yf(N, d), Ys(N, ks);
  const int qx = d * (d + 1) / 2;
  const int qv[2] = {d0 * (d0 + 1) / 2, d1 * (d1 + 1) / 2};
  Eigen::MatrixXd Zr[2] = {Eigen::MatrixXd(N, qx + qv[0]), Eigen::MatrixXd(N, qx + qv[1])};
  Eigen::MatrixXd Zg(N, qx);
  Eigen::MatrixXd Yr(N, 2), Yg(N, 2);
  for (Eigen::Index k = 0; k < N; ++k) {
    const auto& a = anchors[static_cast<std::size_t>(k)];
    const auto x = as_vars(a.x), v0 = as_vars(a.v0), v1 = as_vars(a.v1);
    Z.row(k) << to_vec(a.x).transpose(), to_vec(a.v0).transpose(), to_vec(a.v1).transpose();
    const auto f = spec.drift(x, v0, v1);
    const auto s = spec.diffusion(x, v0, v1);
    for (int i = 0; i < d; ++i) Yf(k, i) = f[static_cast<std::size_t>(i)].value();
    for (Eigen::Index i = 0; i < ks; ++i) Ys(k, i) = s[static_cast<std::size_t>(i)].value();
    std::vector<double> feats;
    quad_features(a.x, feats);
    Zg.row(k) = to_vec(feats).transpose();
    for (int p = 0; p < 2; ++p) {
      std::vector<double> fr = feats;
      quad_features(p == 0 ? a.v0 : a.v1, fr);
      Zr[p].row(k) = to_vec(fr).transpose();
    }
    Yr(k, 0) = spec.running0(x, v0, v1).value();
    Yr(k, 1) = spec.running1(x, v0, v1).value();
    Yg(k, 0) = spec.terminal0(x).value();
    Yg(k, 1) = spec.terminal1(x).value();
  }

  LinearizedGame lin;
  const Fit ff = least_squares(Z, Yf, "drift/diffusion", warn);
  const Fit fs = least_squares(Z, Ys, "drift/diffusion", nullptr);
  lin.A = ff.theta.leftCols(d);
  lin.B1 = ff.theta.middleCols(d, d0);
  lin.B2 = ff.theta.rightCols(d1);
  lin.C = fs.theta.leftCols(d);
  lin.D1 = fs.theta.middleCols(d, d0);
  lin.D2 = fs.theta.rightCols(d1);
  lin.dynamics_residual = ff.residual + fs.residual;
  lin.regularized = ff.regularized || fs.regularized;
  for (int p = 0; p < 2; ++p) {
    const std::string who = p == 0 ? "leader" : "follower";
    const Fit fr = least_squares(Zr[p], Yr.col(p), who + " running cost", warn);
    const Fit fg = least_squares(Zg, Yg.col(p), who + " terminal cost", warn);
    const Eigen::VectorXd tr = fr.theta.row(0).transpose();
    const Eigen::VectorXd tg = fg.theta.row(0).transpose();
    lin.Q[p] = symmetric_from(tr, 0, d);
    lin.R[p] = symmetric_from(tr, qx, p == 0 ? d0 : d1);
    lin.G[p] = symmetric_from(tg, 0, d);
    lin.cost_residual += fr.residual + fg.residual;
    lin.regularized = lin.regularized || fr.regularized || fg.regularized;
  }

  GameSpec& g = lin.spec;
  g.name = spec.name + "-linearized";
  g.d = d;
  g.d0 = d0;
  g.d1 = d1;
  g.X0 = spec.X0;
  const Eigen::MatrixXd A = lin.A, B1 = lin.B1, B2 = lin.B2, C = lin.C, D1 = lin.D1, D2 = lin.D2;
  g.drift = [A, B1, B2](VarSpan x, VarSpan u0, VarSpan u1) { return affine(A, B1, B2, x, u0, u1); };
  g.diffusion = [C, D1, D2](VarSpan x, VarSpan u0, VarSpan u1) { return affine(C, D1, D2, x, u0, u1); };
  const Eigen::MatrixXd Q0 = lin.Q[0], Q1 = lin.Q[1], R0 = lin.R[0], R1 = lin.R[1], G0 = lin.G[0], G1 = lin.G[1];
  g.running0 = [Q0, R0](VarSpan x, VarSpan u0, VarSpan) { return quadratic(Q0, x) + quadratic(R0, u0); };
  g.running1 = [Q1, R1](VarSpan x, VarSpan, VarSpan u1) { return quadratic(Q1, x) + quadratic(R1, u1); };
  g.terminal0 = [G0](VarSpan x) { return quadratic(G0, x); };
  g.terminal1 = [G1](VarSpan x) { return quadratic(G1, x); };
  // D2 is a least-squares output: treat round-off as zero
  double dscale = 1.0;
  if (lin.C.size() > 0) dscale = std::max(dscale, lin.C.cwiseAbs().maxCoeff());
  if (lin.D1.size() > 0) dscale = std::max(dscale, lin.D1.cwiseAbs().maxCoeff());
  if (D2.size() == 0 || D2.cwiseAbs().maxCoeff() <= 1e-10 * dscale) {
    const double lmin = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(R1).eigenvalues().minCoeff();
    if (lmin > 0.0) g.kappa = 2.0 * lmin;
  }
  return lin;
}

}  // namespace stackelberg
