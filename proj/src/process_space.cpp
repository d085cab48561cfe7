#include "stackelberg/process_space.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

#include "stackelberg/error.hpp"

namespace stackelberg {

McEstimate mc_estimate(const std::vector<double>& samples) {
  if (samples.empty()) throw DimensionError("mc_estimate: no samples");
  const double n = static_cast<double>(samples.size());
  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= n;
  if (samples.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double s : samples) ss += (s - mean) * (s - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

namespace {
void require_pair(const AdaptedProcess& u, const AdaptedProcess& v) {
  if (!u.same_shape(v)) throw DimensionError("inner_product: shape mismatch");
  if (u.ensemble_fingerprint() != v.ensemble_fingerprint()) {
    throw DimensionError("inner_product: processes live on different Brownian ensembles");
  }
}
}  // namespace

std::vector<double> inner_product_samples(const AdaptedProcess& u, const AdaptedProcess& v) {
  require_pair(u, v);
  std::vector<double> out(u.paths(), 0.0);
  const double dt = u.dt();
  for (std::size_t p = 0; p < u.paths(); ++p) {
    const auto a = u.scenario(p);
    const auto b = v.scenario(p);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i] * dt;
    out[p] = acc;
  }
  return out;
}

double inner_product(const AdaptedProcess& u, const AdaptedProcess& v) {
  const auto s = inner_product_samples(u, v);
  double acc = 0.0;
  for (double x : s) acc += x;
  return acc / static_cast<double>(s.size());
}

McEstimate inner_product_estimate(const AdaptedProcess& u, const AdaptedProcess& v) {
  return mc_estimate(inner_product_samples(u, v));
}

double norm(const AdaptedProcess& u) { return std::sqrt(std::max(inner_product(u, u), 0.0)); }

ProjectionBasis::ProjectionBasis(std::vector<BasisElement> elements, bool ordered) : elements_(std::move(elements)) {
  for (std::size_t i = 1; ordered && i < elements_.size(); ++i) {
    if (elements_[i].rank <= elements_[i - 1].rank) throw ConfigError("projection basis: ranks must increase");
  }
}

ProjectionBasis ProjectionBasis::first(std::size_t count, const HorizonConfig& cfg) {
  return ProjectionBasis(basis_elements(count, cfg));
}

std::shared_ptr<const std::vector<AdaptedProcess>> ProjectionBasis::evaluated(const BrownianEnsemble& ens) const {
  std::lock_guard<std::mutex> lock(cache_->mutex);
  auto it = cache_->entries.find(ens.fingerprint());
  if (it != cache_->entries.end()) return it->second;
  auto vals = std::make_shared<std::vector<AdaptedProcess>>();
  vals->reserve(elements_.size());
  for (const auto& e : elements_) vals->push_back(evaluate_basis(e, ens));
  // bounded cache: a handful of ensembles are live at any time
  if (cache_->entries.size() >= 8) cache_->entries.erase(cache_->entries.begin());
  cache_->entries.emplace(ens.fingerprint(), vals);
  return vals;
}

std::vector<double> ProjectionBasis::gram(const BrownianEnsemble& ens) const {
  const auto vals = evaluated(ens);
  const std::size_t n = elements_.size();
  std::vector<double> g(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) g[i * n + j] = g[j * n + i] = inner_product((*vals)[i], (*vals)[j]);
  }
  return g;
}

Projection project(const AdaptedProcess& u, const ProjectionBasis& basis, const BrownianEnsemble& ens) {
  Projection out;
  out.coeffs = encode(u, basis, ens);
  out.reconstruction = synthesize(out.coeffs, basis, ens);
  return out;
}

std::vector<double> encode(const AdaptedProcess& u, const ProjectionBasis& basis, const BrownianEnsemble& ens) {
  if (u.components() != 1) throw DimensionError("encode: basis elements are scalar processes");
  const auto vals = basis.evaluated(ens);
  std::vector<double> c(basis.size());
  for (std::size_t i = 0; i < basis.size(); ++i) c[i] = inner_product(u, (*vals)[i]);
  return c;
}

AdaptedProcess synthesize(std::span<const double> coeffs, const ProjectionBasis& basis, const BrownianEnsemble& ens,
                          int components) {
  if (components < 1 || coeffs.size() % static_cast<std::size_t>(components) != 0) {
    throw DimensionError("synthesize: coefficient count is not a multiple of the component count");
  }
  const std::size_t n = coeffs.size() / static_cast<std::size_t>(components);
  if (n > basis.size()) throw DimensionError("synthesize: more coefficients than basis elements");
  return AdaptedProcess::causal(
      ens, [basis, c = std::vector<double>(coeffs.begin(), coeffs.end()), n, components](const BrownianEnsemble& e) {
        const auto vals = basis.evaluated(e);
        AdaptedProcess u = AdaptedProcess::zeros(e, components);
        auto out = u.mutable_values();
        const auto k = static_cast<std::size_t>(components);
        for (std::size_t i = 0; i < n; ++i) {
          const auto s = (*vals)[i].values();
          for (std::size_t comp = 0; comp < k; ++comp) {
            const double w = c[i * k + comp];
            if (w == 0.0) continue;
            for (std::size_t j = 0; j < s.size(); ++j) out[j * k + comp] += w * s[j];
          }
        }
        return u;
      });
}

bool check_adapted(const AdaptedProcess& u, const BrownianEnsemble& ens, std::vector<int> probes) {
  if (!u.evaluator()) throw std::logic_error("check_adapted: process has unchecked provenance; not checkable");
  if (u.ensemble_fingerprint() != ens.fingerprint()) {
    throw DimensionError("check_adapted: process was not computed on this ensemble");
  }
  if (probes.empty()) {
    for (int m = 0; m < ens.steps(); ++m) probes.push_back(m);
  }
  for (int probe : probes) {
    const BrownianEnsemble other = ens.resampled_from(probe, 0x5eedULL + static_cast<std::uint64_t>(probe));
    const AdaptedProcess v = u.reevaluate(other);
    if (!v.same_shape(u)) return false;
    for (std::size_t p = 0; p < u.paths(); ++p) {
      for (int m = 0; m <= probe && m < u.steps(); ++m) {
        for (int c = 0; c < u.components(); ++c) {
          if (std::bit_cast<std::uint64_t>(u(p, m, c)) != std::bit_cast<std::uint64_t>(v(p, m, c))) return false;
        }
      }
    }
  }
  return true;
}

}  // namespace stackelberg
