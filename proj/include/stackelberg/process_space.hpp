#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "stackelberg/chaos_basis.hpp"
#include "stackelberg/ensemble.hpp"

namespace stackelberg {

// Monte-Carlo estimate with its standard error (sample std / sqrt(P)).
struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

McEstimate mc_estimate(const std::vector<double>& samples);

// Per-scenario values sum_m sum_c u*v*dt; their mean is the inner product.
std::vector<double> inner_product_samples(const AdaptedProcess& u, const AdaptedProcess& v);
// (1/P) sum_p sum_m sum_c u*v*dt, accumulated in (p, m, c) order.
double inner_product(const AdaptedProcess& u, const AdaptedProcess& v);
McEstimate inner_product_estimate(const AdaptedProcess& u, const AdaptedProcess& v);
double norm(const AdaptedProcess& u);

// First elements {s_i} used for projection and encoding; evaluations are cached per
// ensemble fingerprint.
class ProjectionBasis {
 public:
  ProjectionBasis() = default;
  // Ranks must increase unless `ordered` is false (e.g. operator value elements).
  explicit ProjectionBasis(std::vector<BasisElement> elements, bool ordered = true);
  static ProjectionBasis first(std::size_t count, const HorizonConfig& cfg);

  std::size_t size() const { return elements_.size(); }
  const std::vector<BasisElement>& elements() const { return elements_; }
  const BasisElement& operator[](std::size_t i) const { return elements_[i]; }

  // Evaluations of every element on ens (computed once, then shared read-only).
  std::shared_ptr<const std::vector<AdaptedProcess>> evaluated(const BrownianEnsemble& ens) const;
  // Empirical Gram matrix <s_i, s_j> on ens, row-major.
  std::vector<double> gram(const BrownianEnsemble& ens) const;

 private:
  std::vector<BasisElement> elements_;
  struct Cache {
    std::mutex mutex;
    std::map<std::uint64_t, std::shared_ptr<const std::vector<AdaptedProcess>>> entries;
  };
  std::shared_ptr<Cache> cache_ = std::make_shared<Cache>();
};

struct Projection {
  std::vector<double> coeffs;
  AdaptedProcess reconstruction;
};

// coeffs_i = <u, s_i>, reconstruction = sum_i coeffs_i s_i.
Projection project(const AdaptedProcess& u, const ProjectionBasis& basis, const BrownianEnsemble& ens);
std::vector<double> encode(const AdaptedProcess& u, const ProjectionBasis& basis, const BrownianEnsemble& ens);
// k-component process u_c = sum_i coeffs[i*k + c] s_i over the first coeffs.size()/k
// elements. Causal: re-evaluation uses the basis on the new ensemble.
AdaptedProcess synthesize(std::span<const double> coeffs, const ProjectionBasis& basis, const BrownianEnsemble& ens,
                          int components = 1);

// Re-runs u's evaluator on ensembles whose increments from each probe step on are
// redrawn; true iff all values at steps <= probe are bit-identical. Probes default to
// every step. Throws std::logic_error for unchecked processes.
bool check_adapted(const AdaptedProcess& u, const BrownianEnsemble& ens, std::vector<int> probes = {});

}  // namespace stackelberg
