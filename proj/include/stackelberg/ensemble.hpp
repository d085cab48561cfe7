#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

namespace stackelberg {

// Uniform time grid t_m = m*T/M on [0,T] driven by a d-dimensional Brownian motion.
struct HorizonConfig {
  double T = 1.0;
  int M = 64;
  int d = 1;

  // M >= 2 and a power of two, T > 0, d >= 1.
  void validate() const;
  double dt() const { return T / M; }
  // log2(M): the finest dyadic level whose breakpoints all fall on grid nodes is levels()-1.
  int levels() const;
  bool operator==(const HorizonConfig&) const = default;
};

// P shared Brownian paths on the grid; increments N(0, dt) from a counter-based
// generator so they are reproducible from (seed, P, cfg) alone. Immutable.
class BrownianEnsemble {
 public:
  BrownianEnsemble(HorizonConfig cfg, std::size_t paths, std::uint64_t seed);

  // Copy whose increments with step index >= from_step are redrawn (keyed by salt);
  // earlier increments are bit-identical.
  BrownianEnsemble resampled_from(int from_step, std::uint64_t salt) const;
  // Same paths on a grid coarser by `factor` (increments summed).
  BrownianEnsemble coarsened(int factor) const;

  const HorizonConfig& config() const { return cfg_; }
  std::size_t paths() const { return paths_; }
  int steps() const { return cfg_.M; }
  int dim() const { return cfg_.d; }
  std::uint64_t seed() const { return seed_; }
  // Identifies this exact set of increments; processes remember it so that
  // quantities computed on different ensembles cannot be mixed.
  std::uint64_t fingerprint() const { return fingerprint_; }

  double increment(std::size_t p, int m, int c = 0) const {
    return increments_[(p * static_cast<std::size_t>(cfg_.M) + static_cast<std::size_t>(m)) *
                           static_cast<std::size_t>(cfg_.d) +
                       static_cast<std::size_t>(c)];
  }
  // Sum of increments with step index in [from, to) for coordinate c.
  double increment_sum(std::size_t p, int from, int to, int c = 0) const;
  // W at grid node m (W_0 = 0).
  double brownian(std::size_t p, int m, int c = 0) const { return increment_sum(p, 0, m, c); }

 private:
  BrownianEnsemble() = default;

  HorizonConfig cfg_;
  std::size_t paths_ = 0;
  std::uint64_t seed_ = 0;
  std::uint64_t fingerprint_ = 0;
  std::vector<double> increments_;  // (p, m, c) row-major
};

class AdaptedProcess;
using ProcessEvaluator = std::function<AdaptedProcess(const BrownianEnsemble&)>;

enum class Provenance { Causal, Unchecked };

// A P x M x k array of values; entry (p, m, c) is the value on [t_m, t_{m+1}) in
// scenario p. Causal processes keep the evaluator that produced them so that
// predictability can be re-checked on resampled ensembles.
class AdaptedProcess {
 public:
  AdaptedProcess() = default;

  static AdaptedProcess zeros(const BrownianEnsemble& ens, int components = 1);
  static AdaptedProcess unchecked(const BrownianEnsemble& ens, int components, std::vector<double> values);
  // Runs the evaluator on ens and keeps it for later re-evaluation.
  static AdaptedProcess causal(const BrownianEnsemble& ens, ProcessEvaluator evaluator);
  // Deterministic control u(t) (one component), sampled at left grid endpoints.
  static AdaptedProcess deterministic(const BrownianEnsemble& ens, std::function<double(double)> u);
  static AdaptedProcess constant(const BrownianEnsemble& ens, double value, int components = 1);

  std::size_t paths() const { return paths_; }
  int steps() const { return steps_; }
  int components() const { return components_; }
  double dt() const { return dt_; }
  std::uint64_t ensemble_fingerprint() const { return fingerprint_; }
  Provenance provenance() const { return evaluator_ ? Provenance::Causal : Provenance::Unchecked; }
  const std::shared_ptr<const ProcessEvaluator>& evaluator() const { return evaluator_; }
  AdaptedProcess reevaluate(const BrownianEnsemble& ens) const;

  double operator()(std::size_t p, int m, int c = 0) const { return values_[index(p, m, c)]; }
  double& at(std::size_t p, int m, int c = 0) { return values_[index(p, m, c)]; }
  std::span<const double> values() const { return values_; }
  std::span<double> mutable_values() { return values_; }
  // Values of scenario p: M*k entries, step-major.
  std::span<const double> scenario(std::size_t p) const {
    const std::size_t n = static_cast<std::size_t>(steps_) * static_cast<std::size_t>(components_);
    return std::span<const double>(values_).subspan(p * n, n);
  }

  bool same_shape(const AdaptedProcess& other) const;

  // Linear combinations stay causal when every operand is causal.
  AdaptedProcess& operator+=(const AdaptedProcess& other);
  AdaptedProcess& operator-=(const AdaptedProcess& other);
  AdaptedProcess& operator*=(double s);
  friend AdaptedProcess operator+(AdaptedProcess a, const AdaptedProcess& b) { return a += b; }
  friend AdaptedProcess operator-(AdaptedProcess a, const AdaptedProcess& b) { return a -= b; }
  friend AdaptedProcess operator*(double s, AdaptedProcess a) { return a *= s; }
  // this += s * other
  void axpy(double s, const AdaptedProcess& other);

  friend AdaptedProcess linear_combination(std::span<const double> weights, std::span<const AdaptedProcess> terms);

 private:
  std::size_t index(std::size_t p, int m, int c) const {
    return (p * static_cast<std::size_t>(steps_) + static_cast<std::size_t>(m)) * static_cast<std::size_t>(components_) +
           static_cast<std::size_t>(c);
  }
  void require_compatible(const AdaptedProcess& other) const;

  std::size_t paths_ = 0;
  int steps_ = 0;
  int components_ = 0;
  double dt_ = 0.0;
  std::uint64_t fingerprint_ = 0;
  std::vector<double> values_;
  std::shared_ptr<const ProcessEvaluator> evaluator_;
};

// Linear combination sum_i weights[i] * terms[i] (causal if all terms are).
AdaptedProcess linear_combination(std::span<const double> weights, std::span<const AdaptedProcess> terms);

// Columnar export: header "scenario,step,component,value", one row per entry.
void write_process_csv(std::ostream& out, const AdaptedProcess& u);

}  // namespace stackelberg
