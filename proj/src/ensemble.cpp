#include "stackelberg/ensemble.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <ostream>

#include "stackelberg/error.hpp"
#include "stackelberg/rng.hpp"

namespace stackelberg {

void HorizonConfig::validate() const {
  if (!(T > 0.0) || !std::isfinite(T)) throw ConfigError("horizon: T must be a positive finite real");
  if (M < 2 || !std::has_single_bit(static_cast<unsigned>(M))) {
    throw ConfigError("horizon: M must be a power of two >= 2 so dyadic breakpoints are grid nodes");
  }
  if (d < 1) throw ConfigError("horizon: Brownian dimension d must be >= 1");
}

int HorizonConfig::levels() const { return std::countr_zero(static_cast<unsigned>(M)); }

namespace {
std::uint64_t grid_key(std::uint64_t seed, const HorizonConfig& cfg) {
  std::uint64_t key = hash_combine(seed, std::bit_cast<std::uint64_t>(cfg.T));
  key = hash_combine(key, static_cast<std::uint64_t>(cfg.M));
  return hash_combine(key, static_cast<std::uint64_t>(cfg.d));
}
}  // namespace

BrownianEnsemble::BrownianEnsemble(HorizonConfig cfg, std::size_t paths, std::uint64_t seed)
    : cfg_(cfg), paths_(paths), seed_(seed) {
  cfg_.validate();
  if (paths == 0) throw ConfigError("ensemble: need at least one scenario");
  const std::uint64_t key = grid_key(seed, cfg_);
  fingerprint_ = hash_combine(key, paths);
  const double scale = std::sqrt(cfg_.dt());
  const std::size_t n = paths * static_cast<std::size_t>(cfg_.M) * static_cast<std::size_t>(cfg_.d);
  increments_.resize(n);
  for (std::size_t i = 0; i < n; ++i) increments_[i] = scale * counter_normal(key, i);
}

BrownianEnsemble BrownianEnsemble::resampled_from(int from_step, std::uint64_t salt) const {
  if (from_step < 0 || from_step > cfg_.M) throw DomainError("ensemble: resample step outside the grid");
  BrownianEnsemble out = *this;
  const std::uint64_t key = hash_combine(hash_combine(grid_key(seed_, cfg_), salt), static_cast<std::uint64_t>(from_step));
  out.fingerprint_ = hash_combine(fingerprint_, key);
  const double scale = std::sqrt(cfg_.dt());
  const auto d = static_cast<std::size_t>(cfg_.d);
  for (std::size_t p = 0; p < paths_; ++p) {
    for (int m = from_step; m < cfg_.M; ++m) {
      for (std::size_t c = 0; c < d; ++c) {
        const std::size_t i = (p * static_cast<std::size_t>(cfg_.M) + static_cast<std::size_t>(m)) * d + c;
        out.increments_[i] = scale * counter_normal(key, i);
      }
    }
  }
  return out;
}

BrownianEnsemble BrownianEnsemble::coarsened(int factor) const {
  if (factor < 1 || cfg_.M % factor != 0) throw ConfigError("ensemble: coarsening factor must divide M");
  BrownianEnsemble out;
  out.cfg_ = cfg_;
  out.cfg_.M = cfg_.M / factor;
  out.cfg_.validate();
  out.paths_ = paths_;
  out.seed_ = seed_;
  out.fingerprint_ = hash_combine(fingerprint_, 0xc0a45e00ULL + static_cast<std::uint64_t>(factor));
  const auto d = static_cast<std::size_t>(cfg_.d);
  out.increments_.assign(paths_ * static_cast<std::size_t>(out.cfg_.M) * d, 0.0);
  for (std::size_t p = 0; p < paths_; ++p) {
    for (int m = 0; m < out.cfg_.M; ++m) {
      for (std::size_t c = 0; c < d; ++c) {
        out.increments_[(p * static_cast<std::size_t>(out.cfg_.M) + static_cast<std::size_t>(m)) * d + c] =
            increment_sum(p, m * factor, (m + 1) * factor, static_cast<int>(c));
      }
    }
  }
  return out;
}

double BrownianEnsemble::increment_sum(std::size_t p, int from, int to, int c) const {
  double acc = 0.0;
  for (int m = from; m < to; ++m) acc += increment(p, m, c);
  return acc;
}

// --- AdaptedProcess ---------------------------------------------------------

AdaptedProcess AdaptedProcess::zeros(const BrownianEnsemble& ens, int components) {
  if (components < 1) throw DimensionError("process: need at least one component");
  AdaptedProcess u;
  u.paths_ = ens.paths();
  u.steps_ = ens.steps();
  u.components_ = components;
  u.dt_ = ens.config().dt();
  u.fingerprint_ = ens.fingerprint();
  u.values_.assign(u.paths_ * static_cast<std::size_t>(u.steps_) * static_cast<std::size_t>(components), 0.0);
  return u;
}

AdaptedProcess AdaptedProcess::unchecked(const BrownianEnsemble& ens, int components, std::vector<double> values) {
  AdaptedProcess u = zeros(ens, components);
  if (values.size() != u.values_.size()) throw DimensionError("process: value array has the wrong size");
  u.values_ = std::move(values);
  return u;
}

AdaptedProcess AdaptedProcess::causal(const BrownianEnsemble& ens, ProcessEvaluator evaluator) {
  auto shared = std::make_shared<const ProcessEvaluator>(std::move(evaluator));
  AdaptedProcess u = (*shared)(ens);
  if (u.paths_ != ens.paths() || u.steps_ != ens.steps() || u.fingerprint_ != ens.fingerprint()) {
    throw DimensionError("process: evaluator returned a process for a different ensemble");
  }
  u.evaluator_ = std::move(shared);
  return u;
}

AdaptedProcess AdaptedProcess::deterministic(const BrownianEnsemble& ens, std::function<double(double)> f) {
  auto eval = [f](const BrownianEnsemble& e) {
    AdaptedProcess u = zeros(e, 1);
    const double dt = e.config().dt();
    std::vector<double> row(static_cast<std::size_t>(e.steps()));
    for (int m = 0; m < e.steps(); ++m) row[m] = f(m * dt);
    for (std::size_t p = 0; p < e.paths(); ++p) {
      for (int m = 0; m < e.steps(); ++m) u.at(p, m) = row[m];
    }
    return u;
  };
  return causal(ens, eval);
}

AdaptedProcess AdaptedProcess::constant(const BrownianEnsemble& ens, double value, int components) {
  return causal(ens, [value, components](const BrownianEnsemble& e) {
    AdaptedProcess u = zeros(e, components);
    std::fill(u.values_.begin(), u.values_.end(), value);
    return u;
  });
}

AdaptedProcess AdaptedProcess::reevaluate(const BrownianEnsemble& ens) const {
  if (!evaluator_) throw std::logic_error("process: unchecked process has no evaluator");
  AdaptedProcess u = (*evaluator_)(ens);
  u.evaluator_ = evaluator_;
  return u;
}

bool AdaptedProcess::same_shape(const AdaptedProcess& other) const {
  return paths_ == other.paths_ && steps_ == other.steps_ && components_ == other.components_;
}

void AdaptedProcess::require_compatible(const AdaptedProcess& other) const {
  if (!same_shape(other)) throw DimensionError("process: shape mismatch");
  if (fingerprint_ != other.fingerprint_) {
    throw DimensionError("process: operands were computed on different Brownian ensembles");
  }
}

namespace {
std::shared_ptr<const ProcessEvaluator> compose(std::vector<double> weights,
                                                std::vector<std::shared_ptr<const ProcessEvaluator>> parts) {
  for (const auto& p : parts) {
    if (!p) return nullptr;
  }
  return std::make_shared<const ProcessEvaluator>(
      [weights = std::move(weights), parts = std::move(parts)](const BrownianEnsemble& ens) {
        AdaptedProcess acc;
        for (std::size_t i = 0; i < parts.size(); ++i) {
          AdaptedProcess term = (*parts[i])(ens);
          if (i == 0) {
            acc = AdaptedProcess::unchecked(ens, term.components(), std::vector<double>(term.values().size(), 0.0));
          }
          auto out = acc.mutable_values();
          auto in = term.values();
          for (std::size_t j = 0; j < out.size(); ++j) out[j] += weights[i] * in[j];
        }
        return acc;
      });
}
}  // namespace

AdaptedProcess& AdaptedProcess::operator+=(const AdaptedProcess& other) {
  axpy(1.0, other);
  return *this;
}

AdaptedProcess& AdaptedProcess::operator-=(const AdaptedProcess& other) {
  axpy(-1.0, other);
  return *this;
}

AdaptedProcess& AdaptedProcess::operator*=(double s) {
  for (double& v : values_) v *= s;
  if (evaluator_) evaluator_ = compose({s}, {evaluator_});
  return *this;
}

void AdaptedProcess::axpy(double s, const AdaptedProcess& other) {
  require_compatible(other);
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += s * other.values_[i];
  evaluator_ = (evaluator_ && other.evaluator_) ? compose({1.0, s}, {evaluator_, other.evaluator_}) : nullptr;
}

AdaptedProcess linear_combination(std::span<const double> weights, std::span<const AdaptedProcess> terms) {
  if (weights.size() != terms.size() || terms.empty()) {
    throw DimensionError("linear_combination: need matching, nonempty weights and terms");
  }
  AdaptedProcess out = terms[0];
  std::fill(out.values_.begin(), out.values_.end(), 0.0);
  std::vector<std::shared_ptr<const ProcessEvaluator>> parts;
  parts.reserve(terms.size());
  for (std::size_t i = 0; i < terms.size(); ++i) {
    out.require_compatible(terms[i]);
    const double w = weights[i];
    const auto& in = terms[i].values_;
    for (std::size_t j = 0; j < out.values_.size(); ++j) out.values_[j] += w * in[j];
    parts.push_back(terms[i].evaluator_);
  }
  out.evaluator_ = compose(std::vector<double>(weights.begin(), weights.end()), std::move(parts));
  return out;
}

void write_process_csv(std::ostream& out, const AdaptedProcess& u) {
  out << "scenario,step,component,value\n";
  const auto old_precision = out.precision(17);
  for (std::size_t p = 0; p < u.paths(); ++p) {
    for (int m = 0; m < u.steps(); ++m) {
      for (int c = 0; c < u.components(); ++c) out << p << ',' << m << ',' << c << ',' << u(p, m, c) << '\n';
    }
  }
  out.precision(old_precision);
}

}  // namespace stackelberg
