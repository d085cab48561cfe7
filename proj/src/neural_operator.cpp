#include "stackelberg/neural_operator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stackelberg/error.hpp"
#include "stackelberg/rng.hpp"

namespace stackelberg {

void OperatorConfig::validate() const {
  if (d_enc < 1 || N < 1 || Q < 1 || J < 1 || W < 1) {
    throw ConfigError("operator: d_enc, N, Q, J and W must be positive");
  }
  if (!value_ranks.empty() && value_ranks.size() != static_cast<std::size_t>(N * Q)) {
    throw ConfigError("operator: value_ranks must list N*Q basis ranks");
  }
}

std::vector<double> softmax(std::span<const double> w) {
  if (w.empty()) throw DimensionError("softmax: empty input");
  const double mx = *std::max_element(w.begin(), w.end());
  std::vector<double> out(w.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    out[i] = std::exp(w[i] - mx);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

std::vector<ad::Var> softmax(std::span<const ad::Var> w, std::span<const std::size_t> order) {
  if (w.empty()) throw DimensionError("softmax: empty input");
  std::vector<std::size_t> idx(order.begin(), order.end());
  if (idx.empty()) {
    idx.resize(w.size());
    std::iota(idx.begin(), idx.end(), 0);
  }
  double mx = w[idx[0]].value();
  for (std::size_t i : idx) mx = std::max(mx, w[i].value());
  std::vector<ad::Var> e(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) e[i] = ad::exp(w[i] - mx);
  ad::Var sum = 0.0;
  for (std::size_t i : idx) sum += e[i];
  std::vector<ad::Var> out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = e[i] / sum;
  return out;
}

namespace {

std::vector<int> mlp_dims(int in, int out, int J, int W) {
  std::vector<int> dims{in};
  for (int j = 1; j < J; ++j) dims.push_back(W);
  dims.push_back(out);
  return dims;
}

// Canonical head order: value-rank tuple, then head content, so that jointly
// permuted heads are visited in the same sequence.
std::vector<std::size_t> canonical_heads(const std::vector<BasisElement>& elems, int N, int Q,
                                         std::span<const double> w, std::span<const double> v) {
  std::vector<std::size_t> order(static_cast<std::size_t>(N));
  std::iota(order.begin(), order.end(), 0);
  auto key = [&](std::size_t n) {
    std::vector<double> k;
    for (int q = 0; q < Q; ++q) k.push_back(static_cast<double>(elems[n * Q + q].rank));
    if (!w.empty()) k.push_back(w[n]);
    for (int q = 0; q < Q && !v.empty(); ++q) k.push_back(v[n * Q + q]);
    return k;
  };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
  return order;
}

}  // namespace

AttentionalNO::AttentionalNO(const OperatorConfig& cfg, const HorizonConfig& horizon) : cfg_(cfg) {
  cfg_.validate();
  processor_ = Mlp::glorot(mlp_dims(cfg_.d_enc, cfg_.N, cfg_.J, cfg_.W), cfg_.family, hash_combine(cfg_.seed, 1),
                           cfg_.base);
  values_ = Mlp::glorot(mlp_dims(cfg_.d_enc, cfg_.N * cfg_.Q, cfg_.J, cfg_.W), cfg_.family, hash_combine(cfg_.seed, 2),
                        cfg_.base);
  build_bases(horizon);
}

AttentionalNO::AttentionalNO(const OperatorConfig& cfg, const HorizonConfig& horizon, Mlp processor, Mlp values)
    : cfg_(cfg), processor_(std::move(processor)), values_(std::move(values)) {
  cfg_.validate();
  if (processor_.input_dim() != cfg_.d_enc || processor_.output_dim() != cfg_.N) {
    throw DimensionError("operator: processor must map R^d_enc to R^N");
  }
  if (values_.input_dim() != cfg_.d_enc || values_.output_dim() != cfg_.N * cfg_.Q) {
    throw DimensionError("operator: values net must map R^d_enc to R^{N*Q}");
  }
  build_bases(horizon);
}

void AttentionalNO::build_bases(const HorizonConfig& horizon) {
  encoder_ = ProjectionBasis::first(static_cast<std::size_t>(cfg_.d_enc), horizon);
  if (cfg_.value_ranks.empty()) {
    cfg_.value_ranks.resize(static_cast<std::size_t>(cfg_.N * cfg_.Q));
    std::iota(cfg_.value_ranks.begin(), cfg_.value_ranks.end(), std::size_t{0});
  }
  std::vector<BasisElement> elems;
  for (std::size_t r : cfg_.value_ranks) elems.push_back(basis_element(r, horizon));
  values_basis_ = ProjectionBasis(std::move(elems), false);
}

std::vector<double> AttentionalNO::parameters() const {
  std::vector<double> theta(processor_.parameters().begin(), processor_.parameters().end());
  theta.insert(theta.end(), values_.parameters().begin(), values_.parameters().end());
  return theta;
}

void AttentionalNO::set_parameters(std::span<const double> theta) {
  if (theta.size() != parameter_size()) throw DimensionError("operator: parameter vector has the wrong size");
  const std::size_t np = processor_.parameter_size();
  std::copy(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(np), processor_.parameters().begin());
  std::copy(theta.begin() + static_cast<std::ptrdiff_t>(np), theta.end(), values_.parameters().begin());
}

std::vector<double> AttentionalNO::encode(const AdaptedProcess& u, const BrownianEnsemble& ens) const {
  return stackelberg::encode(u, encoder_, ens);
}

std::vector<double> AttentionalNO::coefficients(std::span<const double> x) const {
  if (x.size() != static_cast<std::size_t>(cfg_.d_enc)) throw DimensionError("operator: encoding has the wrong size");
  const Eigen::VectorXd xv = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  const Eigen::VectorXd w = processor_.forward(xv);
  const Eigen::VectorXd v = values_.forward(xv);
  const auto order = canonical_heads(values_basis_.elements(), cfg_.N, cfg_.Q, {w.data(), static_cast<std::size_t>(w.size())},
                                     {v.data(), static_cast<std::size_t>(v.size())});
  double mx = w[static_cast<Eigen::Index>(order[0])];
  for (std::size_t n : order) mx = std::max(mx, w[static_cast<Eigen::Index>(n)]);
  std::vector<double> e(static_cast<std::size_t>(cfg_.N));
  double sum = 0.0;
  for (std::size_t n : order) {
    e[n] = std::exp(w[static_cast<Eigen::Index>(n)] - mx);
    sum += e[n];
  }
  std::vector<double> c(static_cast<std::size_t>(cfg_.N * cfg_.Q));
  for (int n = 0; n < cfg_.N; ++n) {
    const double a = e[n] / sum;
    for (int q = 0; q < cfg_.Q; ++q) c[n * cfg_.Q + q] = a * v[n * cfg_.Q + q];
  }
  return c;
}

std::vector<ad::Var> AttentionalNO::coefficients(std::span<const ad::Var> x, std::span<const ad::Var> theta) const {
  if (theta.size() != parameter_size()) throw DimensionError("operator: parameter vector has the wrong size");
  const std::size_t np = processor_.parameter_size();
  const auto w = processor_.forward(x, theta.subspan(0, np));
  const auto v = values_.forward(x, theta.subspan(np));
  std::vector<double> wv(w.size()), vv(v.size());
  for (std::size_t i = 0; i < w.size(); ++i) wv[i] = w[i].value();
  for (std::size_t i = 0; i < v.size(); ++i) vv[i] = v[i].value();
  const auto order = canonical_heads(values_basis_.elements(), cfg_.N, cfg_.Q, wv, vv);
  const auto a = softmax(w, order);
  std::vector<ad::Var> c(static_cast<std::size_t>(cfg_.N * cfg_.Q));
  for (int n = 0; n < cfg_.N; ++n) {
    for (int q = 0; q < cfg_.Q; ++q) c[n * cfg_.Q + q] = a[n] * v[n * cfg_.Q + q];
  }
  return c;
}

AdaptedProcess AttentionalNO::combine(std::span<const double> c, const BrownianEnsemble& ens) const {
  if (c.size() != static_cast<std::size_t>(cfg_.N * cfg_.Q)) throw DimensionError("operator: wrong coefficient count");
  // visit heads by (value ranks, coefficients) so that head permutations sum identically
  const auto heads = canonical_heads(values_basis_.elements(), cfg_.N, cfg_.Q, {}, c);
  std::vector<std::size_t> order;
  for (std::size_t n : heads) {
    for (int q = 0; q < cfg_.Q; ++q) order.push_back(n * cfg_.Q + q);
  }
  return AdaptedProcess::causal(
      ens, [basis = values_basis_, coeffs = std::vector<double>(c.begin(), c.end()), order](const BrownianEnsemble& e) {
        const auto vals = basis.evaluated(e);
        AdaptedProcess u = AdaptedProcess::zeros(e, 1);
        auto out = u.mutable_values();
        for (std::size_t k : order) {
          const double w = coeffs[k];
          const auto s = (*vals)[k].values();
          for (std::size_t j = 0; j < s.size(); ++j) out[j] += w * s[j];
        }
        return u;
      });
}

AdaptedProcess AttentionalNO::apply_encoded(std::span<const double> x, const BrownianEnsemble& ens) const {
  const auto c = coefficients(x);
  return combine(c, ens);
}

AdaptedProcess AttentionalNO::apply(const AdaptedProcess& u, const BrownianEnsemble& ens) const {
  const auto x = encode(u, ens);
  return apply_encoded(x, ens);
}

const Eigen::MatrixXd& AttentionalNO::value_gram(const BrownianEnsemble& ens) const {
  std::lock_guard<std::mutex> lock(gram_cache_->mutex);
  auto it = gram_cache_->entries.find(ens.fingerprint());
  if (it != gram_cache_->entries.end()) return *it->second;
  const auto vals = values_basis_.evaluated(ens);
  const auto n = static_cast<Eigen::Index>(vals->size());
  auto G = std::make_shared<Eigen::MatrixXd>(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      (*G)(i, j) = (*G)(j, i) = inner_product((*vals)[static_cast<std::size_t>(i)], (*vals)[static_cast<std::size_t>(j)]);
    }
  }
  return *gram_cache_->entries.emplace(ens.fingerprint(), G).first->second;
}

Eigen::VectorXd AttentionalNO::value_inner(const AdaptedProcess& target, const BrownianEnsemble& ens) const {
  const auto vals = values_basis_.evaluated(ens);
  Eigen::VectorXd b(static_cast<Eigen::Index>(vals->size()));
  for (std::size_t i = 0; i < vals->size(); ++i) b[static_cast<Eigen::Index>(i)] = inner_product((*vals)[i], target);
  return b;
}

BudgetReport AttentionalNO::total_parameters() const {
  BudgetReport r;
  r.processor = processor_.parameter_count();
  r.values = values_.parameter_count();
  r.total = r.processor + r.values;
  r.J_max = std::max(processor_.depth(), values_.depth());
  r.W_max = std::max(processor_.width(), values_.width());
  r.budget = static_cast<std::size_t>(r.J_max) * static_cast<std::size_t>(r.W_max) * static_cast<std::size_t>(r.W_max) +
             static_cast<std::size_t>(cfg_.N * cfg_.Q);
  r.within = r.total <= r.budget;
  return r;
}

AttentionalNO AttentionalNO::permuted_heads(const std::vector<int>& perm) const {
  if (perm.size() != static_cast<std::size_t>(cfg_.N)) throw DimensionError("operator: permutation has the wrong size");
  OperatorConfig cfg = cfg_;
  Mlp proc = processor_;
  Mlp vals = values_;
  const int Q = cfg_.Q;
  const int last = proc.depth() - 1;
  for (int n = 0; n < cfg_.N; ++n) {
    const int src = perm[n];
    proc.A(last).row(n) = processor_.A(last).row(src);
    proc.c()[n] = processor_.c()[src];
    for (int q = 0; q < Q; ++q) {
      vals.A(last).row(n * Q + q) = values_.A(last).row(src * Q + q);
      vals.c()[n * Q + q] = values_.c()[src * Q + q];
      cfg.value_ranks[n * Q + q] = cfg_.value_ranks[src * Q + q];
    }
  }
  AttentionalNO out;
  out.cfg_ = cfg;
  out.processor_ = std::move(proc);
  out.values_ = std::move(vals);
  out.encoder_ = encoder_;
  std::vector<BasisElement> elems;
  for (int k = 0; k < cfg_.N * Q; ++k) {
    const int n = k / Q;
    elems.push_back(values_basis_[static_cast<std::size_t>(perm[n] * Q + k % Q)]);
  }
  out.values_basis_ = ProjectionBasis(std::move(elems), false);
  return out;
}

std::vector<NamedTensor> AttentionalNO::to_tensors() const {
  std::vector<NamedTensor> out;
  auto meta = [&](const std::string& name, std::vector<double> v) {
    out.push_back({name, {v.size()}, std::move(v)});
  };
  meta("operator.shape", {static_cast<double>(cfg_.d_enc), static_cast<double>(cfg_.N), static_cast<double>(cfg_.Q),
                          static_cast<double>(cfg_.J), static_cast<double>(cfg_.W),
                          cfg_.family == ActivationFamily::SuperExpressive ? 1.0 : 0.0,
                          cfg_.base == StandardActivation::Tanh ? 0.0 : 1.0});
  std::vector<double> enc;
  for (const auto& e : encoder_.elements()) enc.push_back(static_cast<double>(e.rank));
  meta("operator.encoder_ranks", enc);
  std::vector<double> vr(cfg_.value_ranks.begin(), cfg_.value_ranks.end());
  meta("operator.value_ranks", vr);
  meta("operator.processor_dims", std::vector<double>(processor_.dims().begin(), processor_.dims().end()));
  meta("operator.values_dims", std::vector<double>(values_.dims().begin(), values_.dims().end()));
  for (auto& t : processor_.to_tensors("processor")) out.push_back(std::move(t));
  for (auto& t : values_.to_tensors("values")) out.push_back(std::move(t));
  return out;
}

AttentionalNO AttentionalNO::from_tensors(const std::vector<NamedTensor>& tensors, const HorizonConfig& horizon) {
  auto find = [&](const std::string& name) -> const NamedTensor& {
    for (const auto& t : tensors) {
      if (t.name == name) return t;
    }
    throw ConfigError("operator checkpoint: missing tensor " + name);
  };
  const auto& shape = find("operator.shape").values;
  if (shape.size() != 7) throw ConfigError("operator checkpoint: malformed operator.shape");
  OperatorConfig cfg;
  cfg.d_enc = static_cast<int>(shape[0]);
  cfg.N = static_cast<int>(shape[1]);
  cfg.Q = static_cast<int>(shape[2]);
  cfg.J = static_cast<int>(shape[3]);
  cfg.W = static_cast<int>(shape[4]);
  cfg.family = shape[5] != 0.0 ? ActivationFamily::SuperExpressive : ActivationFamily::Standard;
  cfg.base = shape[6] != 0.0 ? StandardActivation::Relu : StandardActivation::Tanh;
  for (double r : find("operator.value_ranks").values) cfg.value_ranks.push_back(static_cast<std::size_t>(r));
  const auto& enc = find("operator.encoder_ranks").values;
  for (std::size_t i = 0; i < enc.size(); ++i) {
    if (static_cast<std::size_t>(enc[i]) != i) throw ConfigError("operator checkpoint: encoder must use the first ranks");
  }
  auto dims = [&](const std::string& name) {
    const auto& v = find(name).values;
    return std::vector<int>(v.begin(), v.end());
  };
  Mlp proc(dims("operator.processor_dims"), cfg.family, cfg.base);
  Mlp vals(dims("operator.values_dims"), cfg.family, cfg.base);
  proc.load_tensors(tensors, "processor");
  vals.load_tensors(tensors, "values");
  return AttentionalNO(cfg, horizon, std::move(proc), std::move(vals));
}

}  // namespace stackelberg
