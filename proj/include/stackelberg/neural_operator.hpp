#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stackelberg/ad.hpp"
#include "stackelberg/mlp.hpp"
#include "stackelberg/process_space.hpp"

namespace stackelberg {

struct OperatorConfig {
  int d_enc = 8;
  int N = 4;  // heads
  int Q = 4;  // value elements per head
  int J = 2;  // layers per MLP
  int W = 16; // hidden width
  ActivationFamily family = ActivationFamily::SuperExpressive;
  StandardActivation base = StandardActivation::Tanh;
  std::uint64_t seed = 0;
  std::vector<std::size_t> value_ranks;  // N*Q ranks, head-major; default 0..N*Q-1

  void validate() const;
};

// Max-subtracted softmax, renormalized so the components sum to 1.
std::vector<double> softmax(std::span<const double> w);
// Same on tape variables; the normalizing sum runs over `order` (all indices when empty).
std::vector<ad::Var> softmax(std::span<const ad::Var> w, std::span<const std::size_t> order = {});

struct BudgetReport {
  std::size_t processor = 0;  // nonzero parameters
  std::size_t values = 0;
  std::size_t total = 0;
  std::size_t budget = 0;  // J_max * W_max^2 + N*Q
  int J_max = 0;
  int W_max = 0;  // widest layer of either net, inputs and outputs included
  bool within = false;
};

// u -> sum_n softmax(f(x))_n sum_q V(x)_{n,q} V^{(n,q)},  x = encoding of u.
// f (processor) maps R^{d_enc} -> R^N, V (values) maps R^{d_enc} -> R^{N*Q}.
class AttentionalNO {
 public:
  AttentionalNO() = default;
  AttentionalNO(const OperatorConfig& cfg, const HorizonConfig& horizon);
  AttentionalNO(const OperatorConfig& cfg, const HorizonConfig& horizon, Mlp processor, Mlp values);

  const OperatorConfig& config() const { return cfg_; }
  int N() const { return cfg_.N; }
  int Q() const { return cfg_.Q; }
  const ProjectionBasis& encoder_basis() const { return encoder_; }
  const ProjectionBasis& value_basis() const { return values_basis_; }  // head-major (n,q)
  Mlp& processor() { return processor_; }
  Mlp& values_net() { return values_; }
  const Mlp& processor() const { return processor_; }
  const Mlp& values_net() const { return values_; }

  // Flat parameter vector: processor parameters then values-net parameters.
  std::size_t parameter_size() const { return processor_.parameter_size() + values_.parameter_size(); }
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> theta);

  std::vector<double> encode(const AdaptedProcess& u, const BrownianEnsemble& ens) const;
  // Combination weights c_{n,q} = softmax(f(x))_n V(x)_{n,q}, head-major.
  std::vector<double> coefficients(std::span<const double> x) const;
  // Tape version; theta laid out like parameters().
  std::vector<ad::Var> coefficients(std::span<const ad::Var> x, std::span<const ad::Var> theta) const;
  // sum_{n,q} c_{n,q} V^{(n,q)} accumulated in the canonical head order.
  AdaptedProcess combine(std::span<const double> c, const BrownianEnsemble& ens) const;
  AdaptedProcess apply(const AdaptedProcess& u, const BrownianEnsemble& ens) const;
  AdaptedProcess apply_encoded(std::span<const double> x, const BrownianEnsemble& ens) const;

  // <V^{(a)}, V^{(b)}> on ens (head-major), cached per ensemble.
  const Eigen::MatrixXd& value_gram(const BrownianEnsemble& ens) const;
  // <V^{(a)}, target> for every value element.
  Eigen::VectorXd value_inner(const AdaptedProcess& target, const BrownianEnsemble& ens) const;

  BudgetReport total_parameters() const;

  // Operator with heads reordered: head n of the result is head perm[n] of this one.
  AttentionalNO permuted_heads(const std::vector<int>& perm) const;

  std::vector<NamedTensor> to_tensors() const;
  static AttentionalNO from_tensors(const std::vector<NamedTensor>& tensors, const HorizonConfig& horizon);

 private:
  void build_bases(const HorizonConfig& horizon);

  OperatorConfig cfg_;
  ProjectionBasis encoder_;
  ProjectionBasis values_basis_;
  Mlp processor_;
  Mlp values_;
  struct GramCache {
    std::mutex mutex;
    std::map<std::uint64_t, std::shared_ptr<Eigen::MatrixXd>> entries;
  };
  std::shared_ptr<GramCache> gram_cache_ = std::make_shared<GramCache>();
};

}  // namespace stackelberg
