#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stackelberg/ad.hpp"

namespace stackelberg {

enum class ActivationFamily { Standard, SuperExpressive };

// Fixed base nonlinearity of the Standard family.
enum class StandardActivation { Tanh, Relu };

// sigma_alpha(t). The Standard family ignores alpha.
double activation(ActivationFamily family, double alpha, double t,
                  StandardActivation base = StandardActivation::Tanh);
ad::Var activation(ActivationFamily family, const ad::Var& alpha, const ad::Var& t,
                   StandardActivation base = StandardActivation::Tanh);

struct NamedTensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> values;  // row-major
};

// Multilayer perceptron
//   x^(0) = x,  x^(j+1) = A^(j) sigma_{alpha^(j)}(x^(j) + b^(j)),  f(x) = x^(J) + c
// with A^(j) of shape d_{j+1} x d_j and b^(j), alpha^(j) of length d_j.
// All parameters live in one flat vector (layer by layer: A, b, alpha; then c);
// the Standard family stores no alpha.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<int> dims, ActivationFamily family,
      StandardActivation base = StandardActivation::Tanh);

  // Weights uniform in +-sqrt(6/(fan_in+fan_out)); b = 0, c = 0; alpha = 1 (identity
  // skip) for the super-expressive family.
  static Mlp glorot(std::vector<int> dims, ActivationFamily family, std::uint64_t seed,
                    StandardActivation base = StandardActivation::Tanh);

  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  int depth() const { return static_cast<int>(dims_.size()) - 1; }
  int width() const;  // widest layer including input and output
  const std::vector<int>& dims() const { return dims_; }
  ActivationFamily family() const { return family_; }
  StandardActivation base() const { return base_; }

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  std::size_t parameter_size() const { return params_.size(); }

  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> A(int layer);
  Eigen::Map<Eigen::VectorXd> b(int layer);
  Eigen::Map<Eigen::VectorXd> alpha(int layer);  // throws for the Standard family
  Eigen::Map<Eigen::VectorXd> c();
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> A(int layer) const;
  Eigen::Map<const Eigen::VectorXd> c() const;

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
  // Same recursion on tape variables; params must be laid out like parameters().
  std::vector<ad::Var> forward(std::span<const ad::Var> x, std::span<const ad::Var> params) const;

  // Number of nonzero parameters.
  std::size_t parameter_count() const;
  // Number of stored (trainable) parameters, whatever their values.
  std::size_t dense_parameter_count() const { return params_.size(); }

  std::vector<NamedTensor> to_tensors(const std::string& prefix) const;
  // Loads parameters written by to_tensors into a net of the same architecture.
  void load_tensors(const std::vector<NamedTensor>& tensors, const std::string& prefix);

 private:
  struct LayerOffsets {
    std::size_t A;
    std::size_t b;
    std::size_t alpha;
  };
  void check_layer(int layer) const;

  std::vector<int> dims_;
  ActivationFamily family_ = ActivationFamily::Standard;
  StandardActivation base_ = StandardActivation::Tanh;
  std::vector<LayerOffsets> offsets_;
  std::size_t c_offset_ = 0;
  std::vector<double> params_;
};

// Closed-form count of stored parameters for dims (what parameter_count returns
// for a dense net).
std::size_t dense_parameter_arithmetic(const std::vector<int>& dims, ActivationFamily family);

}  // namespace stackelberg
