#include "stackelberg/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "stackelberg/error.hpp"
#include "stackelberg/rng.hpp"

namespace stackelberg {

double activation(ActivationFamily family, double alpha, double t, StandardActivation base) {
  if (family == ActivationFamily::SuperExpressive) return ad::superexpressive(alpha, t);
  return base == StandardActivation::Tanh ? std::tanh(t) : std::max(t, 0.0);
}

ad::Var activation(ActivationFamily family, const ad::Var& alpha, const ad::Var& t,
                   StandardActivation base) {
  if (family == ActivationFamily::SuperExpressive) return ad::superexpressive(alpha, t);
  return base == StandardActivation::Tanh ? ad::tanh(t) : ad::relu(t);
}

std::size_t dense_parameter_arithmetic(const std::vector<int>& dims, ActivationFamily family) {
  if (dims.size() < 2) throw DimensionError("mlp: need at least input and output dimension");
  const std::size_t per_unit = family == ActivationFamily::SuperExpressive ? 2 : 1;
  std::size_t n = 0;
  for (std::size_t j = 0; j + 1 < dims.size(); ++j) {
    n += static_cast<std::size_t>(dims[j + 1]) * static_cast<std::size_t>(dims[j]);
    n += per_unit * static_cast<std::size_t>(dims[j]);
  }
  return n + static_cast<std::size_t>(dims.back());
}

Mlp::Mlp(std::vector<int> dims, ActivationFamily family, StandardActivation base)
    : dims_(std::move(dims)), family_(family), base_(base) {
  if (dims_.size() < 2) throw DimensionError("mlp: need at least input and output dimension");
  for (int d : dims_) {
    if (d <= 0) throw DimensionError("mlp: layer dimensions must be positive");
  }
  std::size_t offset = 0;
  for (std::size_t j = 0; j + 1 < dims_.size(); ++j) {
    LayerOffsets lo{};
    lo.A = offset;
    offset += static_cast<std::size_t>(dims_[j + 1]) * static_cast<std::size_t>(dims_[j]);
    lo.b = offset;
    offset += static_cast<std::size_t>(dims_[j]);
    lo.alpha = offset;
    if (family_ == ActivationFamily::SuperExpressive) offset += static_cast<std::size_t>(dims_[j]);
    offsets_.push_back(lo);
  }
  c_offset_ = offset;
  offset += static_cast<std::size_t>(dims_.back());
  params_.assign(offset, 0.0);
}

Mlp Mlp::glorot(std::vector<int> dims, ActivationFamily family, std::uint64_t seed,
                StandardActivation base) {
  Mlp net(std::move(dims), family, base);
  Rng rng(seed);
  for (int j = 0; j < net.depth(); ++j) {
    const double limit = std::sqrt(6.0 / static_cast<double>(net.dims_[j] + net.dims_[j + 1]));
    auto a = net.A(j);
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      for (Eigen::Index col = 0; col < a.cols(); ++col) a(r, col) = rng.uniform(-limit, limit);
    }
    if (family == ActivationFamily::SuperExpressive) net.alpha(j).setOnes();
  }
  return net;
}

int Mlp::width() const { return *std::max_element(dims_.begin(), dims_.end()); }

void Mlp::check_layer(int layer) const {
  if (layer < 0 || layer >= depth()) throw DimensionError("mlp: layer index out of range");
}

Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> Mlp::A(int layer) {
  check_layer(layer);
  return {params_.data() + offsets_[layer].A, dims_[layer + 1], dims_[layer]};
}

Eigen::Map<Eigen::VectorXd> Mlp::b(int layer) {
  check_layer(layer);
  return {params_.data() + offsets_[layer].b, dims_[layer]};
}

Eigen::Map<Eigen::VectorXd> Mlp::alpha(int layer) {
  check_layer(layer);
  if (family_ != ActivationFamily::SuperExpressive) {
    throw std::logic_error("mlp: the standard activation family has no alpha parameters");
  }
  return {params_.data() + offsets_[layer].alpha, dims_[layer]};
}

Eigen::Map<Eigen::VectorXd> Mlp::c() { return {params_.data() + c_offset_, dims_.back()}; }

Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> Mlp::A(int layer) const {
  check_layer(layer);
  return {params_.data() + offsets_[layer].A, dims_[layer + 1], dims_[layer]};
}

Eigen::Map<const Eigen::VectorXd> Mlp::c() const { return {params_.data() + c_offset_, dims_.back()}; }

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x) const {
  if (x.size() != dims_.front()) throw DimensionError("mlp: input dimension mismatch");
  Eigen::VectorXd h = x;
  for (int j = 0; j < depth(); ++j) {
    const LayerOffsets& lo = offsets_[j];
    const int din = dims_[j];
    const int dout = dims_[j + 1];
    Eigen::VectorXd act(din);
    for (int i = 0; i < din; ++i) {
      const double alpha = family_ == ActivationFamily::SuperExpressive ? params_[lo.alpha + i] : 0.0;
      act[i] = activation(family_, alpha, h[i] + params_[lo.b + i], base_);
    }
    Eigen::VectorXd next(dout);
    for (int r = 0; r < dout; ++r) {
      const double* row = params_.data() + lo.A + static_cast<std::size_t>(r) * din;
      double acc = 0.0;
      for (int i = 0; i < din; ++i) acc += row[i] * act[i];
      next[r] = acc;
    }
    h = std::move(next);
  }
  for (int r = 0; r < dims_.back(); ++r) h[r] += params_[c_offset_ + r];
  return h;
}

std::vector<ad::Var> Mlp::forward(std::span<const ad::Var> x, std::span<const ad::Var> params) const {
  if (x.size() != static_cast<std::size_t>(dims_.front())) throw DimensionError("mlp: input dimension mismatch");
  if (params.size() != params_.size()) throw DimensionError("mlp: parameter vector size mismatch");
  std::vector<ad::Var> h(x.begin(), x.end());
  std::vector<ad::Var> act;
  for (int j = 0; j < depth(); ++j) {
    const LayerOffsets& lo = offsets_[j];
    const int din = dims_[j];
    const int dout = dims_[j + 1];
    act.assign(static_cast<std::size_t>(din), ad::Var());
    for (int i = 0; i < din; ++i) {
      const ad::Var alpha = family_ == ActivationFamily::SuperExpressive ? params[lo.alpha + i] : ad::Var(0.0);
      act[i] = activation(family_, alpha, h[i] + params[lo.b + i], base_);
    }
    std::vector<ad::Var> next(static_cast<std::size_t>(dout));
    for (int r = 0; r < dout; ++r) {
      next[r] = ad::dot(params.subspan(lo.A + static_cast<std::size_t>(r) * din, din), act);
    }
    h = std::move(next);
  }
  for (int r = 0; r < dims_.back(); ++r) h[r] = h[r] + params[c_offset_ + r];
  return h;
}

std::size_t Mlp::parameter_count() const {
  return static_cast<std::size_t>(std::count_if(params_.begin(), params_.end(), [](double v) { return v != 0.0; }));
}

std::vector<NamedTensor> Mlp::to_tensors(const std::string& prefix) const {
  std::vector<NamedTensor> out;
  auto slice = [&](std::size_t offset, std::size_t n) {
    return std::vector<double>(params_.begin() + static_cast<std::ptrdiff_t>(offset),
                               params_.begin() + static_cast<std::ptrdiff_t>(offset + n));
  };
  for (int j = 0; j < depth(); ++j) {
    const auto din = static_cast<std::size_t>(dims_[j]);
    const auto dout = static_cast<std::size_t>(dims_[j + 1]);
    const std::string idx = std::to_string(j);
    out.push_back({prefix + ".A" + idx, {dout, din}, slice(offsets_[j].A, dout * din)});
    out.push_back({prefix + ".b" + idx, {din}, slice(offsets_[j].b, din)});
    if (family_ == ActivationFamily::SuperExpressive) {
      out.push_back({prefix + ".alpha" + idx, {din}, slice(offsets_[j].alpha, din)});
    }
  }
  out.push_back({prefix + ".c", {static_cast<std::size_t>(dims_.back())}, slice(c_offset_, dims_.back())});
  return out;
}

void Mlp::load_tensors(const std::vector<NamedTensor>& tensors, const std::string& prefix) {
  const auto expected = to_tensors(prefix);
  for (const NamedTensor& want : expected) {
    const auto it = std::find_if(tensors.begin(), tensors.end(), [&](const NamedTensor& t) { return t.name == want.name; });
    if (it == tensors.end()) throw ConfigError("mlp: checkpoint is missing tensor " + want.name);
    if (it->shape != want.shape) throw DimensionError("mlp: tensor " + want.name + " has the wrong shape");
  }
  std::size_t offset = 0;
  for (const NamedTensor& want : expected) {
    const auto it = std::find_if(tensors.begin(), tensors.end(), [&](const NamedTensor& t) { return t.name == want.name; });
    std::copy(it->values.begin(), it->values.end(), params_.begin() + static_cast<std::ptrdiff_t>(offset));
    offset += it->values.size();
  }
}

}  // namespace stackelberg
