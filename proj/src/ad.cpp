#include "stackelberg/ad.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace stackelberg::ad {

namespace {
thread_local Tape* t_active = nullptr;

Tape& require_tape() {
  if (t_active == nullptr) {
    throw std::logic_error("ad: recorded Var used without an active tape");
  }
  return *t_active;
}
}  // namespace

Tape::Scope::Scope(Tape& tape) : previous_(t_active) { t_active = &tape; }
Tape::Scope::~Scope() { t_active = previous_; }

Tape* Tape::active() { return t_active; }

Var Tape::variable(double value) {
  nodes_.push_back({-1, -1, 0.0, 0.0});
  return Var(value, static_cast<std::int32_t>(nodes_.size() - 1));
}

std::vector<Var> Tape::variables(std::span<const double> values) {
  std::vector<Var> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(variable(v));
  return out;
}

Var Tape::record(double value, const Var& a, double da) {
  nodes_.push_back({a.index_, -1, da, 0.0});
  return Var(value, static_cast<std::int32_t>(nodes_.size() - 1));
}

Var Tape::record(double value, const Var& a, double da, const Var& b, double db) {
  nodes_.push_back({a.index_, b.index_, da, db});
  return Var(value, static_cast<std::int32_t>(nodes_.size() - 1));
}

void Tape::backward(std::vector<double>& adjoint, std::size_t top) const {
  for (std::size_t i = top + 1; i-- > 0;) {
    const double g = adjoint[i];
    if (g == 0.0) continue;
    const Node& n = nodes_[i];
    if (n.a >= 0) adjoint[static_cast<std::size_t>(n.a)] += n.da * g;
    if (n.b >= 0) adjoint[static_cast<std::size_t>(n.b)] += n.db * g;
  }
}

std::vector<double> Tape::gradient(const Var& root) const {
  if (!root.recorded() || static_cast<std::size_t>(root.index()) >= nodes_.size()) {
    throw std::invalid_argument("ad: gradient root is not a node of this tape");
  }
  std::vector<double> adjoint(nodes_.size(), 0.0);
  adjoint[static_cast<std::size_t>(root.index())] = 1.0;
  backward(adjoint, static_cast<std::size_t>(root.index()));
  return adjoint;
}

std::vector<double> Tape::gradient(std::span<const Var> outputs, std::span<const double> seeds) const {
  if (outputs.size() != seeds.size()) {
    throw std::invalid_argument("ad: outputs and seeds differ in length");
  }
  std::vector<double> adjoint(nodes_.size(), 0.0);
  std::size_t top = 0;
  bool any = false;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    if (!outputs[i].recorded()) continue;
    const auto idx = static_cast<std::size_t>(outputs[i].index());
    if (idx >= nodes_.size()) throw std::invalid_argument("ad: output is not a node of this tape");
    adjoint[idx] += seeds[i];
    top = std::max(top, idx);
    any = true;
  }
  if (any) backward(adjoint, top);
  return adjoint;
}

// Unary/binary helpers: only record when an operand lives on a tape.
namespace {
Var unary(double value, const Var& a, double da) {
  if (!a.recorded()) return Var(value);
  return require_tape().record(value, a, da);
}
Var binary(double value, const Var& a, double da, const Var& b, double db) {
  if (!a.recorded() && !b.recorded()) return Var(value);
  if (!b.recorded()) return require_tape().record(value, a, da);
  if (!a.recorded()) return require_tape().record(value, b, db);
  return require_tape().record(value, a, da, b, db);
}
}  // namespace

Var operator+(const Var& a, const Var& b) { return binary(a.value() + b.value(), a, 1.0, b, 1.0); }
Var operator-(const Var& a, const Var& b) { return binary(a.value() - b.value(), a, 1.0, b, -1.0); }
Var operator*(const Var& a, const Var& b) {
  return binary(a.value() * b.value(), a, b.value(), b, a.value());
}
Var operator/(const Var& a, const Var& b) {
  const double inv = 1.0 / b.value();
  const double q = a.value() * inv;
  return binary(q, a, inv, b, -q * inv);
}
Var operator-(const Var& a) { return unary(-a.value(), a, -1.0); }

Var exp(const Var& a) {
  const double e = std::exp(a.value());
  return unary(e, a, e);
}
Var log(const Var& a) { return unary(std::log(a.value()), a, 1.0 / a.value()); }
Var sqrt(const Var& a) {
  const double s = std::sqrt(a.value());
  return unary(s, a, 0.5 / s);
}
Var tanh(const Var& a) {
  const double t = std::tanh(a.value());
  return unary(t, a, 1.0 - t * t);
}
Var sin(const Var& a) { return unary(std::sin(a.value()), a, std::cos(a.value())); }
Var cos(const Var& a) { return unary(std::cos(a.value()), a, -std::sin(a.value())); }
Var abs(const Var& a) {
  const double v = a.value();
  return unary(std::abs(v), a, v >= 0.0 ? 1.0 : -1.0);
}
Var square(const Var& a) { return unary(a.value() * a.value(), a, 2.0 * a.value()); }
Var pow(const Var& a, int n) {
  if (n == 0) return Var(1.0);
  const double v = a.value();
  return unary(std::pow(v, n), a, n * std::pow(v, n - 1));
}
Var relu(const Var& a) {
  const double v = a.value();
  return unary(v > 0.0 ? v : 0.0, a, v > 0.0 ? 1.0 : 0.0);
}
Var max(const Var& a, const Var& b) {
  const bool left = a.value() >= b.value();
  return binary(left ? a.value() : b.value(), a, left ? 1.0 : 0.0, b, left ? 0.0 : 1.0);
}
Var min(const Var& a, const Var& b) {
  const bool left = a.value() <= b.value();
  return binary(left ? a.value() : b.value(), a, left ? 1.0 : 0.0, b, left ? 0.0 : 1.0);
}
Var clamp(const Var& a, double lo, double hi) {
  const double v = a.value();
  if (v < lo) return unary(lo, a, 0.0);
  if (v > hi) return unary(hi, a, 0.0);
  return unary(v, a, 1.0);
}

namespace {
double se_branch(double t) { return t >= 0.0 ? std::abs(std::fmod(t, 2.0)) : t / (std::abs(t) + 1.0); }
double se_branch_slope(double t) {
  if (t >= 0.0) return 1.0;
  const double d = std::abs(t) + 1.0;
  return 1.0 / (d * d);
}
}  // namespace

double superexpressive(double alpha, double t) { return alpha * t + (1.0 - alpha) * se_branch(t); }

Var superexpressive(const Var& alpha, const Var& t) {
  const double a = alpha.value();
  const double x = t.value();
  const double g = se_branch(x);
  return binary(a * x + (1.0 - a) * g, alpha, x - g, t, a + (1.0 - a) * se_branch_slope(x));
}

Var sum(std::span<const Var> xs) {
  Var acc(0.0);
  for (const Var& x : xs) acc = acc + x;
  return acc;
}

Var dot(std::span<const Var> a, std::span<const Var> b) {
  if (a.size() != b.size()) throw std::invalid_argument("ad::dot: length mismatch");
  Var acc(0.0);
  for (std::size_t i = 0; i < a.size(); ++i) acc = acc + a[i] * b[i];
  return acc;
}

}  // namespace stackelberg::ad
