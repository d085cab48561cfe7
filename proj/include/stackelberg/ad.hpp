#pragma once

// Minimal reverse-mode automatic differentiation over scalars.
//
// A Var is either a constant (index < 0) or a node recorded on the Tape that is
// active on the current thread. Operations between constants never touch a tape,
// so the same code path evaluates plain values when no tape is active.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace stackelberg::ad {

class Tape;

class Var {
 public:
  Var() = default;
  Var(double value) : value_(value) {}  // NOLINT: constants convert implicitly

  double value() const { return value_; }
  std::int32_t index() const { return index_; }
  bool recorded() const { return index_ >= 0; }

 private:
  friend class Tape;
  Var(double value, std::int32_t index) : value_(value), index_(index) {}

  double value_ = 0.0;
  std::int32_t index_ = -1;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Makes this tape the recording target of the current thread for its lifetime.
  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  static Tape* active();

  // New independent variable (a leaf).
  Var variable(double value);
  std::vector<Var> variables(std::span<const double> values);

  // Records a node with up to two parents and their local partials.
  Var record(double value, const Var& a, double da);
  Var record(double value, const Var& a, double da, const Var& b, double db);

  // Adjoints d(root)/d(node) for every node; throws if root was not recorded here.
  std::vector<double> gradient(const Var& root) const;
  // Vector-Jacobian product: adjoints of sum_i seeds[i] * outputs[i].
  std::vector<double> gradient(std::span<const Var> outputs, std::span<const double> seeds) const;

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }
  void reserve(std::size_t n) { nodes_.reserve(n); }

 private:
  struct Node {
    std::int32_t a;
    std::int32_t b;
    double da;
    double db;
  };
  void backward(std::vector<double>& adjoint, std::size_t top) const;

  std::vector<Node> nodes_;
};

inline double adjoint_of(const std::vector<double>& adjoints, const Var& v) {
  return v.recorded() ? adjoints[static_cast<std::size_t>(v.index())] : 0.0;
}

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);
inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }
inline Var& operator/=(Var& a, const Var& b) { return a = a / b; }

Var exp(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var tanh(const Var& a);
Var sin(const Var& a);
Var cos(const Var& a);
Var abs(const Var& a);
Var square(const Var& a);
Var pow(const Var& a, int n);
Var relu(const Var& a);
Var max(const Var& a, const Var& b);
Var min(const Var& a, const Var& b);
Var clamp(const Var& a, double lo, double hi);

// Trainable super-expressive activation sigma_alpha(t) = alpha*t + (1-alpha)*g(t),
// g(t) = |t mod 2| for t >= 0 and t/(|t|+1) for t < 0.
// At the jumps of t mod 2 (positive even integers) the derivative is the left one.
Var superexpressive(const Var& alpha, const Var& t);
double superexpressive(double alpha, double t);

// Sum in index order.
Var sum(std::span<const Var> xs);
Var dot(std::span<const Var> a, std::span<const Var> b);

}  // namespace stackelberg::ad
