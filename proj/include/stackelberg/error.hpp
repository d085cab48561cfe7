#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace stackelberg {

// Argument outside the mathematical domain of an operation (e.g. t outside [0,T]).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Shapes or dimensions of two operands do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Invalid configuration: horizon, grid, game parameters, CLI documents.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A requested computation is refused because its preconditions cannot be certified
// (e.g. best response of a game without a strong-convexity modulus).
class RefusalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SimulationError : public std::runtime_error {
 public:
  SimulationError(const std::string& what, std::size_t scenario, std::size_t step)
      : std::runtime_error(what), scenario_(scenario), step_(step) {}
  std::size_t scenario() const { return scenario_; }
  std::size_t step() const { return step_; }

 private:
  std::size_t scenario_;
  std::size_t step_;
};

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> last_iterate, double last_grad_norm)
      : std::runtime_error(what), last_iterate_(std::move(last_iterate)), last_grad_norm_(last_grad_norm) {}
  const std::vector<double>& last_iterate() const { return last_iterate_; }
  double last_grad_norm() const { return last_grad_norm_; }

 private:
  std::vector<double> last_iterate_;
  double last_grad_norm_;
};

}  // namespace stackelberg
