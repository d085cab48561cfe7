#pragma once

// Orthonormal family of simple adapted processes
//     s(t, w) = psi_time(t) * prod_f sqrt(deg_f!) h_{deg_f}( int_0^T psi_{dir_f}(s) dW^{coord_f}_s )
// where psi are L2-normalized Haar functions and every space direction is supported
// before the time function switches on, so s is predictable.

#include <compare>
#include <cstddef>
#include <string>
#include <vector>

#include "stackelberg/ensemble.hpp"

namespace stackelberg {

// Haar function on [0,T]. Wavelets psi_{s1,s2} have s1 >= 0, 0 <= s2 < 2^{s1};
// s1 == -1 denotes the scaling function 1/sqrt(T) (time index only).
struct HaarIndex {
  int s1 = 0;
  int s2 = 0;

  static HaarIndex scaling() { return {-1, 0}; }
  bool is_scaling() const { return s1 < 0; }
  bool valid() const;
  // Support [start, end) as fractions of T.
  double start_fraction() const;
  double end_fraction() const;
  auto operator<=>(const HaarIndex&) const = default;
};

// One Hermite factor of a chaos functional: a space direction (Brownian coordinate
// and Haar wavelet) and a positive degree.
struct ChaosFactor {
  int coord = 0;
  HaarIndex direction;
  int degree = 1;
  auto operator<=>(const ChaosFactor&) const = default;
};

// Product of Hermite factors over pairwise distinct directions, kept sorted.
struct ChaosIndex {
  std::vector<ChaosFactor> factors;

  int total_degree() const;
  int max_level() const;  // largest direction scale, 0 when empty
  bool empty() const { return factors.empty(); }
  auto operator<=>(const ChaosIndex&) const = default;
};

struct BasisElement {
  HaarIndex time;
  ChaosIndex chaos;
  double norm_constant = 1.0;  // prod sqrt(deg!), already applied inside chaos_value
  std::size_t rank = 0;

  // "(s1,s2)|c:i:k:deg;..." integer tuples, stable across runs.
  std::string serialize() const;
  static BasisElement parse(const std::string& text);
  bool same_index(const BasisElement& other) const { return time == other.time && chaos == other.chaos; }
};

// Normalized Hermite polynomials h_i = He_i / i! via (i+1) h_{i+1} = x h_i - h_{i-1}.
double hermite(int i, double x);

// L2([0,T])-normalized Haar function at t; throws DomainError for t outside [0,T].
double haar_eval(const HaarIndex& idx, double t, double T);

// Wiener integral int_0^T psi_dir dW^coord for scenario p, as an exact signed sum of
// increments. Throws ConfigError if the direction's breakpoints are not grid nodes.
double haar_wiener_integral(const HaarIndex& dir, int coord, const BrownianEnsemble& ens, std::size_t p);

enum class ChaosForm {
  Tensor,         // prod_f sqrt(deg_f!) h_{deg_f}(xi_f): orthonormal
  LiteralProduct  // prod_f prod_{j=1}^{deg_f} h_j(xi_f), scaled to unit variance; not orthogonal
};

double chaos_value(const ChaosIndex& idx, const BrownianEnsemble& ens, std::size_t p,
                   ChaosForm form = ChaosForm::Tensor);

// Unit-variance normalizer of the literal product prod_{j=1}^{n} h_j(Z).
double literal_product_normalizer(int degree);

// Rank-th element of the fixed enumeration. Elements are ordered by
//   grade = resolution + total degree   (resolution = s1 + largest direction scale),
// then resolution, then total degree, then the lexicographic order of the index.
// Scales are capped by the grid: s1, direction scale <= log2(M) - 1.
BasisElement basis_element(std::size_t rank, const HorizonConfig& cfg);
std::vector<BasisElement> basis_elements(std::size_t count, const HorizonConfig& cfg);

// Checks the index constraints: valid time function, distinct directions, positive
// degrees, every direction ending no later than the time function starts, and all
// breakpoints on the grid of cfg.
bool admissible(const HaarIndex& time, const ChaosIndex& chaos, const HorizonConfig& cfg);

// P x M x 1 process psi_time(t_m) * chaos_value(p); exact zeros off the time support.
AdaptedProcess evaluate_basis(const BasisElement& elem, const BrownianEnsemble& ens);

// Per-scenario samples of int_0^T a_t b_t dt for two basis elements, using their
// product structure (no P x M arrays). Mean equals the H2 inner product estimate.
std::vector<double> basis_inner_samples(const BasisElement& a, const BasisElement& b, const BrownianEnsemble& ens);

}  // namespace stackelberg
