#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "stackelberg/rng.hpp"

namespace oracles {

// Richardson-extrapolated central difference, O(h^4).
inline double derivative(const std::function<double(double)>& f, double x, double h = 1e-3) {
  auto central = [&](double s) { return (f(x + s) - f(x - s)) / (2.0 * s); };
  return (4.0 * central(h / 2.0) - central(h)) / 3.0;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

// Probabilists' Hermite He_n by explicit coefficients from Rodrigues:
// He_n(x) = sum_k (-1)^k n! / (k! (n-2k)! 2^k) x^{n-2k}.
inline double hermite_rodrigues(int n, double x) {
  double s = 0.0;
  for (int k = 0; 2 * k <= n; ++k) {
    s += (k % 2 ? -1.0 : 1.0) * std::tgamma(n + 1.0) / (std::tgamma(k + 1.0) * std::tgamma(n - 2.0 * k + 1.0) *
                                                        std::pow(2.0, k)) *
         std::pow(x, n - 2 * k);
  }
  return s;
}

// Gauss-Hermite rule for the standard normal: Newton iteration on the orthonormal
// Hermite recurrence (weight e^{-z^2}), then x = sqrt(2) z, w /= sqrt(pi).
inline std::vector<std::pair<double, double>> gauss_hermite(int n) {
  std::vector<double> z(n), w(n);
  const double pim4 = std::pow(M_PI, -0.25);
  double r = 0.0;
  for (int i = 0; i < (n + 1) / 2; ++i) {
    if (i == 0) {
      r = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -0.16667);
    } else if (i == 1) {
      r -= 1.14 * std::pow(n, 0.426) / r;
    } else if (i == 2) {
      r = 1.86 * r - 0.86 * z[0];
    } else if (i == 3) {
      r = 1.91 * r - 0.91 * z[1];
    } else {
      r = 2.0 * r - z[i - 2];
    }
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p1 = pim4, p2 = 0.0;
      for (int j = 1; j <= n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = r * std::sqrt(2.0 / j) * p2 - std::sqrt((j - 1.0) / j) * p3;
      }
      pp = std::sqrt(2.0 * n) * p2;
      const double r1 = r;
      r = r1 - p1 / pp;
      if (std::abs(r - r1) <= 1e-15) break;
    }
    z[i] = r;
    z[n - 1 - i] = -r;
    w[i] = w[n - 1 - i] = 2.0 / (pp * pp);
  }
  std::vector<std::pair<double, double>> out;
  for (int i = 0; i < n; ++i) out.emplace_back(std::sqrt(2.0) * z[i], w[i] / std::sqrt(M_PI));
  return out;
}

}  // namespace oracles
