#include <doctest.h>

#include <cmath>
#include <set>

#include "oracles.hpp"
#include "stackelberg/chaos_basis.hpp"
#include "stackelberg/error.hpp"
#include "stackelberg/process_space.hpp"
#include "stackelberg/rng.hpp"

using namespace stackelberg;

namespace {

double factorial(int n) { return std::tgamma(n + 1.0); }

bool within_3se(const std::vector<double>& samples, double expected, double extra = 1e-12) {
  const McEstimate e = mc_estimate(samples);
  return std::abs(e.mean - expected) <= 3.0 * e.std_error + extra;
}

}  // namespace

TEST_SUITE("chaos_basis") {
  TEST_CASE("hermite examples") {
    CHECK(hermite(0, 7.3) == 1.0);
    CHECK(hermite(1, 2.0) == 2.0);
    CHECK(hermite(2, 0.0) == -0.5);
  }

  TEST_CASE("recurrence matches the Rodrigues expansion") {
    Rng rng(42);
    for (int i = 0; i <= 8; ++i) {
      for (int k = 0; k < 50; ++k) {
        const double x = rng.uniform(-4.0, 4.0);
        const double expected = oracles::hermite_rodrigues(i, x) / factorial(i);
        // scale of the polynomial at x: sum of absolute monomial contributions
        double scale = 0.0;
        for (int j = 0; 2 * j <= i; ++j) {
          scale += std::tgamma(i + 1.0) / (std::tgamma(j + 1.0) * std::tgamma(i - 2.0 * j + 1.0) * std::pow(2.0, j)) *
                   std::pow(std::abs(x), i - 2 * j);
        }
        scale /= factorial(i);
        INFO("i=" << i << " x=" << x);
        CHECK(std::abs(hermite(i, x) - expected) <= 1e-10 * std::max(std::abs(expected), scale));
      }
    }
  }

  TEST_CASE("normalized hermite factors have unit variance (Gauss-Hermite)") {
    const auto rule = oracles::gauss_hermite(20);
    for (int j = 0; j <= 6; ++j) {
      double m2 = 0.0;
      for (auto [x, w] : rule) m2 += w * factorial(j) * hermite(j, x) * hermite(j, x);
      CHECK(std::abs(m2 - 1.0) < 1e-8);
    }
    // distinct degrees are orthogonal
    double cross = 0.0;
    for (auto [x, w] : rule) cross += w * hermite(2, x) * hermite(4, x);
    CHECK(std::abs(cross) < 1e-12);
  }

  TEST_CASE("literal product normalizer gives unit variance") {
    const auto rule = oracles::gauss_hermite(30);
    for (int n = 1; n <= 4; ++n) {
      const double c = literal_product_normalizer(n);
      double m2 = 0.0;
      for (auto [x, w] : rule) {
        double p = 1.0;
        for (int j = 1; j <= n; ++j) p *= hermite(j, x);
        m2 += w * c * c * p * p;
      }
      CHECK(std::abs(m2 - 1.0) < 1e-8);
    }
  }

  TEST_CASE("haar_eval examples") {
    CHECK(haar_eval({0, 0}, 0.25, 1.0) == 1.0);
    CHECK(haar_eval({0, 0}, 0.75, 1.0) == -1.0);
    CHECK(haar_eval({1, 1}, 0.25, 1.0) == 0.0);
    CHECK(haar_eval({2, 1}, 0.3, 1.0) == doctest::Approx(2.0));
    CHECK(haar_eval(HaarIndex::scaling(), 0.9, 4.0) == doctest::Approx(0.5));
    CHECK_THROWS_AS(haar_eval({0, 0}, 1.5, 1.0), DomainError);
    CHECK_THROWS_AS(haar_eval({0, 0}, -0.1, 1.0), DomainError);
  }

  TEST_CASE("haar functions are L2 normalized (midpoint quadrature)") {
    for (HaarIndex h : {HaarIndex{0, 0}, HaarIndex{1, 0}, HaarIndex{1, 1}, HaarIndex{3, 5}, HaarIndex::scaling()}) {
      const int n = 4096;
      const double T = 2.0;
      double s = 0.0;
      for (int i = 0; i < n; ++i) {
        const double v = haar_eval(h, T * (i + 0.5) / n, T);
        s += v * v * T / n;
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  }

  TEST_CASE("chaos_value examples") {
    const BrownianEnsemble ens({1.0, 16, 1}, 8, 3);
    CHECK(chaos_value(ChaosIndex{}, ens, 0) == 1.0);
    const ChaosIndex one{{ChaosFactor{0, {0, 0}, 1}}};
    for (std::size_t p = 0; p < ens.paths(); ++p) {
      const double xi = ens.increment_sum(p, 0, 8) - ens.increment_sum(p, 8, 16);
      CHECK(chaos_value(one, ens, p) == doctest::Approx(xi).epsilon(1e-14));
    }
    const ChaosIndex two{{ChaosFactor{0, {0, 0}, 2}}};
    const double xi = ens.increment_sum(0, 0, 8) - ens.increment_sum(0, 8, 16);
    CHECK(chaos_value(two, ens, 0) == doctest::Approx(std::sqrt(2.0) * (xi * xi - 1.0) / 2.0));
  }

  TEST_CASE("misaligned direction is a configuration error") {
    const BrownianEnsemble ens({1.0, 4, 1}, 4, 1);
    const ChaosIndex fine{{ChaosFactor{0, {3, 0}, 1}}};
    CHECK_THROWS_AS(chaos_value(fine, ens, 0), ConfigError);
  }

  TEST_CASE("distinct chaos functionals are uncorrelated") {
    const BrownianEnsemble ens({1.0, 16, 1}, 100000, 11);
    const std::vector<ChaosIndex> idx = {
        ChaosIndex{},
        ChaosIndex{{ChaosFactor{0, {0, 0}, 1}}},
        ChaosIndex{{ChaosFactor{0, {0, 0}, 2}}},
        ChaosIndex{{ChaosFactor{0, {1, 0}, 1}}},
        ChaosIndex{{ChaosFactor{0, {1, 0}, 1}, ChaosFactor{0, {1, 1}, 1}}},
        ChaosIndex{{ChaosFactor{0, {2, 3}, 3}}},
    };
    for (std::size_t a = 0; a < idx.size(); ++a) {
      for (std::size_t b = a; b < idx.size(); ++b) {
        std::vector<double> s(ens.paths());
        for (std::size_t p = 0; p < ens.paths(); ++p) s[p] = chaos_value(idx[a], ens, p) * chaos_value(idx[b], ens, p);
        INFO("pair " << a << "," << b);
        CHECK(within_3se(s, a == b ? 1.0 : 0.0));
      }
    }
  }

  TEST_CASE("enumeration: first elements and determinism") {
    const HorizonConfig cfg{1.0, 64, 1};
    const BasisElement e0 = basis_element(0, cfg);
    CHECK(e0.time.is_scaling());
    CHECK(e0.chaos.empty());
    const BasisElement e1 = basis_element(1, cfg);
    CHECK(e1.time == HaarIndex{0, 0});
    CHECK(e1.chaos.empty());
    const BasisElement e8 = basis_element(8, cfg);
    CHECK(e8.time == HaarIndex{1, 1});
    REQUIRE(e8.chaos.factors.size() == 1);
    CHECK(e8.chaos.factors[0].direction == HaarIndex{1, 0});
    CHECK(e8.chaos.factors[0].degree == 1);
    for (std::size_t r : {0u, 5u, 17u, 40u}) {
      const BasisElement a = basis_element(r, cfg), b = basis_element(r, cfg);
      CHECK(a.same_index(b));
      CHECK(a.rank == r);
      CHECK(BasisElement::parse(a.serialize()).same_index(a));
    }
  }

  TEST_CASE("enumeration is injective and admissible") {
    const HorizonConfig cfg{1.0, 32, 2};
    const auto elems = basis_elements(200, cfg);
    std::set<std::string> seen;
    for (const auto& e : elems) {
      CHECK(admissible(e.time, e.chaos, cfg));
      CHECK(seen.insert(e.serialize()).second);
    }
  }

  TEST_CASE("small grids exhaust the enumeration") {
    const HorizonConfig cfg{1.0, 2, 1};
    CHECK_NOTHROW(basis_element(1, cfg));
    CHECK_THROWS_AS(basis_element(2, cfg), DomainError);
  }

  TEST_CASE("admissibility rejects anticipating directions") {
    const HorizonConfig cfg{1.0, 16, 1};
    // direction (0,0) covers all of [0,T] but time (1,1) starts at T/2
    CHECK_FALSE(admissible({1, 1}, ChaosIndex{{ChaosFactor{0, {0, 0}, 1}}}, cfg));
    CHECK(admissible({1, 1}, ChaosIndex{{ChaosFactor{0, {1, 0}, 1}}}, cfg));
    CHECK_FALSE(admissible({1, 1}, ChaosIndex{{ChaosFactor{0, {1, 0}, 0}}}, cfg));
    CHECK_FALSE(admissible(HaarIndex::scaling(), ChaosIndex{{ChaosFactor{0, {1, 0}, 1}}}, cfg));
  }

  TEST_CASE("evaluate_basis: deterministic element and exact zeros off support") {
    const BrownianEnsemble ens({1.0, 16, 1}, 4, 2);
    const AdaptedProcess psi = evaluate_basis(basis_element(1, ens.config()), ens);
    for (std::size_t p = 0; p < ens.paths(); ++p) {
      for (int m = 0; m < 16; ++m) CHECK(psi(p, m) == (m < 8 ? 1.0 : -1.0));
    }
    const BasisElement e8 = basis_element(8, ens.config());
    const AdaptedProcess u = evaluate_basis(e8, ens);
    for (std::size_t p = 0; p < ens.paths(); ++p) {
      for (int m = 0; m < 8; ++m) CHECK(u(p, m) == 0.0);
    }
  }

  TEST_CASE("first ten elements are orthonormal (Monte-Carlo Gram)") {
    const BrownianEnsemble ens({1.0, 32, 1}, 40000, 5);
    const auto elems = basis_elements(10, ens.config());
    for (std::size_t a = 0; a < elems.size(); ++a) {
      for (std::size_t b = a; b < elems.size(); ++b) {
        INFO("ranks " << a << "," << b);
        CHECK(within_3se(basis_inner_samples(elems[a], elems[b], ens), a == b ? 1.0 : 0.0));
      }
    }
  }

  TEST_CASE("product-structure samples equal direct inner products") {
    const BrownianEnsemble ens({1.0, 32, 1}, 500, 8);
    const auto elems = basis_elements(12, ens.config());
    for (std::size_t a = 0; a < elems.size(); ++a) {
      for (std::size_t b = 0; b < elems.size(); ++b) {
        const double direct = inner_product(evaluate_basis(elems[a], ens), evaluate_basis(elems[b], ens));
        const McEstimate fast = mc_estimate(basis_inner_samples(elems[a], elems[b], ens));
        CHECK(std::abs(direct - fast.mean) < 1e-12);
      }
    }
  }

  TEST_CASE("evaluated elements are adapted") {
    const BrownianEnsemble ens({1.0, 32, 1}, 64, 9);
    for (const auto& e : basis_elements(16, ens.config())) {
      INFO(e.serialize());
      CHECK(check_adapted(evaluate_basis(e, ens), ens));
    }
  }
}
