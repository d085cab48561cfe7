#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "stackelberg/ad.hpp"
#include "stackelberg/error.hpp"
#include "stackelberg/neural_operator.hpp"
#include "stackelberg/process_space.hpp"
#include "stackelberg/tensor_file.hpp"

using namespace stackelberg;

namespace {

OperatorConfig small_config(int N = 3, int Q = 2) {
  OperatorConfig c;
  c.d_enc = 4;
  c.N = N;
  c.Q = Q;
  c.J = 2;
  c.W = 6;
  c.seed = 17;
  return c;
}

// ||apply(u) - target||^2 on ens
double fit_loss(const AttentionalNO& no, const AdaptedProcess& u, const AdaptedProcess& target,
                const BrownianEnsemble& ens) {
  AdaptedProcess d = no.apply(u, ens);
  d -= target;
  return inner_product(d, d);
}

}  // namespace

TEST_SUITE("neural_operator") {
  TEST_CASE("softmax examples") {
    const auto a = softmax(std::vector<double>{0.0, 0.0});
    CHECK(a[0] == 0.5);
    CHECK(a[1] == 0.5);
    const auto b = softmax(std::vector<double>{2.5, 2.5, 2.5});
    for (double v : b) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    const auto c = softmax(std::vector<double>{1000.0, 0.0});
    CHECK(std::isfinite(c[0]));
    CHECK(c[0] == 1.0);
    CHECK(c[1] == doctest::Approx(std::exp(-1000.0)));
    CHECK(c[1] >= 0.0);
    const auto d = softmax(std::vector<double>{0.3, -1.2, 4.0, 0.0});
    CHECK(std::accumulate(d.begin(), d.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS_AS(softmax(std::vector<double>{}), DimensionError);
  }

  TEST_CASE("tape softmax matches the double version") {
    ad::Tape tape;
    ad::Tape::Scope scope(tape);
    const std::vector<double> w{0.1, -0.4, 2.0};
    const auto v = tape.variables(w);
    const auto s = softmax(std::span<const ad::Var>(v));
    const auto ref = softmax(w);
    for (std::size_t i = 0; i < 3; ++i) CHECK(s[i].value() == doctest::Approx(ref[i]).epsilon(1e-15));
  }

  TEST_CASE("config validation and shapes") {
    OperatorConfig c = small_config();
    c.N = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_config();
    c.value_ranks = {0, 1, 2};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    const AttentionalNO no(small_config(), {1.0, 16, 1});
    CHECK(no.processor().input_dim() == 4);
    CHECK(no.processor().output_dim() == 3);
    CHECK(no.values_net().output_dim() == 6);
    CHECK(no.encoder_basis().size() == 4);
    CHECK(no.value_basis().size() == 6);
    for (std::size_t k = 0; k < 6; ++k) CHECK(no.value_basis()[k].rank == k);
    CHECK_THROWS_AS(no.coefficients(std::vector<double>(3, 0.0)), DimensionError);
  }

  TEST_CASE("zero processor averages constant value rows") {
    const BrownianEnsemble ens({1.0, 16, 1}, 32, 1);
    AttentionalNO no(small_config(), ens.config());
    for (double& p : no.processor().parameters()) p = 0.0;
    for (double& p : no.values_net().parameters()) p = 0.0;
    for (int k = 0; k < 6; ++k) no.values_net().c()[k] = k + 1.0;
    const auto c = no.coefficients(std::vector<double>{0.3, -1.0, 2.0, 0.5});
    for (int k = 0; k < 6; ++k) CHECK(c[k] == doctest::Approx((k + 1.0) / 3.0).epsilon(1e-15));
    const AdaptedProcess out = no.apply(AdaptedProcess::constant(ens, 1.0), ens);
    const auto vals = no.value_basis().evaluated(ens);
    AdaptedProcess expect = AdaptedProcess::zeros(ens);
    for (int k = 0; k < 6; ++k) expect.axpy((k + 1.0) / 3.0, (*vals)[k]);
    AdaptedProcess d = out;
    d -= expect;
    CHECK(norm(d) < 1e-12);
  }

  TEST_CASE("single head ignores the processor") {
    const BrownianEnsemble ens({1.0, 16, 1}, 16, 2);
    AttentionalNO no(small_config(1, 3), ens.config());
    const std::vector<double> x{0.2, 0.1, -0.3, 0.4};
    const auto before = no.coefficients(x);
    for (double& p : no.processor().parameters()) p += 0.37;
    const auto after = no.coefficients(x);
    const Eigen::VectorXd v = no.values_net().forward(Eigen::Map<const Eigen::VectorXd>(x.data(), 4));
    for (int q = 0; q < 3; ++q) {
      CHECK(before[q] == after[q]);
      CHECK(before[q] == doctest::Approx(v[q]).epsilon(1e-15));
    }
  }

  TEST_CASE("output lies in the span of the value elements") {
    const BrownianEnsemble ens({1.0, 32, 1}, 4000, 3);
    const AttentionalNO no(small_config(), ens.config());
    const AdaptedProcess u = AdaptedProcess::deterministic(ens, [](double t) { return std::cos(4 * t); });
    const AdaptedProcess out = no.apply(u, ens);
    const auto elems = basis_elements(6 + 100, ens.config());
    for (std::size_t r = 6; r < elems.size(); ++r) {
      const McEstimate e = inner_product_estimate(out, evaluate_basis(elems[r], ens));
      INFO("rank " << r);
      CHECK(std::abs(e.mean) <= 3.0 * e.std_error + 1e-12);
    }
  }

  TEST_CASE("attention weights form a convex combination of head outputs") {
    const AttentionalNO no(small_config(), {1.0, 16, 1});
    const std::vector<double> x{0.5, -0.25, 0.75, 0.1};
    const Eigen::Map<const Eigen::VectorXd> xv(x.data(), 4);
    const Eigen::VectorXd w = no.processor().forward(xv);
    const Eigen::VectorXd v = no.values_net().forward(xv);
    const auto s = softmax(std::vector<double>(w.data(), w.data() + w.size()));
    double total = 0.0;
    for (double a : s) {
      CHECK(a > 0.0);
      total += a;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-15));
    const auto c = no.coefficients(x);
    for (int n = 0; n < 3; ++n) {
      for (int q = 0; q < 2; ++q) CHECK(c[n * 2 + q] == doctest::Approx(s[n] * v[n * 2 + q]).epsilon(1e-14));
    }
  }

  TEST_CASE("joint head permutation leaves the output bit-identical") {
    const BrownianEnsemble ens({1.0, 16, 1}, 64, 4);
    const AttentionalNO no(small_config(), ens.config());
    const AttentionalNO pn = no.permuted_heads({2, 0, 1});
    const AdaptedProcess u = AdaptedProcess::deterministic(ens, [](double t) { return t - 0.5; });
    const AdaptedProcess a = no.apply(u, ens), b = pn.apply(u, ens);
    bool same = true;
    for (std::size_t i = 0; i < a.values().size(); ++i) same = same && a.values()[i] == b.values()[i];
    CHECK(same);
    CHECK_THROWS_AS(no.permuted_heads({0, 1}), DimensionError);
  }

  TEST_CASE("parameter gradient of the fit loss matches finite differences") {
    const BrownianEnsemble ens({1.0, 16, 1}, 64, 5);
    AttentionalNO no(small_config(), ens.config());
    const AdaptedProcess u = AdaptedProcess::deterministic(ens, [](double t) { return std::sin(5 * t); });
    const AdaptedProcess target = AdaptedProcess::deterministic(ens, [](double t) { return 1.0 - t; });
    const std::vector<double> x = no.encode(u, ens);
    const Eigen::MatrixXd& G = no.value_gram(ens);
    const Eigen::VectorXd bvec = no.value_inner(target, ens);
    const double tt = inner_product(target, target);
    const std::vector<double> theta = no.parameters();

    ad::Tape tape;
    ad::Tape::Scope scope(tape);
    const auto th = tape.variables(theta);
    std::vector<ad::Var> xc(x.begin(), x.end());
    const auto c = no.coefficients(xc, th);
    ad::Var loss = tt;
    for (Eigen::Index a = 0; a < G.rows(); ++a) {
      loss -= 2.0 * bvec[a] * c[a];
      for (Eigen::Index b = 0; b < G.cols(); ++b) loss += G(a, b) * c[a] * c[b];
    }
    CHECK(loss.value() == doctest::Approx(fit_loss(no, u, target, ens)).epsilon(1e-10));
    const auto adj = tape.gradient(loss);

    const double h = 1e-6;
    for (std::size_t i = 0; i < theta.size(); i += 7) {
      std::vector<double> tp = theta, tm = theta;
      tp[i] += h;
      tm[i] -= h;
      AttentionalNO a = no, b = no;
      a.set_parameters(tp);
      b.set_parameters(tm);
      const double fd = (fit_loss(a, u, target, ens) - fit_loss(b, u, target, ens)) / (2 * h);
      const double g = ad::adjoint_of(adj, th[i]);
      INFO("parameter " << i);
      CHECK(std::abs(g - fd) <= 1e-4 * std::max(std::abs(fd), 1e-2));
    }
  }

  TEST_CASE("parameter accounting") {
    // N = Q = 1 with one-layer nets 1 -> 1: A, b, alpha, c are stored, glorot leaves b = c = 0
    OperatorConfig tiny;
    tiny.d_enc = 1;
    tiny.N = 1;
    tiny.Q = 1;
    tiny.J = 1;
    tiny.W = 1;
    const AttentionalNO t(tiny, {1.0, 16, 1});
    CHECK(t.processor().dense_parameter_count() == 4);
    BudgetReport r = t.total_parameters();
    CHECK(r.processor == 2);
    CHECK(r.values == 2);
    CHECK(r.budget == 1 * 1 * 1 + 1);
    CHECK_FALSE(r.within);

    // the larger shape used by the supervised acceptance run
    OperatorConfig big;
    big.d_enc = 8;
    big.N = 16;
    big.Q = 8;
    big.J = 3;
    big.W = 32;
    AttentionalNO b(big, {1.0, 32, 1});
    const std::size_t pd = dense_parameter_arithmetic(b.processor().dims(), big.family);
    const std::size_t vd = dense_parameter_arithmetic(b.values_net().dims(), big.family);
    CHECK(pd == 1952);
    CHECK(vd == 5648);
    for (double& p : b.processor().parameters()) p = 0.5;
    for (double& p : b.values_net().parameters()) p = 0.5;
    r = b.total_parameters();
    CHECK(r.total == 7600);
    CHECK(r.J_max == 3);
    CHECK(r.W_max == 128);
    CHECK(r.within);

    // zeroing the values net leaves only the processor in the count
    for (double& p : b.values_net().parameters()) p = 0.0;
    CHECK(b.total_parameters().values == 0);
    CHECK(b.total_parameters().total == 1952);
  }

  TEST_CASE("checkpoint round trip through the tensor file") {
    const BrownianEnsemble ens({1.0, 16, 1}, 32, 6);
    OperatorConfig c = small_config();
    c.value_ranks = {3, 7, 1, 9, 2, 11};
    const AttentionalNO no(c, ens.config());
    std::stringstream buf;
    write_tensors(buf, no.to_tensors());
    const AttentionalNO back = AttentionalNO::from_tensors(read_tensors(buf), ens.config());
    CHECK(back.parameters() == no.parameters());
    CHECK(back.config().value_ranks == c.value_ranks);
    const AdaptedProcess u = AdaptedProcess::constant(ens, 0.3);
    const AdaptedProcess a = no.apply(u, ens), b = back.apply(u, ens);
    bool same = true;
    for (std::size_t i = 0; i < a.values().size(); ++i) same = same && a.values()[i] == b.values()[i];
    CHECK(same);
    auto tensors = no.to_tensors();
    tensors.erase(tensors.begin());
    CHECK_THROWS_AS(AttentionalNO::from_tensors(tensors, ens.config()), ConfigError);
  }
}
