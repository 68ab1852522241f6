#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "ftl/layers.hpp"
#include "ftl/network.hpp"
#include "ftl/stiefel.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace ftl;
using oracle::rel_err;

namespace {

constexpr std::size_t kSourceChain[] = {16, 8, 4};
constexpr std::size_t kTargetChain[] = {8, 4};
constexpr std::size_t kSpecificChain[] = {4, 4};

}  // namespace

TEST_CASE("bimap_forward examples") {
  Rng rng(1);
  SpdMatrix s = oracle::random_spd(3, rng);
  BiMapLayer id{oracle::eye(3)};
  CHECK(bimap_forward(id, s) == s);

  BiMapLayer pick{Matrix{{1, 0}}};
  CHECK(bimap_forward(pick, SpdMatrix(oracle::diag({2, 3}))).matrix() == Matrix{{2}});

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng r(seed);
    BiMapLayer w{oracle::random_matrix(3, 6, r)};
    SpdMatrix in = oracle::random_spd(6, r, 100);
    SymMatrix raw = bimap_apply(w, in);
    Matrix want = oracle::mul(oracle::mul(w.weight, in.matrix()), oracle::trans(w.weight));
    CHECK(rel_err(raw.matrix(), want) < 1e-13);
    for (double v : sym_eig(raw).values) CHECK(v >= -1e-12 * oracle::fro(want));
    for (double v : sym_eig(bimap_forward(w, in)).values) CHECK(v > 0.0);
  }
  CHECK_THROWS_AS(bimap_forward(pick, s), std::invalid_argument);
}

TEST_CASE("make_bimap has orthonormal rows") {
  Rng rng(3);
  BiMapLayer layer = make_bimap(8, 3, rng);
  Matrix wwt = oracle::mul(layer.weight, oracle::trans(layer.weight));
  CHECK(oracle::fro(oracle::sub(wwt, oracle::eye(3))) <= 1e-12);
  CHECK_THROWS_AS(make_bimap(3, 4, rng), std::invalid_argument);
}

TEST_CASE("stiefel helpers") {
  Rng rng(4);
  Matrix w = oracle::random_matrix(3, 7, rng);
  orthonormalize_rows(w);
  CHECK(oracle::fro(oracle::sub(oracle::mul(w, oracle::trans(w)), oracle::eye(3))) <= 1e-8);
  Matrix g = oracle::random_matrix(3, 7, rng);
  Matrix t = stiefel_tangent(w, g);
  // tangent condition: sym(T·Wᵀ) = 0
  Matrix twt = oracle::mul(t, oracle::trans(w));
  CHECK(oracle::fro(twt + oracle::trans(twt)) < 1e-12);
  Matrix dep{{1, 2, 3}, {2, 4, 6}};
  CHECK_THROWS_AS(orthonormalize_rows(dep), std::domain_error);
}

TEST_CASE("bimap_backward examples") {
  BiMapLayer id{oracle::eye(2)};
  SpdMatrix s(oracle::diag({1, 2}));
  Matrix ones{{1, 1}, {1, 1}};
  auto g = bimap_backward(id, s, ones);
  CHECK(g.d_weight == Matrix{{2, 4}, {2, 4}});
  auto z = bimap_backward(id, s, Matrix(2, 2));
  CHECK(oracle::fro(z.d_weight) == 0.0);
  CHECK(oracle::fro(z.d_input.matrix()) == 0.0);
}

TEST_CASE("bimap gradient vs central differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CHECK(gradcheck::bimap(seed, 8, 4) <= 1e-5);
    CHECK(gradcheck::bimap(100 + seed, 32, 16) <= 1e-5);
  }
}

TEST_CASE("eig_clamp gradient vs central differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) CHECK(gradcheck::eig_clamp(seed, 6) <= 1e-5);
  // inactive clamp passes the gradient through unchanged
  Rng rng(9);
  SpdMatrix p = oracle::random_spd(4, rng);
  Matrix g = oracle::random_sym(4, rng).matrix();
  CHECK(eig_clamp_backward(sym_eig(p), 1e-6, g).matrix() == g);
}

TEST_CASE("logeig examples") {
  CHECK(oracle::fro(logeig_forward(SpdMatrix(oracle::eye(3))).matrix()) == 0.0);
  const double e = std::numbers::e;
  auto l = logeig_forward(SpdMatrix(oracle::diag({e, e * e * e})));
  CHECK(rel_err(l.matrix(), oracle::diag({1, 3})) < 1e-15);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    SpdMatrix p = oracle::random_spd(2 + seed % 8, rng, 1e3);
    CHECK(logeig_forward(p) == spd_log(p));
  }
}

TEST_CASE("logeig_backward examples") {
  std::vector<double> lam{0.5, 2.0, 5.0};
  SpdMatrix p(oracle::diag(lam));
  LogEigTape tape;
  (void)logeig_forward(p, kDefaultClampEps, tape);
  auto d = logeig_backward(tape, oracle::eye(3));
  CHECK(rel_err(d.matrix(), oracle::diag({2.0, 0.5, 0.2})) < 1e-14);
  CHECK(oracle::fro(logeig_backward(tape, Matrix(3, 3)).matrix()) == 0.0);
}

TEST_CASE("logeig gradient vs central differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CHECK(gradcheck::logeig(seed, 4) <= 1e-5);
    CHECK(gradcheck::logeig(50 + seed, 8) <= 1e-5);
  }
  for (std::uint64_t seed = 0; seed < 10; ++seed) CHECK(gradcheck::logeig(200 + seed, 6, 1e-12) <= 1e-4);
}

TEST_CASE("flatten") {
  CHECK(flatten(SymMatrix(Matrix{{1, 2}, {2, 3}})) == std::vector<double>{1, 2, 2, 3});
  CHECK(flatten(SymMatrix(Matrix(3, 3))) == std::vector<double>(9, 0.0));
  Rng rng(2);
  SymMatrix v = oracle::random_sym(5, rng);
  CHECK(unflatten(flatten(v)) == v.matrix());
  CHECK_THROWS_AS(unflatten(std::vector<double>(5)), std::invalid_argument);
}

TEST_CASE("dense softmax forward examples") {
  DenseLayer zero{Matrix(2, 3), {0, 0}};
  std::vector<double> x{1, 2, 3};
  CHECK(dense_softmax_forward(zero, x) == std::vector<double>{0.5, 0.5});
  DenseLayer biased{Matrix(2, 3), {10, -10}};
  auto p = dense_softmax_forward(biased, x);
  CHECK(std::abs(p[1] - 2.0611536181902037e-9) < 1e-20);
  CHECK(std::abs(p[0] - (1.0 - p[1])) <= 2.3e-16);

  Rng rng(6);
  std::vector<double> logits{0.3, -1.2, 2.5, 0.0};
  auto base = softmax(logits);
  double sum = 0.0;
  for (double v : base) sum += v;
  CHECK(std::abs(sum - 1.0) <= 1e-12);
  for (double c : {-7.0, 0.25, 3.0}) {
    std::vector<double> shifted = logits;
    for (double& v : shifted) v += c;
    auto q = softmax(shifted);
    for (std::size_t i = 0; i < q.size(); ++i) CHECK(std::abs(q[i] - base[i]) <= 1e-15);
  }
  CHECK_THROWS_AS(dense_softmax_forward(zero, std::vector<double>{1, 2}), std::invalid_argument);
}

TEST_CASE("dense softmax backward examples") {
  Rng rng(8);
  DenseLayer layer{oracle::random_matrix(2, 3, rng), {0.1, -0.2}};
  std::vector<double> x{1, -1, 2};
  std::vector<double> onehot{0, 1};
  auto g = dense_softmax_backward(layer, x, onehot, 1);
  CHECK(oracle::fro(g.d_weight) == 0.0);
  CHECK(g.d_bias == std::vector<double>{0, 0});
  CHECK(g.d_input == std::vector<double>{0, 0, 0});
  auto u = dense_softmax_backward(layer, x, std::vector<double>{0.5, 0.5}, 0);
  CHECK(u.d_bias == std::vector<double>{-0.5, 0.5});
  CHECK_THROWS_AS(dense_softmax_backward(layer, x, onehot, 2), std::out_of_range);
}

TEST_CASE("dense gradient vs central differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CHECK(gradcheck::dense(seed, 16, 2) <= 1e-6);
    CHECK(gradcheck::dense(100 + seed, 64, 4) <= 1e-6);
  }
}

TEST_CASE("argmax ties go to the lower index") {
  CHECK(argmax(std::vector<double>{0.25, 0.5, 0.25}) == 1);
  CHECK(argmax(std::vector<double>{0.5, 0.5}) == 0);
  CHECK(argmax(std::vector<double>{0.2, 0.4, 0.4}) == 1);
}

TEST_CASE("network_forward examples") {
  Rng rng(10);
  ModelParams params;
  params.local.push_back(BiMapLayer{oracle::eye(3)});
  params.shared = DenseLayer{Matrix(2, 9), {0, 0}};
  for (int k = 0; k < 5; ++k) {
    auto tape = network_forward(params, oracle::random_spd(3, rng, 50));
    CHECK(tape.probs == std::vector<double>{0.5, 0.5});
    CHECK(tape.length() == 4);
    CHECK(predict(params, oracle::random_spd(3, rng)) == 0);
  }
  constexpr std::size_t chain[] = {16, 8, 4};
  ModelParams deep = gradcheck::random_network(3, 32, chain, 4);
  auto tape = network_forward(deep, oracle::random_spd(32, rng, 10));
  CHECK(tape.length() == 6);
  double sum = 0.0;
  for (double p : tape.probs) {
    CHECK(p >= 0.0);
    sum += p;
  }
  CHECK(std::abs(sum - 1.0) <= 1e-12);
  CHECK_THROWS_AS(network_forward(deep, oracle::random_spd(8, rng)), std::invalid_argument);
}

TEST_CASE("network_backward additivity and zero upstream") {
  constexpr std::size_t chain[] = {2};
  ModelParams params = gradcheck::random_network(4, 4, chain, 2);
  Rng rng(12);
  SpdMatrix s = oracle::random_spd(4, rng);
  auto tape = network_forward(params, s);
  auto once = network_backward(params, tape, 1);
  auto twice = ModelGradients::zeros_like(params);
  twice += network_backward(params, tape, 1);
  twice += network_backward(params, tape, 1);
  auto doubled = once;
  doubled *= 2.0;
  CHECK(pack(twice) == pack(doubled));
  auto none = network_backward(params, tape, 1, 0.0);
  for (double v : pack(none)) CHECK(v == 0.0);
}

TEST_CASE("pack and unpack round trip") {
  constexpr std::size_t chain[] = {5, 3};
  ModelParams params = gradcheck::random_network(5, 6, chain, 3);
  auto flat = pack(params);
  CHECK(flat.size() == 5 * 6 + 3 * 5 + 3 * 9 + 3);
  ModelParams other = gradcheck::random_network(6, 6, chain, 3);
  unpack(flat, other);
  CHECK(pack(other) == flat);
  CHECK_THROWS_AS(unpack(std::vector<double>(3), other), std::invalid_argument);
}

TEST_CASE("end-to-end gradient vs central differences") {
  constexpr std::size_t small[] = {2};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CHECK(gradcheck::network(seed, 4, small, 2) <= 1e-4);
    CHECK(gradcheck::network(seed, 4, small, 2, false) <= 1e-4);
  }
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CHECK(gradcheck::network(300 + seed, 32, kSourceChain, 2) <= 1e-4);
    CHECK(gradcheck::network(400 + seed, 32, kTargetChain, 2) <= 1e-4);
    CHECK(gradcheck::network(500 + seed, 32, kSpecificChain, 2) <= 1e-4);
  }
}
