#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "qitsa/error.hpp"
#include "qitsa/featext.hpp"
#include "suites.hpp"

using namespace qitsa;
using ad::Array;
using ad::Node;
using namespace qitsa::featext;

namespace {

Array identity(std::size_t d) {
  Array m({d, d}, 0.0);
  for (std::size_t i = 0; i < d; ++i) m.at(i, i) = 1.0;
  return m;
}

void fill(Node& n, double v) {
  for (auto& e : n.mutable_value().data()) e = v;
}

}  // namespace

TEST_CASE("lstm init and zero behaviour") {
  Rng rng(5);
  auto p = LstmParams::init(3, 4, rng, "lstm");
  CHECK(p.parameters().size() == 12);
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(p.W[k].shape() == ad::Shape{4, 3});
    CHECK(p.U[k].shape() == ad::Shape{4, 4});
    for (double b : p.b[k].value().data()) CHECK(b == (k == kForget ? 1.0 : 0.0));
    for (double w : p.W[k].value().data()) CHECK(std::abs(w) <= 1.0 / std::sqrt(3.0));
  }

  // Zero input with zero state stays at zero, even with the forget bias.
  const Array h = lstm_forward(ad::constant(Array({5, 3}, 0.0)), p).value();
  for (double v : h.data()) CHECK(v == 0.0);

  auto z = LstmParams::zeros(3, 2, "z");
  Rng xr(6);
  const Array hz = lstm_forward(ad::constant(testutil::random_array(xr, {4, 3})), z).value();
  CHECK(hz.shape() == ad::Shape{4, 2});
  for (double v : hz.data()) CHECK(v == 0.0);
}

TEST_CASE("lstm hand-evaluated step") {
  auto p = LstmParams::zeros(1, 1, "lstm");
  for (std::size_t k = 0; k < 4; ++k) {
    fill(p.W[k], 1.0);
    fill(p.U[k], 1.0);
  }
  const double h = lstm_forward(ad::constant(Array({1, 1}, 1.0)), p).value()[0];
  CHECK(std::abs(h - 0.3700) < 1e-3);
  const double s = 1.0 / (1.0 + std::exp(-1.0));
  CHECK(h == doctest::Approx(s * std::tanh(s * std::tanh(1.0))).epsilon(1e-12));
}

TEST_CASE("lstm PAD suffix holds the last state") {
  Rng rng(11);
  auto p = LstmParams::init(2, 3, rng, "lstm");
  Node x = ad::constant(testutil::random_array(rng, {5, 2}));
  const Array h = lstm_forward(x, p, {true, true, false, false, false}).value();
  for (std::size_t t = 2; t < 5; ++t)
    for (std::size_t k = 0; k < 3; ++k) CHECK(h.at(t, k) == h.at(1, k));

  // The unpadded prefix matches a run on the prefix alone.
  const Array prefix = lstm_forward(ad::slice(x, 0, 2), p).value();
  for (std::size_t i = 0; i < prefix.size(); ++i) CHECK(prefix[i] == h[i]);

  CHECK_THROWS_AS(lstm_forward(ad::constant(Array({2, 3}, 0.0)), p), ShapeError);
  CHECK_THROWS_AS(lstm_forward(x, p, {true, false}), ShapeError);
}

TEST_CASE("self_attention examples") {
  Rng rng(2);
  auto p = AttentionParams::init(3, rng, "att");
  CHECK(p.scale() == doctest::Approx(std::sqrt(3.0)));

  Node one = ad::constant(testutil::random_array(rng, {1, 3}));
  auto out = self_attention_detail(one, p);
  CHECK(out.weights.value().storage() == std::vector<double>{1.0});
  const Array expected = ad::matmul(one, p.W_v).value();
  for (std::size_t k = 0; k < 3; ++k) CHECK(out.output.value()[k] == doctest::Approx(expected[k]).epsilon(1e-14));

  auto mean_p = AttentionParams::from(Array({3, 3}, 0.0), Array({3, 3}, 0.0), identity(3), "m");
  const Array r = testutil::random_array(rng, {4, 3});
  const std::vector<bool> mask{true, false, true, true};
  auto mean_out = self_attention_detail(ad::constant(r), mean_p, mask);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(mean_out.weights.value().at(i, 1) == 0.0);
    for (std::size_t k = 0; k < 3; ++k) {
      const double mean = (r.at(0, k) + r.at(2, k) + r.at(3, k)) / 3.0;
      CHECK(std::abs(mean_out.output.value().at(i, k) - mean) < 1e-12);
    }
  }

  auto id_p = AttentionParams::from(identity(2), identity(2), identity(2), "id");
  auto hand = self_attention_detail(ad::constant(identity(2)), id_p);
  const Array& F = hand.weights.value();
  CHECK(std::abs(F.at(0, 0) - 0.6698) < 1e-3);
  CHECK(std::abs(F.at(0, 1) - 0.3302) < 1e-3);
  CHECK(std::abs(F.at(1, 0) - 0.3302) < 1e-3);
  CHECK(std::abs(F.at(1, 1) - 0.6698) < 1e-3);
  CHECK(hand.output.value() == F);

  CHECK_THROWS_AS(self_attention(ad::constant(Array({2, 4}, 0.0)), p), ShapeError);
  CHECK_THROWS_AS(AttentionParams::from(Array({2, 3}, 0.0), identity(2), identity(2), "bad"), ShapeError);
}

TEST_CASE("attention rows sum to one with PAD columns at zero") {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(6), d = 1 + rng.below(4);
    auto p = AttentionParams::init(d, rng, "att");
    std::vector<bool> mask(n);
    for (std::size_t i = 0; i < n; ++i) mask[i] = rng.unit() < 0.7;
    mask[rng.below(n)] = true;
    const Array F = self_attention_detail(ad::constant(testutil::random_array(rng, {n, d}, -3, 3)), p, mask)
                        .weights.value();
    for (std::size_t i = 0; i < n; ++i) {
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (!mask[j]) CHECK(F.at(i, j) == 0.0);
        total += F.at(i, j);
      }
      CHECK(std::abs(total - 1.0) < 1e-10);
    }
  }
}

TEST_CASE("self_attention is permutation equivariant") {
  Rng rng(29);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.below(4), d = 1 + rng.below(4);
    auto p = AttentionParams::init(d, rng, "att");
    const Array r = testutil::random_array(rng, {n, d});
    const std::size_t a = rng.below(n);
    std::size_t b = rng.below(n - 1);
    if (b >= a) ++b;
    Array swapped = r;
    for (std::size_t k = 0; k < d; ++k) std::swap(swapped.at(a, k), swapped.at(b, k));

    const Array out = self_attention(ad::constant(r), p).value();
    const Array out_swapped = self_attention(ad::constant(swapped), p).value();
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t src = i == a ? b : (i == b ? a : i);
      for (std::size_t k = 0; k < d; ++k) CHECK(std::abs(out_swapped.at(i, k) - out.at(src, k)) < 1e-12);
    }
  }
}

TEST_CASE("lstm and attention gradients") {
  auto cases = suites::block_cases();
  std::erase_if(cases, [](const suites::GradCase& c) { return c.name != "lstm" && c.name != "self_attention"; });
  REQUIRE(cases.size() == 2);
  for (const auto& o : suites::gradient_suite(cases)) {
    INFO(o.name << " max relative error " << o.max_error);
    CHECK(o.pass());
  }
}
