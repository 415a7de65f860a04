#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "qitsa/error.hpp"
#include "qitsa/head.hpp"
#include "qitsa/qembed.hpp"
#include "suites.hpp"

using namespace qitsa;
using ad::Array;
using ad::Node;
using namespace qitsa::head;

namespace {

ReductionConfig config(Reduction v, std::size_t kernels = 2, std::size_t k = 3, std::size_t pool = 2) {
  return {v, kernels, k, k, pool, pool};
}

}  // namespace

TEST_CASE("reduction names round-trip") {
  for (auto v : {Reduction::CnnMaxPool, Reduction::MaxPool, Reduction::CnnDiagonal, Reduction::Diagonal})
    CHECK(parse_reduction(to_string(v)) == v);
  CHECK(display_name(Reduction::CnnDiagonal) == "CNN-Diagonal");
  CHECK_THROWS_AS(parse_reduction("avgpool"), Error);
}

TEST_CASE("diagonal and max-pool reductions") {
  Node rho = ad::constant(Array::from_rows({{1, 0, 0}, {0, 2, 0}, {0, 0, 3}}));
  CHECK(reduce(rho, config(Reduction::Diagonal)).value().storage() == std::vector<double>{1, 2, 3});

  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 1 + rng.below(5);
    const Array m = testutil::random_array(rng, {d, d}, -2, 2);
    auto f = reduce(ad::constant(m), config(Reduction::MaxPool, 1, 1, d)).value();
    REQUIRE(f.size() == 1);
    CHECK(f[0] == *std::max_element(m.data().begin(), m.data().end()));
  }
}

TEST_CASE("CNN-diagonal with an identity kernel equals diagonal") {
  ConvParams id{ad::constant(Array({1, 1, 1}, {1.0})), ad::constant(Array({1}, 0.0))};
  Rng rng(9);
  const Array m = testutil::random_array(rng, {4, 4});
  const auto cnn = reduce(ad::constant(m), config(Reduction::CnnDiagonal, 1, 1), &id).value();
  const auto diag = reduce(ad::constant(m), config(Reduction::Diagonal)).value();
  CHECK(cnn.storage() == diag.storage());
  CHECK_THROWS_AS(reduce(ad::constant(m), config(Reduction::CnnDiagonal, 1, 1)), Error);
}

TEST_CASE("feature_dim is deterministic and validated") {
  CHECK(feature_dim(100, config(Reduction::CnnMaxPool, 8, 3, 2)) == 8 * 49 * 49);
  CHECK(feature_dim(6, config(Reduction::CnnMaxPool, 2, 3, 2)) == 2 * 2 * 2);
  CHECK(feature_dim(6, config(Reduction::MaxPool, 2, 3, 2)) == 9);
  CHECK(feature_dim(6, config(Reduction::CnnDiagonal, 2, 3, 2)) == 8);
  CHECK(feature_dim(6, config(Reduction::Diagonal, 2, 3, 2)) == 6);
  CHECK_THROWS_AS(feature_dim(2, config(Reduction::CnnMaxPool, 2, 3, 2)), ShapeError);
  CHECK_THROWS_AS(feature_dim(3, config(Reduction::CnnMaxPool, 2, 3, 2)), ShapeError);
  CHECK_THROWS_AS(feature_dim(1, config(Reduction::MaxPool, 1, 1, 2)), ShapeError);
  CHECK_NOTHROW(feature_dim(2, config(Reduction::Diagonal, 2, 3, 2)));

  Rng rng(1);
  for (auto v : {Reduction::CnnMaxPool, Reduction::MaxPool, Reduction::CnnDiagonal, Reduction::Diagonal}) {
    Reducer red(7, config(v), rng, "red");
    const Array m = testutil::random_array(rng, {7, 7});
    CHECK(red.forward(ad::constant(m)).size() == red.feature_dim());
    CHECK(red.parameters().size() == (red.config().uses_conv() ? 2u : 0u));
  }
  CHECK_THROWS_AS(Reducer(2, config(Reduction::CnnMaxPool), rng, "bad"), ShapeError);
}

TEST_CASE("untied reducers hold separate parameters") {
  Rng rng(3);
  Reducer a(5, config(Reduction::CnnMaxPool), rng, "ra"), b(5, config(Reduction::CnnMaxPool), rng, "rb");
  CHECK(a.parameters()[0].value() != b.parameters()[0].value());
}

TEST_CASE("classify") {
  Node f = ad::constant(Array::vector({0.3, -1.2}));
  Node g = ad::constant(Array::vector({2.0, 0.5}));
  CHECK(classify(f, g, ClassifierParams::from(Array({4, 1}, 0.0), 0.0, "c")).item() == 0.5);
  CHECK(std::abs(classify(f, g, ClassifierParams::from(Array({4, 1}, 0.0), 10.0, "c")).item() - 0.99995) < 1e-5);

  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    Array w = testutil::random_array(rng, {4, 1});
    const double b = rng.uniform(-1, 1);
    Array neg = w;
    for (auto& x : neg.data()) x = -x;
    const double p = classify(f, g, ClassifierParams::from(w, b, "c")).item();
    const double q = classify(f, g, ClassifierParams::from(neg, -b, "c")).item();
    CHECK(p > 0.0);
    CHECK(p < 1.0);
    CHECK(std::abs(p + q - 1.0) < 1e-12);
  }

  // The imaginary features occupy the first half of the weight vector.
  Array first({4, 1}, 0.0);
  first.at(0, 0) = 1.0;
  const double p = classify(f, g, ClassifierParams::from(first, 0.0, "c")).item();
  CHECK(p == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-12));

  CHECK_THROWS_AS(classify(f, ad::constant(Array::vector({1.0})), ClassifierParams::from(first, 0.0, "c")),
                  ShapeError);
}

TEST_CASE("diagonal of a real word density is re squared") {
  Rng rng(44);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = 1 + rng.below(6);
    const Array re = testutil::random_array(rng, {d});
    auto p = qembed::word_density(ad::constant(re), ad::constant(Array({d}, 0.0)));
    const auto diag = reduce(p.real, config(Reduction::Diagonal)).value();
    for (std::size_t k = 0; k < d; ++k) CHECK(diag[k] == re[k] * re[k]);
  }
}

TEST_CASE("reduce and classify gradients") {
  auto cases = suites::block_cases();
  std::erase_if(cases, [](const suites::GradCase& c) { return c.name.find("density chain") == std::string::npos; });
  REQUIRE(cases.size() == 4);
  for (const auto& o : suites::gradient_suite(cases)) {
    INFO(o.name << " max relative error " << o.max_error);
    CHECK(o.pass());
  }
}
