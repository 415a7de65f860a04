#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>

#include "qitsa/autodiff.hpp"
#include "qitsa/error.hpp"
#include "qitsa/gradcheck.hpp"
#include "suites.hpp"

using namespace qitsa;
using ad::Array;
using ad::Node;

TEST_CASE("array basics") {
  Array a({2, 3}, 1.5);
  CHECK(a.size() == 6);
  CHECK(a.rank() == 2);
  CHECK(a.at(1, 2) == 1.5);
  CHECK_THROWS(Array({2, 2}, std::vector<double>{1, 2, 3}));
  CHECK_THROWS(Array({1, 1, 1, 1, 1}));
  Array m = Array::from_rows({{1, 2}, {3, 4}});
  CHECK(m.at(1, 0) == 3);
  CHECK(ad::shape_string({2, 3}) == "[2x3]");
}

TEST_CASE("matmul") {
  Node x = ad::constant(Array::from_rows({{1, 2, 3}, {4, 5, 6}}));
  Node id = ad::constant(Array::from_rows({{1, 0}, {0, 1}}));
  CHECK(ad::matmul(id, x).value() == x.value());

  Node a = ad::constant(Array::from_rows({{1, 2}, {3, 4}}));
  Node b = ad::constant(Array::from_rows({{5}, {6}}));
  CHECK(ad::matmul(a, b).value() == Array::from_rows({{17}, {39}}));

  Node z = ad::constant(Array({2, 2}));
  const Array zx = ad::matmul(z, x).value();
  for (double v : zx.data()) CHECK(v == 0.0);

  CHECK_THROWS_AS(ad::matmul(x, x), ShapeError);
}

TEST_CASE("softmax values and stability") {
  auto s = ad::softmax(ad::constant(Array::vector({0, 0}))).value();
  CHECK(s[0] == doctest::Approx(0.5));
  CHECK(s[1] == doctest::Approx(0.5));

  s = ad::softmax(ad::constant(Array::vector({1000, 0}))).value();
  CHECK(std::isfinite(s[0]));
  CHECK(s[0] == doctest::Approx(1.0));
  CHECK(s[1] == doctest::Approx(0.0));

  s = ad::softmax(ad::constant(Array::vector({1, 2, 3}))).value();
  CHECK(s[0] == doctest::Approx(0.09003).epsilon(1e-4));
  CHECK(std::abs(s[0] - 0.09003) < 1e-5);
  CHECK(std::abs(s[1] - 0.24473) < 1e-5);
  CHECK(std::abs(s[2] - 0.66524) < 1e-5);

  s = ad::softmax(ad::constant(Array::vector({1, 5, 3})), {true, false, true}).value();
  CHECK(s[1] == 0.0);
  CHECK(s[0] + s[2] == doctest::Approx(1.0));

  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(ad::softmax(ad::constant(Array::vector({1, nan}))), Error);
  CHECK_THROWS_AS(ad::softmax(ad::constant(Array::vector({1, 2})), {false, false}), Error);
}

TEST_CASE("conv2d") {
  Node x = ad::constant(Array({1, 2, 2}, {1, 2, 3, 4}));
  Node one = ad::constant(Array({1, 1, 1}, {1}));
  Node zero_bias = ad::constant(Array({1}, 0.0));
  auto y = ad::conv2d(x, one, zero_bias).value();
  CHECK(y.shape() == ad::Shape{1, 2, 2});
  CHECK(y.storage() == std::vector<double>{1, 2, 3, 4});

  Node ones = ad::constant(Array({1, 2, 2}, 1.0));
  CHECK(ad::conv2d(x, ones, zero_bias).value().storage() == std::vector<double>{10});

  Node zeros = ad::constant(Array({1, 2, 2}, 0.0));
  Node five = ad::constant(Array({1}, 5.0));
  Node big = ad::constant(Array({1, 3, 3}, 1.0));
  const Array fives = ad::conv2d(big, zeros, five).value();
  for (double v : fives.data()) CHECK(v == 5.0);

  CHECK_THROWS_AS(ad::conv2d(x, big, zero_bias), ShapeError);
}

TEST_CASE("maxpool2d") {
  Node x = ad::constant(Array({1, 2, 2}, {1, 2, 3, 4}));
  CHECK(ad::maxpool2d(x, 2, 2).value().storage() == std::vector<double>{4});

  Node full = ad::constant(Array({1, 3, 3}, {1, 9, 2, 3, 4, 5, 6, 7, 8}));
  CHECK(ad::maxpool2d(full, 3, 3).value().storage() == std::vector<double>{9});

  Node tie = ad::parameter(Array({1, 2, 2}, {5, 5, 0, 0}));
  Node y = ad::maxpool2d(tie, 2, 2);
  CHECK(y.item() == 5.0);
  ad::backward(ad::sum(y));
  CHECK(tie.grad().storage() == std::vector<double>{1, 0, 0, 0});

  CHECK_THROWS_AS(ad::maxpool2d(x, 3, 1), ShapeError);
}

TEST_CASE("backward basics") {
  Node x = ad::parameter(Array({2, 3}, 0.7));
  ad::backward(ad::sum(x));
  for (double g : x.grad().data()) CHECK(g == 1.0);

  Node y = ad::parameter(Array::vector({3}));
  ad::backward(ad::sum(ad::mul(y, y)));
  CHECK(y.grad()[0] == 6.0);

  CHECK_THROWS_AS(ad::backward(ad::mul(x, x)), ShapeError);
}

TEST_CASE("leaf gradients accumulate until zeroed") {
  Node x = ad::parameter(Array::vector({2}));
  auto loss = [&] { return ad::sum(ad::mul(x, x)); };
  ad::backward(loss());
  ad::backward(loss());
  CHECK(x.grad()[0] == 8.0);
  x.zero_grad();
  CHECK(x.grad()[0] == 0.0);

  // Calling backward twice on the same graph also accumulates into leaves.
  Node l = loss();
  ad::backward(l);
  ad::backward(l);
  CHECK(x.grad()[0] == 8.0);
}

TEST_CASE("fan-out sums both contributions") {
  Node x = ad::parameter(Array::vector({1.5}));
  Node y = ad::sigmoid(x);
  Node loss = ad::sum(ad::add(ad::mul(y, y), ad::scale(y, 3.0)));
  ad::backward(loss);
  const double s = 1.0 / (1.0 + std::exp(-1.5));
  CHECK(x.grad()[0] == doctest::Approx((2 * s + 3) * s * (1 - s)).epsilon(1e-12));
}

TEST_CASE("no-grad mode detaches results") {
  Node x = ad::parameter(Array::vector({1, 2}));
  {
    ad::NoGradGuard guard;
    CHECK_FALSE(ad::grad_enabled());
    Node y = ad::mul(x, x);
    CHECK_FALSE(y.requires_grad());
  }
  CHECK(ad::grad_enabled());
  CHECK(ad::mul(x, x).requires_grad());
  CHECK_FALSE(ad::mul(ad::constant(Array::vector({1})), ad::constant(Array::vector({2}))).requires_grad());
}

TEST_CASE("binary ops reject mismatched shapes") {
  Node a = ad::constant(Array({2, 2}));
  Node b = ad::constant(Array({4}));
  CHECK_THROWS_AS(ad::add(a, b), ShapeError);
  CHECK_THROWS_AS(ad::mul(a, b), ShapeError);
  CHECK_THROWS_AS(ad::scale_by(a, a), ShapeError);
  CHECK_THROWS_AS(ad::outer(a, b), ShapeError);
  CHECK_THROWS_AS(ad::slice(b, 3, 5), ShapeError);
  CHECK_THROWS_AS(ad::reshape(a, {3}), ShapeError);
}

TEST_CASE("clamp passes gradient only inside the range") {
  Node x = ad::parameter(Array::vector({-2, 0.2, 2}));
  ad::backward(ad::sum(ad::clamp(x, -1, 1)));
  CHECK(x.grad().storage() == std::vector<double>{0, 1, 0});
}

TEST_CASE("check_gradients sanity") {
  Node w = ad::parameter(Array::vector({0.3, -1.2, 2.0}));
  Node c = ad::constant(Array::vector({1.0, 2.0, -0.5}));
  auto linear = ad::check_gradients([&] { return ad::sum(ad::mul(w, c)); }, std::vector<Node>{w});
  CHECK(linear.max_relative_error < 1e-9);
  CHECK(linear.coordinates == 3);

  Node s = ad::parameter(Array::vector({0.4, -0.8}));
  auto composite = ad::check_gradients(
      [&] {
        Node m = ad::parameter(Array::from_rows({{0.5, -1.0}, {2.0, 0.25}}));
        return ad::sum(ad::sigmoid(ad::matmul(m, ad::reshape(s, {2, 1}))));
      },
      std::vector<Node>{s});
  CHECK(composite.max_relative_error < 1e-6);

  // A deliberately wrong backward rule: forward x^2, backward claims 3x.
  Node x = ad::parameter(Array::vector({0.7, -0.3}));
  auto broken_square = [&] {
    Array v = x.value();
    for (auto& e : v.data()) e = e * e;
    return ad::sum(ad::make_op(std::move(v), {x}, [](ad::NodeImpl& self) {
      const Node& parent = self.parents[0];
      std::vector<double> g(parent.size());
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = 3.0 * parent.value()[i] * self.grad[i];
      ad::accumulate(parent, g);
    }));
  };
  CHECK(ad::check_gradients(broken_square, std::vector<Node>{x}).max_relative_error > 1e-2);

  Node bad = ad::parameter(Array::vector({-1.0}));
  CHECK_THROWS_AS(ad::check_gradients([&] { return ad::sum(ad::log(bad)); }, std::vector<Node>{bad}), Error);
}

TEST_CASE("softmax sums to one and ignores shifts") {
  for (const auto& o : suites::property_suite(100)) {
    if (o.name.find("softmax") == std::string::npos) continue;
    INFO(o.name << " max error " << o.max_error);
    CHECK(o.instances >= 100);
    CHECK(o.pass());
  }
}

TEST_CASE("every primitive passes the gradient check at 10 seeded points") {
  for (const auto& o : suites::gradient_suite(suites::primitive_cases())) {
    INFO(o.name << " max relative error " << o.max_error);
    CHECK(o.instances == 10);
    CHECK(o.pass());
  }
}
