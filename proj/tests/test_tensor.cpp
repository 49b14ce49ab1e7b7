#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "polybert/rng.hpp"
#include "polybert/tensor.hpp"
#include "test_helpers.hpp"

using namespace polybert;
using nn::Tensor;

TEST_CASE("softmax with temperature matches the closed form") {
  const Tensor x = Tensor::constant({2}, {2.0, 0.0});
  const Tensor y = nn::softmax(x, 0, 2.0);
  // softmax([2,0]/2) = [e/(e+1), 1/(e+1)]
  const double e = std::exp(1.0);
  CHECK(y.values()[0] == doctest::Approx(e / (e + 1)).epsilon(1e-10));
  CHECK(y.values()[1] == doctest::Approx(1 / (e + 1)).epsilon(1e-10));
  CHECK(y.values()[0] == doctest::Approx(0.7311).epsilon(1e-4));
}

TEST_CASE("softmax temperature identity: softmax(x,T) == softmax(x/T,1)") {
  rng::Rng gen(3);
  for (int trial = 0; trial < 20; ++trial) {
    auto vals = testutil::random_values(12, gen, 4.0);
    const Tensor x = Tensor::constant({3, 4}, vals);
    for (auto& v : vals) v /= 2.5;
    const Tensor x_over_t = Tensor::constant({3, 4}, vals);
    const auto a = nn::softmax(x, 1, 2.5).values();
    const auto b = nn::softmax(x_over_t, 1, 1.0).values();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  }
}

TEST_CASE("softmax normalizes along the axis") {
  rng::Rng gen(4);
  const Tensor x = Tensor::constant({2, 5}, testutil::random_values(10, gen, 3.0));
  for (int axis : {0, 1}) {
    const auto y = nn::softmax(x, axis);
    const auto sums = nn::sum_over_axis(y, axis).values();
    for (double s : sums) CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("log_softmax equals log(softmax) and is finite on extreme inputs") {
  rng::Rng gen(5);
  const Tensor x = Tensor::constant({4, 7}, testutil::random_values(28, gen, 2.0));
  const auto ls = nn::log_softmax(x, 1).values();
  const auto s = nn::softmax(x, 1).values();
  for (std::size_t i = 0; i < ls.size(); ++i) {
    CHECK(ls[i] == doctest::Approx(std::log(s[i])).epsilon(1e-12));
  }
  const Tensor big = Tensor::constant({1, 3}, {1e4, -1e4, 0.0});
  for (double v : nn::log_softmax(big, 1).values()) CHECK(std::isfinite(v));
}

TEST_CASE("mean_over_axis") {
  const Tensor x = Tensor::constant({2, 2}, {1.0, 3.0, 3.0, 1.0});
  const auto m0 = nn::mean_over_axis(x, 0).values();
  CHECK(m0[0] == 2.0);
  CHECK(m0[1] == 2.0);
}

TEST_CASE("matmul shape errors name both shapes") {
  const Tensor a = Tensor::zeros({2, 3});
  const Tensor b = Tensor::zeros({4, 2});
  CHECK_THROWS_WITH_AS(nn::matmul(a, b),
                       doctest::Contains("[2,3]"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(nn::matmul(a, b),
                       doctest::Contains("[4,2]"), std::invalid_argument);
}

TEST_CASE("backward requires a scalar") {
  const Tensor x = Tensor::zeros({2, 2});
  CHECK_THROWS_AS(nn::backward(x), std::invalid_argument);
}

TEST_CASE("backward: d(sum p*p)/dp = 2p and accumulation across uses") {
  Tensor p = Tensor::parameter({3}, {1.0, 2.0, 3.0}, "p");
  const Tensor loss = nn::sum_over_axis(nn::mul(p, p), 0);
  p.zero_grad();
  nn::backward(loss);
  CHECK(p.grad()[0] == 2.0);
  CHECK(p.grad()[1] == 4.0);
  CHECK(p.grad()[2] == 6.0);
}

TEST_CASE("backward: loss independent of a parameter leaves zero grad") {
  Tensor p = Tensor::parameter({2}, {1.0, 1.0}, "p");
  Tensor q = Tensor::parameter({2}, {2.0, 5.0}, "q");
  const Tensor loss = nn::sum_over_axis(q, 0);
  p.zero_grad();
  q.zero_grad();
  nn::backward(loss);
  CHECK(p.grad()[0] == 0.0);
  CHECK(p.grad()[1] == 0.0);
  CHECK(q.grad()[0] == 1.0);
}

TEST_CASE("parameter gradients accumulate across backward calls until zeroed") {
  Tensor p = Tensor::parameter({1}, {3.0}, "p");
  p.zero_grad();
  const Tensor loss1 = nn::mul(p, p);
  nn::backward(nn::mean_all(loss1));
  const double g1 = p.grad()[0];
  const Tensor loss2 = nn::mul(p, p);
  nn::backward(nn::mean_all(loss2));
  CHECK(p.grad()[0] == doctest::Approx(2.0 * g1));
  p.zero_grad();
  CHECK(p.grad()[0] == 0.0);
}

TEST_CASE("global_grad_norm examples") {
  Tensor a = Tensor::parameter({2}, {0.0, 0.0}, "a");
  Tensor b = Tensor::parameter({2}, {0.0, 0.0}, "b");
  a.grad() = {3.0, 4.0};
  b.grad() = {0.0, 0.0};
  CHECK(nn::global_grad_norm({a}) == doctest::Approx(5.0));
  CHECK(nn::global_grad_norm({a, b}) == doctest::Approx(5.0));
  b.zero_grad();
  a.zero_grad();
  CHECK(nn::global_grad_norm({a, b}) == 0.0);
  Tensor c = Tensor::parameter({1}, {1.0}, "c");
  CHECK_THROWS_AS(nn::global_grad_norm({c}), std::runtime_error);
}

TEST_CASE("gradcheck: every differentiable op against central differences") {
  rng::Rng gen(11);
  // parameters feed a composite graph exercising each op's backward
  Tensor w1 = Tensor::parameter({4, 6}, testutil::random_values(24, gen), "w1");
  Tensor w2 = Tensor::parameter({6, 3}, testutil::random_values(18, gen), "w2");
  Tensor bias = Tensor::parameter({3}, testutil::random_values(3, gen), "bias");
  Tensor gain = Tensor::parameter({6}, testutil::random_values(6, gen, 0.5), "gain");
  Tensor gbias = Tensor::parameter({6}, testutil::random_values(6, gen, 0.5), "gbias");
  Tensor table = Tensor::parameter({5, 4}, testutil::random_values(20, gen), "table");
  const std::vector<int> ids{0, 3, 1, 4, 2, 2};
  const Tensor mask = Tensor::constant({2, 3}, {1, 1, 0, 1, 1, 1});

  const auto build = [&]() {
    Tensor x = nn::embedding_lookup(table, ids, {2, 3});       // [2,3,4]
    Tensor h = nn::matmul(x, w1);                              // [2,3,6]
    h = nn::layer_norm(h, gain, gbias);
    h = nn::gelu(h);
    Tensor s = nn::softmax(h, 2, 2.0);
    Tensor c = nn::concat({h, s}, 1);                          // [2,6,6]
    c = nn::slice(c, 1, 1, 5);                                 // [2,4,6]
    Tensor t = nn::transpose_axes(c, 1, 2);                    // [2,6,4]
    t = nn::transpose_axes(t, 1, 2);                           // back to [2,4,6]
    Tensor logits = nn::add(nn::matmul(t, w2), bias);          // [2,4,3]
    Tensor lp = nn::log_softmax(logits, 2);
    Tensor flat = nn::reshape(lp, {8, 3});
    Tensor rows = nn::take_rows(flat, {0, 2, 5, 7});
    Tensor pooled = nn::masked_mean_rows(nn::slice(nn::reshape(h, {2, 3, 6}), 2, 0, 6), mask);
    Tensor part1 = nn::mean_all(nn::mul(rows, rows));
    Tensor part2 = nn::mean_all(nn::sub(pooled, nn::scale(pooled, 0.25)));
    Tensor part3 = nn::mean_all(nn::mean_over_axis(nn::sum_over_axis(s, 1), 0));
    return nn::add(nn::add(part1, part2), part3);
  };

  const auto result = testutil::gradcheck(
      [&]() { return build().item(); }, [&]() { nn::backward(build()); },
      {w1, w2, bias, gain, gbias, table});
  CAPTURE(result.worst_at);
  CAPTURE(result.worst_rel);
  CHECK(result.failed == 0);
  CHECK(result.checked >= 77);
}

TEST_CASE("gradcheck: batched matmul (attention shapes)") {
  rng::Rng gen(12);
  Tensor q = Tensor::parameter({2, 2, 3, 4}, testutil::random_values(48, gen), "q");
  Tensor k = Tensor::parameter({2, 2, 3, 4}, testutil::random_values(48, gen), "k");
  const auto build = [&]() {
    const Tensor scores = nn::matmul(q, nn::transpose_axes(k, 2, 3));
    return nn::mean_all(nn::mul(scores, scores));
  };
  const auto result = testutil::gradcheck(
      [&]() { return build().item(); }, [&]() { nn::backward(build()); }, {q, k});
  CAPTURE(result.worst_at);
  CHECK(result.failed == 0);
}

TEST_CASE("backward determinism: same graph gives bit-identical grads") {
  rng::Rng gen(13);
  Tensor w = Tensor::parameter({8, 8}, testutil::random_values(64, gen), "w");
  const Tensor x = Tensor::constant({4, 8}, testutil::random_values(32, gen));
  const auto run = [&]() {
    w.zero_grad();
    nn::backward(nn::mean_all(nn::gelu(nn::matmul(x, w))));
    return w.grad();
  };
  const auto g1 = run();
  const auto g2 = run();
  CHECK(g1 == g2);
}

TEST_CASE("NoGradGuard suppresses graph recording") {
  Tensor w = Tensor::parameter({2, 2}, {1, 2, 3, 4}, "w");
  nn::Tensor y;
  {
    nn::NoGradGuard guard;
    y = nn::matmul(w, w);
  }
  CHECK(y.node()->parents.empty());
  CHECK_FALSE(y.node()->backward_fn);
}

TEST_CASE("debug checks name the faulting op") {
  nn::set_debug_checks(true);
  const Tensor x = Tensor::constant({2}, {1e308, 1e308});
  CHECK_THROWS_WITH_AS(nn::add(x, x), doctest::Contains("add"),
                       nn::NumericFault);
  nn::set_debug_checks(false);
}

TEST_CASE("masked_mean_rows rejects an all-pad row") {
  const Tensor h = Tensor::zeros({1, 2, 3});
  const Tensor mask = Tensor::constant({1, 2}, {0.0, 0.0});
  CHECK_THROWS_AS(nn::masked_mean_rows(h, mask), std::invalid_argument);
}

TEST_CASE("slice and concat bounds") {
  const Tensor x = Tensor::zeros({2, 4});
  CHECK_THROWS_AS(nn::slice(x, 1, 2, 6), std::invalid_argument);
  CHECK_THROWS_AS(nn::slice(x, 1, 3, 3), std::invalid_argument);
  const Tensor a = Tensor::zeros({2, 3});
  CHECK_THROWS_AS(nn::concat({x, a}, 0), std::invalid_argument);
}
