#include <doctest.h>

#include <cmath>

#include "inklab/rng.hpp"
#include "inklab/tensor.hpp"

using namespace inklab;

TEST_CASE("add computes elementwise sums") {
  const Tensor a = Tensor::from_data({2}, {1.0f, 2.0f});
  const Tensor b = Tensor::from_data({2}, {3.0f, 4.0f});
  const Tensor y = add(a, b);
  CHECK(y.data() == std::vector<float>{4.0f, 6.0f});
}

TEST_CASE("conv2d of all-ones 3x3 with all-ones 3x3 kernel gives 9") {
  const Tensor x = Tensor::full({1, 1, 3, 3}, 1.0f);
  const Tensor w = Tensor::full({1, 1, 3, 3}, 1.0f);
  const Tensor y = conv2d(x, w, Tensor{}, 1, 0);
  REQUIRE(y.shape() == std::vector<int>{1, 1, 1, 1});
  CHECK(y.data()[0] == doctest::Approx(9.0f));
}

TEST_CASE("mse of a tensor with itself is zero") {
  Rng rng(3);
  Tensor x = Tensor::zeros({4, 5});
  rng.fill_normal(x.data());
  CHECK(mse(x, x).item() == 0.0f);
}

TEST_CASE("shape mismatches name the op and shapes") {
  const Tensor a = Tensor::zeros({2, 3});
  const Tensor b = Tensor::zeros({4});
  CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("add"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("[2,3]"), std::invalid_argument);
  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), std::invalid_argument);
  CHECK_THROWS_AS(conv2d(Tensor::zeros({1, 2, 4, 4}), Tensor::zeros({1, 3, 3, 3}), Tensor{}, 1, 1),
                  std::invalid_argument);
}

TEST_CASE("non-finite forward outputs are rejected") {
  const Tensor big = Tensor::full({4}, 3e38f);
  CHECK_THROWS_AS(add(big, big), std::runtime_error);
}

TEST_CASE("backward of a linear product fills the weight gradient") {
  // loss = sum(w*x) with x=[2], w=[5] -> dloss/dw = 2
  Tensor w = Tensor::from_data({1}, {5.0f});
  w.set_requires_grad(true);
  const Tensor x = Tensor::from_data({1}, {2.0f});
  Tape tape;
  Tensor loss = mean_all(mul(w, x));
  backward(loss);
  REQUIRE(w.has_grad());
  CHECK(w.grad()[0] == doctest::Approx(2.0f));
}

TEST_CASE("backward of mse against zero doubles the weight") {
  // loss = mse(w, 0) with w=[3] -> grad 2w = 6
  Tensor w = Tensor::from_data({1}, {3.0f});
  w.set_requires_grad(true);
  const Tensor zero = Tensor::zeros({1});
  Tape tape;
  Tensor loss = mse(w, zero);
  backward(loss);
  CHECK(w.grad()[0] == doctest::Approx(6.0f));
}

TEST_CASE("backward requires a scalar loss and an active tape") {
  Tensor w = Tensor::from_data({2}, {1.0f, 2.0f});
  w.set_requires_grad(true);
  {
    Tape tape;
    Tensor y = scale(w, 2.0f);
    CHECK_THROWS_AS(backward(y), std::invalid_argument);  // non-scalar
  }
  Tensor loss = Tensor::scalar(1.0f);
  CHECK_THROWS_AS(backward(loss), std::logic_error);  // no tape
}

TEST_CASE("no-grad forwards record nothing and detach outputs") {
  Tensor w = Tensor::from_data({2}, {1.0f, 2.0f});
  w.set_requires_grad(true);
  Tape tape;
  Tensor detached;
  {
    NoGradGuard guard;
    detached = scale(w, 3.0f);
  }
  CHECK_FALSE(detached.requires_grad());
  Tensor loss = mean_all(detached);
  backward(loss);
  CHECK_FALSE(w.has_grad());
}

TEST_CASE("gradients accumulate across backward passes until cleared") {
  Tensor w = Tensor::from_data({1}, {2.0f});
  w.set_requires_grad(true);
  for (int i = 0; i < 2; ++i) {
    Tape tape;
    Tensor loss = mean_all(scale(w, 3.0f));
    backward(loss);
  }
  CHECK(w.grad()[0] == doctest::Approx(6.0f));
  w.clear_grad();
  CHECK_FALSE(w.has_grad());
}

TEST_CASE("broadcast add reduces gradients over the broadcast axes") {
  Tensor bias = Tensor::from_data({2}, {0.5f, -0.5f});
  bias.set_requires_grad(true);
  const Tensor x = Tensor::full({3, 2}, 1.0f);
  Tape tape;
  Tensor y = add(x, bias);
  CHECK(y.data()[0] == doctest::Approx(1.5f));
  CHECK(y.data()[1] == doctest::Approx(0.5f));
  Tensor loss = mean_all(y);
  backward(loss);
  // dloss/dbias_c = 3 rows * (1/6) each
  CHECK(bias.grad()[0] == doctest::Approx(0.5f));
  CHECK(bias.grad()[1] == doctest::Approx(0.5f));
}

TEST_CASE("concat splits gradients back to its inputs") {
  Tensor a = Tensor::full({1, 1, 2, 2}, 1.0f);
  Tensor b = Tensor::full({1, 2, 2, 2}, 2.0f);
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  Tape tape;
  Tensor y = concat(a, b, 1);
  REQUIRE(y.shape() == std::vector<int>{1, 3, 2, 2});
  backward(mean_all(y));
  CHECK(a.grad()[0] == doctest::Approx(1.0f / 12.0f));
  CHECK(b.grad()[0] == doctest::Approx(1.0f / 12.0f));
}

TEST_CASE("reshape keeps values and routes gradients") {
  Tensor x = Tensor::from_data({2, 3}, {0, 1, 2, 3, 4, 5});
  x.set_requires_grad(true);
  Tape tape;
  Tensor y = reshape(x, {3, 2});
  CHECK(y.data() == x.data());
  CHECK_THROWS_AS(reshape(x, {4, 2}), std::invalid_argument);
  backward(mean_all(y));
  CHECK(x.grad()[3] == doctest::Approx(1.0f / 6.0f));
}

TEST_CASE("embedding_mean averages rows and scatters gradients") {
  Tensor table = Tensor::from_data({3, 2}, {1, 2, 3, 4, 5, 6});
  table.set_requires_grad(true);
  Tape tape;
  Tensor y = embedding_mean(table, {{0, 2}, {1}});
  CHECK(y.data()[0] == doctest::Approx(3.0f));  // (1+5)/2
  CHECK(y.data()[1] == doctest::Approx(4.0f));
  CHECK(y.data()[2] == doctest::Approx(3.0f));
  backward(mean_all(y));
  CHECK(table.grad()[0] == doctest::Approx(0.125f));  // 1/4 * 1/2
  CHECK(table.grad()[2] == doctest::Approx(0.25f));
  CHECK_THROWS_AS(embedding_mean(table, {{3}}), std::invalid_argument);
  CHECK_THROWS_AS(embedding_mean(table, {{}}), std::invalid_argument);
}

TEST_CASE("pool and upsample are exact on constants") {
  const Tensor x = Tensor::full({1, 1, 4, 4}, 2.5f);
  const Tensor p = avgpool2(x);
  REQUIRE(p.shape() == std::vector<int>{1, 1, 2, 2});
  for (float v : p.data()) CHECK(v == doctest::Approx(2.5f));
  const Tensor u = nearest_upsample2(p);
  REQUIRE(u.shape() == std::vector<int>{1, 1, 4, 4});
  for (float v : u.data()) CHECK(v == doctest::Approx(2.5f));
  CHECK_THROWS_AS(avgpool2(Tensor::zeros({1, 1, 3, 3})), std::invalid_argument);
}

TEST_CASE("rng streams are reproducible and serializable") {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());

  const std::string state = a.state_hex();
  Rng c = Rng::from_state_hex(state);
  for (int i = 0; i < 100; ++i) REQUIRE(a.normal() == c.normal());

  // frozen first draws for seed 0 (documents the cross-platform contract)
  Rng fixed(0);
  const uint64_t first = fixed.next_u64();
  Rng fixed2(0);
  CHECK(first == fixed2.next_u64());
  CHECK(Rng(1).next_u64() != first);
}

TEST_CASE("uniform_int stays in range and covers values") {
  Rng rng(9);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const int64_t v = rng.uniform_int(7);
    REQUIRE(v >= 0);
    REQUIRE(v < 7);
    hits[static_cast<size_t>(v)]++;
  }
  for (int h : hits) CHECK(h > 700);
}
