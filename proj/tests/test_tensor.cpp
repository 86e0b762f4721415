#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "dsf/rng.hpp"
#include "dsf/tensor.hpp"

#include "support/grad_suite.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace dsf;
using dsf::test::grad_check;
using dsf::test::rand_tensor;

TEST_CASE("matmul identity and orthogonal cases") {
  Tensor i2 = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor out = matmul(i2, a);
  CHECK(out.data() == std::vector<double>{1, 2, 3, 4});

  Tensor row = Tensor::from_data({1, 2}, {1, 0});
  Tensor col = Tensor::from_data({2, 1}, {0, 1});
  CHECK(matmul(row, col).item() == 0.0);
}

TEST_CASE("matmul random case matches triple-loop oracle") {
  Rng rng(42);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor a = rand_tensor({3, 4}, rng, -2, 2, false);
    Tensor b = rand_tensor({4, 2}, rng, -2, 2, false);
    test::Mat am(3, std::vector<double>(4)), bm(4, std::vector<double>(2));
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 4; ++j) am[i][j] = a.at({i, j});
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 2; ++j) bm[i][j] = b.at({i, j});
    test::Mat cm = test::naive_matmul(am, bm);
    Tensor c = matmul(a, b);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 2; ++j) CHECK(c.at({i, j}) == doctest::Approx(cm[i][j]).epsilon(1e-12));
  }
}

TEST_CASE("matmul shape mismatch is a dimension error") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 3});
  CHECK_THROWS_AS(matmul(a, b), std::invalid_argument);
}

TEST_CASE("softmax_rows examples") {
  Tensor s = softmax_rows(Tensor::from_data({1, 2}, {0, 0}));
  CHECK(s.at({0, 0}) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(s.at({0, 1}) == doctest::Approx(0.5).epsilon(1e-12));

  // row-max subtraction keeps huge logits finite
  Tensor big = softmax_rows(Tensor::from_data({1, 3}, {1000, 1000, 1000}));
  for (int j = 0; j < 3; ++j) CHECK(big.at({0, j}) == doctest::Approx(1.0 / 3).epsilon(1e-12));

  Tensor x = Tensor::from_data({1, 3}, {1, 2, 3});
  Tensor y = softmax_rows(x);
  double denom = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (int j = 0; j < 3; ++j) {
    CHECK(y.at({0, j}) == doctest::Approx(std::exp(1.0 + j) / denom).epsilon(1e-12));
  }
}

TEST_CASE("softmax_rows rows sum to one and stay in (0,1]") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = rand_tensor({4, 6}, rng, -30, 30, false);
    Tensor y = softmax_rows(x);
    for (int i = 0; i < 4; ++i) {
      double row_sum = 0;
      for (int j = 0; j < 6; ++j) {
        double v = y.at({i, j});
        CHECK(v > 0.0);
        CHECK(v <= 1.0);
        row_sum += v;
      }
      CHECK(row_sum == doctest::Approx(1.0).epsilon(1e-10));
    }
  }
}

TEST_CASE("linear examples and loop oracle") {
  Tensor x = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor w0 = Tensor::zeros({2, 2});
  Tensor b0 = Tensor::zeros({2});
  CHECK(linear(x, w0, b0).data() == std::vector<double>{0, 0, 0, 0});

  Tensor wi = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  CHECK(linear(x, wi, b0).data() == x.data());

  Rng rng(3);
  Tensor xr = rand_tensor({3, 4}, rng, -1, 1, false);
  Tensor wr = rand_tensor({4, 2}, rng, -1, 1, false);
  Tensor br = rand_tensor({2}, rng, -1, 1, false);
  Tensor out = linear(xr, wr, br);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 2; ++j) {
      double acc = br.data()[j];
      for (int k = 0; k < 4; ++k) acc += xr.at({i, k}) * wr.at({k, j});
      CHECK(out.at({i, j}) == doctest::Approx(acc).epsilon(1e-12));
    }
  }
}

TEST_CASE("conv2d delta kernel reproduces the input") {
  Rng rng(5);
  Tensor x = rand_tensor({1, 4, 4}, rng, -1, 1, false);
  Tensor k = Tensor::zeros({1, 1, 3, 3});
  k.mutable_data()[4] = 1.0;  // center tap
  Tensor y = conv2d(x, k, 1);
  for (size_t i = 0; i < x.data().size(); ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("conv2d all-ones kernel on ones image has center value 9") {
  Tensor x = Tensor::full({1, 3, 3}, 1.0);
  Tensor k = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor y = conv2d(x, k, 1);
  CHECK(y.at({0, 1, 1}) == 9.0);
  CHECK(y.at({0, 0, 0}) == 4.0);  // corner sees a 2x2 window
}

TEST_CASE("conv2d random case matches the 6-loop oracle, both strides") {
  Rng rng(11);
  for (int stride : {1, 2}) {
    Tensor x = rand_tensor({3, 6, 5}, rng, -1, 1, false);
    Tensor k = rand_tensor({4, 3, 3, 3}, rng, -1, 1, false);
    Tensor y = conv2d(x, k, stride);
    std::vector<double> ref = test::naive_conv2d(x.data(), 3, 6, 5, k.data(), 4, stride);
    REQUIRE(y.data().size() == ref.size());
    for (size_t i = 0; i < ref.size(); ++i) CHECK(y.data()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv2d rejects invalid strides") {
  Tensor x = Tensor::zeros({1, 4, 4});
  Tensor k = Tensor::zeros({1, 1, 3, 3});
  CHECK_THROWS_AS(conv2d(x, k, 3), std::invalid_argument);
  CHECK_THROWS_AS(conv2d(x, k, 0), std::invalid_argument);
}

TEST_CASE("backward of sum is all-ones; of sum(x*x) is 2x") {
  Rng rng(13);
  Tensor x = rand_tensor({3, 4}, rng);
  sum(x).backward();
  for (double g : x.grad()) CHECK(g == 1.0);

  Tensor y = rand_tensor({2, 5}, rng);
  sum(mul(y, y)).backward();
  for (int64_t i = 0; i < y.numel(); ++i) {
    CHECK(y.grad()[i] == doctest::Approx(2.0 * y.data()[i]).epsilon(1e-12));
  }
}

TEST_CASE("backward requires a scalar loss") {
  Tensor x = Tensor::zeros({2, 2}, true);
  CHECK_THROWS_AS(add(x, x).backward(), std::invalid_argument);
}

TEST_CASE("fan-out accumulates gradients across shared subexpressions") {
  Rng rng(17);
  Tensor x = rand_tensor({3, 3}, rng);
  Tensor shared = mul(x, x);
  // two consumers of the same node
  Tensor loss = add(sum(shared), sum(relu(shared)));
  loss.backward();
  std::vector<double> combined = x.grad();

  // compare against the per-path sum computed one path at a time
  Tensor x2 = Tensor::from_data({3, 3}, x.data(), true);
  sum(mul(x2, x2)).backward();
  std::vector<double> path1 = x2.grad();
  Tensor x3 = Tensor::from_data({3, 3}, x.data(), true);
  sum(relu(mul(x3, x3))).backward();
  std::vector<double> path2 = x3.grad();
  for (size_t i = 0; i < combined.size(); ++i) {
    CHECK(combined[i] == doctest::Approx(path1[i] + path2[i]).epsilon(1e-12));
  }
}

TEST_CASE("composite graph gradient matches central finite differences") {
  Rng rng(19);
  Tensor a = rand_tensor({3, 4}, rng);
  Tensor w = rand_tensor({4, 3}, rng);
  Tensor b = rand_tensor({3}, rng);
  auto fwd = [&] {
    Tensor h = relu(linear(a, w, b));
    Tensor s = softmax_rows(h);
    return mean(mul(s, s));
  };
  auto res = grad_check(fwd, {a, w, b});
  CHECK_MESSAGE(res.ok, res.detail);
}

TEST_CASE("smooth_l1 value at |x|=0.5 and branch continuity at |x|=1") {
  Tensor p = Tensor::from_data({1}, {0.5});
  Tensor t = Tensor::from_data({1}, {0.0});
  CHECK(smooth_l1(p, t).item() == doctest::Approx(0.125).epsilon(1e-15));

  double quad = 0.5 * 1.0 * 1.0;        // quadratic branch at |x| = 1
  double lin = 1.0 - 0.5;               // linear branch at |x| = 1
  CHECK(quad == doctest::Approx(lin));  // continuous boundary
  Tensor p1 = Tensor::from_data({1}, {1.0});
  CHECK(smooth_l1(p1, t).item() == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("cross entropy with perfect logits sits at the floor") {
  Tensor logits = Tensor::from_data({2, 3}, {30, 0, 0, 0, 0, 30});
  double v = cross_entropy_with_logits(logits, {0, 2}).item();
  CHECK(v < 1e-12);
  CHECK(v >= 0.0);
}

TEST_CASE("non-finite forward results are an error state") {
  Tensor x = Tensor::from_data({1}, {-1.0});
  CHECK_THROWS_AS(log(x), std::runtime_error);
  Tensor big = Tensor::from_data({1}, {1e308});
  CHECK_THROWS_AS(exp(big), std::runtime_error);
}

TEST_CASE("forward determinism: same data, same bits") {
  Rng rng1(23), rng2(23);
  Tensor a1 = rand_tensor({4, 4}, rng1, -1, 1, false);
  Tensor a2 = rand_tensor({4, 4}, rng2, -1, 1, false);
  REQUIRE(a1.data() == a2.data());
  Tensor y1 = softmax_rows(matmul(a1, transpose(a1)));
  Tensor y2 = softmax_rows(matmul(a2, transpose(a2)));
  CHECK(y1.data() == y2.data());
}

TEST_CASE("no-grad mode records no tape") {
  Tensor x = Tensor::zeros({2, 2}, true);
  NoGradGuard ng;
  Tensor y = add(x, x);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("gradient suite: every op within 1e-4 of finite differences") {
  auto reports = dsf::test::run_gradient_suite(20);
  for (const auto& rep : reports) {
    CAPTURE(rep.op);
    CHECK_MESSAGE(rep.ok, rep.op << ": " << rep.detail);
    CHECK(rep.max_rel_err < 1e-4);
  }
}
