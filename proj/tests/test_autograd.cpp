#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "csvqa/optim.hpp"
#include "csvqa/ops.hpp"
#include "csvqa/rng.hpp"
#include "gradcheck.hpp"

using namespace csvqa;
using gradcheck::random_leaf;
using gradcheck::weighted_sum;

namespace {
constexpr double kTol = 1e-3;
}

TEST_CASE("product rule on scalars") {
  Tensor x = Tensor::from_data({1}, {2.0f}, true);
  Tensor y = Tensor::from_data({1}, {3.0f}, true);
  Tensor z = mul(x, y);
  backward(z);
  CHECK(x.grad()[0] == doctest::Approx(3.0f));
  CHECK(y.grad()[0] == doctest::Approx(2.0f));
}

TEST_CASE("add passes the upstream gradient through unchanged") {
  Rng rng(1);
  Tensor a = random_leaf({3, 4}, rng);
  Tensor b = random_leaf({3, 4}, rng);
  Tensor loss = weighted_sum(add(a, b), 5);
  backward(loss);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.grad()[i] == b.grad()[i]);
}

TEST_CASE("fan-out accumulates additively") {
  Tensor x = Tensor::from_data({1}, {1.5f}, true);
  Tensor y = add(x, x);
  backward(y);
  CHECK(x.grad()[0] == doctest::Approx(2.0f));
}

TEST_CASE("disconnected parameters receive no gradient") {
  Tensor x = Tensor::from_data({1}, {1.0f}, true);
  Tensor unused = Tensor::from_data({1}, {5.0f}, true);
  backward(scale(x, 2.0));
  CHECK(x.grad()[0] == doctest::Approx(2.0f));
  CHECK(!unused.has_grad());
}

TEST_CASE("backward rejects non-scalar losses") {
  Tensor x = Tensor::from_data({2}, {1.0f, 2.0f}, true);
  CHECK_THROWS_AS(backward(scale(x, 1.0)), Error);
}

TEST_CASE("shape mismatches are rejected") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({3, 2});
  CHECK_THROWS_AS(add(a, b), Error);
  CHECK_THROWS_AS(mul(a, b), Error);
  CHECK_THROWS_AS(matmul(a, a), Error);
  CHECK_THROWS_AS(reshape(a, {5}), Error);
}

TEST_CASE("elementwise ops match finite differences") {
  Rng rng(7);
  Tensor a = random_leaf({3, 4}, rng);
  Tensor b = random_leaf({3, 4}, rng);
  auto res = gradcheck::check({a, b}, [&] {
    return weighted_sum(add(mul(a, b), scale(sub(a, b), 0.7)), 11);
  });
  CHECK(res.max_error <= kTol);
  CHECK(res.checked == 24);
}

TEST_CASE("add_scalar shifts values and passes gradients") {
  Rng rng(8);
  Tensor a = random_leaf({2, 5}, rng);
  auto res = gradcheck::check({a}, [&] { return weighted_sum(add_scalar(a, -0.5), 3); });
  CHECK(res.max_error <= kTol);
}

TEST_CASE("matmul against identity and finite differences") {
  Tensor eye = Tensor::from_data({2, 2}, {1.0f, 0.0f, 0.0f, 1.0f});
  Tensor b = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor out = matmul(eye, b);
  for (std::size_t i = 0; i < b.size(); ++i) CHECK(out.data()[i] == b.data()[i]);

  Rng rng(9);
  Tensor x = random_leaf({4, 3}, rng);
  Tensor y = random_leaf({3, 5}, rng);
  auto res = gradcheck::check({x, y}, [&] { return weighted_sum(matmul(x, y), 13); });
  CHECK(res.max_error <= kTol);
}

TEST_CASE("1x1 matmul reduces to the scalar product rule") {
  Tensor x = Tensor::from_data({1, 1}, {2.0f}, true);
  Tensor y = Tensor::from_data({1, 1}, {3.0f}, true);
  backward(reshape(matmul(x, y), {1}));
  CHECK(x.grad()[0] == doctest::Approx(3.0f));
  CHECK(y.grad()[0] == doctest::Approx(2.0f));
}

TEST_CASE("bias broadcasts match finite differences") {
  Rng rng(10);
  Tensor x = random_leaf({4, 6}, rng);
  Tensor b = random_leaf({6}, rng);
  auto res = gradcheck::check({x, b}, [&] { return weighted_sum(add_row_bias(x, b), 17); });
  CHECK(res.max_error <= kTol);

  Tensor img = random_leaf({2, 3, 4, 4}, rng);
  Tensor cb = random_leaf({3}, rng);
  auto res2 = gradcheck::check({img, cb}, [&] { return weighted_sum(add_channel_bias(img, cb), 19); });
  CHECK(res2.max_error <= kTol);
}

TEST_CASE("conv2d identity with a unit 1x1 kernel") {
  Rng rng(11);
  Tensor x = random_leaf({2, 5, 5}, rng);
  Tensor k = Tensor::from_data({2, 2, 1, 1}, {1, 0, 0, 1});
  Tensor out = conv2d(x, k, 1, 0);
  REQUIRE(out.shape() == std::vector<int>{2, 5, 5});
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(out.data()[i] == doctest::Approx(x.data()[i]));
}

TEST_CASE("all-ones 3x3 kernel sums the neighborhood") {
  const float c = 0.25f;
  Tensor x = Tensor::from_data({1, 5, 5}, std::vector<float>(25, c));
  Tensor k = Tensor::from_data({1, 1, 3, 3}, std::vector<float>(9, 1.0f));
  Tensor out = conv2d(x, k, 1, 0);
  REQUIRE(out.shape() == std::vector<int>{1, 3, 3});
  for (std::size_t i = 0; i < out.size(); ++i)
    CHECK(out.data()[i] == doctest::Approx(9.0f * c).epsilon(1e-6));
}

TEST_CASE("conv2d gradients match finite differences (strided, padded)") {
  Rng rng(12);
  Tensor x = random_leaf({2, 8, 8}, rng);
  Tensor k = random_leaf({3, 2, 3, 3}, rng);
  auto res = gradcheck::check({x, k}, [&] { return weighted_sum(conv2d(x, k, 2, 1), 23); });
  CHECK(res.max_error <= kTol);
  CHECK(res.checked == 128 + 54);
}

TEST_CASE("conv2d gradients match finite differences (batched)") {
  Rng rng(13);
  Tensor x = random_leaf({2, 2, 6, 6}, rng);
  Tensor k = random_leaf({2, 2, 3, 3}, rng);
  auto res = gradcheck::check({x, k}, [&] { return weighted_sum(conv2d(x, k, 1, 1), 29); });
  CHECK(res.max_error <= kTol);
}

TEST_CASE("conv2d rejects kernels larger than the padded input") {
  Tensor x = Tensor::zeros({1, 2, 2});
  Tensor k = Tensor::zeros({1, 1, 5, 5});
  CHECK_THROWS_AS(conv2d(x, k, 1, 0), Error);
}

TEST_CASE("relu semantics and gradient") {
  Tensor x = Tensor::from_data({3}, {-1.0f, 0.0f, 2.0f}, true);
  Tensor out = relu(x);
  CHECK(out.data()[0] == 0.0f);
  CHECK(out.data()[1] == 0.0f);
  CHECK(out.data()[2] == 2.0f);
  backward(mean(out));
  CHECK(x.grad()[0] == 0.0f);
  CHECK(x.grad()[1] == 0.0f);  // subgradient at exactly 0 is 0
  CHECK(x.grad()[2] == doctest::Approx(1.0f / 3.0f));

  // keep samples away from the kink so finite differences stay valid
  Rng rng(14);
  std::vector<float> vals(20);
  for (auto& v : vals) {
    const double u = rng.next_double();
    v = static_cast<float>(u < 0.5 ? -1.0 + 0.9 * u : 0.1 + 0.9 * u);
  }
  Tensor y = Tensor::from_data({4, 5}, std::move(vals), true);
  auto res = gradcheck::check({y}, [&] { return weighted_sum(relu(y), 31); });
  CHECK(res.max_error <= kTol);
}

TEST_CASE("sigmoid gradient matches finite differences") {
  Rng rng(15);
  Tensor x = random_leaf({3, 4}, rng, -2.0, 2.0);
  auto res = gradcheck::check({x}, [&] { return weighted_sum(sigmoid(x), 37); });
  CHECK(res.max_error <= kTol);
}

TEST_CASE("reshape preserves buffer order and is a gradient no-op") {
  Rng rng(16);
  Tensor x = random_leaf({2, 6}, rng);
  Tensor r = reshape(reshape(x, {3, 4}), {2, 6});
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(r.data()[i] == x.data()[i]);
  auto res = gradcheck::check({x}, [&] { return weighted_sum(reshape(x, {4, 3}), 41); });
  CHECK(res.max_error <= kTol);
}

TEST_CASE("concat splits gradients at the seam") {
  Rng rng(17);
  Tensor a = random_leaf({3, 2}, rng);
  Tensor b = random_leaf({3, 4}, rng);
  Tensor out = concat(a, b, 1);
  REQUIRE(out.shape() == std::vector<int>{3, 6});
  auto res = gradcheck::check({a, b}, [&] { return weighted_sum(concat(a, b, 1), 43); });
  CHECK(res.max_error <= kTol);

  Tensor c = random_leaf({2, 3}, rng);
  Tensor d = random_leaf({4, 3}, rng);
  auto res0 = gradcheck::check({c, d}, [&] { return weighted_sum(concat(c, d, 0), 47); });
  CHECK(res0.max_error <= kTol);
}

TEST_CASE("assemble_blocks is the documented permutation") {
  // 1 channel, 2x1 grid of 2x2 blocks -> 4x2 image
  Tensor blocks = Tensor::from_data({1, 2, 4}, {0, 1, 2, 3, 10, 11, 12, 13}, true);
  Tensor img = assemble_blocks(blocks, 1, 2, 1, 2);
  REQUIRE(img.shape() == std::vector<int>{1, 1, 4, 2});
  const std::vector<float> expected{0, 1, 2, 3, 10, 11, 12, 13};
  for (std::size_t i = 0; i < expected.size(); ++i) CHECK(img.data()[i] == expected[i]);

  Rng rng(18);
  Tensor b2 = random_leaf({2, 12, 16}, rng);  // 3 channels, 2x2 grid, 4x4 blocks
  auto res = gradcheck::check({b2}, [&] { return weighted_sum(assemble_blocks(b2, 3, 2, 2, 4), 53); });
  CHECK(res.max_error <= kTol);
}

TEST_CASE("mean gradient is uniform") {
  Rng rng(19);
  Tensor x = random_leaf({5, 4}, rng);
  Tensor m = mean(x);
  double ref = 0.0;
  for (float v : x.data()) ref += v;
  CHECK(m.item() == doctest::Approx(ref / 20.0).epsilon(1e-6));
  backward(m);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(x.grad()[i] == doctest::Approx(1.0f / 20.0f));
}

TEST_CASE("cross entropy of uniform logits is log C") {
  Tensor logits = Tensor::zeros({3, 10});
  const std::vector<int> labels{1, 5, 9};
  Tensor loss = softmax_cross_entropy(logits, labels);
  CHECK(loss.item() == doctest::Approx(std::log(10.0)).epsilon(1e-6));
}

TEST_CASE("cross entropy saturates to zero on a confident correct logit") {
  std::vector<float> data(6, 0.0f);
  data[2] = 20.0f;
  Tensor logits = Tensor::from_data({1, 6}, std::move(data));
  const std::vector<int> labels{2};
  CHECK(softmax_cross_entropy(logits, labels).item() <= 1e-6);
}

TEST_CASE("cross entropy rejects out-of-range labels") {
  Tensor logits = Tensor::zeros({2, 4});
  const std::vector<int> labels{0, 4};
  CHECK_THROWS_AS(softmax_cross_entropy(logits, labels), Error);
}

TEST_CASE("cross entropy gradient matches finite differences") {
  Rng rng(20);
  Tensor logits = random_leaf({4, 6}, rng, -2.0, 2.0);
  const std::vector<int> labels{0, 3, 5, 2};
  auto res = gradcheck::check({logits}, [&] { return softmax_cross_entropy(logits, labels); });
  CHECK(res.max_error <= kTol);
}

TEST_CASE("softmax rows form a distribution") {
  Rng rng(21);
  Tensor logits = random_leaf({5, 10}, rng, -3.0, 3.0);
  const auto probs = softmax_rows(logits);
  for (int i = 0; i < 5; ++i) {
    double sum = 0.0;
    for (int j = 0; j < 10; ++j) {
      CHECK(probs[static_cast<std::size_t>(i) * 10 + j] >= 0.0f);
      sum += probs[static_cast<std::size_t>(i) * 10 + j];
    }
    CHECK(std::abs(sum - 1.0) <= 1e-6);
  }
}

TEST_CASE("composite MLP passes the full gradient check") {
  Rng rng(22);
  Tensor x = random_leaf({4, 8}, rng);
  Tensor w1 = random_leaf({8, 10}, rng, -0.5, 0.5);
  Tensor b1 = random_leaf({10}, rng, -0.1, 0.1);
  Tensor w2 = random_leaf({10, 6}, rng, -0.5, 0.5);
  Tensor b2 = random_leaf({6}, rng, -0.1, 0.1);
  const std::vector<int> labels{0, 2, 4, 5};
  auto res = gradcheck::check({x, w1, b1, w2, b2}, [&] {
    Tensor h = relu(add_row_bias(matmul(x, w1), b1));
    Tensor logits = add_row_bias(matmul(h, w2), b2);
    return softmax_cross_entropy(logits, labels);
  });
  CHECK(res.max_error <= kTol);
  std::printf("composite MLP gradcheck: %zu elements, max error %.3g\n", res.checked,
              res.max_error);
}

TEST_CASE("ops never mutate their input buffers") {
  Rng rng(23);
  Tensor a = random_leaf({2, 3, 4, 4}, rng);
  Tensor k = random_leaf({2, 3, 3, 3}, rng);
  const std::vector<float> a_before(a.data().begin(), a.data().end());
  const std::vector<float> k_before(k.data().begin(), k.data().end());
  Tensor loss = weighted_sum(relu(conv2d(a, k, 1, 1)), 59);
  backward(loss);
  CHECK(std::equal(a_before.begin(), a_before.end(), a.data().begin()));
  CHECK(std::equal(k_before.begin(), k_before.end(), k.data().begin()));
}

TEST_CASE("sgd step without momentum") {
  ParamMap params;
  params["w"] = Tensor::from_data({1}, {1.0f}, true);
  backward(scale(params["w"], 1.0));  // gradient 1
  OptimizerState opt;
  opt.kind = OptimKind::sgd_momentum;
  opt.learning_rate = 0.1;
  opt.momentum = 0.0;
  sgd_step(params, opt);
  CHECK(params["w"].data()[0] == doctest::Approx(0.9f));
}

TEST_CASE("adam first step magnitude is the learning rate") {
  ParamMap params;
  params["w"] = Tensor::from_data({2}, {0.5f, -0.25f}, true);
  backward(mean(mul(params["w"], Tensor::from_data({2}, {2.0f, -6.0f}))));
  OptimizerState opt;
  opt.learning_rate = 1e-3;
  const std::vector<float> before(params["w"].data().begin(), params["w"].data().end());
  adam_step(params, opt);
  for (std::size_t i = 0; i < 2; ++i) {
    const double delta = std::abs(params["w"].data()[i] - before[i]);
    CHECK(delta == doctest::Approx(1e-3).epsilon(1e-3));
  }
  CHECK(opt.step_count == 1);
}

TEST_CASE("optimizers demand populated gradients") {
  ParamMap params;
  params["w"] = Tensor::from_data({1}, {1.0f}, true);
  OptimizerState opt;
  CHECK_THROWS_AS(adam_step(params, opt), Error);
}

TEST_CASE("adam walks down a quadratic bowl") {
  const int n = 8;
  Rng rng(24);
  std::vector<float> target(n);
  for (auto& v : target) v = static_cast<float>(2.0 * rng.next_double() - 1.0);
  Tensor w_star = Tensor::from_data({n}, std::vector<float>(target));

  ParamMap params;
  params["w"] = Tensor::zeros({n}, true);
  OptimizerState opt;
  opt.learning_rate = 0.05;
  for (int step = 0; step < 200; ++step) {
    Tensor d = sub(params["w"], w_star);
    Tensor loss = scale(mean(mul(d, d)), n);  // sum of squares
    zero_all_grads(params);
    backward(loss);
    adam_step(params, opt);
  }
  double dist = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = params["w"].data()[static_cast<std::size_t>(i)] - target[static_cast<std::size_t>(i)];
    dist += d * d;
  }
  CHECK(std::sqrt(dist) <= 1e-2);
}

TEST_CASE("init_params determinism and bounds") {
  Tensor a = init_params({64, 32}, InitScheme::he_uniform, 5);
  Tensor b = init_params({64, 32}, InitScheme::he_uniform, 5);
  CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
  Tensor c = init_params({64, 32}, InitScheme::he_uniform, 6);
  CHECK(!std::equal(a.data().begin(), a.data().end(), c.data().begin()));

  const double he_bound = std::sqrt(6.0 / 64.0);
  for (float v : a.data()) CHECK(std::abs(v) <= he_bound);

  Tensor x = init_params({64, 32}, InitScheme::xavier_uniform, 7);
  const double xavier_bound = std::sqrt(6.0 / (64.0 + 32.0));
  for (float v : x.data()) CHECK(std::abs(v) <= xavier_bound);
}

TEST_CASE("init_params sample variance approaches bound^2 / 3") {
  Tensor t = init_params({100, 100}, InitScheme::he_uniform, 8);
  const double bound = std::sqrt(6.0 / 100.0);
  double sum = 0.0, sq = 0.0;
  for (float v : t.data()) {
    sum += v;
    sq += static_cast<double>(v) * v;
  }
  const double n = static_cast<double>(t.size());
  const double var = sq / n - (sum / n) * (sum / n);
  CHECK(std::abs(var - bound * bound / 3.0) <= 0.1 * bound * bound / 3.0);
}

TEST_CASE("conv kernel fan derivation") {
  // fan_in = c_in * k * k = 18 for a [4,2,3,3] kernel
  Tensor t = init_params({4, 2, 3, 3}, InitScheme::he_uniform, 9);
  const double bound = std::sqrt(6.0 / 18.0);
  float max_abs = 0.0f;
  for (float v : t.data()) max_abs = std::max(max_abs, std::abs(v));
  CHECK(max_abs <= bound);
  CHECK(max_abs >= 0.8 * bound);  // bound is actually approached
}

TEST_CASE("checkpoint roundtrip and byte determinism") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "csvqa_ckpt_test";
  fs::create_directories(dir);
  ParamMap params;
  Rng rng(25);
  params["net/w1"] = random_leaf({3, 4}, rng);
  params["net/b1"] = random_leaf({4}, rng);
  params["net/conv"] = random_leaf({2, 3, 3, 3}, rng);

  const std::string p1 = (dir / "a.ckpt").string();
  const std::string p2 = (dir / "b.ckpt").string();
  save_checkpoint(p1, params);
  save_checkpoint(p2, params);

  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  const std::string bytes1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  const std::string bytes2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(bytes1 == bytes2);
  CHECK(bytes1.substr(0, 4) == "CKPT");

  const ParamMap loaded = load_checkpoint(p1);
  REQUIRE(loaded.size() == params.size());
  for (const auto& [name, tensor] : params) {
    REQUIRE(loaded.count(name) == 1);
    const Tensor& l = loaded.at(name);
    CHECK(l.shape() == tensor.shape());
    CHECK(std::equal(l.data().begin(), l.data().end(), tensor.data().begin()));
  }
  fs::remove_all(dir);
}
