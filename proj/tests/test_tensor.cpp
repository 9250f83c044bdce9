#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <functional>
#include <random>

#include "place/errors.hpp"
#include "place/gradcheck.hpp"
#include "place/tensor.hpp"
#include "test_support.hpp"

using namespace place;
using testing::max_abs_diff;
using testing::random_tensor;

TEST_CASE("construction checks shape against data") {
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(Tensor::zeros({0, 3}), DimensionError);
  const auto t = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  CHECK(t.shape() == Shape{2, 3});
  CHECK(t.at(1, 2) == 6.0);
  CHECK(t.numel() == 6);
}

TEST_CASE("matmul") {
  SUBCASE("identity") {
    const auto i2 = Tensor::matrix({{1, 0}, {0, 1}});
    const auto m = Tensor::matrix({{1, 2}, {3, 4}});
    CHECK(max_abs_diff(matmul(i2, m), m) == 0.0);
  }
  SUBCASE("unit-vector selection") {
    const auto r = matmul(Tensor::matrix({{1, 0}}), Tensor::matrix({{2}, {5}}));
    CHECK(r.shape() == Shape{1, 1});
    CHECK(r.item() == 2.0);
  }
  SUBCASE("triple-loop oracle") {
    std::mt19937_64 rng(11);
    const auto a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
    const auto oracle = testing::from_mat(testing::mat_mul(testing::to_mat(a), testing::to_mat(b)));
    CHECK(max_abs_diff(matmul(a, b), oracle) < 1e-12);
  }
  SUBCASE("associativity") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 20; ++trial) {
      const auto a = random_tensor({3, 4}, rng), b = random_tensor({4, 5}, rng), c = random_tensor({5, 2}, rng);
      CHECK(max_abs_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c))) < 1e-10);
    }
  }
  SUBCASE("inner dimension mismatch") {
    CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), DimensionError);
  }
}

TEST_CASE("softmax") {
  SUBCASE("uniform") {
    const auto s = softmax(Tensor::vector({0, 0, 0}), 0);
    for (double v : s.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }
  SUBCASE("no overflow at large logits") {
    const auto s = softmax(Tensor::vector({1000, 0}), 0);
    CHECK(std::abs(s[0] - 1.0) < 1e-12);
    CHECK(std::abs(s[1]) < 1e-12);
  }
  SUBCASE("direct formula") {
    const auto s = softmax(Tensor::vector({1, 2, 3}), 0);
    const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    const std::array<double, 3> expect{std::exp(1.0) / z, std::exp(2.0) / z, std::exp(3.0) / z};
    CHECK(max_abs_diff(s.data(), expect) < 1e-14);
  }
  SUBCASE("rows and columns sum to one") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 200; ++trial) {
      const auto x = random_tensor({4, 6}, rng, -30.0, 30.0);
      for (std::size_t axis : {0u, 1u}) {
        const auto s = softmax(x, axis);
        const std::size_t outer = axis == 1 ? 4 : 6, inner = axis == 1 ? 6 : 4;
        for (std::size_t o = 0; o < outer; ++o) {
          double acc = 0.0;
          for (std::size_t i = 0; i < inner; ++i) acc += axis == 1 ? s.at(o, i) : s.at(i, o);
          CHECK(std::abs(acc - 1.0) < 1e-12);
        }
      }
    }
  }
  SUBCASE("log_softmax agrees with log of softmax") {
    std::mt19937_64 rng(4);
    const auto x = random_tensor({3, 5}, rng, -5.0, 5.0);
    const auto a = log_softmax(x, 1), b = softmax(x, 1);
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(std::abs(a[i] - std::log(b[i])) < 1e-13);
  }
}

TEST_CASE("mean_pool") {
  CHECK(max_abs_diff(mean_pool(Tensor::matrix({{4, -1}})), Tensor::vector({4, -1})) == 0.0);
  CHECK(max_abs_diff(mean_pool(Tensor::matrix({{1, 1}, {3, 3}})), Tensor::vector({2, 2})) == 0.0);

  std::mt19937_64 rng(5);
  const auto x = random_tensor({5, 3}, rng);
  const std::array<std::size_t, 3> rows{0, 2, 4};
  std::array<double, 3> oracle{};
  for (auto r : rows)
    for (std::size_t j = 0; j < 3; ++j) oracle[j] += x.at(r, j) / 3.0;
  CHECK(max_abs_diff(mean_pool(x, rows).data(), oracle) < 1e-14);

  const std::array<std::size_t, 0> none{};
  CHECK_THROWS_AS(mean_pool(x, std::span<const std::size_t>(none)), DomainError);
  CHECK_THROWS_AS(mean_pool_range(x, 2, 2), DomainError);
}

TEST_CASE("layer_norm matches the loop oracle") {
  std::mt19937_64 rng(6);
  const auto x = random_tensor({4, 7}, rng, -3.0, 3.0);
  const auto g = random_tensor({7}, rng), b = random_tensor({7}, rng);
  const auto oracle = testing::layer_norm_rows(testing::to_mat(x), {g.data().begin(), g.data().end()},
                                               {b.data().begin(), b.data().end()});
  CHECK(max_abs_diff(layer_norm(x, g, b), testing::from_mat(oracle)) < 1e-12);
}

TEST_CASE("elementwise values") {
  CHECK(gelu(Tensor::scalar(1.0)).item() == doctest::Approx(0.8413447460685429).epsilon(1e-14));
  CHECK(gelu(Tensor::scalar(0.0)).item() == 0.0);
  CHECK(relu(Tensor::vector({-1, 2})).data()[0] == 0.0);
  const auto n = l2_normalize_rows(Tensor::matrix({{3, 4}, {0, 0}}));
  CHECK(n.at(0, 0) == doctest::Approx(0.6));
  CHECK(n.at(1, 1) == 0.0);
  CHECK(max_abs_diff(normalize_sum(Tensor::vector({1, 3})), Tensor::vector({0.25, 0.75})) == 0.0);
  CHECK_THROWS_AS(normalize_sum(Tensor::vector({0, 0})), DomainError);
  CHECK_THROWS_AS(add(Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
}

TEST_CASE("backward basics") {
  SUBCASE("sum gives ones") {
    auto w = Tensor::vector({1, -2, 5}, true);
    sum(w).backward();
    for (double g : w.grad()) CHECK(g == 1.0);
  }
  SUBCASE("half squared norm gives w") {
    auto w = Tensor::vector({1.5, -2, 0.25}, true);
    scale(sum(square(w)), 0.5).backward();
    CHECK(max_abs_diff(w.grad(), w.data()) == 0.0);
  }
  SUBCASE("repeated backward accumulates until zeroed") {
    auto w = Tensor::vector({1, 2}, true);
    sum(w).backward();
    sum(w).backward();
    CHECK(w.grad()[0] == 2.0);
    w.zero_grad();
    CHECK(w.grad()[0] == 0.0);
  }
  SUBCASE("non-scalar loss is rejected") {
    auto w = Tensor::vector({1, 2}, true);
    CHECK_THROWS_AS(w.backward(), ContractError);
  }
  SUBCASE("shared node receives the sum of branch gradients") {
    std::mt19937_64 rng(8);
    auto x = random_tensor({3, 3}, rng, -1, 1, true);
    const auto a = random_tensor({3, 3}, rng), b = random_tensor({3, 3}, rng);
    auto branch_a = [&] { return sum(square(matmul(x, a))); };
    auto branch_b = [&] { return sum(gelu(matmul(b, x))); };

    branch_a().backward();
    const std::vector<double> ga(x.grad().begin(), x.grad().end());
    x.zero_grad();
    branch_b().backward();
    const std::vector<double> gb(x.grad().begin(), x.grad().end());
    x.zero_grad();
    add(branch_a(), branch_b()).backward();
    for (std::size_t i = 0; i < ga.size(); ++i) CHECK(std::abs(x.grad()[i] - (ga[i] + gb[i])) < 1e-12);
  }
  SUBCASE("diamond graph visits each node once") {
    auto x = Tensor::scalar(3.0, true);
    const auto y = square(x);         // 9
    const auto z = add(y, scale(y, 2.0));  // 3 x^2
    z.backward();
    CHECK(x.grad()[0] == doctest::Approx(18.0));
  }
  SUBCASE("NoGradGuard records nothing") {
    auto w = Tensor::vector({1, 2}, true);
    Tensor s;
    {
      NoGradGuard guard;
      s = sum(square(w));
      CHECK_FALSE(grad_enabled());
    }
    CHECK(grad_enabled());
    CHECK_FALSE(s.requires_grad());
  }
  SUBCASE("detach cuts history") {
    auto w = Tensor::vector({1, 2}, true);
    const auto d = square(w).detach();
    CHECK_FALSE(d.requires_grad());
  }
}

TEST_CASE("grad_check harness") {
  SUBCASE("x squared at 3") {
    auto x = Tensor::scalar(3.0, true);
    std::array<Tensor, 1> ps{x};
    const auto r = grad_check([&] { return square(x); }, ps);
    CHECK(r.analytic == doctest::Approx(6.0));
    CHECK(r.max_rel_error < 1e-8);
  }
  SUBCASE("softmax cross-entropy toy") {
    std::mt19937_64 rng(9);
    auto logits = random_tensor({3, 4}, rng, -2, 2, true);
    std::array<Tensor, 1> ps{logits};
    const auto r = grad_check([&] { return scale(mean(diag(slice_cols(log_softmax(logits, 1), 0, 3))), -1.0); }, ps);
    CHECK(r.max_rel_error < 1e-6);
  }
}

// Every differentiable op, on small random inputs, against central differences.
TEST_CASE("per-operation gradient checks") {
  std::mt19937_64 rng(10);
  auto check = [&](const char* name, std::function<Tensor(std::span<Tensor>)> f, std::vector<Shape> shapes,
                   double lo = -1.0, double hi = 1.0) {
    std::vector<Tensor> ps;
    for (auto& s : shapes) ps.push_back(random_tensor(s, rng, lo, hi, true));
    const auto r = grad_check([&] { return f(ps); }, ps);
    INFO(name);
    CHECK(r.max_rel_error < 1e-6);
  };
  // Random weights turn every op output into a scalar with nontrivial gradients.
  auto probe = [&](const Tensor& t) {
    std::mt19937_64 local(t.numel() * 7919);
    return sum(mul(t, random_tensor(t.shape(), local)));
  };
  check("add", [&](auto p) { return probe(add(p[0], p[1])); }, {{2, 3}, {2, 3}});
  check("sub", [&](auto p) { return probe(sub(p[0], p[1])); }, {{2, 3}, {2, 3}});
  check("mul", [&](auto p) { return probe(mul(p[0], p[1])); }, {{2, 3}, {2, 3}});
  check("scale", [&](auto p) { return probe(scale(p[0], -2.5)); }, {{4}});
  check("add_scalar", [&](auto p) { return probe(add_scalar(p[0], 0.3)); }, {{4}});
  check("square", [&](auto p) { return probe(square(p[0])); }, {{5}});
  check("relu", [&](auto p) { return probe(relu(p[0])); }, {{6}}, 0.1, 1.0);
  check("gelu", [&](auto p) { return probe(gelu(p[0])); }, {{6}}, -3.0, 3.0);
  check("add_row", [&](auto p) { return probe(add_row(p[0], p[1])); }, {{2, 3}, {3}});
  check("sum", [&](auto p) { return sum(square(p[0])); }, {{2, 2}});
  check("mean", [&](auto p) { return mean(square(p[0])); }, {{2, 2}});
  check("linear_combination", [&](auto p) {
    const std::array<Tensor, 2> terms{sum(square(p[0])), sum(p[1])};
    const std::array<double, 2> w{0.5, -2.0};
    return linear_combination(terms, w);
  }, {{3}, {2}});
  check("mean_pool", [&](auto p) {
    const std::array<std::size_t, 2> rows{0, 2};
    return probe(mean_pool(p[0], std::span<const std::size_t>(rows)));
  }, {{3, 2}});
  check("mean_pool_range", [&](auto p) { return probe(mean_pool_range(p[0], 1, 3)); }, {{3, 2}});
  check("matmul", [&](auto p) { return probe(matmul(p[0], p[1])); }, {{2, 3}, {3, 2}});
  check("transpose", [&](auto p) { return probe(transpose(p[0])); }, {{2, 3}});
  check("diag", [&](auto p) { return probe(diag(p[0])); }, {{3, 3}});
  check("softmax rows", [&](auto p) { return probe(softmax(p[0], 1)); }, {{2, 4}});
  check("softmax cols", [&](auto p) { return probe(softmax(p[0], 0)); }, {{2, 4}});
  check("log_softmax", [&](auto p) { return probe(log_softmax(p[0], 1)); }, {{2, 4}});
  check("layer_norm", [&](auto p) { return probe(layer_norm(p[0], p[1], p[2])); }, {{2, 4}, {4}, {4}});
  check("l2_normalize_rows", [&](auto p) { return probe(l2_normalize_rows(p[0])); }, {{2, 4}});
  check("normalize_sum", [&](auto p) { return probe(normalize_sum(p[0])); }, {{5}}, 0.1, 1.0);
  check("reshape", [&](auto p) { return probe(reshape(p[0], {3, 2})); }, {{2, 3}});
  check("row", [&](auto p) { return probe(row(p[0], 1)); }, {{2, 3}});
  check("slice_rows", [&](auto p) { return probe(slice_rows(p[0], 1, 2)); }, {{3, 2}});
  check("slice_cols", [&](auto p) { return probe(slice_cols(p[0], 1, 2)); }, {{2, 4}});
  check("concat_cols", [&](auto p) {
    const std::array<Tensor, 2> parts{p[0], p[1]};
    return probe(concat_cols(parts));
  }, {{2, 1}, {2, 3}});
  check("stack_rows", [&](auto p) {
    const std::array<Tensor, 2> rows{p[0], p[1]};
    return probe(stack_rows(rows));
  }, {{3}, {3}});
  check("gather_rows", [&](auto p) {
    const std::array<std::size_t, 4> ids{2, 0, 2, 1};
    return probe(gather_rows(p[0], ids));
  }, {{3, 2}});
}
