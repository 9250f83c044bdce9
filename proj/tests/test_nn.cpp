#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "place/errors.hpp"
#include "place/gradcheck.hpp"
#include "place/nn.hpp"
#include "test_support.hpp"

using namespace place;
using testing::Mat;
using testing::max_abs_diff;

using testing::attention_oracle;

TEST_CASE("ParamStore keeps insertion order and rejects duplicates") {
  ParamStore store;
  store.add("b", Tensor::zeros({2}));
  store.add("a", Tensor::zeros({3}));
  CHECK(store.size() == 2);
  CHECK(store.begin()->first == "b");
  CHECK(store.total_elements() == 5);
  CHECK(store.get("a").requires_grad());
  CHECK_THROWS_AS(store.add("a", Tensor::zeros({1})), ContractError);
  CHECK_THROWS_AS(store.get("missing"), ContractError);
}

TEST_CASE("Initializer is deterministic in the seed") {
  Initializer a(42), b(42), c(43);
  const auto x = a.xavier_uniform(8, 4), y = b.xavier_uniform(8, 4), z = c.xavier_uniform(8, 4);
  CHECK(max_abs_diff(x, y) == 0.0);
  CHECK(max_abs_diff(x, z) > 0.0);
  const double limit = std::sqrt(6.0 / 12.0);
  for (double v : x.data()) CHECK(std::abs(v) <= limit);
}

TEST_CASE("multi-head attention matches the loop oracle") {
  for (std::size_t heads : {1u, 2u, 4u}) {
    ParamStore store;
    Initializer init(7 + heads);
    auto attn = make_attention(store, "attn", 8, heads, init);
    // Nonzero biases so the oracle exercises them.
    for (auto* l : {&attn.query, &attn.key, &attn.value, &attn.out}) {
      l->bias.data()[0] = 0.3;
      l->bias.data()[5] = -0.2;
    }
    std::mt19937_64 rng(100 + heads);
    const auto xq = testing::random_tensor({3, 8}, rng), xkv = testing::random_tensor({5, 8}, rng);
    Mat mean_w;
    const auto oracle = attention_oracle(attn, testing::to_mat(xq), testing::to_mat(xkv), &mean_w);
    const auto r = attend(attn, xq, xkv, true);
    INFO("heads = " << heads);
    CHECK(max_abs_diff(r.out, testing::from_mat(oracle)) < 1e-12);
    CHECK(max_abs_diff(r.mean_weights, testing::from_mat(mean_w)) < 1e-12);
    for (std::size_t i = 0; i < 3; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 5; ++j) s += r.mean_weights.at(i, j);
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("attention rejects width mismatch and indivisible heads") {
  ParamStore store;
  Initializer init(1);
  CHECK_THROWS_AS(make_attention(store, "bad", 6, 4, init), ConfigError);
  auto attn = make_attention(store, "ok", 4, 2, init);
  CHECK_THROWS_AS(attend(attn, Tensor::zeros({2, 4}), Tensor::zeros({2, 3})), DimensionError);
}

TEST_CASE("block with zeroed output projections is the identity") {
  ParamStore store;
  Initializer init(3);
  auto block = make_block(store, "blk", 8, 2, 16, init);
  for (auto* t : {&block.attn.out.weight, &block.fc2.weight}) {
    for (auto& v : t->data()) v = 0.0;
  }
  std::mt19937_64 rng(5);
  const auto x = testing::random_tensor({4, 8}, rng);
  CHECK(max_abs_diff(run_block(block, x).out, x) == 0.0);
}

TEST_CASE("block gradients match finite differences") {
  ParamStore store;
  Initializer init(4);
  auto block = make_block(store, "blk", 4, 2, 8, init);
  std::mt19937_64 rng(6);
  const auto x = testing::random_tensor({3, 4}, rng);
  const auto w = testing::random_tensor({3, 4}, rng);
  auto params = store.tensors();
  const auto r = grad_check([&] { return sum(mul(run_block(block, x).out, w)); }, params);
  CHECK(r.max_rel_error < 1e-6);
}
