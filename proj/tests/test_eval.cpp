#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "place/errors.hpp"
#include "place/eval.hpp"
#include "place/trainer.hpp"
#include "test_support.hpp"

using namespace place;

namespace {

std::vector<std::size_t> balanced_labels(std::size_t n, std::size_t classes) {
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = i % classes;
  return out;
}

std::vector<double> random_vector(std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::vector<double> v(d);
  for (auto& x : v) x = g(rng);
  return v;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

}  // namespace

TEST_CASE("retrieval precision") {
  std::mt19937_64 rng(1);
  const std::vector<std::size_t> ks{1, 2, 3, 4};

  SUBCASE("a corpus sharing the query label scores one") {
    const auto q = testing::random_tensor({5, 6}, rng), r = testing::random_tensor({8, 6}, rng);
    const std::vector<std::size_t> ql(5, 2), rl(8, 2);
    const auto res = retrieval_precision(q, r, ql, rl, ks);
    for (double p : res.precision_at_k) CHECK(p == 1.0);
  }
  SUBCASE("two queries over four reports") {
    // Identity reports make each query row its similarity row.
    const auto q = Tensor::matrix({{0.9, 0.1, 0.5, 0.3}, {0.2, 0.4, 0.8, 0.6}});
    const auto r = Tensor::matrix({{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}});
    const std::vector<std::size_t> ql{0, 1}, rl{0, 1, 0, 1};
    const auto res = retrieval_precision(q, r, ql, rl, ks);
    CHECK(res.ranked[0] == std::vector<std::size_t>{0, 2, 3, 1});
    CHECK(res.ranked[1] == std::vector<std::size_t>{2, 3, 1, 0});
    CHECK(std::abs(res.precision_at_k[0] - 0.5) < 1e-15);
    CHECK(std::abs(res.precision_at_k[1] - 0.75) < 1e-15);
    CHECK(std::abs(res.precision_at_k[2] - 2.0 / 3.0) < 1e-15);
    CHECK(std::abs(res.precision_at_k[3] - 0.5) < 1e-15);
  }
  SUBCASE("ties rank the lower index first") {
    const auto q = Tensor::matrix({{1, 0}});
    const auto r = Tensor::matrix({{0.5, 1}, {0.5, -1}, {0.7, 0}});
    const std::vector<std::size_t> ql{0}, rl{0, 1, 1};
    CHECK(retrieval_precision(q, r, ql, rl, std::span(ks).subspan(0, 1)).ranked[0] == std::vector<std::size_t>{2, 0, 1});
  }
  SUBCASE("K over the whole corpus is the label base rate") {
    const auto q = testing::random_tensor({6, 4}, rng), r = testing::random_tensor({10, 4}, rng);
    const std::vector<std::size_t> ql{0, 1, 2, 0, 1, 2}, rl{0, 0, 0, 0, 1, 1, 1, 2, 2, 2};
    const std::vector<std::size_t> k{10};
    const double base = (0.4 + 0.3 + 0.3 + 0.4 + 0.3 + 0.3) / 6.0;
    CHECK(std::abs(retrieval_precision(q, r, ql, rl, k).precision_at_k[0] - base) < 1e-15);
  }
  SUBCASE("random representations score one over the class count") {
    const std::size_t classes = 4, n = 200, seeds = 20;
    const std::vector<std::size_t> k{1, 10};
    std::vector<double> p1, p10;
    for (std::size_t s = 0; s < seeds; ++s) {
      const auto q = testing::random_tensor({n, 16}, rng), r = testing::random_tensor({n, 16}, rng);
      auto ql = balanced_labels(n, classes);
      std::shuffle(ql.begin(), ql.end(), rng);
      const auto res = retrieval_precision(q, r, ql, balanced_labels(n, classes), k);
      p1.push_back(res.precision_at_k[0]);
      p10.push_back(res.precision_at_k[1]);
    }
    for (const auto* xs : {&p1, &p10}) {
      double mean = 0.0, var = 0.0;
      for (double x : *xs) mean += x / seeds;
      for (double x : *xs) var += (x - mean) * (x - mean) / (seeds - 1);
      CHECK(std::abs(mean - 0.25) < 3.0 * std::sqrt(var / seeds));
    }
  }
  SUBCASE("errors") {
    const auto q = testing::random_tensor({2, 3}, rng), r = testing::random_tensor({4, 3}, rng);
    const std::vector<std::size_t> ql{0, 1}, rl{0, 1, 0, 1};
    const std::vector<std::size_t> big{5}, zero{0};
    CHECK_THROWS_AS(retrieval_precision(q, r, ql, rl, big), ContractError);
    CHECK_THROWS_AS(retrieval_precision(q, r, ql, rl, zero), ContractError);
    CHECK_THROWS_AS(retrieval_precision(q, testing::random_tensor({4, 2}, rng), ql, rl, ks), DimensionError);
  }
}

TEST_CASE("V-POR consistency") {
  std::mt19937_64 rng(2);

  SUBCASE("one sample is fully consistent") {
    const auto r = consistency_from_similarities({{0.1, 0.7, 0.3}});
    CHECK(r.samples == 1);
    CHECK(r.top1 == 1.0);
    CHECK(r.modal_index == 1);
  }
  SUBCASE("no samples signals an empty result") { CHECK(consistency_from_similarities({}).samples == 0); }
  SUBCASE("a fixture forcing index two") {
    std::vector<std::vector<double>> sims;
    for (int s = 0; s < 30; ++s) {
      auto v = random_vector(4, rng);
      for (auto& x : v) x = std::tanh(x);
      v[2] = 2.0;
      sims.push_back(v);
    }
    const auto r = consistency_from_similarities(sims);
    CHECK(r.modal_index == 2);
    CHECK(r.top1 == 1.0);
    CHECK(r.top2 == 1.0);
  }
  SUBCASE("top two counts the modal index in second place") {
    const auto r = consistency_from_similarities({{0.9, 0.1, 0.0}, {0.9, 0.2, 0.1}, {0.3, 0.8, 0.1}, {0.1, 0.2, 0.9}});
    CHECK(r.modal_index == 0);
    CHECK(r.top1 == 0.5);
    CHECK(r.top2 == 0.75);
    CHECK(r.counts == std::vector<std::size_t>{2, 1, 1});
  }
  SUBCASE("cosine argmax ignores positive rescaling") {
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<std::vector<double>> plain, scaled;
      for (int s = 0; s < 25; ++s) {
        const auto t = random_vector(8, rng);
        std::vector<double> row, row_scaled;
        for (int q = 0; q < 4; ++q) {
          const auto v = random_vector(8, rng);
          auto v3 = v, t3 = t;
          for (auto& x : v3) x *= 3.5;
          for (auto& x : t3) x *= 0.2;
          row.push_back(cosine(v, t));
          row_scaled.push_back(cosine(v3, t3));
        }
        plain.push_back(row);
        scaled.push_back(row_scaled);
      }
      const auto a = consistency_from_similarities(plain), b = consistency_from_similarities(scaled);
      CHECK(a.counts == b.counts);
      CHECK(a.top2 == b.top2);
    }
  }
  SUBCASE("uniform random argmax matches the simulated baseline") {
    const std::size_t n = 40, nq = 4, trials = 2000;
    const double baseline = random_argmax_baseline(n, nq);
    CHECK(baseline > 1.0 / nq);
    CHECK(baseline < 0.5);
    double mean = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
      std::vector<std::vector<double>> sims;
      for (std::size_t s = 0; s < n; ++s) sims.push_back(random_vector(nq, rng));
      const auto r = consistency_from_similarities(sims);
      CHECK(r.top2 >= r.top1);
      mean += r.top1 / trials;
    }
    CHECK(std::abs(mean - baseline) < 0.01);
  }
  SUBCASE("baseline errors") { CHECK_THROWS_AS(random_argmax_baseline(0, 4), ContractError); }
}

TEST_CASE("cluster separation") {
  std::mt19937_64 rng(3);

  SUBCASE("identical vectors score zero") {
    const std::vector<double> v{0.3, -1.0, 2.0};
    const std::vector<std::vector<std::vector<double>>> data(10, {v, v, v});
    CHECK(cluster_separation(data) == 0.0);
  }
  SUBCASE("antipodal groups score one") {
    const std::vector<std::vector<std::vector<double>>> data(10, {{1.0, 0.0}, {-2.0, 0.0}});
    CHECK(std::abs(cluster_separation(data) - 1.0) < 1e-15);
  }
  SUBCASE("random vectors score near zero") {
    for (int seed = 0; seed < 10; ++seed) {
      std::vector<std::vector<std::vector<double>>> data;
      for (int s = 0; s < 100; ++s) {
        std::vector<std::vector<double>> sample;
        for (int q = 0; q < 4; ++q) sample.push_back(random_vector(8, rng));
        data.push_back(sample);
      }
      CHECK(std::abs(cluster_separation(data)) < 0.1);
    }
  }
  SUBCASE("a single group is a contract error") {
    const std::vector<std::vector<std::vector<double>>> data(10, {{1.0, 0.0}});
    CHECK_THROWS_AS(cluster_separation(data), ContractError);
    CHECK_THROWS_AS(cluster_separation({}), ContractError);
  }
}

TEST_CASE("linear probe") {
  std::mt19937_64 rng(4);
  std::vector<std::vector<double>> train_x, test_x;
  for (int i = 0; i < 60; ++i) train_x.push_back(random_vector(5, rng));
  for (int i = 0; i < 40; ++i) test_x.push_back(random_vector(5, rng));

  SUBCASE("constant labels give the majority rate") {
    const std::vector<std::vector<int>> train_y(60, {0}), all_zero(40, {0});
    CHECK(linear_probe(train_x, train_y, test_x, all_zero).mean_accuracy == 1.0);
    std::vector<std::vector<int>> mixed(40, {0});
    for (int i = 0; i < 12; ++i) mixed[i][0] = 1;
    CHECK(std::abs(linear_probe(train_x, train_y, test_x, mixed).mean_accuracy - 0.7) < 1e-15);
  }
  SUBCASE("one-hot features are separable") {
    std::vector<std::vector<double>> xs;
    std::vector<std::vector<int>> ys;
    for (int i = 0; i < 80; ++i) {
      std::vector<int> y{i % 2, (i / 2) % 2, (i / 4) % 2};
      ys.push_back(y);
      xs.push_back({static_cast<double>(y[0]), static_cast<double>(y[1]), static_cast<double>(y[2])});
    }
    const auto r = linear_probe(xs, ys, xs, ys);
    for (double a : r.per_class_accuracy) CHECK(a == 1.0);
  }
  SUBCASE("misaligned inputs") {
    const std::vector<std::vector<int>> y(10, {0});
    CHECK_THROWS_AS(linear_probe(train_x, y, test_x, y), DimensionError);
  }
}

TEST_CASE("model-level metrics") {
  TrainConfig cfg;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.n_layers = 1;
  cfg.n_queries = 4;
  cfg.vpoe_layers = 1;
  cfg.patch_size = 16;
  const auto model = build_model(cfg);
  cfg.seed = 1;
  const auto other = build_model(cfg);
  auto splits = make_split(24, 4, 16, 5, cfg.world());
  const auto corpus = make_retrieval_corpus(20, 99, cfg.world());
  const auto eval_split = prepare_split(splits.test, cfg);

  SUBCASE("retrieval, consistency, clustering and probe are in range") {
    const std::vector<std::size_t> ks{1, 2, 5, 10};
    const auto r = retrieval_precision(*model, corpus, ks);
    for (double p : r.precision_at_k) {
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
    }
    const auto c = vpor_consistency(*model, splits.test, 0);
    CHECK(c.top1 <= c.top2);
    CHECK(c.top2 <= 1.0);
    const double sep = vpor_cluster_separation(*model, splits.test);
    CHECK(sep >= -1.0);
    CHECK(sep <= 1.0);
    const auto probe = linear_probe(*model, splits.train, splits.test);
    CHECK(probe.per_class_accuracy.size() == cfg.n_pathologies);
  }
  SUBCASE("presence labels mark every pathology in the image") {
    const auto y = presence_labels(splits.train, cfg.n_pathologies);
    for (std::size_t i = 0; i < y.size(); ++i) {
      std::set<std::size_t> present;
      for (const auto& f : splits.train[i].labels) present.insert(f.pathology);
      for (std::size_t p = 0; p < cfg.n_pathologies; ++p) CHECK((y[i][p] == 1) == (present.count(p) == 1));
    }
  }
  SUBCASE("the full metric set is deterministic") {
    const EvalInputs in{&eval_split, &splits.train, &corpus};
    const auto a = evaluate_all(*model, *other, in), b = evaluate_all(*model, *other, in);
    REQUIRE(a.size() == b.size());
    std::set<std::string> names;
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].name == b[i].name);
      CHECK(a[i].value == b[i].value);
      names.insert(a[i].name);
    }
    for (const auto* n : {"loss_total", "retrieval_p_at_1", "retrieval_p_at_10", "cluster_separation", "probe_trained",
                          "probe_random", "consistency_samples_p0"})
      CHECK(names.count(n) == 1);
    CHECK_THROWS_AS(evaluate_all(*model, *other, EvalInputs{}), ContractError);
  }
}
