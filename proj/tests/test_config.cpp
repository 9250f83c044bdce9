#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "place/config.hpp"
#include "place/errors.hpp"

using namespace place;

TEST_CASE("train config text round trip") {
  TrainConfig cfg;
  cfg.lambda = 0.1 + 0.2;  // not representable in short decimal form
  cfg.seed = 18446744073709551615ull;
  cfg.l2_normalize = false;
  cfg.log_wall_time = false;
  const auto back = parse_config(cfg.to_text());
  CHECK(back.to_text() == cfg.to_text());
  CHECK(back.lambda == cfg.lambda);
  CHECK(back.seed == cfg.seed);
  CHECK_FALSE(back.l2_normalize);
  CHECK(back.hash() == cfg.hash());

  TrainConfig other = cfg;
  other.tau2 = 0.2;
  CHECK(other.hash() != cfg.hash());
}

TEST_CASE("partial configs take defaults; comments and blanks are skipped") {
  const auto cfg = parse_config("# desk run\n\n  d_model = 16  \nn_heads=2 # trailing\nl2_normalize = 0\n");
  CHECK(cfg.d_model == 16);
  CHECK(cfg.n_heads == 2);
  CHECK_FALSE(cfg.l2_normalize);
  CHECK(cfg.tau1 == 0.07);
  CHECK(cfg.tau2 == 0.10);
  CHECK(cfg.lambda == 0.5);
  CHECK(cfg.beta == 0.5);
  CHECK(cfg.max_epochs == 50);
  CHECK(cfg.patience == 10);
}

TEST_CASE("malformed configs are rejected") {
  CHECK_THROWS_AS(parse_config("no_such_key = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("d_model = 16\nd_model = 32\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("d_model 16\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("d_model = sixteen\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("d_model = 16.5\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("tau1 = 0.07x\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("l2_normalize = yes\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("batch_size = -1\n"), ConfigError);
}

TEST_CASE("validation") {
  CHECK_THROWS_AS(parse_config("tau1 = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("tau2 = -0.1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("batch_size = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("patch_size = 5\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("patch_size = 32\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("n_heads = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("n_queries = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("max_report_len = 8\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("lambda = -1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("patience = 60\n"), ConfigError);
  CHECK_NOTHROW(parse_config("lambda = 0\nbeta = 0\n"));
}

TEST_CASE("config files") {
  const auto dir = std::filesystem::temp_directory_path() / "place_test_config";
  std::filesystem::create_directories(dir);
  TrainConfig cfg;
  cfg.d_model = 16;
  save_config(dir / "run.cfg", cfg);
  CHECK(load_config(dir / "run.cfg").hash() == cfg.hash());
  CHECK_THROWS_AS(load_config(dir / "missing.cfg"), IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("data generation settings") {
  const auto gen = parse_datagen_config("n_pathologies = 3\nnoise_sigma = 0\nn_train = 10\nbase_seed = 9\n");
  CHECK(gen.world.n_pathologies == 3);
  CHECK(gen.world.noise_sigma == 0.0);
  CHECK(gen.world.n_regions == 4);
  CHECK(gen.n_train == 10);
  CHECK(gen.base_seed == 9);
  CHECK_THROWS_AS(parse_datagen_config("d_model = 16\n"), ConfigError);
  CHECK_THROWS_AS(parse_datagen_config("n_pathologies = 9\n"), ConfigError);
}

TEST_CASE("shipped configs load") {
  const std::filesystem::path root = PLACE_SOURCE_DIR;
  CHECK_NOTHROW(load_config(root / "configs/desk.cfg"));
  CHECK_NOTHROW(load_config(root / "configs/tiny_gradcheck.cfg"));
  CHECK_NOTHROW(load_datagen_config(root / "configs/world.spec"));
}
