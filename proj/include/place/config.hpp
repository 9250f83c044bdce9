#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "place/encoders.hpp"
#include "place/hash.hpp"
#include "place/synth.hpp"

namespace place {

// Everything a training run depends on. Serialized as flat `key = value`
// lines; keys are the field names below.
struct TrainConfig {
  // objective
  double lambda = 0.5;
  double beta = 0.5;
  double tau1 = 0.07;
  double tau2 = 0.10;
  bool l2_normalize = true;
  bool cce_full_matrix = false;

  // optimizer
  double learning_rate = 1e-3;
  double weight_decay = 5e-2;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 0.0;  // 0 disables clipping

  // schedule
  std::size_t batch_size = 16;
  std::size_t max_epochs = 50;
  std::size_t patience = 10;
  std::uint64_t seed = 0;

  // architecture
  std::size_t image_side = 32;
  std::size_t embed_patch = 8;
  std::size_t d_model = 32;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t max_report_len = 32;
  std::size_t n_queries = 4;
  std::size_t vpoe_layers = 2;
  std::size_t patch_size = 8;

  // data
  std::size_t n_train = 512;
  std::size_t n_val = 128;
  std::size_t n_test = 128;
  std::uint64_t data_seed = 1000;
  std::size_t n_pathologies = 4;
  std::size_t n_regions = 4;
  double noise_sigma = 0.05;

  // metrics
  bool log_wall_time = true;

  void validate() const;
  WorldSpec world() const;
  EncoderConfig encoder() const;

  // Canonical serialization: every key, fixed order, round-trip precision.
  std::string to_text() const;
  Digest hash() const { return sha256(to_text()); }
};

// Unknown keys, malformed values and duplicate keys raise ConfigError.
TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const TrainConfig& cfg);

// Generation settings for `gen-data`: WorldSpec fields plus split sizes,
// base seed and the covariance patch size used for cached targets.
struct DataGenConfig {
  WorldSpec world;
  std::size_t n_train = 512;
  std::size_t n_val = 128;
  std::size_t n_test = 128;
  std::uint64_t base_seed = 1000;
  std::size_t patch_size = 8;
};

DataGenConfig parse_datagen_config(const std::string& text);
DataGenConfig load_datagen_config(const std::filesystem::path& path);

}  // namespace place
