#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "place/checkpoint.hpp"
#include "place/config.hpp"
#include "place/model.hpp"
#include "place/optim.hpp"

namespace place {

struct LossSummary {
  double total = 0.0;
  double icma = 0.0;
  double pcma = 0.0;
  double cce = 0.0;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  LossSummary train;
  LossSummary val;
  double wall_seconds = 0.0;
};

// Loss terms averaged over a split, evaluated in order in chunks of batch_size.
LossSummary evaluate_loss(const PlaceModel& model, const PreparedSplit& split, std::size_t batch_size);

AdamWConfig optimizer_config(const TrainConfig& cfg);

// Zero grads, forward, backward, optional clipping, AdamW update. Throws
// NumericError naming the first non-finite term.
LossSummary training_step(PlaceModel& model, AdamWState& state, const PreparedSplit& split,
                          std::span<const std::size_t> batch);

// Sample order of one training epoch; a pure function of (seed, epoch).
std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n);

// Validation-loss tracker. An epoch improves only on a strictly lower loss;
// training stops once more than `patience` epochs pass without improvement.
struct EarlyStopping {
  std::size_t patience = 10;
  double best_val = 0.0;
  std::size_t best_epoch = 0;
  std::size_t since_best = 0;

  // Records epoch `epoch`; returns true when training should stop.
  bool update(std::size_t epoch, double val_loss);
};

struct TrainOptions {
  // Stop (as if interrupted) after this epoch; the run can be resumed.
  std::optional<std::size_t> stop_after_epoch;
  std::function<void(const EpochMetrics&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochMetrics> history;  // epochs run by this call
  std::size_t best_epoch = 0;
  double best_val = 0.0;
  std::size_t last_epoch = 0;
  bool early_stopped = false;
  std::filesystem::path best_checkpoint;
  std::filesystem::path last_checkpoint;
  std::filesystem::path metrics_csv;
};

// Writes config.txt, metrics.csv, best.ckpt and last.ckpt into out_dir.
// Epoch 0 is the evaluation of the freshly initialized model.
TrainResult train(const TrainConfig& cfg, const PreparedSplit& train_split, const PreparedSplit& val_split,
                  const std::filesystem::path& out_dir, const TrainOptions& options = {});

// Continues from a checkpoint written by train(); output goes next to it.
// Refuses when the checkpoint's config hash differs from cfg's.
TrainResult resume(const std::filesystem::path& checkpoint, const TrainConfig& cfg,
                   const PreparedSplit& train_split, const PreparedSplit& val_split,
                   const TrainOptions& options = {});

// Model parameters from a checkpoint, after checking the config hash.
std::unique_ptr<PlaceModel> load_model(const std::filesystem::path& checkpoint, const TrainConfig& cfg);

inline constexpr const char* kMetricsHeader =
    "epoch,train_total,train_icma,train_pcma,train_cce,val_total,val_icma,val_pcma,val_cce,wall_seconds";

std::string format_metrics_row(const EpochMetrics& m);

}  // namespace place
