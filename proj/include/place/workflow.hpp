#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "place/config.hpp"
#include "place/eval.hpp"
#include "place/gradcheck.hpp"
#include "place/synth.hpp"

namespace place {

// Splits for a run: read from data_dir (train.pld, val.pld, test.pld) when
// given, otherwise generated from the config's world and data seed.
DataSplits load_splits(const TrainConfig& cfg, const std::optional<std::filesystem::path>& data_dir);

// Held-out retrieval corpus, seeded outside every split's seed range.
inline constexpr std::size_t kRetrievalCorpusSize = 200;
Dataset retrieval_corpus(const TrainConfig& cfg);

struct EvalReport {
  TrainConfig cfg;
  std::string split;
  std::vector<Metric> metrics;
};

// Loads config.txt next to the checkpoint, the trained weights and a
// freshly initialized baseline, then runs evaluate_all on the named split.
EvalReport evaluate_checkpoint(const std::filesystem::path& checkpoint, const std::string& split,
                               const std::optional<std::filesystem::path>& data_dir);

void write_eval_csv(const std::filesystem::path& path, const EvalReport& report);

// Gradient check of total_loss over every parameter on a two-sample batch.
GradCheckReport grad_check_total(const TrainConfig& cfg);

// Writes <split>.pld and <split>.plct for train, val and test; returns the
// number of pairs written.
std::size_t generate_data(const DataGenConfig& gen, const std::filesystem::path& out_dir);

}  // namespace place
