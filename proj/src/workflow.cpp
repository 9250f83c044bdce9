#include "place/workflow.hpp"

#include <array>
#include <charconv>
#include <fstream>

#include "place/cce.hpp"
#include "place/errors.hpp"
#include "place/model.hpp"
#include "place/trainer.hpp"

namespace place {

DataSplits load_splits(const TrainConfig& cfg, const std::optional<std::filesystem::path>& data_dir) {
  const auto world = cfg.world();
  if (!data_dir) return make_split(cfg.n_train, cfg.n_val, cfg.n_test, cfg.data_seed, world);
  DataSplits s;
  s.train = read_dataset(*data_dir / "train.pld", world);
  s.val = read_dataset(*data_dir / "val.pld", world);
  s.test = read_dataset(*data_dir / "test.pld", world);
  return s;
}

Dataset retrieval_corpus(const TrainConfig& cfg) {
  return make_retrieval_corpus(kRetrievalCorpusSize, cfg.data_seed + (std::uint64_t{1} << 32), cfg.world());
}

EvalReport evaluate_checkpoint(const std::filesystem::path& checkpoint, const std::string& split,
                               const std::optional<std::filesystem::path>& data_dir) {
  if (split != "train" && split != "val" && split != "test") {
    throw ConfigError("unknown split '" + split + "' (expected train, val or test)");
  }
  EvalReport report;
  report.split = split;
  report.cfg = load_config(checkpoint.parent_path() / "config.txt");
  const auto trained = load_model(checkpoint, report.cfg);
  const auto baseline = build_model(report.cfg);
  auto splits = load_splits(report.cfg, data_dir);
  Dataset& chosen = split == "train" ? splits.train : split == "val" ? splits.val : splits.test;
  const auto prepared = prepare_split(std::move(chosen), report.cfg);
  const auto corpus = retrieval_corpus(report.cfg);
  report.metrics = evaluate_all(*trained, *baseline, {&prepared, &splits.train, &corpus});
  return report;
}

void write_eval_csv(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  const auto hash = to_hex(report.cfg.hash());
  out << "metric,value,split,config_hash\n";
  for (const auto& m : report.metrics) {
    std::array<char, 32> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), m.value);
    out << m.name << ',' << std::string(buf.data(), end) << ',' << report.split << ',' << hash << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

GradCheckReport grad_check_total(const TrainConfig& cfg) {
  const auto model = build_model(cfg);
  const auto split = prepare_split(make_split(2, 1, 1, cfg.data_seed, cfg.world()).train, cfg);
  const std::array<std::size_t, 2> batch{0, 1};
  auto params = model->params.tensors();
  return grad_check([&] { return total_loss(*model, split, batch).total; }, params);
}

std::size_t generate_data(const DataGenConfig& gen, const std::filesystem::path& out_dir) {
  gen.world.validate();
  std::filesystem::create_directories(out_dir);
  const auto splits = make_split(gen.n_train, gen.n_val, gen.n_test, gen.base_seed, gen.world);
  const std::array<std::pair<const char*, const Dataset*>, 3> parts{
      {{"train", &splits.train}, {"val", &splits.val}, {"test", &splits.test}}};
  std::size_t written = 0;
  for (const auto& [name, data] : parts) {
    write_dataset(out_dir / (std::string(name) + ".pld"), *data, gen.world);
    TargetCache cache;
    for (const auto& p : *data) {
      const auto t = covariance_target(p.image, gen.patch_size);
      cache[p.seed] = std::vector<double>(t.data().begin(), t.data().end());
    }
    write_target_cache(out_dir / (std::string(name) + ".plct"), cache);
    written += data->size();
  }
  return written;
}

}  // namespace place
