#include "place/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "place/errors.hpp"

namespace place {

namespace {

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void check_finite(const LossTerms& t) {
  const std::array<std::pair<const char*, const Tensor*>, 3> terms{
      {{"icma", &t.icma}, {"pcma", &t.pcma}, {"cce", &t.cce}}};
  for (const auto& [name, tensor] : terms) {
    if (!std::isfinite(tensor->item())) {
      throw NumericError(std::string("training: non-finite ") + name + " loss (" + fmt(tensor->item()) + ")");
    }
  }
  if (!std::isfinite(t.total.item())) throw NumericError("training: non-finite total loss");
}

struct RunState {
  std::size_t epoch = 0;
  double best_val = 0.0;
  std::size_t best_epoch = 0;
  std::size_t since_best = 0;
};

Checkpoint snapshot(const PlaceModel& model, const AdamWState& adam, const RunState& run) {
  Checkpoint c;
  c.config_hash = model.cfg.hash();
  std::size_t k = 0;
  for (const auto& [name, t] : model.params) c.tensors.emplace_back("param/" + name, t.detach());
  for (const auto& [name, t] : model.params) {
    c.tensors.emplace_back("adam.m/" + name, Tensor::from(t.shape(), adam.m[k]));
    c.tensors.emplace_back("adam.v/" + name, Tensor::from(t.shape(), adam.v[k]));
    ++k;
  }
  c.tensors.emplace_back("state/adam_step", Tensor::scalar(static_cast<double>(adam.step)));
  c.tensors.emplace_back("state/epoch", Tensor::scalar(static_cast<double>(run.epoch)));
  c.tensors.emplace_back("state/best_val", Tensor::scalar(run.best_val));
  c.tensors.emplace_back("state/best_epoch", Tensor::scalar(static_cast<double>(run.best_epoch)));
  c.tensors.emplace_back("state/since_best", Tensor::scalar(static_cast<double>(run.since_best)));
  return c;
}

void check_hash(const Checkpoint& c, const TrainConfig& cfg) {
  if (c.config_hash != cfg.hash()) {
    throw ConfigError("checkpoint was written with a different configuration (hash " +
                      to_hex(c.config_hash) + ", expected " + to_hex(cfg.hash()) + ")");
  }
}

void restore_params(PlaceModel& model, const Checkpoint& c) {
  for (auto& [name, t] : model.params) {
    const auto& src = c.get("param/" + name);
    if (src.shape() != t.shape()) throw IoError("checkpoint: shape mismatch for '" + name + "'");
    std::copy(src.data().begin(), src.data().end(), t.data().begin());
  }
}

std::size_t as_count(const Checkpoint& c, const std::string& name) {
  return static_cast<std::size_t>(c.get(name).item());
}

std::vector<std::string> read_metric_rows(const std::filesystem::path& csv, std::size_t up_to_epoch) {
  std::vector<std::string> rows;
  std::ifstream is(csv);
  if (!is) return rows;
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::size_t epoch = 0;
    std::from_chars(line.data(), line.data() + line.size(), epoch);
    if (epoch <= up_to_epoch) rows.push_back(line);
  }
  return rows;
}

void write_metric_rows(const std::filesystem::path& csv, const std::vector<std::string>& rows) {
  std::ofstream os(csv, std::ios::trunc);
  if (!os) throw IoError("cannot write " + csv.string());
  os << kMetricsHeader << '\n';
  for (const auto& r : rows) os << r << '\n';
}

// The shared epoch loop behind train() and resume().
TrainResult run_epochs(PlaceModel& model, AdamWState& adam, RunState run, const PreparedSplit& train_split,
                       const PreparedSplit& val_split, const std::filesystem::path& out_dir,
                       std::vector<std::string> rows, const TrainOptions& options) {
  const auto& cfg = model.cfg;
  TrainResult result;
  result.best_checkpoint = out_dir / "best.ckpt";
  result.last_checkpoint = out_dir / "last.ckpt";
  result.metrics_csv = out_dir / "metrics.csv";

  using Clock = std::chrono::steady_clock;
  bool stopped = false;
  for (std::size_t epoch = run.epoch + 1; epoch <= cfg.max_epochs && !stopped; ++epoch) {
    const auto start = Clock::now();
    const auto order = epoch_order(cfg.seed, epoch, train_split.size());
    EpochMetrics m;
    m.epoch = epoch;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const auto n = std::min(cfg.batch_size, order.size() - b);
      const auto s = training_step(model, adam, train_split, std::span(order).subspan(b, n));
      const double w = static_cast<double>(n) / static_cast<double>(order.size());
      m.train.total += w * s.total;
      m.train.icma += w * s.icma;
      m.train.pcma += w * s.pcma;
      m.train.cce += w * s.cce;
    }
    m.val = evaluate_loss(model, val_split, cfg.batch_size);
    if (cfg.log_wall_time) m.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();

    run.epoch = epoch;
    EarlyStopping stop{cfg.patience, run.best_val, run.best_epoch, run.since_best};
    const bool exhausted = stop.update(epoch, m.val.total);
    run.best_val = stop.best_val;
    run.best_epoch = stop.best_epoch;
    run.since_best = stop.since_best;
    const auto ckpt = snapshot(model, adam, run);
    if (run.best_epoch == epoch) write_checkpoint(result.best_checkpoint, ckpt);
    write_checkpoint(result.last_checkpoint, ckpt);

    rows.push_back(format_metrics_row(m));
    write_metric_rows(result.metrics_csv, rows);
    result.history.push_back(m);
    if (options.on_epoch) options.on_epoch(m);

    if (exhausted) {
      result.early_stopped = true;
      stopped = true;
    }
    if (options.stop_after_epoch && epoch >= *options.stop_after_epoch) stopped = true;
  }
  result.best_epoch = run.best_epoch;
  result.best_val = run.best_val;
  result.last_epoch = run.epoch;
  return result;
}

}  // namespace

bool EarlyStopping::update(std::size_t epoch, double val_loss) {
  if (val_loss < best_val) {
    best_val = val_loss;
    best_epoch = epoch;
    since_best = 0;
  } else {
    ++since_best;
  }
  return since_best > patience;
}

std::string format_metrics_row(const EpochMetrics& m) {
  std::ostringstream os;
  os << m.epoch << ',' << fmt(m.train.total) << ',' << fmt(m.train.icma) << ',' << fmt(m.train.pcma) << ','
     << fmt(m.train.cce) << ',' << fmt(m.val.total) << ',' << fmt(m.val.icma) << ',' << fmt(m.val.pcma) << ','
     << fmt(m.val.cce) << ',' << fmt(m.wall_seconds);
  return os.str();
}

LossSummary evaluate_loss(const PlaceModel& model, const PreparedSplit& split, std::size_t batch_size) {
  if (split.size() == 0) throw ContractError("evaluate_loss: empty split");
  NoGradGuard no_grad;
  LossSummary out;
  std::vector<std::size_t> idx(split.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t b = 0; b < idx.size(); b += batch_size) {
    const auto n = std::min(batch_size, idx.size() - b);
    const auto t = total_loss(model, split, std::span(idx).subspan(b, n));
    const double w = static_cast<double>(n) / static_cast<double>(idx.size());
    out.total += w * t.total.item();
    out.icma += w * t.icma.item();
    out.pcma += w * t.pcma.item();
    out.cce += w * t.cce.item();
  }
  return out;
}

AdamWConfig optimizer_config(const TrainConfig& cfg) {
  return {cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.weight_decay};
}

LossSummary training_step(PlaceModel& model, AdamWState& state, const PreparedSplit& split,
                          std::span<const std::size_t> batch) {
  model.params.zero_grad();
  const auto t = total_loss(model, split, batch);
  check_finite(t);
  t.total.backward();
  if (model.cfg.clip_norm > 0.0) clip_grad_norm(model.params, model.cfg.clip_norm);
  adamw_step(model.params, state, optimizer_config(model.cfg));
  return {t.total.item(), t.icma.item(), t.pcma.item(), t.cce.item()};
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed ^ (0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(epoch) + 1)));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

TrainResult train(const TrainConfig& cfg, const PreparedSplit& train_split, const PreparedSplit& val_split,
                  const std::filesystem::path& out_dir, const TrainOptions& options) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  save_config(out_dir / "config.txt", cfg);

  auto model = build_model(cfg);
  auto adam = AdamWState::zeros_like(model->params);

  const auto start = std::chrono::steady_clock::now();
  EpochMetrics initial;
  initial.epoch = 0;
  initial.train = evaluate_loss(*model, train_split, cfg.batch_size);
  initial.val = evaluate_loss(*model, val_split, cfg.batch_size);
  if (cfg.log_wall_time) {
    initial.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }

  RunState run;
  run.best_val = initial.val.total;
  const auto ckpt = snapshot(*model, adam, run);
  write_checkpoint(out_dir / "best.ckpt", ckpt);
  write_checkpoint(out_dir / "last.ckpt", ckpt);
  std::vector<std::string> rows{format_metrics_row(initial)};
  write_metric_rows(out_dir / "metrics.csv", rows);
  if (options.on_epoch) options.on_epoch(initial);

  auto result = run_epochs(*model, adam, run, train_split, val_split, out_dir, std::move(rows), options);
  result.history.insert(result.history.begin(), initial);
  return result;
}

TrainResult resume(const std::filesystem::path& checkpoint, const TrainConfig& cfg,
                   const PreparedSplit& train_split, const PreparedSplit& val_split, const TrainOptions& options) {
  const auto c = read_checkpoint(checkpoint);
  check_hash(c, cfg);
  auto model = build_model(cfg);
  restore_params(*model, c);

  auto adam = AdamWState::zeros_like(model->params);
  std::size_t k = 0;
  for (const auto& [name, t] : model->params) {
    const auto m = c.get("adam.m/" + name).data();
    const auto v = c.get("adam.v/" + name).data();
    if (m.size() != t.numel() || v.size() != t.numel()) throw IoError("checkpoint: moment size mismatch");
    adam.m[k].assign(m.begin(), m.end());
    adam.v[k].assign(v.begin(), v.end());
    ++k;
  }
  adam.step = static_cast<std::uint64_t>(c.get("state/adam_step").item());

  RunState run;
  run.epoch = as_count(c, "state/epoch");
  run.best_val = c.get("state/best_val").item();
  run.best_epoch = as_count(c, "state/best_epoch");
  run.since_best = as_count(c, "state/since_best");

  const auto out_dir = checkpoint.has_parent_path() ? checkpoint.parent_path() : std::filesystem::path(".");
  auto rows = read_metric_rows(out_dir / "metrics.csv", run.epoch);
  return run_epochs(*model, adam, run, train_split, val_split, out_dir, std::move(rows), options);
}

std::unique_ptr<PlaceModel> load_model(const std::filesystem::path& checkpoint, const TrainConfig& cfg) {
  const auto c = read_checkpoint(checkpoint);
  check_hash(c, cfg);
  auto model = build_model(cfg);
  restore_params(*model, c);
  return model;
}

}  // namespace place
