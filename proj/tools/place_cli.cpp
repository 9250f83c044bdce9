// Command-line front end; talks to the library only through place.h.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <string>

#include "place/place.h"

namespace {

int report(place_status s) {
  if (s == PLACE_OK) return 0;
  std::fprintf(stderr, "error (%s): %s\n", place_status_name(s), place_last_error());
  return 1;
}

void print_summary(const place_train_summary& s) {
  std::printf("last epoch %llu, best epoch %llu, best val %.6f%s\n", static_cast<unsigned long long>(s.last_epoch),
              static_cast<unsigned long long>(s.best_epoch), s.best_val, s.early_stopped ? " (early stop)" : "");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pathology-aware image-report pretraining on synthetic data"};
  app.require_subcommand(1);

  std::string config_path, out_dir, data_dir, checkpoint, split = "test", spec_path, eval_out;
  long long stop_after = -1;
  double tolerance = 1e-4;

  auto* train = app.add_subcommand("train", "Train from a config file");
  train->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  train->add_option("--out", out_dir, "Output directory")->required();
  train->add_option("--data", data_dir, "Directory written by gen-data (default: generate from config)");
  train->add_option("--stop-after", stop_after, "Stop after this epoch, leaving a resumable checkpoint");

  auto* resume = app.add_subcommand("resume", "Continue a run from its checkpoint");
  resume->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  resume->add_option("--data", data_dir, "Directory written by gen-data");
  resume->add_option("--stop-after", stop_after, "Stop after this epoch");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--split", split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_option("--data", data_dir, "Directory written by gen-data");
  eval->add_option("--out", eval_out, "CSV path (default: eval_<split>.csv beside the checkpoint)");

  auto* gen = app.add_subcommand("gen-data", "Write synthetic train/val/test splits");
  gen->add_option("--spec", spec_path, "World spec file")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", out_dir, "Output directory")->required();

  auto* gc = app.add_subcommand("grad-check", "Finite-difference check of the full objective");
  gc->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  gc->add_option("--tolerance", tolerance, "Maximum relative error");

  CLI11_PARSE(app, argc, argv);
  const char* data = data_dir.empty() ? nullptr : data_dir.c_str();

  if (*train) {
    place_config* cfg = nullptr;
    if (int rc = report(place_config_load(config_path.c_str(), &cfg))) return rc;
    place_train_summary s{};
    const int rc = report(place_train(cfg, data, out_dir.c_str(), stop_after, &s));
    place_config_free(cfg);
    if (rc == 0) print_summary(s);
    return rc;
  }
  if (*resume) {
    place_train_summary s{};
    const int rc = report(place_resume(checkpoint.c_str(), data, stop_after, &s));
    if (rc == 0) print_summary(s);
    return rc;
  }
  if (*eval) {
    place_metrics* m = nullptr;
    if (int rc = report(place_eval(checkpoint.c_str(), split.c_str(), data, &m))) return rc;
    if (eval_out.empty()) {
      eval_out = (std::filesystem::path(checkpoint).parent_path() / ("eval_" + split + ".csv")).string();
    }
    for (size_t i = 0; i < place_metrics_count(m); ++i) {
      std::printf("%-28s %.6f\n", place_metrics_name(m, i), place_metrics_value(m, i));
    }
    const int rc = report(place_metrics_write_csv(m, eval_out.c_str()));
    place_metrics_free(m);
    if (rc == 0) std::printf("wrote %s\n", eval_out.c_str());
    return rc;
  }
  if (*gen) {
    size_t n = 0;
    const int rc = report(place_gen_data(spec_path.c_str(), out_dir.c_str(), &n));
    if (rc == 0) std::printf("wrote %zu pairs to %s\n", n, out_dir.c_str());
    return rc;
  }
  place_config* cfg = nullptr;
  if (int rc = report(place_config_load(config_path.c_str(), &cfg))) return rc;
  double err = 0.0;
  const int rc = report(place_grad_check(cfg, &err));
  place_config_free(cfg);
  if (rc != 0) return rc;
  const bool ok = err < tolerance;
  std::printf("max relative error %.3e (tolerance %.1e): %s\n", err, tolerance, ok ? "PASS" : "FAIL");
  return ok ? 0 : 2;
}
