#include "place/place.h"

#include <exception>
#include <memory>
#include <new>
#include <sstream>
#include <string>

#include "place/config.hpp"
#include "place/errors.hpp"
#include "place/trainer.hpp"
#include "place/workflow.hpp"

struct place_config {
  place::TrainConfig cfg;
};

struct place_metrics {
  place::EvalReport report;
};

namespace {

thread_local std::string g_last_error;

place_status fail(place_status status, const char* what) {
  g_last_error = what;
  return status;
}

// Runs fn, mapping the library's exception hierarchy onto status codes.
template <typename Fn>
place_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return PLACE_OK;
  } catch (const place::ConfigError& e) {
    return fail(PLACE_ERR_CONFIG, e.what());
  } catch (const place::IoError& e) {
    return fail(PLACE_ERR_IO, e.what());
  } catch (const place::DimensionError& e) {
    return fail(PLACE_ERR_DIMENSION, e.what());
  } catch (const place::ContractError& e) {
    return fail(PLACE_ERR_CONTRACT, e.what());
  } catch (const place::DomainError& e) {
    return fail(PLACE_ERR_DOMAIN, e.what());
  } catch (const place::NumericError& e) {
    return fail(PLACE_ERR_NUMERIC, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(PLACE_ERR_IO, e.what());
  } catch (const std::bad_alloc&) {
    return fail(PLACE_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(PLACE_ERR_INTERNAL, e.what());
  }
}

std::optional<std::filesystem::path> optional_path(const char* p) {
  if (p == nullptr || *p == '\0') return std::nullopt;
  return std::filesystem::path(p);
}

std::optional<std::size_t> optional_epoch(int64_t e) {
  if (e < 0) return std::nullopt;
  return static_cast<std::size_t>(e);
}

void fill_summary(const place::TrainResult& r, place_train_summary* out) {
  if (out == nullptr) return;
  out->best_epoch = r.best_epoch;
  out->best_val = r.best_val;
  out->last_epoch = r.last_epoch;
  out->early_stopped = r.early_stopped ? 1 : 0;
}

}  // namespace

extern "C" {

const char* place_last_error(void) { return g_last_error.c_str(); }

const char* place_status_name(place_status status) {
  switch (status) {
    case PLACE_OK: return "ok";
    case PLACE_ERR_ARGUMENT: return "invalid argument";
    case PLACE_ERR_CONFIG: return "configuration error";
    case PLACE_ERR_IO: return "i/o error";
    case PLACE_ERR_DIMENSION: return "dimension error";
    case PLACE_ERR_CONTRACT: return "contract violation";
    case PLACE_ERR_DOMAIN: return "domain error";
    case PLACE_ERR_NUMERIC: return "numeric error";
    case PLACE_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

place_status place_config_load(const char* path, place_config** out) {
  if (path == nullptr || out == nullptr) return fail(PLACE_ERR_ARGUMENT, "place_config_load: null argument");
  return guarded([&] { *out = new place_config{place::load_config(path)}; });
}

place_status place_config_parse(const char* text, place_config** out) {
  if (text == nullptr || out == nullptr) return fail(PLACE_ERR_ARGUMENT, "place_config_parse: null argument");
  return guarded([&] { *out = new place_config{place::parse_config(text)}; });
}

place_status place_config_set(place_config* cfg, const char* key, const char* value) {
  if (cfg == nullptr || key == nullptr || value == nullptr) {
    return fail(PLACE_ERR_ARGUMENT, "place_config_set: null argument");
  }
  return guarded([&] {
    std::istringstream in(cfg->cfg.to_text());
    std::string line, text;
    bool found = false;
    const std::string prefix = std::string(key) + " = ";
    while (std::getline(in, line)) {
      if (line.rfind(prefix, 0) == 0) {
        line = prefix + value;
        found = true;
      }
      text += line + "\n";
    }
    if (!found) throw place::ConfigError(std::string("unknown config key '") + key + "'");
    cfg->cfg = place::parse_config(text);
  });
}

place_status place_config_hash(const place_config* cfg, char* out, size_t out_len) {
  if (cfg == nullptr || out == nullptr) return fail(PLACE_ERR_ARGUMENT, "place_config_hash: null argument");
  if (out_len < 65) return fail(PLACE_ERR_ARGUMENT, "place_config_hash: buffer shorter than 65 bytes");
  return guarded([&] {
    const auto hex = place::to_hex(cfg->cfg.hash());
    hex.copy(out, hex.size());
    out[hex.size()] = '\0';
  });
}

void place_config_free(place_config* cfg) { delete cfg; }

place_status place_train(const place_config* cfg, const char* data_dir, const char* out_dir,
                         int64_t stop_after_epoch, place_train_summary* summary) {
  if (cfg == nullptr || out_dir == nullptr) return fail(PLACE_ERR_ARGUMENT, "place_train: null argument");
  return guarded([&] {
    cfg->cfg.validate();
    auto splits = place::load_splits(cfg->cfg, optional_path(data_dir));
    const auto train = place::prepare_split(std::move(splits.train), cfg->cfg);
    const auto val = place::prepare_split(std::move(splits.val), cfg->cfg);
    place::TrainOptions opts;
    opts.stop_after_epoch = optional_epoch(stop_after_epoch);
    fill_summary(place::train(cfg->cfg, train, val, out_dir, opts), summary);
  });
}

place_status place_resume(const char* checkpoint, const char* data_dir, int64_t stop_after_epoch,
                          place_train_summary* summary) {
  if (checkpoint == nullptr) return fail(PLACE_ERR_ARGUMENT, "place_resume: null checkpoint");
  return guarded([&] {
    const std::filesystem::path ckpt(checkpoint);
    const auto cfg = place::load_config(ckpt.parent_path() / "config.txt");
    auto splits = place::load_splits(cfg, optional_path(data_dir));
    const auto train = place::prepare_split(std::move(splits.train), cfg);
    const auto val = place::prepare_split(std::move(splits.val), cfg);
    place::TrainOptions opts;
    opts.stop_after_epoch = optional_epoch(stop_after_epoch);
    fill_summary(place::resume(ckpt, cfg, train, val, opts), summary);
  });
}

place_status place_eval(const char* checkpoint, const char* split, const char* data_dir, place_metrics** out) {
  if (checkpoint == nullptr || split == nullptr || out == nullptr) {
    return fail(PLACE_ERR_ARGUMENT, "place_eval: null argument");
  }
  return guarded([&] {
    auto m = std::make_unique<place_metrics>();
    m->report = place::evaluate_checkpoint(checkpoint, split, optional_path(data_dir));
    *out = m.release();
  });
}

size_t place_metrics_count(const place_metrics* m) { return m == nullptr ? 0 : m->report.metrics.size(); }

const char* place_metrics_name(const place_metrics* m, size_t i) {
  if (m == nullptr || i >= m->report.metrics.size()) return nullptr;
  return m->report.metrics[i].name.c_str();
}

double place_metrics_value(const place_metrics* m, size_t i) {
  if (m == nullptr || i >= m->report.metrics.size()) return 0.0;
  return m->report.metrics[i].value;
}

place_status place_metrics_write_csv(const place_metrics* m, const char* path) {
  if (m == nullptr || path == nullptr) return fail(PLACE_ERR_ARGUMENT, "place_metrics_write_csv: null argument");
  return guarded([&] { place::write_eval_csv(path, m->report); });
}

void place_metrics_free(place_metrics* m) { delete m; }

place_status place_gen_data(const char* spec_path, const char* out_dir, size_t* pairs_written) {
  if (spec_path == nullptr || out_dir == nullptr) return fail(PLACE_ERR_ARGUMENT, "place_gen_data: null argument");
  return guarded([&] {
    const auto n = place::generate_data(place::load_datagen_config(spec_path), out_dir);
    if (pairs_written != nullptr) *pairs_written = n;
  });
}

place_status place_grad_check(const place_config* cfg, double* max_rel_error) {
  if (cfg == nullptr || max_rel_error == nullptr) return fail(PLACE_ERR_ARGUMENT, "place_grad_check: null argument");
  return guarded([&] {
    cfg->cfg.validate();
    *max_rel_error = place::grad_check_total(cfg->cfg).max_rel_error;
  });
}

}  // extern "C"
