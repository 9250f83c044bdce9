#include "place/config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <variant>
#include <vector>

#include "place/errors.hpp"

namespace place {

namespace {

static_assert(std::is_same_v<std::size_t, std::uint64_t>, "seed fields share the size_t alternative");

template <class S>
using Member = std::variant<double S::*, std::size_t S::*, bool S::*>;

template <class S>
struct Field {
  const char* key;
  Member<S> member;
};

const std::vector<Field<TrainConfig>>& train_fields() {
  using C = TrainConfig;
  static const std::vector<Field<C>> fields = {
      {"lambda", &C::lambda},
      {"beta", &C::beta},
      {"tau1", &C::tau1},
      {"tau2", &C::tau2},
      {"l2_normalize", &C::l2_normalize},
      {"cce_full_matrix", &C::cce_full_matrix},
      {"learning_rate", &C::learning_rate},
      {"weight_decay", &C::weight_decay},
      {"adam_beta1", &C::adam_beta1},
      {"adam_beta2", &C::adam_beta2},
      {"adam_eps", &C::adam_eps},
      {"clip_norm", &C::clip_norm},
      {"batch_size", &C::batch_size},
      {"max_epochs", &C::max_epochs},
      {"patience", &C::patience},
      {"seed", &C::seed},
      {"image_side", &C::image_side},
      {"embed_patch", &C::embed_patch},
      {"d_model", &C::d_model},
      {"n_layers", &C::n_layers},
      {"n_heads", &C::n_heads},
      {"max_report_len", &C::max_report_len},
      {"n_queries", &C::n_queries},
      {"vpoe_layers", &C::vpoe_layers},
      {"patch_size", &C::patch_size},
      {"n_train", &C::n_train},
      {"n_val", &C::n_val},
      {"n_test", &C::n_test},
      {"data_seed", &C::data_seed},
      {"n_pathologies", &C::n_pathologies},
      {"n_regions", &C::n_regions},
      {"noise_sigma", &C::noise_sigma},
      {"log_wall_time", &C::log_wall_time},
  };
  return fields;
}

// DataGenConfig nests the world spec, so its fields go through a flat proxy.
struct DataGenFlat {
  std::size_t n_pathologies, n_regions, severity_levels, image_side, n_filler_words, max_filler,
      min_findings, max_findings;
  double noise_sigma, background_amplitude;
  std::size_t n_train, n_val, n_test;
  std::uint64_t base_seed;
  std::size_t patch_size;
};

const std::vector<Field<DataGenFlat>>& datagen_fields() {
  using C = DataGenFlat;
  static const std::vector<Field<C>> fields = {
      {"n_pathologies", &C::n_pathologies},
      {"n_regions", &C::n_regions},
      {"severity_levels", &C::severity_levels},
      {"image_side", &C::image_side},
      {"n_filler_words", &C::n_filler_words},
      {"max_filler", &C::max_filler},
      {"min_findings", &C::min_findings},
      {"max_findings", &C::max_findings},
      {"noise_sigma", &C::noise_sigma},
      {"background_amplitude", &C::background_amplitude},
      {"n_train", &C::n_train},
      {"n_val", &C::n_val},
      {"n_test", &C::n_test},
      {"base_seed", &C::base_seed},
      {"patch_size", &C::patch_size},
  };
  return fields;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("config: bad value '" + value + "' for key '" + key + "'");
  }
  return out;
}

template <class S>
void assign(S& target, const Field<S>& f, const std::string& value) {
  std::visit(
      [&](auto member) {
        using T = std::remove_reference_t<decltype(target.*member)>;
        if constexpr (std::is_same_v<T, bool>) {
          if (value == "true" || value == "1") {
            target.*member = true;
          } else if (value == "false" || value == "0") {
            target.*member = false;
          } else {
            throw ConfigError("config: bad boolean '" + value + "' for key '" + f.key + "'");
          }
        } else {
          target.*member = parse_number<T>(f.key, value);
        }
      },
      f.member);
}

template <class S>
void parse_into(S& target, const std::vector<Field<S>>& fields, const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::set<std::string> seen;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const auto t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const auto key = trim(std::string_view(t).substr(0, eq));
    const auto value = trim(std::string_view(t).substr(eq + 1));
    const Field<S>* match = nullptr;
    for (const auto& f : fields) {
      if (key == f.key) match = &f;
    }
    if (!match) throw ConfigError("config: unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError("config: duplicate key '" + key + "'");
    assign(target, *match, value);
  }
}

template <class S>
std::string serialize(const S& source, const std::vector<Field<S>>& fields) {
  std::ostringstream os;
  for (const auto& f : fields) {
    os << f.key << " = ";
    std::visit(
        [&](auto member) {
          using T = std::remove_cvref_t<decltype(source.*member)>;
          if constexpr (std::is_same_v<T, bool>) {
            os << (source.*member ? "true" : "false");
          } else if constexpr (std::is_same_v<T, double>) {
            char buf[64];
            auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, source.*member);
            os << std::string_view(buf, static_cast<std::size_t>(ptr - buf));
          } else {
            os << source.*member;
          }
        },
        f.member);
    os << '\n';
  }
  return os.str();
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

void TrainConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw ConfigError(std::string("config: ") + name + " must be positive");
  };
  positive(tau1, "tau1");
  positive(tau2, "tau2");
  positive(learning_rate, "learning_rate");
  positive(adam_eps, "adam_eps");
  if (lambda < 0.0 || beta < 0.0) throw ConfigError("config: loss weights must be non-negative");
  if (weight_decay < 0.0 || clip_norm < 0.0) throw ConfigError("config: weight_decay/clip_norm must be >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("config: adam betas must lie in [0, 1)");
  }
  if (batch_size == 0) throw ConfigError("config: batch_size must be positive");
  if (max_epochs == 0) throw ConfigError("config: max_epochs must be positive");
  if (patience > max_epochs) throw ConfigError("config: patience must not exceed max_epochs");
  if (n_queries == 0 || vpoe_layers == 0) throw ConfigError("config: n_queries and vpoe_layers must be positive");
  if (patch_size < 2 || image_side % patch_size != 0 || image_side / patch_size < 2) {
    throw ConfigError("config: patch_size must divide image_side into at least a 2x2 grid of >= 2x2 patches");
  }
  if (n_train == 0 || n_val == 0 || n_test == 0) throw ConfigError("config: every split needs >= 1 pair");
  world().validate();
  const auto enc = encoder();
  enc.validate();
  if (world().max_report_tokens() > max_report_len) {
    throw ConfigError("config: max_report_len " + std::to_string(max_report_len) +
                      " is shorter than the longest generated report (" +
                      std::to_string(world().max_report_tokens()) + ")");
  }
}

WorldSpec TrainConfig::world() const {
  WorldSpec w;
  w.n_pathologies = n_pathologies;
  w.n_regions = n_regions;
  w.image_side = image_side;
  w.noise_sigma = noise_sigma;
  return w;
}

EncoderConfig TrainConfig::encoder() const {
  EncoderConfig e;
  e.image_side = image_side;
  e.embed_patch = embed_patch;
  e.d_model = d_model;
  e.n_layers = n_layers;
  e.n_heads = n_heads;
  e.vocab_size = world().vocab_size();
  e.max_report_len = max_report_len;
  return e;
}

std::string TrainConfig::to_text() const { return serialize(*this, train_fields()); }

TrainConfig parse_config(const std::string& text) {
  TrainConfig cfg;
  parse_into(cfg, train_fields(), text);
  cfg.validate();
  return cfg;
}

TrainConfig load_config(const std::filesystem::path& path) { return parse_config(read_file(path)); }

void save_config(const std::filesystem::path& path, const TrainConfig& cfg) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << cfg.to_text();
}

DataGenConfig parse_datagen_config(const std::string& text) {
  DataGenConfig d;
  const auto& w = d.world;
  DataGenFlat flat{w.n_pathologies, w.n_regions, w.severity_levels, w.image_side, w.n_filler_words,
                   w.max_filler, w.min_findings, w.max_findings, w.noise_sigma, w.background_amplitude,
                   d.n_train, d.n_val, d.n_test, d.base_seed, d.patch_size};
  parse_into(flat, datagen_fields(), text);
  d.world.n_pathologies = flat.n_pathologies;
  d.world.n_regions = flat.n_regions;
  d.world.severity_levels = flat.severity_levels;
  d.world.image_side = flat.image_side;
  d.world.n_filler_words = flat.n_filler_words;
  d.world.max_filler = flat.max_filler;
  d.world.min_findings = flat.min_findings;
  d.world.max_findings = flat.max_findings;
  d.world.noise_sigma = flat.noise_sigma;
  d.world.background_amplitude = flat.background_amplitude;
  d.n_train = flat.n_train;
  d.n_val = flat.n_val;
  d.n_test = flat.n_test;
  d.base_seed = flat.base_seed;
  d.patch_size = flat.patch_size;
  d.world.validate();
  if (d.n_train == 0 || d.n_val == 0 || d.n_test == 0) throw ConfigError("gen-data: every split needs >= 1 pair");
  if (d.patch_size < 2 || d.world.image_side % d.patch_size != 0) {
    throw ConfigError("gen-data: patch_size must divide image_side");
  }
  return d;
}

DataGenConfig load_datagen_config(const std::filesystem::path& path) {
  return parse_datagen_config(read_file(path));
}

}  // namespace place
