#include "place/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "place/binary_io.hpp"
#include "place/errors.hpp"

namespace place {

namespace {

using Glyph = std::array<std::array<std::uint8_t, 8>, 8>;

// clang-format off
constexpr Glyph kCross = {{
    {0,0,0,1,1,0,0,0},
    {0,0,0,1,1,0,0,0},
    {0,0,0,1,1,0,0,0},
    {1,1,1,1,1,1,1,1},
    {1,1,1,1,1,1,1,1},
    {0,0,0,1,1,0,0,0},
    {0,0,0,1,1,0,0,0},
    {0,0,0,1,1,0,0,0}}};
constexpr Glyph kDisc = {{
    {0,0,1,1,1,1,0,0},
    {0,1,1,1,1,1,1,0},
    {1,1,1,1,1,1,1,1},
    {1,1,1,1,1,1,1,1},
    {1,1,1,1,1,1,1,1},
    {1,1,1,1,1,1,1,1},
    {0,1,1,1,1,1,1,0},
    {0,0,1,1,1,1,0,0}}};
constexpr Glyph kBar = {{
    {1,1,0,0,0,0,0,0},
    {1,1,1,0,0,0,0,0},
    {0,1,1,1,0,0,0,0},
    {0,0,1,1,1,0,0,0},
    {0,0,0,1,1,1,0,0},
    {0,0,0,0,1,1,1,0},
    {0,0,0,0,0,1,1,1},
    {0,0,0,0,0,0,1,1}}};
constexpr Glyph kRing = {{
    {0,0,1,1,1,1,0,0},
    {0,1,0,0,0,0,1,0},
    {1,0,0,0,0,0,0,1},
    {1,0,0,0,0,0,0,1},
    {1,0,0,0,0,0,0,1},
    {1,0,0,0,0,0,0,1},
    {0,1,0,0,0,0,1,0},
    {0,0,1,1,1,1,0,0}}};
// clang-format on

constexpr std::array<const Glyph*, 4> kGlyphs = {&kCross, &kDisc, &kBar, &kRing};
constexpr std::size_t kGlyphSide = 8;

std::size_t draw(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Draws everything after the findings themselves and renders the pair.
SyntheticPair render(std::uint64_t seed, std::mt19937_64& rng, std::vector<Finding> findings,
                     const WorldSpec& spec) {
  const std::size_t side = spec.image_side;
  const std::size_t half = side / 2;
  const std::size_t offset = (half - kGlyphSide) / 2;

  // Low-frequency wave spanning the whole image, so patches co-vary. It is a
  // function of the label set alone: pairs with equal labels share it.
  std::vector<Finding> by_region = findings;
  std::sort(by_region.begin(), by_region.end(), [](const Finding& a, const Finding& b) { return a.region < b.region; });
  std::uint64_t key = 0x9e3779b97f4a7c15ull;
  for (const auto& f : by_region) key = key * 131 + 1 + f.region * 64u + f.pathology * 8u + f.severity;
  std::mt19937_64 wave(key);
  const std::size_t fx = draw(wave, 0, 2);
  const std::size_t fy = draw(wave, fx == 0 ? 1 : 0, 2);
  const double phase = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(wave);

  std::shuffle(findings.begin(), findings.end(), rng);

  SyntheticPair pair;
  pair.seed = seed;
  pair.tokens.push_back(kClsTokenId);
  for (const auto& f : findings) {
    Span s;
    s.begin = pair.tokens.size();
    pair.tokens.push_back(spec.region_token(f.region));
    pair.tokens.push_back(spec.pathology_token(f.pathology));
    pair.tokens.push_back(spec.severity_token(f.severity));
    const std::size_t n_fill = draw(rng, 0, spec.max_filler);
    for (std::size_t i = 0; i < n_fill; ++i) {
      pair.tokens.push_back(spec.filler_token(draw(rng, 0, spec.n_filler_words - 1)));
    }
    s.end = pair.tokens.size();
    pair.spans.push_back(s);
  }
  pair.labels = findings;

  std::vector<double> px(side * side);
  std::vector<std::uint8_t> covered(side * side, 0);
  for (const auto& f : findings) {
    const std::size_t r0 = (f.region / 2) * half + offset;
    const std::size_t c0 = (f.region % 2) * half + offset;
    const auto& g = *kGlyphs[f.pathology];
    const double intensity = spec.severity_intensity(f.severity);
    for (std::size_t r = 0; r < kGlyphSide; ++r)
      for (std::size_t c = 0; c < kGlyphSide; ++c)
        if (g[r][c]) {
          px[(r0 + r) * side + c0 + c] = intensity;
          covered[(r0 + r) * side + c0 + c] = 1;
        }
  }
  std::normal_distribution<double> noise(0.0, 1.0);
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) {
      const std::size_t i = y * side + x;
      if (!covered[i]) {
        const double arg = two_pi * (static_cast<double>(fx * x + fy * y) / static_cast<double>(side)) + phase;
        px[i] = spec.background_amplitude * (0.5 + 0.5 * std::sin(arg));
      }
      // Always draw, so the noise stream does not depend on sigma.
      const double n = noise(rng);
      // Rounded to float32, the dataset file precision, so files round-trip exactly.
      px[i] = static_cast<float>(std::clamp(px[i] + spec.noise_sigma * n, 0.0, 1.0));
    }
  }
  pair.image = Tensor::from({side, side}, std::move(px));
  return pair;
}

}  // namespace

const Glyph& glyph_template(std::size_t pathology) {
  if (pathology >= kGlyphs.size()) throw ContractError("glyph_template: unknown pathology");
  return *kGlyphs[pathology];
}

void WorldSpec::validate() const {
  if (n_pathologies == 0 || n_pathologies > kGlyphs.size()) {
    throw ConfigError("world: n_pathologies must be in [1, 4]");
  }
  if (n_regions == 0 || n_regions > 4) throw ConfigError("world: n_regions must be in [1, 4]");
  if (severity_levels == 0) throw ConfigError("world: severity_levels must be positive");
  if (image_side % 2 != 0 || image_side / 2 < kGlyphSide) {
    throw ConfigError("world: image_side must be even and at least 16");
  }
  if (n_filler_words == 0) throw ConfigError("world: need at least one filler word");
  if (min_findings == 0 || min_findings > findings_cap() || findings_cap() > n_regions) {
    throw ConfigError("world: need 1 <= min_findings <= max_findings <= n_regions");
  }
  if (noise_sigma < 0.0 || background_amplitude < 0.0) throw ConfigError("world: negative noise/background");
}

double WorldSpec::severity_intensity(std::size_t s) const {
  if (severity_levels == 1) return 1.0;
  return 0.4 + 0.6 * static_cast<double>(s) / static_cast<double>(severity_levels - 1);
}

std::string WorldSpec::canonical() const {
  std::ostringstream os;
  os.precision(17);
  os << "n_pathologies=" << n_pathologies << "\nn_regions=" << n_regions
     << "\nseverity_levels=" << severity_levels << "\nimage_side=" << image_side
     << "\nn_filler_words=" << n_filler_words << "\nmax_filler=" << max_filler
     << "\nmin_findings=" << min_findings << "\nmax_findings=" << max_findings
     << "\nnoise_sigma=" << noise_sigma << "\nbackground_amplitude=" << background_amplitude << "\n";
  return os.str();
}

SyntheticPair generate_pair(std::uint64_t seed, const WorldSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(seed);
  const std::size_t n = draw(rng, spec.min_findings, spec.findings_cap());
  std::vector<std::size_t> regions(spec.n_regions);
  for (std::size_t r = 0; r < regions.size(); ++r) regions[r] = r;
  std::shuffle(regions.begin(), regions.end(), rng);
  regions.resize(n);
  std::sort(regions.begin(), regions.end());
  std::vector<Finding> findings;
  for (auto r : regions) {
    Finding f;
    f.region = static_cast<std::uint8_t>(r);
    f.pathology = static_cast<std::uint8_t>(draw(rng, 0, spec.n_pathologies - 1));
    f.severity = static_cast<std::uint8_t>(draw(rng, 0, spec.severity_levels - 1));
    findings.push_back(f);
  }
  return render(seed, rng, std::move(findings), spec);
}

SyntheticPair generate_single_finding(std::uint64_t seed, const WorldSpec& spec, std::size_t pathology) {
  spec.validate();
  if (pathology >= spec.n_pathologies) throw ContractError("generate_single_finding: unknown pathology");
  std::mt19937_64 rng(seed);
  Finding f;
  f.region = static_cast<std::uint8_t>(draw(rng, 0, spec.n_regions - 1));
  f.pathology = static_cast<std::uint8_t>(pathology);
  f.severity = static_cast<std::uint8_t>(draw(rng, 0, spec.severity_levels - 1));
  return render(seed, rng, {f}, spec);
}

std::vector<Finding> decode_report(const std::vector<std::size_t>& tokens, const std::vector<Span>& spans,
                                   const WorldSpec& spec) {
  std::vector<Finding> out;
  for (const auto& s : spans) {
    Finding f;
    bool have_region = false, have_path = false, have_sev = false;
    for (std::size_t i = s.begin; i < s.end && i < tokens.size(); ++i) {
      const auto t = tokens[i];
      if (t >= spec.region_token(0) && t < spec.pathology_token(0)) {
        f.region = static_cast<std::uint8_t>(t - spec.region_token(0));
        have_region = true;
      } else if (t >= spec.pathology_token(0) && t < spec.severity_token(0)) {
        f.pathology = static_cast<std::uint8_t>(t - spec.pathology_token(0));
        have_path = true;
      } else if (t >= spec.severity_token(0) && t < spec.filler_token(0)) {
        f.severity = static_cast<std::uint8_t>(t - spec.severity_token(0));
        have_sev = true;
      }
    }
    if (!(have_region && have_path && have_sev)) throw ContractError("decode_report: incomplete sentence");
    out.push_back(f);
  }
  return out;
}

DataSplits make_split(std::size_t n_train, std::size_t n_val, std::size_t n_test, std::uint64_t base_seed,
                      const WorldSpec& spec) {
  if (n_train == 0 || n_val == 0 || n_test == 0) throw ConfigError("make_split: every split needs >= 1 pair");
  DataSplits s;
  for (std::size_t i = 0; i < n_train; ++i) s.train.push_back(generate_pair(base_seed + i, spec));
  for (std::size_t i = 0; i < n_val; ++i) s.val.push_back(generate_pair(base_seed + n_train + i, spec));
  for (std::size_t i = 0; i < n_test; ++i) s.test.push_back(generate_pair(base_seed + n_train + n_val + i, spec));
  return s;
}

Dataset make_retrieval_corpus(std::size_t n, std::uint64_t base_seed, const WorldSpec& spec) {
  Dataset d;
  d.reserve(n);
  for (std::size_t i = 0; i < n; ++i) d.push_back(generate_single_finding(base_seed + i, spec, i % spec.n_pathologies));
  return d;
}

namespace {
constexpr std::string_view kDatasetMagic = "PLDS";
constexpr std::uint16_t kDatasetVersion = 1;
}  // namespace

void write_dataset(const std::filesystem::path& path, const Dataset& data, const WorldSpec& spec) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  io::put_bytes(os, kDatasetMagic);
  io::put<std::uint16_t>(os, kDatasetVersion);
  io::put<std::uint64_t>(os, data.size());
  const auto h = spec.hash();
  io::put_bytes(os, std::string_view(reinterpret_cast<const char*>(h.data()), h.size()));
  for (const auto& p : data) {
    std::ostringstream rec;
    io::put<std::uint64_t>(rec, p.seed);
    io::put<std::uint32_t>(rec, static_cast<std::uint32_t>(p.image.dim(0)));
    for (double v : p.image.data()) io::put<float>(rec, static_cast<float>(v));
    io::put<std::uint32_t>(rec, static_cast<std::uint32_t>(p.tokens.size()));
    for (auto t : p.tokens) io::put<std::uint16_t>(rec, static_cast<std::uint16_t>(t));
    io::put<std::uint32_t>(rec, static_cast<std::uint32_t>(p.spans.size()));
    for (const auto& s : p.spans) {
      io::put<std::uint32_t>(rec, static_cast<std::uint32_t>(s.begin));
      io::put<std::uint32_t>(rec, static_cast<std::uint32_t>(s.end));
    }
    io::put<std::uint32_t>(rec, static_cast<std::uint32_t>(p.labels.size()));
    for (const auto& f : p.labels) {
      io::put<std::uint8_t>(rec, f.region);
      io::put<std::uint8_t>(rec, f.pathology);
      io::put<std::uint8_t>(rec, f.severity);
    }
    const auto bytes = rec.str();
    io::put<std::uint32_t>(os, static_cast<std::uint32_t>(bytes.size()));
    io::put_bytes(os, bytes);
  }
  if (!os) throw IoError("write failed: " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path, const WorldSpec& spec) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  io::expect_magic(is, kDatasetMagic, "dataset");
  if (io::get<std::uint16_t>(is) != kDatasetVersion) throw IoError("dataset: unsupported version");
  const auto count = io::get<std::uint64_t>(is);
  const auto stored = io::get_bytes(is, 32);
  const auto h = spec.hash();
  if (stored != std::string_view(reinterpret_cast<const char*>(h.data()), h.size())) {
    throw IoError("dataset: world spec hash mismatch");
  }
  Dataset out;
  out.reserve(count);
  for (std::uint64_t r = 0; r < count; ++r) {
    const auto len = io::get<std::uint32_t>(is);
    std::istringstream rec(io::get_bytes(is, len));
    SyntheticPair p;
    p.seed = io::get<std::uint64_t>(rec);
    const auto side = io::get<std::uint32_t>(rec);
    std::vector<double> px(static_cast<std::size_t>(side) * side);
    for (auto& v : px) v = static_cast<double>(io::get<float>(rec));
    p.image = Tensor::from({side, side}, std::move(px));
    p.tokens.resize(io::get<std::uint32_t>(rec));
    for (auto& t : p.tokens) t = io::get<std::uint16_t>(rec);
    p.spans.resize(io::get<std::uint32_t>(rec));
    for (auto& s : p.spans) {
      s.begin = io::get<std::uint32_t>(rec);
      s.end = io::get<std::uint32_t>(rec);
    }
    p.labels.resize(io::get<std::uint32_t>(rec));
    for (auto& f : p.labels) {
      f.region = io::get<std::uint8_t>(rec);
      f.pathology = io::get<std::uint8_t>(rec);
      f.severity = io::get<std::uint8_t>(rec);
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace place
