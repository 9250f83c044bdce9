#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "place/encoders.hpp"
#include "place/hash.hpp"
#include "place/tensor.hpp"

namespace place {

// Generator settings for the synthetic image-report world. Regions are image
// quadrants; each pathology is a fixed 8x8 glyph; severity sets its intensity.
struct WorldSpec {
  std::size_t n_pathologies = 4;
  std::size_t n_regions = 4;
  std::size_t severity_levels = 3;
  std::size_t image_side = 32;
  std::size_t n_filler_words = 6;
  std::size_t max_filler = 3;
  std::size_t min_findings = 1;
  std::size_t max_findings = 0;  // 0 means n_regions
  double noise_sigma = 0.05;
  double background_amplitude = 0.15;

  void validate() const;
  std::size_t findings_cap() const { return max_findings == 0 ? n_regions : max_findings; }

  // Vocabulary: 0 = CLS, then region, pathology, severity and filler words.
  std::size_t region_token(std::size_t r) const { return 1 + r; }
  std::size_t pathology_token(std::size_t p) const { return 1 + n_regions + p; }
  std::size_t severity_token(std::size_t s) const { return 1 + n_regions + n_pathologies + s; }
  std::size_t filler_token(std::size_t f) const {
    return 1 + n_regions + n_pathologies + severity_levels + f;
  }
  std::size_t vocab_size() const { return filler_token(n_filler_words); }
  // Longest possible report, CLS included.
  std::size_t max_report_tokens() const { return 1 + findings_cap() * (3 + max_filler); }
  double severity_intensity(std::size_t s) const;

  std::string canonical() const;
  Digest hash() const { return sha256(canonical()); }
};

// 8x8 binary template for a pathology class (cross, disc, bar, ring).
const std::array<std::array<std::uint8_t, 8>, 8>& glyph_template(std::size_t pathology);

struct Finding {
  std::uint8_t region = 0;
  std::uint8_t pathology = 0;
  std::uint8_t severity = 0;
  bool operator==(const Finding&) const = default;
};

struct SyntheticPair {
  std::uint64_t seed = 0;
  Tensor image;                     // [side x side], values in [0, 1]
  std::vector<std::size_t> tokens;  // CLS first
  std::vector<Span> spans;          // one per sentence
  std::vector<Finding> labels;      // labels[k] is described by spans[k]
};

SyntheticPair generate_pair(std::uint64_t seed, const WorldSpec& spec);
// Single-glyph pair with a fixed pathology class; region and severity are drawn.
SyntheticPair generate_single_finding(std::uint64_t seed, const WorldSpec& spec, std::size_t pathology);

// Reads findings back out of a report's tokens.
std::vector<Finding> decode_report(const std::vector<std::size_t>& tokens, const std::vector<Span>& spans,
                                   const WorldSpec& spec);

using Dataset = std::vector<SyntheticPair>;

struct DataSplits {
  Dataset train, val, test;
};

// Split i of each kind uses seed base_seed + offset + i, offsets disjoint.
DataSplits make_split(std::size_t n_train, std::size_t n_val, std::size_t n_test, std::uint64_t base_seed,
                      const WorldSpec& spec);

// Balanced single-finding corpus: pair i carries pathology i mod n_pathologies.
Dataset make_retrieval_corpus(std::size_t n, std::uint64_t base_seed, const WorldSpec& spec);

// Split file: magic "PLDS", u16 version, u64 count, 32-byte spec hash, then
// u32-length-prefixed records (u64 seed, u32 side, float32 pixels, u32 n +
// u16 token ids, u32 n + u32 begin/end span pairs, u32 n + u8 region/pathology/severity).
void write_dataset(const std::filesystem::path& path, const Dataset& data, const WorldSpec& spec);
Dataset read_dataset(const std::filesystem::path& path, const WorldSpec& spec);

}  // namespace place
