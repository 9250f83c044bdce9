#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "place/nn.hpp"
#include "place/tensor.hpp"

namespace place {

inline constexpr std::size_t kClsTokenId = 0;

struct EncoderConfig {
  std::size_t image_side = 32;
  std::size_t embed_patch = 8;
  std::size_t d_model = 32;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t vocab_size = 32;
  std::size_t max_report_len = 32;
  std::size_t mlp_ratio = 2;

  std::size_t visual_tokens() const {
    const auto g = image_side / embed_patch;
    return g * g;
  }
  void validate() const;
};

// Half-open token range [begin, end) of one sentence.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool operator==(const Span&) const = default;
};

struct EncodedImage {
  Tensor local;   // [n_vis x D]
  Tensor global;  // [D], mean of local rows
};

struct EncodedReport {
  Tensor local;          // [n_tok x D], row 0 is CLS
  Tensor global;         // [D], the CLS row
  Tensor cls_attention;  // [n_tok], last-layer CLS attention row averaged over heads
  std::vector<Span> sentence_spans;
};

struct ImageEncoder {
  EncoderConfig cfg;
  Linear patch_embed;  // embed_patch^2 -> D
  Tensor position;     // [n_vis x D]
  std::vector<TransformerBlock> blocks;
};

struct TextEncoder {
  EncoderConfig cfg;
  Tensor token_embed;  // [vocab x D]
  Tensor position;     // [max_len x D]
  std::vector<TransformerBlock> blocks;
};

ImageEncoder make_image_encoder(const EncoderConfig& cfg, ParamStore& store, Initializer& init,
                                const std::string& prefix = "image");
TextEncoder make_text_encoder(const EncoderConfig& cfg, ParamStore& store, Initializer& init,
                              const std::string& prefix = "text");

// pixels: [image_side x image_side] grayscale in [0, 1].
EncodedImage encode_image(const ImageEncoder& enc, const Tensor& pixels);

// token_ids[0] must be the CLS id; spans must tile positions 1..n-1 in order.
EncodedReport encode_report(const TextEncoder& enc, std::span<const std::size_t> token_ids,
                            std::span<const Span> spans);

// Checks the span table against a report of `n_tokens` tokens (CLS included).
void validate_spans(std::span<const Span> spans, std::size_t n_tokens);

}  // namespace place
