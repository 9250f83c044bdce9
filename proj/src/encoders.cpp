#include "place/encoders.hpp"

#include "place/cce.hpp"
#include "place/errors.hpp"

namespace place {

void EncoderConfig::validate() const {
  if (embed_patch == 0 || image_side % embed_patch != 0) {
    throw ConfigError("encoder: image_side must be divisible by embed_patch");
  }
  if (n_heads == 0 || d_model % n_heads != 0) {
    throw ConfigError("encoder: d_model must be divisible by n_heads");
  }
  if (d_model == 0 || vocab_size < 2 || max_report_len < 2 || mlp_ratio == 0) {
    throw ConfigError("encoder: degenerate sizes");
  }
}

namespace {

std::vector<TransformerBlock> make_stack(const EncoderConfig& cfg, ParamStore& store,
                                         Initializer& init, const std::string& prefix) {
  std::vector<TransformerBlock> blocks;
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    blocks.push_back(make_block(store, prefix + ".block" + std::to_string(l), cfg.d_model,
                                cfg.n_heads, cfg.mlp_ratio * cfg.d_model, init));
  }
  return blocks;
}

}  // namespace

ImageEncoder make_image_encoder(const EncoderConfig& cfg, ParamStore& store, Initializer& init,
                                const std::string& prefix) {
  cfg.validate();
  ImageEncoder enc;
  enc.cfg = cfg;
  enc.patch_embed =
      make_linear(store, prefix + ".patch_embed", cfg.embed_patch * cfg.embed_patch, cfg.d_model, init);
  enc.position = store.add(prefix + ".position", init.normal({cfg.visual_tokens(), cfg.d_model}, 0.02));
  enc.blocks = make_stack(cfg, store, init, prefix);
  return enc;
}

TextEncoder make_text_encoder(const EncoderConfig& cfg, ParamStore& store, Initializer& init,
                              const std::string& prefix) {
  cfg.validate();
  TextEncoder enc;
  enc.cfg = cfg;
  enc.token_embed = store.add(prefix + ".token_embed", init.normal({cfg.vocab_size, cfg.d_model}, 1.0));
  enc.position = store.add(prefix + ".position", init.normal({cfg.max_report_len, cfg.d_model}, 0.02));
  enc.blocks = make_stack(cfg, store, init, prefix);
  return enc;
}

EncodedImage encode_image(const ImageEncoder& enc, const Tensor& pixels) {
  const auto& cfg = enc.cfg;
  if (pixels.rank() != 2 || pixels.dim(0) != cfg.image_side || pixels.dim(1) != cfg.image_side) {
    throw DimensionError("encode_image: expected " + std::to_string(cfg.image_side) + "x" +
                         std::to_string(cfg.image_side) + " image, got " + shape_str(pixels.shape()));
  }
  const auto grid = split_patches(pixels, cfg.embed_patch);
  Tensor x = add(enc.patch_embed(grid.patches), enc.position);
  for (const auto& b : enc.blocks) x = run_block(b, x).out;
  return {x, mean_pool(x)};
}

void validate_spans(std::span<const Span> spans, std::size_t n_tokens) {
  if (spans.empty()) throw ContractError("report: no sentence spans");
  std::size_t expect = 1;
  for (const auto& s : spans) {
    if (s.end <= s.begin) throw ContractError("report: empty sentence span");
    if (s.end > n_tokens) {
      throw ContractError("report: span [" + std::to_string(s.begin) + ", " + std::to_string(s.end) +
                          ") exceeds " + std::to_string(n_tokens) + " tokens");
    }
    if (s.begin != expect) throw ContractError("report: spans must tile tokens 1..n-1 in order");
    expect = s.end;
  }
  if (expect != n_tokens) throw ContractError("report: spans do not cover every content token");
}

EncodedReport encode_report(const TextEncoder& enc, std::span<const std::size_t> token_ids,
                            std::span<const Span> spans) {
  const auto& cfg = enc.cfg;
  const std::size_t n = token_ids.size();
  if (n < 2) throw ContractError("encode_report: at least one content token after CLS is required");
  if (n > cfg.max_report_len) {
    throw ContractError("encode_report: report of " + std::to_string(n) + " tokens exceeds max_report_len");
  }
  if (token_ids[0] != kClsTokenId) throw ContractError("encode_report: position 0 must hold the CLS id");
  for (auto id : token_ids) {
    if (id >= cfg.vocab_size) throw ContractError("encode_report: token id " + std::to_string(id) + " >= vocab");
  }
  validate_spans(spans, n);

  Tensor x = add(gather_rows(enc.token_embed, token_ids), slice_rows(enc.position, 0, n));
  Tensor cls_attn;
  for (std::size_t l = 0; l < enc.blocks.size(); ++l) {
    const bool last = l + 1 == enc.blocks.size();
    auto r = run_block(enc.blocks[l], x, last);
    x = r.out;
    if (last) cls_attn = row(r.attn_weights, 0);
  }
  if (!cls_attn.defined()) {
    // No transformer layers: CLS attends uniformly.
    cls_attn = Tensor::full({n}, 1.0 / static_cast<double>(n));
  }
  EncodedReport out;
  out.local = x;
  out.global = row(x, 0);
  out.cls_attention = cls_attn;
  out.sentence_spans.assign(spans.begin(), spans.end());
  return out;
}

}  // namespace place
