#pragma once

#include <span>
#include <vector>

#include "place/encoders.hpp"
#include "place/nn.hpp"
#include "place/tensor.hpp"

namespace place {

// One extractor layer: self-attention over the queries, then cross-attention
// from the queries onto the local visual tokens. Pre-norm, residual.
struct VpoeLayer {
  LayerNorm self_norm;
  MultiHeadAttention self_attn;
  LayerNorm cross_norm;
  LayerNorm memory_norm;
  MultiHeadAttention cross_attn;
};

struct Vpoe {
  Tensor queries;  // [N_q x D], learnable
  std::vector<VpoeLayer> layers;
  std::size_t n_queries() const { return queries.dim(0); }
};

Vpoe make_vpoe(ParamStore& store, std::size_t width, std::size_t n_queries, std::size_t n_layers,
               std::size_t heads, Initializer& init, const std::string& prefix = "vpoe");

// Sentence representations: row k is the mean of the token rows in span k.
Tensor extract_tpor(const EncodedReport& report);

// Cross-attention sublayer on its own: queries attend to LN(memory).
Tensor vpoe_cross_attention(const VpoeLayer& layer, const Tensor& queries, const Tensor& memory);
// Runs every layer starting from the learned queries; returns the last output [N_q x D].
Tensor vpoe_forward(const Vpoe& vpoe, const Tensor& visual_local);

struct CrossModalAttention {
  Tensor attn;      // [N_q x N_s], rows sum to 1
  Tensor attended;  // [N_q x D]
};

// attn = softmax_k(vpor_j . tpor_k / sqrt(D)); attended_j = sum_k attn[j,k] tpor_k.
CrossModalAttention cross_modal_attend(const Tensor& vpor, const Tensor& tpor);

// Per-sentence share of the CLS attention mass, normalized to sum to 1.
Tensor sentence_weights(const EncodedReport& report);

// Sentence weights carried onto query positions through the matching
// attention: omega_j = sum_k attn[j,k] * N_s * w_k. Uniform sentence weights
// give omega = 1.
Tensor query_weights(const Tensor& attn, const Tensor& sentence_w);

struct PathologyBundle {
  Tensor tpor;      // [N_s x D]
  Tensor vpor;      // [N_q x D]
  Tensor attended;  // [N_q x D]
  Tensor attn;      // [N_q x N_s]
  Tensor weights;   // [N_s]
};

PathologyBundle build_bundle(const Vpoe& vpoe, const Tensor& visual_local, const EncodedReport& report);

// Within-sample symmetric InfoNCE over query positions. The C<-O direction
// scales each position's term by query_w[j].
Tensor pcma_sample_loss(const Tensor& vpor, const Tensor& attended, const Tensor& query_w, double tau2,
                        bool l2_normalize = true);

// Batch mean of pcma_sample_loss with weights from each bundle.
Tensor pcma_loss(std::span<const PathologyBundle> bundles, double tau2, bool l2_normalize = true);

}  // namespace place
