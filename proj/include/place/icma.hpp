#pragma once

#include "place/nn.hpp"
#include "place/tensor.hpp"

namespace place {

// Two-layer MLP D -> D_latent with a ReLU in between.
struct ProjectionHead {
  Linear fc1;
  Linear fc2;
  std::size_t out_width() const { return fc2.weight.dim(1); }
};

ProjectionHead make_projection_head(ParamStore& store, const std::string& name, std::size_t in,
                                    std::size_t latent, Initializer& init);

// global_rep: [D] or [B x D]. Output rows are L2-normalized (norm floored at
// 1e-12) unless l2_normalize is false.
Tensor project(const Tensor& global_rep, const ProjectionHead& head, bool l2_normalize = true);

// Symmetric InfoNCE over a batch of matched pairs, both directions weighted 1/2.
// img_proj, txt_proj: [B x D_latent]; row i of each forms the positive pair.
Tensor icma_loss(const Tensor& img_proj, const Tensor& txt_proj, double tau1);

// -(1/n) sum_i log softmax(logits[i, :])[i]
Tensor diagonal_nll(const Tensor& logits);
// Same, with row i's term scaled by row_weights[i].
Tensor weighted_diagonal_nll(const Tensor& logits, const Tensor& row_weights);

}  // namespace place
