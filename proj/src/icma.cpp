#include "place/icma.hpp"

#include "place/errors.hpp"

namespace place {

ProjectionHead make_projection_head(ParamStore& store, const std::string& name, std::size_t in,
                                    std::size_t latent, Initializer& init) {
  return {make_linear(store, name + ".fc1", in, latent, init),
          make_linear(store, name + ".fc2", latent, latent, init)};
}

Tensor project(const Tensor& global_rep, const ProjectionHead& head, bool l2_normalize) {
  const std::size_t in = head.fc1.weight.dim(0);
  const bool single = global_rep.rank() == 1;
  if ((single && global_rep.dim(0) != in) || (!single && (global_rep.rank() != 2 || global_rep.dim(1) != in))) {
    throw DimensionError("project: input " + shape_str(global_rep.shape()) + " does not match head width " +
                         std::to_string(in));
  }
  const Tensor x = single ? reshape(global_rep, {1, in}) : global_rep;
  Tensor y = head.fc2(relu(head.fc1(x)));
  if (l2_normalize) y = l2_normalize_rows(y, 1e-12);
  return single ? reshape(y, {head.out_width()}) : y;
}

Tensor diagonal_nll(const Tensor& logits) {
  return scale(mean(diag(log_softmax(logits, 1))), -1.0);
}

Tensor weighted_diagonal_nll(const Tensor& logits, const Tensor& row_weights) {
  return scale(mean(mul(diag(log_softmax(logits, 1)), row_weights)), -1.0);
}

Tensor icma_loss(const Tensor& img_proj, const Tensor& txt_proj, double tau1) {
  if (!(tau1 > 0.0)) throw ConfigError("icma_loss: tau1 must be positive");
  if (img_proj.rank() != 2 || img_proj.shape() != txt_proj.shape()) {
    throw DimensionError("icma_loss: projections must share a [B x D] shape, got " +
                         shape_str(img_proj.shape()) + " and " + shape_str(txt_proj.shape()));
  }
  // logits[i, j] = img_i . txt_j / tau; rows give I<-R, columns give R<-I.
  const Tensor logits = scale(matmul(img_proj, transpose(txt_proj)), 1.0 / tau1);
  const Tensor image_to_report = diagonal_nll(logits);
  const Tensor report_to_image = diagonal_nll(transpose(logits));
  return scale(add(image_to_report, report_to_image), 0.5);
}

}  // namespace place
