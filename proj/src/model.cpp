#include "place/model.hpp"

#include "place/errors.hpp"

namespace place {

std::unique_ptr<PlaceModel> build_model(const TrainConfig& cfg) {
  cfg.validate();
  auto m = std::make_unique<PlaceModel>();
  m->cfg = cfg;
  Initializer init(cfg.seed);
  const auto enc = cfg.encoder();
  m->image = make_image_encoder(enc, m->params, init, "image");
  m->text = make_text_encoder(enc, m->params, init, "text");
  m->image_proj = make_projection_head(m->params, "image_proj", cfg.d_model, cfg.d_model, init);
  m->text_proj = make_projection_head(m->params, "text_proj", cfg.d_model, cfg.d_model, init);
  m->vpoe = make_vpoe(m->params, cfg.d_model, cfg.n_queries, cfg.vpoe_layers, cfg.n_heads, init, "vpoe");
  const std::size_t g = cfg.image_side / cfg.patch_size;
  m->cce = make_cce_head(m->params, cfg.d_model, g * g, cfg.cce_full_matrix, init, "cce.head");
  return m;
}

PreparedSplit prepare_split(Dataset pairs, const TrainConfig& cfg) {
  PreparedSplit s;
  s.targets.reserve(pairs.size());
  for (const auto& p : pairs) s.targets.push_back(covariance_target(p.image, cfg.patch_size, cfg.cce_full_matrix));
  s.pairs = std::move(pairs);
  return s;
}

SampleForward forward_sample(const PlaceModel& model, const SyntheticPair& pair) {
  SampleForward f;
  f.image = encode_image(model.image, pair.image);
  f.report = encode_report(model.text, pair.tokens, pair.spans);
  f.bundle = build_bundle(model.vpoe, f.image.local, f.report);
  return f;
}

LossTerms total_loss(const PlaceModel& model, const PreparedSplit& split, std::span<const std::size_t> batch) {
  if (batch.empty()) throw ContractError("total_loss: empty batch");
  const auto& cfg = model.cfg;
  std::vector<Tensor> img_globals, txt_globals, targets;
  std::vector<PathologyBundle> bundles;
  for (auto idx : batch) {
    if (idx >= split.size()) throw ContractError("total_loss: sample index out of range");
    auto f = forward_sample(model, split.pairs[idx]);
    img_globals.push_back(f.image.global);
    txt_globals.push_back(f.report.global);
    targets.push_back(split.targets[idx]);
    bundles.push_back(std::move(f.bundle));
  }
  const Tensor u_gr = stack_rows(txt_globals);
  LossTerms t;
  t.icma = icma_loss(project(stack_rows(img_globals), model.image_proj, cfg.l2_normalize),
                     project(u_gr, model.text_proj, cfg.l2_normalize), cfg.tau1);
  t.pcma = pcma_loss(bundles, cfg.tau2, cfg.l2_normalize);
  t.cce = cce_loss(stack_rows(targets), predict_covariance(u_gr, model.cce));
  const std::array<Tensor, 3> terms{t.icma, t.pcma, t.cce};
  const std::array<double, 3> weights{1.0, cfg.lambda, cfg.beta};
  t.total = linear_combination(terms, weights);
  return t;
}

}  // namespace place
