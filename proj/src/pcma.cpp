#include "place/pcma.hpp"

#include <cmath>

#include "place/errors.hpp"
#include "place/icma.hpp"

namespace place {

Vpoe make_vpoe(ParamStore& store, std::size_t width, std::size_t n_queries, std::size_t n_layers,
               std::size_t heads, Initializer& init, const std::string& prefix) {
  if (n_queries == 0) throw ConfigError("vpoe: need at least one query token");
  if (n_layers == 0) throw ConfigError("vpoe: need at least one layer");
  Vpoe v;
  v.queries = store.add(prefix + ".queries", init.normal({n_queries, width}, 1.0));
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto p = prefix + ".layer" + std::to_string(l);
    VpoeLayer layer;
    layer.self_norm = make_layer_norm(store, p + ".self_norm", width);
    layer.self_attn = make_attention(store, p + ".self_attn", width, heads, init);
    layer.cross_norm = make_layer_norm(store, p + ".cross_norm", width);
    layer.memory_norm = make_layer_norm(store, p + ".memory_norm", width);
    layer.cross_attn = make_attention(store, p + ".cross_attn", width, heads, init);
    v.layers.push_back(std::move(layer));
  }
  return v;
}

Tensor extract_tpor(const EncodedReport& report) {
  const auto& spans = report.sentence_spans;
  if (spans.empty()) throw ContractError("extract_tpor: report has no sentences");
  std::vector<Tensor> rows;
  rows.reserve(spans.size());
  for (const auto& s : spans) {
    if (s.end <= s.begin) throw ContractError("extract_tpor: empty sentence span");
    if (s.end > report.local.dim(0)) throw ContractError("extract_tpor: span exceeds report length");
    rows.push_back(mean_pool_range(report.local, s.begin, s.end));
  }
  return stack_rows(rows);
}

Tensor vpoe_cross_attention(const VpoeLayer& layer, const Tensor& queries, const Tensor& memory) {
  return attend(layer.cross_attn, layer.cross_norm(queries), layer.memory_norm(memory)).out;
}

Tensor vpoe_forward(const Vpoe& vpoe, const Tensor& visual_local) {
  if (visual_local.rank() != 2 || visual_local.dim(1) != vpoe.queries.dim(1)) {
    throw DimensionError("vpoe_forward: visual tokens must be [n x " + std::to_string(vpoe.queries.dim(1)) + "]");
  }
  Tensor q = vpoe.queries;
  for (const auto& layer : vpoe.layers) {
    const Tensor h = layer.self_norm(q);
    q = add(q, attend(layer.self_attn, h, h).out);
    q = add(q, vpoe_cross_attention(layer, q, visual_local));
  }
  return q;
}

CrossModalAttention cross_modal_attend(const Tensor& vpor, const Tensor& tpor) {
  if (vpor.rank() != 2 || tpor.rank() != 2 || vpor.dim(1) != tpor.dim(1)) {
    throw DimensionError("cross_modal_attend: V-POR " + shape_str(vpor.shape()) + " and T-POR " +
                         shape_str(tpor.shape()) + " must share width");
  }
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(vpor.dim(1)));
  const Tensor attn = softmax(scale(matmul(vpor, transpose(tpor)), inv_sqrt), 1);
  return {attn, matmul(attn, tpor)};
}

Tensor sentence_weights(const EncodedReport& report) {
  const auto& cls = report.cls_attention;
  const std::size_t n = cls.numel(), ns = report.sentence_spans.size();
  if (ns == 0) throw ContractError("sentence_weights: report has no sentences");
  // Span-membership matrix [n x N_s]: w = cls . M sums attention per sentence.
  std::vector<double> member(n * ns, 0.0);
  double total = 0.0;
  for (std::size_t k = 0; k < ns; ++k) {
    const auto& s = report.sentence_spans[k];
    if (s.end > n) throw ContractError("sentence_weights: span exceeds attention row");
    for (std::size_t j = s.begin; j < s.end; ++j) {
      member[j * ns + k] = 1.0;
      total += cls[j];
    }
  }
  if (!(total > 0.0)) throw ContractError("sentence_weights: attention mass over sentences is zero");
  const Tensor w = matmul(reshape(cls, {1, n}), Tensor::from({n, ns}, std::move(member)));
  return normalize_sum(reshape(w, {ns}));
}

Tensor query_weights(const Tensor& attn, const Tensor& sentence_w) {
  if (attn.rank() != 2 || sentence_w.rank() != 1 || attn.dim(1) != sentence_w.dim(0)) {
    throw DimensionError("query_weights: attention " + shape_str(attn.shape()) + " vs weights " +
                         shape_str(sentence_w.shape()));
  }
  const std::size_t nq = attn.dim(0), ns = attn.dim(1);
  const Tensor scaled = scale(reshape(sentence_w, {ns, 1}), static_cast<double>(ns));
  return reshape(matmul(attn, scaled), {nq});
}

PathologyBundle build_bundle(const Vpoe& vpoe, const Tensor& visual_local, const EncodedReport& report) {
  PathologyBundle b;
  b.tpor = extract_tpor(report);
  b.vpor = vpoe_forward(vpoe, visual_local);
  auto cm = cross_modal_attend(b.vpor, b.tpor);
  b.attn = cm.attn;
  b.attended = cm.attended;
  b.weights = sentence_weights(report);
  return b;
}

Tensor pcma_sample_loss(const Tensor& vpor, const Tensor& attended, const Tensor& query_w, double tau2,
                        bool l2_normalize) {
  if (!(tau2 > 0.0)) throw ConfigError("pcma_loss: tau2 must be positive");
  if (vpor.rank() != 2 || vpor.shape() != attended.shape()) {
    throw DimensionError("pcma_loss: V-POR and attended rows must match");
  }
  if (query_w.numel() != vpor.dim(0)) throw DimensionError("pcma_loss: one weight per query position");
  const Tensor o = l2_normalize ? l2_normalize_rows(vpor) : vpor;
  const Tensor c = l2_normalize ? l2_normalize_rows(attended) : attended;
  const Tensor logits = scale(matmul(o, transpose(c)), 1.0 / tau2);
  const Tensor image_side = diagonal_nll(logits);
  const Tensor report_side = weighted_diagonal_nll(transpose(logits), query_w);
  return scale(add(image_side, report_side), 0.5);
}

Tensor pcma_loss(std::span<const PathologyBundle> bundles, double tau2, bool l2_normalize) {
  if (!(tau2 > 0.0)) throw ConfigError("pcma_loss: tau2 must be positive");
  if (bundles.empty()) throw ContractError("pcma_loss: empty batch");
  std::vector<Tensor> terms;
  terms.reserve(bundles.size());
  for (const auto& b : bundles) {
    terms.push_back(pcma_sample_loss(b.vpor, b.attended, query_weights(b.attn, b.weights), tau2, l2_normalize));
  }
  std::vector<double> w(terms.size(), 1.0 / static_cast<double>(terms.size()));
  return linear_combination(terms, w);
}

}  // namespace place
