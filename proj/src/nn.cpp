#include "place/nn.hpp"

#include <cmath>

#include "place/errors.hpp"

namespace place {

Tensor& ParamStore::add(const std::string& name, Tensor t) {
  if (contains(name)) throw ContractError("ParamStore: duplicate parameter '" + name + "'");
  t.set_requires_grad(true);
  entries_.emplace_back(name, std::move(t));
  return entries_.back().second;
}

Tensor& ParamStore::get(const std::string& name) {
  for (auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  throw ContractError("ParamStore: no parameter '" + name + "'");
}

const Tensor& ParamStore::get(const std::string& name) const {
  return const_cast<ParamStore*>(this)->get(name);
}

bool ParamStore::contains(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return true;
  }
  return false;
}

std::size_t ParamStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.numel();
  return n;
}

std::vector<Tensor> ParamStore::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& [n, t] : entries_) out.push_back(t);
  return out;
}

void ParamStore::zero_grad() {
  for (auto& [n, t] : entries_) t.zero_grad();
}

Tensor Initializer::normal(Shape shape, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(numel_of(shape));
  for (auto& x : v) x = dist(rng_);
  return Tensor::from(std::move(shape), std::move(v));
}

Tensor Initializer::xavier_uniform(std::size_t fan_in, std::size_t fan_out) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> v(fan_in * fan_out);
  for (auto& x : v) x = dist(rng_);
  return Tensor::from({fan_in, fan_out}, std::move(v));
}

Tensor Linear::operator()(const Tensor& x) const {
  auto y = matmul(x, weight);
  return bias.defined() ? add_row(y, bias) : y;
}

Linear make_linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
                   Initializer& init, bool with_bias) {
  Linear l;
  l.weight = store.add(name + ".weight", init.xavier_uniform(in, out));
  if (with_bias) l.bias = store.add(name + ".bias", Tensor::zeros({out}));
  return l;
}

LayerNorm make_layer_norm(ParamStore& store, const std::string& name, std::size_t width) {
  LayerNorm ln;
  ln.gamma = store.add(name + ".gamma", Tensor::full({width}, 1.0));
  ln.beta = store.add(name + ".beta", Tensor::zeros({width}));
  return ln;
}

MultiHeadAttention make_attention(ParamStore& store, const std::string& name, std::size_t width,
                                  std::size_t heads, Initializer& init) {
  if (heads == 0 || width % heads != 0) {
    throw ConfigError("attention: width " + std::to_string(width) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  MultiHeadAttention a;
  a.query = make_linear(store, name + ".q", width, width, init);
  a.key = make_linear(store, name + ".k", width, width, init);
  a.value = make_linear(store, name + ".v", width, width, init);
  a.out = make_linear(store, name + ".o", width, width, init);
  a.heads = heads;
  return a;
}

AttentionResult attend(const MultiHeadAttention& attn, const Tensor& queries,
                       const Tensor& keys_values, bool keep_weights) {
  const std::size_t width = queries.dim(1);
  if (keys_values.dim(1) != width) throw DimensionError("attend: query/key widths differ");
  const std::size_t hd = width / attn.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));

  const Tensor q = attn.query(queries);
  const Tensor k = attn.key(keys_values);
  const Tensor v = attn.value(keys_values);

  std::vector<Tensor> heads;
  heads.reserve(attn.heads);
  std::vector<Tensor> weights;
  for (std::size_t h = 0; h < attn.heads; ++h) {
    const Tensor qh = slice_cols(q, h * hd, hd);
    const Tensor kh = slice_cols(k, h * hd, hd);
    const Tensor vh = slice_cols(v, h * hd, hd);
    const Tensor w = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt), 1);
    heads.push_back(matmul(w, vh));
    if (keep_weights) weights.push_back(w);
  }
  AttentionResult r;
  r.out = attn.out(attn.heads == 1 ? heads[0] : concat_cols(heads));
  if (keep_weights) {
    Tensor acc = weights[0];
    for (std::size_t h = 1; h < weights.size(); ++h) acc = add(acc, weights[h]);
    r.mean_weights = scale(acc, 1.0 / static_cast<double>(weights.size()));
  }
  return r;
}

TransformerBlock make_block(ParamStore& store, const std::string& name, std::size_t width,
                            std::size_t heads, std::size_t hidden, Initializer& init) {
  TransformerBlock b;
  b.norm1 = make_layer_norm(store, name + ".norm1", width);
  b.attn = make_attention(store, name + ".attn", width, heads, init);
  b.norm2 = make_layer_norm(store, name + ".norm2", width);
  b.fc1 = make_linear(store, name + ".fc1", width, hidden, init);
  b.fc2 = make_linear(store, name + ".fc2", hidden, width, init);
  return b;
}

BlockResult run_block(const TransformerBlock& block, const Tensor& x, bool keep_weights) {
  const Tensor h = block.norm1(x);
  auto a = attend(block.attn, h, h, keep_weights);
  const Tensor x1 = add(x, a.out);
  const Tensor x2 = add(x1, block.fc2(gelu(block.fc1(block.norm2(x1)))));
  return {x2, a.mean_weights};
}

}  // namespace place
