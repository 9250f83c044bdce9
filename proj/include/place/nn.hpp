#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "place/tensor.hpp"

namespace place {

// Ordered name -> parameter registry. Insertion order is the canonical order
// for checkpoints, optimizer state and gradient checks.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor t);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }
  std::size_t total_elements() const;
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  std::vector<Tensor> tensors() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

// Seeded parameter initializer. Draw order fixes the values, so modules must
// register parameters in a fixed order.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}
  Tensor normal(Shape shape, double stddev);
  Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out);
  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

struct Linear {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out], undefined when the layer has no bias

  // x: [n x in] -> [n x out]
  Tensor operator()(const Tensor& x) const;
};

Linear make_linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
                   Initializer& init, bool with_bias = true);

struct LayerNorm {
  Tensor gamma;
  Tensor beta;
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta); }
};

LayerNorm make_layer_norm(ParamStore& store, const std::string& name, std::size_t width);

struct MultiHeadAttention {
  Linear query, key, value, out;
  std::size_t heads = 1;
};

MultiHeadAttention make_attention(ParamStore& store, const std::string& name, std::size_t width,
                                  std::size_t heads, Initializer& init);

struct AttentionResult {
  Tensor out;           // [n_q x D]
  Tensor mean_weights;  // [n_q x n_kv], averaged over heads; undefined unless requested
};

// Scaled dot-product attention, softmax over keys, heads split across columns.
AttentionResult attend(const MultiHeadAttention& attn, const Tensor& queries,
                       const Tensor& keys_values, bool keep_weights = false);

// Pre-norm block: x + SelfAttn(LN(x)), then x + MLP(LN(x)).
struct TransformerBlock {
  LayerNorm norm1;
  MultiHeadAttention attn;
  LayerNorm norm2;
  Linear fc1, fc2;
};

TransformerBlock make_block(ParamStore& store, const std::string& name, std::size_t width,
                            std::size_t heads, std::size_t hidden, Initializer& init);

struct BlockResult {
  Tensor out;
  Tensor attn_weights;  // head-averaged self-attention, when requested
};

BlockResult run_block(const TransformerBlock& block, const Tensor& x, bool keep_weights = false);

}  // namespace place
