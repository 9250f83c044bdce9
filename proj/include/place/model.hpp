#pragma once

#include <memory>
#include <span>
#include <vector>

#include "place/cce.hpp"
#include "place/config.hpp"
#include "place/encoders.hpp"
#include "place/icma.hpp"
#include "place/nn.hpp"
#include "place/pcma.hpp"
#include "place/synth.hpp"

namespace place {

// All trainable modules of the joint objective. Parameter tensors are shared
// between the named registry and the module structs, so the model is pinned
// in place (non-copyable).
struct PlaceModel {
  TrainConfig cfg;
  ParamStore params;
  ImageEncoder image;
  TextEncoder text;
  ProjectionHead image_proj;
  ProjectionHead text_proj;
  Vpoe vpoe;
  CceHead cce;

  PlaceModel() = default;
  PlaceModel(const PlaceModel&) = delete;
  PlaceModel& operator=(const PlaceModel&) = delete;
};

// Deterministic in cfg.seed.
std::unique_ptr<PlaceModel> build_model(const TrainConfig& cfg);

// A data split with its covariance regression targets computed once.
struct PreparedSplit {
  Dataset pairs;
  std::vector<Tensor> targets;
  std::size_t size() const { return pairs.size(); }
};

PreparedSplit prepare_split(Dataset pairs, const TrainConfig& cfg);

struct SampleForward {
  EncodedImage image;
  EncodedReport report;
  PathologyBundle bundle;
};

SampleForward forward_sample(const PlaceModel& model, const SyntheticPair& pair);

struct LossTerms {
  Tensor total;
  Tensor icma;
  Tensor pcma;
  Tensor cce;
  double total_value() const { return total.item(); }
};

// L = L_icma + lambda * L_pcma + beta * L_cce over the listed samples.
LossTerms total_loss(const PlaceModel& model, const PreparedSplit& split, std::span<const std::size_t> batch);

}  // namespace place
