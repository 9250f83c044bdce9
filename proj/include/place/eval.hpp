#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "place/model.hpp"
#include "place/tensor.hpp"

namespace place {

// ---- zero-shot retrieval ------------------------------------------------------

struct RetrievalResult {
  std::vector<std::size_t> k_values;
  std::vector<double> precision_at_k;            // aligned with k_values
  std::vector<std::vector<std::size_t>> ranked;  // per query, report indices by descending similarity
};

// Ranks reports by dot product with each query (ties by index) and reports
// the fraction of the top-K whose label equals the query's, averaged.
RetrievalResult retrieval_precision(const Tensor& query_reps, const Tensor& report_reps,
                                    std::span<const std::size_t> query_labels,
                                    std::span<const std::size_t> report_labels,
                                    std::span<const std::size_t> k_values);

// Projected, normalized globals for every image and report of a corpus; the
// label of a pair is the pathology of its first finding.
RetrievalResult retrieval_precision(const PlaceModel& model, const Dataset& corpus,
                                    std::span<const std::size_t> k_values);

// ---- V-POR consistency --------------------------------------------------------

struct ConsistencyResult {
  std::size_t pathology = 0;
  std::size_t samples = 0;  // 0 signals "no qualifying samples"
  std::size_t modal_index = 0;
  double top1 = 0.0;
  double top2 = 0.0;
  std::vector<std::size_t> counts;  // argmax histogram over V-POR indices
};

// similarities[s][j]: similarity between sample s's selected T-POR and its
// j-th V-POR. top1 = frequency of the modal argmax; top2 = fraction of
// samples where the modal index ranks first or second.
ConsistencyResult consistency_from_similarities(const std::vector<std::vector<double>>& similarities);

ConsistencyResult vpor_consistency(const PlaceModel& model, const Dataset& data, std::size_t pathology);

// Expected modal frequency when every sample picks uniformly at random among
// n_choices, estimated over `draws` simulated datasets.
double random_argmax_baseline(std::size_t n_samples, std::size_t n_choices, std::size_t draws = 10000,
                              std::uint64_t seed = 7);

// ---- query clustering ---------------------------------------------------------

// vectors[s][q] is the V-POR of query q for sample s. Vectors are
// L2-normalized, grouped by q, and each scores
// (nearest other centroid dist - own centroid dist) / max of the two.
double cluster_separation(const std::vector<std::vector<std::vector<double>>>& vectors);
double vpor_cluster_separation(const PlaceModel& model, const Dataset& data);

// ---- linear probe -------------------------------------------------------------

struct ProbeResult {
  std::vector<double> per_class_accuracy;
  double mean_accuracy = 0.0;
};

// Independent logistic regressions on standardized features, trained by
// full-batch gradient descent. labels are 0/1 rows [n x C].
ProbeResult linear_probe(const std::vector<std::vector<double>>& train_x,
                         const std::vector<std::vector<int>>& train_y,
                         const std::vector<std::vector<double>>& test_x,
                         const std::vector<std::vector<int>>& test_y, std::size_t iterations = 500,
                         double learning_rate = 0.1);

// Frozen O^GI features, target = which pathologies appear anywhere.
ProbeResult linear_probe(const PlaceModel& model, const Dataset& train, const Dataset& test);

std::vector<std::vector<double>> image_features(const PlaceModel& model, const Dataset& data);
std::vector<std::vector<int>> presence_labels(const Dataset& data, std::size_t n_pathologies);

// ---- report -------------------------------------------------------------------

struct Metric {
  std::string name;
  double value = 0.0;
};

// The full metric set written by the `eval` command.
struct EvalInputs {
  const PreparedSplit* eval_split = nullptr;
  const Dataset* probe_train = nullptr;
  const Dataset* retrieval_corpus = nullptr;
};
std::vector<Metric> evaluate_all(const PlaceModel& trained, const PlaceModel& random_init, const EvalInputs& in);

}  // namespace place
