#include "place/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "place/errors.hpp"
#include "place/trainer.hpp"

namespace place {

namespace {

std::vector<double> normalized(std::span<const double> v) {
  double ss = 0.0;
  for (double x : v) ss += x * x;
  const double n = std::max(std::sqrt(ss), 1e-12);
  std::vector<double> out(v.begin(), v.end());
  for (auto& x : out) x /= n;
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

std::vector<std::size_t> ranking(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  return order;
}

Tensor rows_to_tensor(const std::vector<std::vector<double>>& rows) {
  std::vector<double> flat;
  for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  return Tensor::from({rows.size(), rows.front().size()}, std::move(flat));
}

}  // namespace

RetrievalResult retrieval_precision(const Tensor& query_reps, const Tensor& report_reps,
                                    std::span<const std::size_t> query_labels,
                                    std::span<const std::size_t> report_labels,
                                    std::span<const std::size_t> k_values) {
  if (query_reps.rank() != 2 || report_reps.rank() != 2 || query_reps.dim(1) != report_reps.dim(1)) {
    throw DimensionError("retrieval_precision: representation widths differ");
  }
  const std::size_t nq = query_reps.dim(0), nr = report_reps.dim(0), d = query_reps.dim(1);
  if (query_labels.size() != nq || report_labels.size() != nr) {
    throw DimensionError("retrieval_precision: one label per query and per report");
  }
  for (auto k : k_values) {
    if (k == 0 || k > nr) {
      throw ContractError("retrieval_precision: K=" + std::to_string(k) + " outside corpus of " + std::to_string(nr));
    }
  }
  RetrievalResult r;
  r.k_values.assign(k_values.begin(), k_values.end());
  r.precision_at_k.assign(k_values.size(), 0.0);
  const auto q = query_reps.data();
  const auto rep = report_reps.data();
  std::vector<double> scores(nr);
  for (std::size_t i = 0; i < nq; ++i) {
    for (std::size_t j = 0; j < nr; ++j) scores[j] = dot(q.subspan(i * d, d), rep.subspan(j * d, d));
    auto order = ranking(scores);
    for (std::size_t kk = 0; kk < k_values.size(); ++kk) {
      std::size_t hits = 0;
      for (std::size_t t = 0; t < k_values[kk]; ++t) hits += report_labels[order[t]] == query_labels[i];
      r.precision_at_k[kk] += static_cast<double>(hits) / static_cast<double>(k_values[kk]);
    }
    r.ranked.push_back(std::move(order));
  }
  for (auto& p : r.precision_at_k) p /= static_cast<double>(nq);
  return r;
}

RetrievalResult retrieval_precision(const PlaceModel& model, const Dataset& corpus,
                                    std::span<const std::size_t> k_values) {
  if (corpus.empty()) throw ContractError("retrieval_precision: empty corpus");
  NoGradGuard no_grad;
  std::vector<std::vector<double>> imgs, reps;
  std::vector<std::size_t> labels;
  for (const auto& p : corpus) {
    const auto gi = encode_image(model.image, p.image).global;
    const auto gr = encode_report(model.text, p.tokens, p.spans).global;
    imgs.push_back(normalized(project(gi, model.image_proj, model.cfg.l2_normalize).data()));
    reps.push_back(normalized(project(gr, model.text_proj, model.cfg.l2_normalize).data()));
    labels.push_back(p.labels.front().pathology);
  }
  return retrieval_precision(rows_to_tensor(imgs), rows_to_tensor(reps), labels, labels, k_values);
}

ConsistencyResult consistency_from_similarities(const std::vector<std::vector<double>>& similarities) {
  ConsistencyResult r;
  r.samples = similarities.size();
  if (similarities.empty()) return r;
  const std::size_t nq = similarities.front().size();
  r.counts.assign(nq, 0);
  std::vector<std::vector<std::size_t>> orders;
  for (const auto& s : similarities) {
    if (s.size() != nq) throw DimensionError("consistency: samples disagree on the number of V-PORs");
    orders.push_back(ranking(s));
    ++r.counts[orders.back()[0]];
  }
  r.modal_index = static_cast<std::size_t>(std::max_element(r.counts.begin(), r.counts.end()) - r.counts.begin());
  std::size_t in_top2 = 0;
  for (const auto& o : orders) {
    in_top2 += o[0] == r.modal_index || (o.size() > 1 && o[1] == r.modal_index);
  }
  r.top1 = static_cast<double>(r.counts[r.modal_index]) / static_cast<double>(r.samples);
  r.top2 = static_cast<double>(in_top2) / static_cast<double>(r.samples);
  return r;
}

ConsistencyResult vpor_consistency(const PlaceModel& model, const Dataset& data, std::size_t pathology) {
  NoGradGuard no_grad;
  std::vector<std::vector<double>> sims;
  for (const auto& p : data) {
    auto it = std::find_if(p.labels.begin(), p.labels.end(), [&](const Finding& f) { return f.pathology == pathology; });
    if (it == p.labels.end()) continue;
    const auto sentence = static_cast<std::size_t>(it - p.labels.begin());
    const auto f = forward_sample(model, p);
    const auto d = f.bundle.tpor.dim(1);
    const auto t = normalized(f.bundle.tpor.data().subspan(sentence * d, d));
    std::vector<double> s;
    for (std::size_t q = 0; q < f.bundle.vpor.dim(0); ++q) {
      s.push_back(dot(normalized(f.bundle.vpor.data().subspan(q * d, d)), t));
    }
    sims.push_back(std::move(s));
  }
  auto r = consistency_from_similarities(sims);
  r.pathology = pathology;
  return r;
}

double random_argmax_baseline(std::size_t n_samples, std::size_t n_choices, std::size_t draws, std::uint64_t seed) {
  if (n_samples == 0 || n_choices == 0 || draws == 0) throw ContractError("random_argmax_baseline: empty setting");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n_choices - 1);
  std::vector<std::size_t> counts(n_choices);
  double acc = 0.0;
  for (std::size_t d = 0; d < draws; ++d) {
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t s = 0; s < n_samples; ++s) ++counts[pick(rng)];
    acc += static_cast<double>(*std::max_element(counts.begin(), counts.end())) / static_cast<double>(n_samples);
  }
  return acc / static_cast<double>(draws);
}

double cluster_separation(const std::vector<std::vector<std::vector<double>>>& vectors) {
  if (vectors.empty()) throw ContractError("cluster_separation: no samples");
  const std::size_t groups = vectors.front().size();
  if (groups < 2) throw ContractError("cluster_separation: need at least two query groups");
  const std::size_t d = vectors.front().front().size();

  std::vector<std::vector<std::vector<double>>> unit(groups);
  for (const auto& sample : vectors) {
    if (sample.size() != groups) throw DimensionError("cluster_separation: ragged query count");
    for (std::size_t g = 0; g < groups; ++g) unit[g].push_back(normalized(sample[g]));
  }
  std::vector<std::vector<double>> centroid(groups, std::vector<double>(d, 0.0));
  for (std::size_t g = 0; g < groups; ++g) {
    for (const auto& v : unit[g])
      for (std::size_t i = 0; i < d; ++i) centroid[g][i] += v[i];
    for (auto& c : centroid[g]) c /= static_cast<double>(unit[g].size());
  }
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t g = 0; g < groups; ++g) {
    for (const auto& v : unit[g]) {
      const double own = distance(v, centroid[g]);
      double other = std::numeric_limits<double>::infinity();
      for (std::size_t h = 0; h < groups; ++h) {
        if (h != g) other = std::min(other, distance(v, centroid[h]));
      }
      const double denom = std::max(own, other);
      total += denom > 0.0 ? (other - own) / denom : 0.0;
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

double vpor_cluster_separation(const PlaceModel& model, const Dataset& data) {
  NoGradGuard no_grad;
  std::vector<std::vector<std::vector<double>>> vectors;
  for (const auto& p : data) {
    const auto local = encode_image(model.image, p.image).local;
    const auto vpor = vpoe_forward(model.vpoe, local);
    const auto d = vpor.dim(1);
    std::vector<std::vector<double>> rows;
    for (std::size_t q = 0; q < vpor.dim(0); ++q) {
      const auto r = vpor.data().subspan(q * d, d);
      rows.emplace_back(r.begin(), r.end());
    }
    vectors.push_back(std::move(rows));
  }
  return cluster_separation(vectors);
}

ProbeResult linear_probe(const std::vector<std::vector<double>>& train_x, const std::vector<std::vector<int>>& train_y,
                         const std::vector<std::vector<double>>& test_x, const std::vector<std::vector<int>>& test_y,
                         std::size_t iterations, double learning_rate) {
  if (train_x.empty() || test_x.empty() || train_x.size() != train_y.size() || test_x.size() != test_y.size()) {
    throw DimensionError("linear_probe: features and labels must be nonempty and aligned");
  }
  const std::size_t n = train_x.size(), d = train_x.front().size(), c = train_y.front().size();

  std::vector<double> mu(d, 0.0), sd(d, 0.0);
  for (const auto& x : train_x)
    for (std::size_t j = 0; j < d; ++j) mu[j] += x[j] / static_cast<double>(n);
  for (const auto& x : train_x)
    for (std::size_t j = 0; j < d; ++j) sd[j] += (x[j] - mu[j]) * (x[j] - mu[j]) / static_cast<double>(n);
  for (auto& s : sd) s = std::max(std::sqrt(s), 1e-8);
  auto standardize = [&](const std::vector<double>& x) {
    std::vector<double> z(d);
    for (std::size_t j = 0; j < d; ++j) z[j] = (x[j] - mu[j]) / sd[j];
    return z;
  };
  std::vector<std::vector<double>> zs;
  for (const auto& x : train_x) zs.push_back(standardize(x));

  std::vector<double> w(d * c, 0.0), b(c, 0.0), gw(d * c), gb(c);
  auto sigmoid = [](double t) { return 1.0 / (1.0 + std::exp(-t)); };
  for (std::size_t it = 0; it < iterations; ++it) {
    std::fill(gw.begin(), gw.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < c; ++k) {
        double logit = b[k];
        for (std::size_t j = 0; j < d; ++j) logit += zs[i][j] * w[j * c + k];
        const double err = sigmoid(logit) - static_cast<double>(train_y[i][k]);
        gb[k] += err;
        for (std::size_t j = 0; j < d; ++j) gw[j * c + k] += err * zs[i][j];
      }
    }
    const double step = learning_rate / static_cast<double>(n);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= step * gw[i];
    for (std::size_t k = 0; k < c; ++k) b[k] -= step * gb[k];
  }

  ProbeResult r;
  r.per_class_accuracy.assign(c, 0.0);
  for (std::size_t i = 0; i < test_x.size(); ++i) {
    const auto z = standardize(test_x[i]);
    for (std::size_t k = 0; k < c; ++k) {
      double logit = b[k];
      for (std::size_t j = 0; j < d; ++j) logit += z[j] * w[j * c + k];
      r.per_class_accuracy[k] += ((logit > 0.0) == (test_y[i][k] != 0)) ? 1.0 : 0.0;
    }
  }
  for (auto& a : r.per_class_accuracy) a /= static_cast<double>(test_x.size());
  r.mean_accuracy = std::accumulate(r.per_class_accuracy.begin(), r.per_class_accuracy.end(), 0.0) /
                    static_cast<double>(c);
  return r;
}

std::vector<std::vector<double>> image_features(const PlaceModel& model, const Dataset& data) {
  NoGradGuard no_grad;
  std::vector<std::vector<double>> out;
  for (const auto& p : data) {
    const auto g = encode_image(model.image, p.image).global;
    out.emplace_back(g.data().begin(), g.data().end());
  }
  return out;
}

std::vector<std::vector<int>> presence_labels(const Dataset& data, std::size_t n_pathologies) {
  std::vector<std::vector<int>> out;
  for (const auto& p : data) {
    std::vector<int> y(n_pathologies, 0);
    for (const auto& f : p.labels) y[f.pathology] = 1;
    out.push_back(std::move(y));
  }
  return out;
}

ProbeResult linear_probe(const PlaceModel& model, const Dataset& train, const Dataset& test) {
  const auto c = model.cfg.n_pathologies;
  return linear_probe(image_features(model, train), presence_labels(train, c), image_features(model, test),
                      presence_labels(test, c));
}

std::vector<Metric> evaluate_all(const PlaceModel& trained, const PlaceModel& random_init, const EvalInputs& in) {
  if (!in.eval_split || !in.probe_train || !in.retrieval_corpus) throw ContractError("evaluate_all: missing inputs");
  std::vector<Metric> m;
  const auto losses = evaluate_loss(trained, *in.eval_split, trained.cfg.batch_size);
  m.push_back({"loss_total", losses.total});
  m.push_back({"loss_icma", losses.icma});
  m.push_back({"loss_pcma", losses.pcma});
  m.push_back({"loss_cce", losses.cce});

  const std::array<std::size_t, 4> ks{1, 2, 5, 10};
  const auto ret = retrieval_precision(trained, *in.retrieval_corpus, ks);
  for (std::size_t i = 0; i < ks.size(); ++i) {
    m.push_back({"retrieval_p_at_" + std::to_string(ks[i]), ret.precision_at_k[i]});
  }

  const auto& data = in.eval_split->pairs;
  for (std::size_t p = 0; p < trained.cfg.n_pathologies; ++p) {
    const auto c = vpor_consistency(trained, data, p);
    const auto tag = "_p" + std::to_string(p);
    m.push_back({"consistency_samples" + tag, static_cast<double>(c.samples)});
    if (c.samples == 0) continue;
    m.push_back({"consistency_top1" + tag, c.top1});
    m.push_back({"consistency_top2" + tag, c.top2});
    m.push_back({"consistency_modal" + tag, static_cast<double>(c.modal_index)});
    m.push_back({"consistency_baseline" + tag, random_argmax_baseline(c.samples, trained.cfg.n_queries)});
  }
  if (trained.cfg.n_queries >= 2) m.push_back({"cluster_separation", vpor_cluster_separation(trained, data)});

  m.push_back({"probe_trained", linear_probe(trained, *in.probe_train, data).mean_accuracy});
  m.push_back({"probe_random", linear_probe(random_init, *in.probe_train, data).mean_accuracy});
  return m;
}

}  // namespace place
