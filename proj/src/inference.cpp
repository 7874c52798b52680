// Copyright (c) 2026, The emoalign Authors
// SPDX-License-Identifier: Apache-2.0

#include "emoalign/inference.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

namespace emoalign {

Prediction rank_labels(std::span<const double> output, const EmbeddingMatrix& labels, std::size_t k) {
  const std::size_t n = labels.rows;
  if (k == 0 || k > n) {
    throw ArgumentError("k = " + std::to_string(k) + " must be between 1 and the label count N = " +
                        std::to_string(n));
  }
  if (output.size() != labels.cols) {
    throw DimensionError("projector output has dim " + std::to_string(output.size()) + ", label embeddings have " +
                         std::to_string(labels.cols));
  }
  std::vector<double> dist(n);
  for (std::size_t l = 0; l < n; ++l) dist[l] = 1.0 - cosine_similarity(output, labels.row(l));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
  Prediction p;
  for (std::size_t i = 0; i < k; ++i) {
    p.labels.push_back(order[i]);
    p.distances.push_back(dist[order[i]]);
  }
  return p;
}

Prediction predict_topk(const ProjectorParams& params, const Tensor& features, const LabelSpace& labels,
                        std::size_t k) {
  if (k == 0 || k > labels.size()) {
    throw ArgumentError("k = " + std::to_string(k) + " must be between 1 and the label count N = " +
                        std::to_string(labels.size()));
  }
  const auto out = project(params, features);
  return rank_labels(out, labels.embedding, k);
}

F1Scores f1_scores(const LabelSets& predicted, const LabelSets& truth, std::size_t n_labels) {
  if (predicted.empty()) throw ArgumentError("macro F1 of an empty sample list");
  if (predicted.size() != truth.size()) {
    throw DimensionError("macro F1: " + std::to_string(predicted.size()) + " predictions for " +
                         std::to_string(truth.size()) + " samples");
  }
  std::vector<std::size_t> tp(n_labels), fp(n_labels), fn(n_labels);
  std::vector<char> in_truth(n_labels), in_pred(n_labels);
  for (std::size_t s = 0; s < predicted.size(); ++s) {
    std::fill(in_truth.begin(), in_truth.end(), 0);
    std::fill(in_pred.begin(), in_pred.end(), 0);
    for (std::size_t l : truth[s]) {
      if (l >= n_labels) throw ArgumentError("macro F1: label index " + std::to_string(l) + " out of range");
      in_truth[l] = 1;
    }
    for (std::size_t l : predicted[s]) {
      if (l >= n_labels) throw ArgumentError("macro F1: label index " + std::to_string(l) + " out of range");
      in_pred[l] = 1;
    }
    for (std::size_t l = 0; l < n_labels; ++l) {
      if (in_truth[l] && in_pred[l]) ++tp[l];
      if (!in_truth[l] && in_pred[l]) ++fp[l];
      if (in_truth[l] && !in_pred[l]) ++fn[l];
    }
  }
  F1Scores out;
  out.per_label.resize(n_labels);
  double total = 0.0;
  for (std::size_t l = 0; l < n_labels; ++l) {
    const double denom = 2.0 * static_cast<double>(tp[l]) + static_cast<double>(fp[l] + fn[l]);
    out.per_label[l] = denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(tp[l]) / denom;
    total += out.per_label[l];
  }
  out.macro = n_labels == 0 ? 0.0 : total / static_cast<double>(n_labels);
  return out;
}

double macro_f1(const LabelSets& predicted, const LabelSets& truth, std::size_t n_labels) {
  return f1_scores(predicted, truth, n_labels).macro;
}

nlohmann::ordered_json eval_report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["dataset"] = r.dataset;
  j["macro_f1"] = r.macro_f1;
  j["k"] = r.k;
  j["samples"] = r.samples;
  j["segment_level"] = r.segment_level;
  nlohmann::ordered_json per = nlohmann::ordered_json::object();
  for (const auto& [name, f1] : r.per_label) per[name] = f1;
  j["per_label"] = std::move(per);
  return j;
}

EvalReport evaluate(const ProjectorParams& params, const Dataset& ds, std::size_t k, bool segment_level,
                    std::size_t threads) {
  const std::size_t n_labels = ds.label_space.size();
  if (k == 0 || k > n_labels) {
    throw ArgumentError("k = " + std::to_string(k) + " must be between 1 and the label count N = " +
                        std::to_string(n_labels) + " of dataset '" + ds.name + "'");
  }
  // Flatten into evaluation units (songs, or individual segments).
  std::vector<const Tensor*> song_features;
  std::vector<Tensor> segments;
  LabelSets truth;
  for (const auto& s : ds.samples) {
    if (segment_level) {
      for (std::size_t t = 0; t < s.features.rows(); ++t) {
        auto row = s.features.data().subspan(t * s.features.cols(), s.features.cols());
        segments.push_back(Tensor::matrix(1, s.features.cols(), {row.begin(), row.end()}));
        truth.push_back(s.labels);
      }
    } else {
      song_features.push_back(&s.features);
      truth.push_back(s.labels);
    }
  }
  if (segment_level) {
    for (const auto& t : segments) song_features.push_back(&t);
  }
  const std::size_t n = song_features.size();
  EvalReport r;
  r.dataset = ds.name;
  r.k = k;
  r.segment_level = segment_level;
  r.samples = n;
  r.predictions.k = k;
  r.predictions.samples.resize(n);
  if (n == 0) throw ArgumentError("cannot evaluate dataset '" + ds.name + "' with no samples");

  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      r.predictions.samples[i] = predict_topk(params, *song_features[i], ds.label_space, k);
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, n);
  if (workers == 1) {
    work(0, n);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          work(std::min(n, w * chunk), std::min(n, (w + 1) * chunk));
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  LabelSets predicted;
  predicted.reserve(n);
  for (const auto& p : r.predictions.samples) predicted.push_back(p.labels);
  const F1Scores scores = f1_scores(predicted, truth, n_labels);
  r.macro_f1 = scores.macro;
  for (std::size_t l = 0; l < n_labels; ++l) r.per_label.emplace_back(ds.label_space.name(l), scores.per_label[l]);
  return r;
}

std::optional<std::size_t> reference_k(const std::string& dataset_name) {
  std::string s;
  for (char c : dataset_name)
    if (std::isalnum(static_cast<unsigned char>(c))) s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (s == "mtg" || s == "mtgjamendo" || s == "jamendo" || s == "jamendomtg") return 2;
  if (s == "cal500" || s == "cal") return 4;
  if (s == "emotify" || s == "emo") return 3;
  return std::nullopt;
}

std::size_t default_k(const Dataset& ds) {
  if (auto k = reference_k(ds.name)) return std::min(*k, ds.label_space.size());
  if (ds.samples.empty()) return 1;
  double total = 0.0;
  for (const auto& s : ds.samples) total += static_cast<double>(s.labels.size());
  const auto k = static_cast<std::size_t>(std::llround(total / static_cast<double>(ds.samples.size())));
  return std::clamp<std::size_t>(k, 1, ds.label_space.size());
}

}  // namespace emoalign
