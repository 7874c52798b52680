// Copyright (c) 2026, The emoalign Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "emoalign/data_io.hpp"
#include "emoalign/random.hpp"
#include "json_util.hpp"

namespace emoalign {

namespace {

std::vector<double> gaussian(Rng& rng, std::size_t n, double sigma) {
  std::vector<double> v(n);
  for (double& x : v) x = sigma * rng.normal();
  return v;
}

void normalize(std::vector<double>& v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (n == 0.0) throw DegenerateError("synthetic generator drew a zero vector");
  for (double& x : v) x /= n;
}

std::string sample_id(const std::string& ds, Split split, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05zu", i);
  return ds + "_" + to_string(split) + "_" + buf;
}

}  // namespace

SynthResult generate_synthetic(const SynthSpec& spec, std::uint64_t seed) {
  if (spec.concepts < 2) throw ArgumentError("synthetic scenario needs at least 2 concepts");
  if (spec.labels_per_concept == 0 || spec.embedding_dim == 0 || spec.feature_dim == 0 || spec.segments == 0) {
    throw ArgumentError("synthetic scenario dims and label counts must be positive");
  }
  if (spec.label_noise < 0 || spec.feature_noise < 0 || spec.mixture_noise < 0 || spec.multi_label_prob < 0 ||
      spec.multi_label_prob > 1) {
    throw ArgumentError("synthetic noise scales must be non-negative and multi_label_prob in [0, 1]");
  }
  if (spec.datasets.empty()) throw ArgumentError("synthetic scenario needs at least one dataset");
  {
    std::set<std::string> names;
    for (const auto& d : spec.datasets)
      if (d.name.empty() || !names.insert(d.name).second) throw ArgumentError("dataset names must be unique and non-empty");
  }

  const std::size_t m = spec.embedding_dim, d_in = spec.feature_dim, C = spec.concepts;
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(m));
  Rng rng(seed);
  SynthResult result;

  std::vector<std::vector<double>> concepts(C);
  std::vector<std::string> concept_names;
  std::vector<double> concept_data;
  for (std::size_t c = 0; c < C; ++c) {
    concepts[c] = gaussian(rng, m, 1.0);
    normalize(concepts[c]);
    concept_names.push_back("concept" + std::to_string(c));
    concept_data.insert(concept_data.end(), concepts[c].begin(), concepts[c].end());
  }
  result.concept_directions = EmbeddingMatrix(C, m, std::move(concept_data), std::move(concept_names));

  // Fixed linear map from the embedding space to feature space, shared by all datasets.
  const std::vector<double> feature_map = gaussian(rng, d_in * m, inv_sqrt_m);

  for (const auto& dspec : spec.datasets) {
    LabelSpace space;
    space.source = dspec.name;
    std::vector<double> label_data;
    std::vector<std::string> label_names;
    std::vector<std::vector<std::size_t>> labels_of_concept(C);
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t s = 0; s < spec.labels_per_concept; ++s) {
        std::vector<double> e = concepts[c];
        const auto noise = gaussian(rng, m, spec.label_noise * inv_sqrt_m);
        for (std::size_t i = 0; i < m; ++i) e[i] += noise[i];
        normalize(e);
        labels_of_concept[c].push_back(label_names.size());
        label_names.push_back(dspec.name + "_c" + std::to_string(c) + "_s" + std::to_string(s));
        result.concept_of[label_names.back()] = c;
        label_data.insert(label_data.end(), e.begin(), e.end());
      }
    }
    const std::size_t n_labels = label_names.size();
    space.embedding = EmbeddingMatrix(n_labels, m, std::move(label_data), std::move(label_names));

    auto make_split = [&](Split split, std::size_t count) {
      Dataset ds;
      ds.name = dspec.name;
      ds.split = split;
      ds.label_space = space;
      for (std::size_t i = 0; i < count; ++i) {
        std::vector<std::size_t> chosen{rng.index(C)};
        if (spec.multi_label_prob > 0.0 && rng.uniform() < spec.multi_label_prob) {
          std::size_t second = rng.index(C - 1);
          if (second >= chosen[0]) ++second;
          chosen.push_back(second);
        }
        std::vector<double> mixture = gaussian(rng, m, spec.mixture_noise * inv_sqrt_m);
        for (std::size_t c : chosen)
          for (std::size_t j = 0; j < m; ++j) mixture[j] += concepts[c][j];
        std::vector<double> base(d_in, 0.0);
        for (std::size_t r = 0; r < d_in; ++r)
          for (std::size_t j = 0; j < m; ++j) base[r] += feature_map[r * m + j] * mixture[j];
        Tensor feats({spec.segments, d_in});
        for (std::size_t t = 0; t < spec.segments; ++t)
          for (std::size_t r = 0; r < d_in; ++r) feats.at(t, r) = base[r] + spec.feature_noise * rng.normal();
        Sample s;
        s.id = sample_id(dspec.name, split, i);
        s.features = std::move(feats);
        std::set<std::size_t> labels;
        for (std::size_t c : chosen) labels.insert(labels_of_concept[c].begin(), labels_of_concept[c].end());
        s.labels.assign(labels.begin(), labels.end());
        ds.samples.push_back(std::move(s));
      }
      return ds;
    };
    SynthDataset out;
    out.train = make_split(Split::train, dspec.train_samples);
    out.test = make_split(Split::test, dspec.test_samples);
    result.datasets.push_back(std::move(out));
  }
  return result;
}

SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  constexpr const char* ctx = "synth";
  detail::reject_unknown_keys(j,
                              {"concepts", "labels_per_concept", "embedding_dim", "feature_dim", "segments",
                               "label_noise", "feature_noise", "mixture_noise", "multi_label_prob", "datasets"},
                              ctx);
  SynthSpec s;
  detail::read_opt(j, "concepts", s.concepts, ctx);
  detail::read_opt(j, "labels_per_concept", s.labels_per_concept, ctx);
  detail::read_opt(j, "embedding_dim", s.embedding_dim, ctx);
  detail::read_opt(j, "feature_dim", s.feature_dim, ctx);
  detail::read_opt(j, "segments", s.segments, ctx);
  detail::read_opt(j, "label_noise", s.label_noise, ctx);
  detail::read_opt(j, "feature_noise", s.feature_noise, ctx);
  detail::read_opt(j, "mixture_noise", s.mixture_noise, ctx);
  detail::read_opt(j, "multi_label_prob", s.multi_label_prob, ctx);
  if (!j.contains("datasets") || !j.at("datasets").is_array()) {
    throw ValidationError("synth: \"datasets\" must be an array");
  }
  for (const auto& d : j.at("datasets")) {
    detail::reject_unknown_keys(d, {"name", "train", "test"}, "synth.datasets[]");
    SynthDatasetSpec ds;
    detail::read_opt(d, "name", ds.name, "synth.datasets[]");
    detail::read_opt(d, "train", ds.train_samples, "synth.datasets[]");
    detail::read_opt(d, "test", ds.test_samples, "synth.datasets[]");
    s.datasets.push_back(std::move(ds));
  }
  return s;
}

nlohmann::ordered_json synth_spec_to_json(const SynthSpec& spec) {
  nlohmann::ordered_json j;
  j["concepts"] = spec.concepts;
  j["labels_per_concept"] = spec.labels_per_concept;
  j["embedding_dim"] = spec.embedding_dim;
  j["feature_dim"] = spec.feature_dim;
  j["segments"] = spec.segments;
  j["label_noise"] = spec.label_noise;
  j["feature_noise"] = spec.feature_noise;
  j["mixture_noise"] = spec.mixture_noise;
  j["multi_label_prob"] = spec.multi_label_prob;
  auto ds = nlohmann::ordered_json::array();
  for (const auto& d : spec.datasets) ds.push_back({{"name", d.name}, {"train", d.train_samples}, {"test", d.test_samples}});
  j["datasets"] = std::move(ds);
  return j;
}

}  // namespace emoalign
