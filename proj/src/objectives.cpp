// Copyright (c) 2026, The emoalign Authors
// SPDX-License-Identifier: Apache-2.0

#include "emoalign/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "emoalign/random.hpp"
#include "json_util.hpp"

namespace emoalign {

std::string to_string(RegMode m) {
  switch (m) {
    case RegMode::off: return "off";
    case RegMode::negative: return "negative";
    case RegMode::positive: return "positive";
  }
  return "?";
}

std::string to_string(TargetMode m) { return m == TargetMode::label ? "label" : "centroid"; }

RegMode reg_mode_from_string(const std::string& s) {
  if (s == "off") return RegMode::off;
  if (s == "negative") return RegMode::negative;
  if (s == "positive") return RegMode::positive;
  throw ArgumentError("regularization mode must be negative, positive or off; got \"" + s + "\"");
}

TargetMode target_mode_from_string(const std::string& s) {
  if (s == "label") return TargetMode::label;
  if (s == "centroid") return TargetMode::centroid;
  throw ArgumentError("target mode must be label or centroid; got \"" + s + "\"");
}

void ObjectiveConfig::validate() const {
  if (!std::isfinite(margin) || margin < 0.0) throw ArgumentError("margin must be finite and >= 0");
  if (!std::isfinite(lambda) || lambda < 0.0) throw ArgumentError("lambda must be finite and >= 0");
  if (negatives_per_positive == 0) throw ArgumentError("negatives_per_positive must be >= 1");
}

nlohmann::ordered_json objective_config_to_json(const ObjectiveConfig& cfg) {
  nlohmann::ordered_json j;
  j["margin"] = cfg.margin;
  j["lambda"] = cfg.lambda;
  j["reg_mode"] = to_string(cfg.reg_mode);
  j["negatives_per_positive"] = cfg.negatives_per_positive;
  j["target_mode"] = to_string(cfg.target_mode);
  j["hinge"] = cfg.hinge == HingeOrientation::standard ? "standard" : "literal";
  return j;
}

ObjectiveConfig objective_config_from_json(const nlohmann::json& j, ObjectiveConfig base) {
  constexpr const char* ctx = "objective";
  detail::reject_unknown_keys(j, {"margin", "lambda", "reg_mode", "negatives_per_positive", "target_mode", "hinge"},
                              ctx);
  detail::read_opt(j, "margin", base.margin, ctx);
  detail::read_opt(j, "lambda", base.lambda, ctx);
  detail::read_opt(j, "negatives_per_positive", base.negatives_per_positive, ctx);
  std::string s;
  if (j.contains("reg_mode")) {
    detail::read_opt(j, "reg_mode", s, ctx);
    base.reg_mode = reg_mode_from_string(s);
  }
  if (j.contains("target_mode")) {
    detail::read_opt(j, "target_mode", s, ctx);
    base.target_mode = target_mode_from_string(s);
  }
  if (j.contains("hinge")) {
    detail::read_opt(j, "hinge", s, ctx);
    if (s == "standard") {
      base.hinge = HingeOrientation::standard;
    } else if (s == "literal") {
      base.hinge = HingeOrientation::literal;
    } else {
      throw ArgumentError("hinge must be standard or literal; got \"" + s + "\"");
    }
  }
  base.validate();
  return base;
}

std::vector<std::size_t> label_clusters(const EmbeddingMatrix& labels, const ClusterModel& model) {
  std::map<std::string, std::size_t> by_name;
  for (std::size_t i = 0; i < model.labels.size(); ++i) by_name.emplace(model.labels[i], model.assignment[i]);
  std::vector<std::size_t> out;
  out.reserve(labels.rows);
  for (const auto& name : labels.names) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw ValidationError("label \"" + name + "\" is not covered by the cluster model");
    out.push_back(it->second);
  }
  return out;
}

ClusterSet cluster_set_of(std::span<const std::size_t> labels, std::span<const std::size_t> label_cluster) {
  ClusterSet s;
  for (std::size_t l : labels) s.push_back(label_cluster[l]);
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

std::size_t sample_negative(std::size_t sample, const BatchContext& ctx, Rng& rng) {
  const std::size_t n = ctx.label_embeddings->rows;
  if (n < 2) throw DegenerateError("negative sampling needs at least 2 labels");
  const auto& own_clusters = ctx.clusters[sample];
  const auto& own_labels = ctx.labels[sample];
  std::vector<std::size_t> eligible;
  for (std::size_t l = 0; l < n; ++l) {
    if (!std::binary_search(own_clusters.begin(), own_clusters.end(), ctx.label_cluster[l])) eligible.push_back(l);
  }
  if (eligible.empty()) {
    for (std::size_t l = 0; l < n; ++l)
      if (std::find(own_labels.begin(), own_labels.end(), l) == own_labels.end()) eligible.push_back(l);
  }
  if (eligible.empty()) throw DegenerateError("sample carries every label; no negative exists");
  return eligible[rng.index(eligible.size())];
}

Var triplet_align_loss(Tape& t, std::span<const Var> anchors, std::span<const Var> positives,
                       std::span<const Var> negatives, double margin, HingeOrientation orientation) {
  if (anchors.size() != positives.size() || anchors.size() != negatives.size()) {
    throw DimensionError("triplet_align_loss: " + std::to_string(anchors.size()) + " anchors, " +
                         std::to_string(positives.size()) + " positives, " + std::to_string(negatives.size()) +
                         " negatives");
  }
  if (anchors.empty()) throw DimensionError("triplet_align_loss: no triplets");
  if (!(margin >= 0.0)) throw ArgumentError("triplet_align_loss: margin must be >= 0");
  std::vector<Var> terms;
  terms.reserve(anchors.size());
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    Var cp = cosine_similarity(t, anchors[i], positives[i]);
    Var cn = cosine_similarity(t, anchors[i], negatives[i]);
    Var diff = orientation == HingeOrientation::standard ? sub(t, cn, cp) : sub(t, cp, cn);
    terms.push_back(relu(t, add_scalar(t, diff, margin)));
  }
  return scale(t, sum_scalars(t, terms), 1.0 / static_cast<double>(terms.size()));
}

namespace {

bool disjoint(const ClusterSet& a, const ClusterSet& b) {
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) return false;
    if (a[i] < b[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  return true;
}

bool eligible_pair(const ClusterSet& a, const ClusterSet& b, RegMode mode) {
  return mode == RegMode::negative ? disjoint(a, b) : !disjoint(a, b);
}

}  // namespace

std::size_t count_reg_pairs(std::span<const ClusterSet> clusters, RegMode mode) {
  if (mode == RegMode::off) return 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < clusters.size(); ++i)
    for (std::size_t j = i + 1; j < clusters.size(); ++j)
      if (eligible_pair(clusters[i], clusters[j], mode)) ++n;
  return n;
}

Var reg_loss(Tape& t, std::span<const Var> outputs, std::span<const ClusterSet> clusters, RegMode mode) {
  if (outputs.size() != clusters.size()) {
    throw DimensionError("reg_loss: " + std::to_string(outputs.size()) + " outputs but " +
                         std::to_string(clusters.size()) + " cluster sets");
  }
  if (mode == RegMode::off) throw ArgumentError("reg_loss: mode must be negative or positive");
  std::vector<Var> terms;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    for (std::size_t j = i + 1; j < outputs.size(); ++j) {
      if (!eligible_pair(clusters[i], clusters[j], mode)) continue;
      Var c = cosine_similarity(t, outputs[i], outputs[j]);
      // 1 - D = cos for dissociation; D = 1 - cos for attraction.
      terms.push_back(mode == RegMode::negative ? c : add_scalar(t, scale(t, c, -1.0), 1.0));
    }
  }
  if (terms.empty()) return t.constant(Tensor({1}, 0.0));
  return scale(t, sum_scalars(t, terms), 1.0 / static_cast<double>(terms.size()));
}

LossTerms total_loss(Tape& t, const BatchContext& ctx, const ObjectiveConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t n = ctx.size();
  if (n == 0) throw ArgumentError("total_loss: empty batch");
  if (ctx.labels.size() != n || ctx.clusters.size() != n) throw DimensionError("total_loss: inconsistent batch context");
  if (!ctx.label_embeddings) throw ArgumentError("total_loss: batch context has no label embeddings");
  if (cfg.target_mode == TargetMode::centroid && !ctx.cluster_model) {
    throw ArgumentError("total_loss: centroid targets need a cluster model");
  }

  // Targets are constants shared across the batch; build each one once.
  std::map<std::size_t, Var> target_cache;
  auto target_of = [&](std::size_t label) {
    const std::size_t key = cfg.target_mode == TargetMode::centroid ? ctx.label_cluster[label] : label;
    auto it = target_cache.find(key);
    if (it != target_cache.end()) return it->second;
    std::span<const double> row = cfg.target_mode == TargetMode::centroid ? ctx.cluster_model->center(key)
                                                                         : ctx.label_embeddings->row(key);
    Var v = t.constant(Tensor::vector({row.begin(), row.end()}));
    target_cache.emplace(key, v);
    return v;
  };

  std::vector<Var> anchors, positives, negatives;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t label : ctx.labels[i]) {
      for (std::size_t r = 0; r < cfg.negatives_per_positive; ++r) {
        anchors.push_back(ctx.outputs[i]);
        positives.push_back(target_of(label));
        negatives.push_back(target_of(sample_negative(i, ctx, rng)));
      }
    }
  }
  LossTerms out;
  out.triplets = anchors.size();
  Var align = triplet_align_loss(t, anchors, positives, negatives, cfg.margin, cfg.hinge);
  out.align = t.scalar(align);
  const double weight = cfg.reg_weight();
  if (cfg.reg_mode == RegMode::off) {
    out.total = align;
    return out;
  }
  Var reg = reg_loss(t, ctx.outputs, ctx.clusters, cfg.reg_mode);
  out.reg = t.scalar(reg);
  out.pairs = count_reg_pairs(ctx.clusters, cfg.reg_mode);
  if (weight == 0.0) {
    out.total = align;
    return out;
  }
  Var terms[] = {align, scale(t, reg, weight)};
  out.total = sum_scalars(t, terms);
  return out;
}

}  // namespace emoalign
