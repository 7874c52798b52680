// Copyright (c) 2026, The emoalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "emoalign/clustering.hpp"
#include "emoalign/data_io.hpp"
#include "emoalign/diffmath.hpp"

namespace emoalign {

class Rng;

enum class RegMode { off, negative, positive };
enum class TargetMode { label, centroid };

/// Which way the hinge points. `standard` pulls anchors toward positives:
/// max(0, cos(f, neg) - cos(f, pos) + margin). `literal` swaps the two cosine
/// terms and is kept only to reproduce runs that used that form.
enum class HingeOrientation { standard, literal };

std::string to_string(RegMode m);
std::string to_string(TargetMode m);
RegMode reg_mode_from_string(const std::string& s);
TargetMode target_mode_from_string(const std::string& s);

struct ObjectiveConfig {
  double margin = 0.2;
  double lambda = 0.0;
  RegMode reg_mode = RegMode::negative;
  std::size_t negatives_per_positive = 1;
  TargetMode target_mode = TargetMode::label;
  HingeOrientation hinge = HingeOrientation::standard;

  void validate() const;
  /// Effective weight of the regularizer; zero when the mode is off.
  double reg_weight() const { return reg_mode == RegMode::off ? 0.0 : lambda; }
};

nlohmann::ordered_json objective_config_to_json(const ObjectiveConfig& cfg);
ObjectiveConfig objective_config_from_json(const nlohmann::json& j, ObjectiveConfig base = {});

/// Sorted cluster indices of a sample's true labels.
using ClusterSet = std::vector<std::size_t>;

/// Everything the objectives need about one mini-batch.
struct BatchContext {
  std::vector<Var> outputs;                       // projector output per sample
  std::vector<std::vector<std::size_t>> labels;   // true label indices per sample
  std::vector<ClusterSet> clusters;               // cluster set per sample
  const EmbeddingMatrix* label_embeddings = nullptr;
  std::vector<std::size_t> label_cluster;         // label index -> cluster index
  const ClusterModel* cluster_model = nullptr;

  std::size_t size() const { return outputs.size(); }
};

/// Maps each row of `labels` to its cluster by name. Throws ValidationError
/// for a label the cluster model does not know.
std::vector<std::size_t> label_clusters(const EmbeddingMatrix& labels, const ClusterModel& model);

/// Cluster set of one sample's true labels.
ClusterSet cluster_set_of(std::span<const std::size_t> labels, std::span<const std::size_t> label_cluster);

/// Uniform draw among labels whose cluster is not in the sample's cluster
/// set, falling back to any label outside the sample's true labels.
std::size_t sample_negative(std::size_t sample, const BatchContext& ctx, Rng& rng);

/// Mean hinge over (anchor, positive, negative) triples; returns a [1] var.
Var triplet_align_loss(Tape& t, std::span<const Var> anchors, std::span<const Var> positives,
                       std::span<const Var> negatives, double margin,
                       HingeOrientation orientation = HingeOrientation::standard);

/// Number of pairs i < j the regularizer averages over in `mode`
/// (disjoint cluster sets for negative mode, overlapping ones for positive).
std::size_t count_reg_pairs(std::span<const ClusterSet> clusters, RegMode mode);

/// Negative mode: mean over disjoint pairs of cos(f_i, f_j), i.e. 1 - D.
/// Positive mode: mean over overlapping pairs of 1 - cos(f_i, f_j), i.e. D.
/// A batch without eligible pairs yields a constant 0.
Var reg_loss(Tape& t, std::span<const Var> outputs, std::span<const ClusterSet> clusters, RegMode mode);

struct LossTerms {
  Var total;
  double align = 0.0;
  double reg = 0.0;
  std::size_t triplets = 0;
  std::size_t pairs = 0;
};

/// L_align + lambda * L_reg over the batch. Label embeddings and cluster
/// centers enter as constants, so gradients reach projector parameters only.
LossTerms total_loss(Tape& t, const BatchContext& ctx, const ObjectiveConfig& cfg, Rng& rng);

}  // namespace emoalign
