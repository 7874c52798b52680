// Copyright (c) 2026, The emoalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "emoalign/data_io.hpp"

namespace emoalign {

/// Mean-shift result over a set of named points.
struct ClusterModel {
  std::size_t dim = 0;
  std::vector<double> centers;            // K x dim, row-major
  double bandwidth = 0.0;
  std::vector<std::size_t> assignment;    // point index -> cluster index
  std::vector<std::size_t> member_counts; // per cluster
  std::vector<std::string> labels;        // point names, same order as assignment

  std::size_t num_clusters() const { return member_counts.size(); }
  std::span<const double> center(std::size_t k) const { return {centers.data() + k * dim, dim}; }
  /// Cluster of a named point.
  std::optional<std::size_t> cluster_of(const std::string& label) const;
};

struct MeanShiftOptions {
  double tolerance_factor = 1e-3;  // stop once a seed moves less than this times the bandwidth
  std::size_t max_iterations = 300;
};

inline constexpr double kDefaultBandwidthQuantile = 0.3;

/// Mean over points of the distance to their ceil(quantile * (N - 1))-th
/// nearest other point.
double estimate_bandwidth(const EmbeddingMatrix& points, double quantile = kDefaultBandwidthQuantile);

/// Flat-kernel mean shift with every point as a seed.
ClusterModel mean_shift(const EmbeddingMatrix& points, double bandwidth, const MeanShiftOptions& opts = {});

/// Index of the Euclidean-nearest center, lowest index on ties.
std::size_t assign(std::span<const double> point, const ClusterModel& model);

/// Undirected DOT graph: one node per label, same-cluster labels share a color
/// and are chained by edges in label order.
std::string export_cluster_graph(const ClusterModel& model, std::span<const std::string> names);

/// Concatenates the rows of several label spaces (names must stay unique).
EmbeddingMatrix stack_label_spaces(std::span<const EmbeddingMatrix> spaces);

nlohmann::ordered_json cluster_model_to_json(const ClusterModel& model);
/// Label order follows the document order of "assignment".
ClusterModel cluster_model_from_json(const nlohmann::ordered_json& j);

/// FNV-1a of the canonical JSON encoding; recorded in checkpoints.
std::uint64_t cluster_model_hash(const ClusterModel& model);

}  // namespace emoalign
