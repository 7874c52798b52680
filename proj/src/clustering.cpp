// Copyright (c) 2026, The emoalign Authors
// SPDX-License-Identifier: Apache-2.0

#include "emoalign/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <unordered_set>

namespace emoalign {

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

struct Mode {
  std::vector<double> position;
  std::size_t support = 0;
};

}  // namespace

std::optional<std::size_t> ClusterModel::cluster_of(const std::string& label) const {
  auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) return std::nullopt;
  return assignment[static_cast<std::size_t>(it - labels.begin())];
}

double estimate_bandwidth(const EmbeddingMatrix& points, double quantile) {
  if (!(quantile > 0.0 && quantile <= 1.0)) throw ArgumentError("bandwidth quantile must be in (0, 1]");
  const std::size_t n = points.rows;
  if (n < 2) throw ArgumentError("bandwidth estimation needs at least 2 points, got " + std::to_string(n));
  const auto k = static_cast<std::size_t>(std::ceil(quantile * static_cast<double>(n - 1)));
  const std::size_t rank = std::clamp<std::size_t>(k, 1, n - 1);
  double total = 0.0;
  std::vector<double> d;
  for (std::size_t i = 0; i < n; ++i) {
    d.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) d.push_back(std::sqrt(sq_dist(points.row(i), points.row(j))));
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(rank - 1), d.end());
    total += d[rank - 1];
  }
  const double bw = total / static_cast<double>(n);
  if (bw == 0.0) throw DegenerateError("all points coincide; pass an explicit bandwidth");
  return bw;
}

ClusterModel mean_shift(const EmbeddingMatrix& points, double bandwidth, const MeanShiftOptions& opts) {
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) {
    throw ArgumentError("mean shift bandwidth must be positive, got " + std::to_string(bandwidth));
  }
  const std::size_t n = points.rows, dim = points.cols;
  if (n == 0) throw ArgumentError("mean shift needs at least one point");
  const double r2 = bandwidth * bandwidth;
  const double stop = opts.tolerance_factor * bandwidth;

  std::vector<Mode> modes;
  modes.reserve(n);
  std::vector<double> mean(dim);
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<double> pos(points.row(s).begin(), points.row(s).end());
    for (std::size_t it = 0; it < opts.max_iterations; ++it) {
      std::fill(mean.begin(), mean.end(), 0.0);
      std::size_t count = 0;
      for (std::size_t j = 0; j < n; ++j) {
        auto pj = points.row(j);
        if (sq_dist(pos, pj) <= r2) {
          for (std::size_t c = 0; c < dim; ++c) mean[c] += pj[c];
          ++count;
        }
      }
      if (count == 0) break;  // isolated seed stays put
      for (double& v : mean) v /= static_cast<double>(count);
      const double shift = std::sqrt(sq_dist(mean, pos));
      pos = mean;
      if (shift < stop) break;
    }
    std::size_t support = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (sq_dist(pos, points.row(j)) <= r2) ++support;
    modes.push_back({std::move(pos), support});
  }

  std::stable_sort(modes.begin(), modes.end(), [](const Mode& a, const Mode& b) {
    if (a.support != b.support) return a.support > b.support;
    return std::lexicographical_compare(a.position.begin(), a.position.end(), b.position.begin(), b.position.end());
  });
  std::vector<const Mode*> kept;
  for (const Mode& m : modes) {
    const bool near = std::any_of(kept.begin(), kept.end(), [&](const Mode* k) {
      return std::sqrt(sq_dist(k->position, m.position)) < bandwidth;
    });
    if (!near) kept.push_back(&m);
  }

  ClusterModel model;
  model.dim = dim;
  model.bandwidth = bandwidth;
  model.labels = points.names;
  for (const Mode* k : kept) model.centers.insert(model.centers.end(), k->position.begin(), k->position.end());
  model.member_counts.assign(kept.size(), 0);
  model.assignment.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    model.assignment[i] = assign(points.row(i), model);
    ++model.member_counts[model.assignment[i]];
  }

  // Drop centers that attracted no points and renumber the rest in order.
  if (std::find(model.member_counts.begin(), model.member_counts.end(), 0) != model.member_counts.end()) {
    std::vector<std::size_t> remap(kept.size(), 0);
    std::vector<double> centers;
    std::vector<std::size_t> counts;
    for (std::size_t k = 0; k < kept.size(); ++k) {
      if (model.member_counts[k] == 0) continue;
      remap[k] = counts.size();
      counts.push_back(model.member_counts[k]);
      auto c = model.center(k);
      centers.insert(centers.end(), c.begin(), c.end());
    }
    for (auto& a : model.assignment) a = remap[a];
    model.centers = std::move(centers);
    model.member_counts = std::move(counts);
  }
  return model;
}

std::size_t assign(std::span<const double> point, const ClusterModel& model) {
  if (point.size() != model.dim) {
    throw DimensionError("assign: point has dim " + std::to_string(point.size()) + ", model has " +
                         std::to_string(model.dim));
  }
  const std::size_t K = model.centers.size() / std::max<std::size_t>(model.dim, 1);
  if (K == 0) throw ValidationError("assign: cluster model has no centers");
  std::size_t best = 0;
  double best_d = sq_dist(point, model.center(0));
  for (std::size_t k = 1; k < K; ++k) {
    const double d = sq_dist(point, model.center(k));
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

namespace {

std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

}  // namespace

std::string export_cluster_graph(const ClusterModel& model, std::span<const std::string> names) {
  if (names.size() != model.assignment.size()) {
    throw ValidationError("export_cluster_graph: " + std::to_string(names.size()) + " names for " +
                          std::to_string(model.assignment.size()) + " assigned labels");
  }
  const std::size_t K = model.num_clusters();
  std::string out = "graph clusters {\n  node [style=filled];\n";
  char color[48];
  for (std::size_t i = 0; i < names.size(); ++i) {
    const std::size_t k = model.assignment[i];
    std::snprintf(color, sizeof color, "%.3f 0.600 0.950", static_cast<double>(k) / static_cast<double>(K));
    out += "  \"" + dot_escape(names[i]) + "\" [cluster=" + std::to_string(k) + ", fillcolor=\"" + color + "\"];\n";
  }
  for (std::size_t k = 0; k < K; ++k) {
    const std::string* prev = nullptr;
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (model.assignment[i] != k) continue;
      if (prev) out += "  \"" + dot_escape(*prev) + "\" -- \"" + dot_escape(names[i]) + "\";\n";
      prev = &names[i];
    }
  }
  out += "}\n";
  return out;
}

EmbeddingMatrix stack_label_spaces(std::span<const EmbeddingMatrix> spaces) {
  if (spaces.empty()) throw ArgumentError("no label spaces to stack");
  EmbeddingMatrix out;
  out.cols = spaces[0].cols;
  for (const auto& s : spaces) {
    if (s.cols != out.cols) {
      throw DimensionError("label spaces disagree on embedding dim: " + std::to_string(s.cols) + " vs " +
                           std::to_string(out.cols));
    }
    out.rows += s.rows;
    out.data.insert(out.data.end(), s.data.begin(), s.data.end());
    out.names.insert(out.names.end(), s.names.begin(), s.names.end());
  }
  out.validate();
  return out;
}

nlohmann::ordered_json cluster_model_to_json(const ClusterModel& model) {
  nlohmann::ordered_json j;
  j["bandwidth"] = model.bandwidth;
  auto centers = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < model.num_clusters(); ++k) {
    auto c = model.center(k);
    centers.push_back(std::vector<double>(c.begin(), c.end()));
  }
  j["centers"] = std::move(centers);
  nlohmann::ordered_json assignment = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < model.labels.size(); ++i) assignment[model.labels[i]] = model.assignment[i];
  j["assignment"] = std::move(assignment);
  return j;
}

ClusterModel cluster_model_from_json(const nlohmann::ordered_json& j) {
  ClusterModel m;
  try {
    m.bandwidth = j.at("bandwidth").get<double>();
    const auto centers = j.at("centers").get<std::vector<std::vector<double>>>();
    if (centers.empty()) throw ValidationError("cluster model has no centers");
    m.dim = centers[0].size();
    for (const auto& c : centers) {
      if (c.size() != m.dim || m.dim == 0) throw ValidationError("cluster centers have inconsistent dims");
      m.centers.insert(m.centers.end(), c.begin(), c.end());
    }
    m.member_counts.assign(centers.size(), 0);
    for (auto it = j.at("assignment").begin(); it != j.at("assignment").end(); ++it) {
      const auto k = it.value().get<std::size_t>();
      if (k >= centers.size()) {
        throw ValidationError("label '" + it.key() + "' assigned to cluster " + std::to_string(k) + " of " +
                              std::to_string(centers.size()));
      }
      m.labels.push_back(it.key());
      m.assignment.push_back(k);
      ++m.member_counts[k];
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("cluster model JSON: ") + e.what());
  }
  return m;
}

std::uint64_t cluster_model_hash(const ClusterModel& model) {
  const std::string s = cluster_model_to_json(model).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace emoalign
