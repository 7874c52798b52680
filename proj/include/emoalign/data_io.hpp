// Copyright (c) 2026, The emoalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "emoalign/diffmath.hpp"

namespace emoalign {

/// N x m matrix with one unique name per row. Values are float64 in memory
/// and float32 on disk.
struct EmbeddingMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;
  std::vector<std::string> names;

  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::size_t r, std::size_t c, std::vector<double> values, std::vector<std::string> row_names);

  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }

  /// Throws ValidationError if names are missing or duplicated or a value is not finite.
  void validate() const;
  Tensor to_tensor() const;
};

/// Labels of one dataset and their embeddings.
struct LabelSpace {
  EmbeddingMatrix embedding;
  std::string source;

  std::size_t size() const { return embedding.rows; }
  const std::string& name(std::size_t i) const { return embedding.names[i]; }
  std::optional<std::size_t> index_of(const std::string& label) const;
};

struct Sample {
  std::string id;
  Tensor features;                 // T x d_in
  std::vector<std::size_t> labels; // sorted, unique indices into the label space
};

enum class Split { train, test };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct Dataset {
  std::string name;
  std::vector<Sample> samples;
  LabelSpace label_space;
  Split split = Split::train;

  std::size_t feature_dim() const { return samples.empty() ? 0 : samples.front().features.cols(); }
  /// Throws ValidationError on any violated sample invariant.
  void validate() const;
};

/// Aggregated per-sample, per-label ratings (S x N).
struct RatingsTable {
  std::vector<std::string> sample_ids;
  std::vector<std::string> label_names;
  std::vector<double> ratings;
  double scale_min = 1.0;
  double scale_max = 5.0;

  std::size_t num_samples() const { return sample_ids.size(); }
  std::size_t num_labels() const { return label_names.size(); }
  std::span<const double> row(std::size_t s) const { return {ratings.data() + s * num_labels(), num_labels()}; }
};

using LabelSets = std::vector<std::vector<std::size_t>>;

// EMBMAT01 binary format ------------------------------------------------------

inline constexpr char kEmbMagic[] = "EMBMAT01";
inline constexpr std::size_t kEmbHeaderBytes = 16;

/// Writes the binary matrix to `path` and the names to `<path>.json`.
void write_embedding_matrix(const EmbeddingMatrix& m, const std::filesystem::path& path);
/// Reads a matrix and its names sidecar. When the sidecar is absent the rows
/// are named by their decimal index.
EmbeddingMatrix read_embedding_matrix(const std::filesystem::path& path);

/// Path of the names sidecar for an EMBMAT01 file.
std::filesystem::path names_sidecar_path(const std::filesystem::path& path);

// Datasets --------------------------------------------------------------------

/// Loads a JSON-Lines manifest. Paths inside it are relative to the manifest's directory.
Dataset load_dataset(const std::filesystem::path& manifest_path);

/// Writes a dataset as a manifest plus per-sample feature files. The label
/// space is written to `label_space_path` unless that file already exists
/// with identical contents. Returns the manifest path.
std::filesystem::path write_dataset(const Dataset& ds, const std::filesystem::path& dir,
                                    const std::filesystem::path& label_space_path);

// Label derivation -----------------------------------------------------------

RatingsTable read_ratings_csv(const std::filesystem::path& path, double scale_min = 1.0, double scale_max = 5.0);

/// Labels whose rating is strictly above `threshold`; a sample with none gets
/// its single highest-rated label (lowest index on ties).
LabelSets derive_labels_mean_threshold(const RatingsTable& r, double threshold);

/// The k highest-rated labels per sample, ties broken by lowest index.
LabelSets derive_labels_top_k(const RatingsTable& r, std::size_t k);

// Synthetic scenarios ---------------------------------------------------------

struct SynthDatasetSpec {
  std::string name;
  std::size_t train_samples = 200;
  std::size_t test_samples = 100;
};

struct SynthSpec {
  std::size_t concepts = 3;
  std::size_t labels_per_concept = 1;
  std::size_t embedding_dim = 32;  // m
  std::size_t feature_dim = 32;    // d_in
  std::size_t segments = 4;        // T
  double label_noise = 0.3;        // std-dev of the per-coordinate label perturbation, times 1/sqrt(m)
  double feature_noise = 0.5;      // std-dev of per-segment feature noise
  double mixture_noise = 0.2;      // std-dev of per-sample concept-mixture jitter, times 1/sqrt(m)
  double multi_label_prob = 0.0;   // chance that a sample carries a second concept
  std::vector<SynthDatasetSpec> datasets;
};

struct SynthDataset {
  Dataset train;
  Dataset test;
};

struct SynthResult {
  std::vector<SynthDataset> datasets;
  /// label name -> concept index, over every generated label.
  std::map<std::string, std::size_t> concept_of;
  EmbeddingMatrix concept_directions;
};

/// Pure function of (spec, seed).
SynthResult generate_synthetic(const SynthSpec& spec, std::uint64_t seed);

/// Unknown keys are rejected; missing keys keep their defaults.
SynthSpec synth_spec_from_json(const nlohmann::json& j);
nlohmann::ordered_json synth_spec_to_json(const SynthSpec& spec);

}  // namespace emoalign
