// Copyright (c) 2026, The emoalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "emoalign/data_io.hpp"
#include "emoalign/projector.hpp"

namespace emoalign {

/// Top-k labels of one sample, nearest first.
struct Prediction {
  std::vector<std::size_t> labels;
  std::vector<double> distances;  // cosine distance 1 - cos, non-decreasing
};

struct PredictionResult {
  std::size_t k = 0;
  std::vector<Prediction> samples;
};

/// The k labels of `labels` nearest to `output` in cosine distance, ties to the lowest index.
Prediction rank_labels(std::span<const double> output, const EmbeddingMatrix& labels, std::size_t k);

/// Projects a sample and ranks the label space; the label space may be unseen in training.
Prediction predict_topk(const ProjectorParams& params, const Tensor& features, const LabelSpace& labels,
                        std::size_t k);

struct F1Scores {
  double macro = 0.0;
  std::vector<double> per_label;
};

/// Per-label binary F1 (0 when a label has no true and no predicted
/// positives), averaged over all `n_labels` labels.
F1Scores f1_scores(const LabelSets& predicted, const LabelSets& truth, std::size_t n_labels);
double macro_f1(const LabelSets& predicted, const LabelSets& truth, std::size_t n_labels);

struct EvalReport {
  std::string dataset;
  std::size_t k = 0;
  bool segment_level = false;
  std::size_t samples = 0;
  double macro_f1 = 0.0;
  std::vector<std::pair<std::string, double>> per_label;
  PredictionResult predictions;
};

nlohmann::ordered_json eval_report_to_json(const EvalReport& r);

/// Predicts every sample of `ds` against its own label space and scores the
/// result. Segment-level evaluation treats every feature row as its own
/// sample carrying the song's labels. `params` is never modified.
EvalReport evaluate(const ProjectorParams& params, const Dataset& ds, std::size_t k, bool segment_level = false,
                    std::size_t threads = 1);

/// Evaluation k for the three reference corpora (MTG-Jamendo 2, CAL500 4,
/// Emotify 3), matched case-insensitively on the dataset name.
std::optional<std::size_t> reference_k(const std::string& dataset_name);

/// reference_k() when the name matches, else the rounded mean number of
/// labels per sample, clamped to [1, N].
std::size_t default_k(const Dataset& ds);

}  // namespace emoalign
