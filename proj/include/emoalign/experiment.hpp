// Copyright (c) 2026, The emoalign Authors
// SPDX-License-Identifier: Apache-2.0
//
// Cross-dataset experiment harness. Three phases are supported:
//   baseline1  one training dataset, label targets, no regularizer
//   baseline2  two training datasets with clustered label spaces, centroid targets
//   align_reg  baseline2 plus the pairwise alignment regularizer
// Every named test set is evaluated against its own label space; test sets
// whose dataset was not trained on are reported as zero-shot.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "emoalign/clustering.hpp"
#include "emoalign/data_io.hpp"
#include "emoalign/inference.hpp"
#include "emoalign/projector.hpp"
#include "emoalign/trainer.hpp"

namespace emoalign {

enum class Phase { baseline1, baseline2, align_reg };

std::string to_string(Phase p);
Phase phase_from_string(const std::string& s);

struct ExperimentSpec {
  Phase phase = Phase::align_reg;
  std::vector<std::string> train;
  std::vector<std::string> test;
  double lambda = 2.5;
  RegMode reg_mode = RegMode::negative;  // align_reg only
  std::map<std::string, std::size_t> k;  // evaluation k per test dataset
  std::uint64_t seed = 0;
  std::optional<double> bandwidth;
  double quantile = kDefaultBandwidthQuantile;
  bool segment_level = false;
  ProjectorConfig projector;
  TrainConfig training;

  /// Throws ValidationError when the phase and dataset lists disagree.
  void validate() const;
};

nlohmann::ordered_json experiment_spec_to_json(const ExperimentSpec& spec);
ExperimentSpec experiment_spec_from_json(const nlohmann::json& j);

struct DataSplits {
  Dataset train;
  Dataset test;
};

using DataCatalog = std::map<std::string, DataSplits>;

/// Loads {"name": {"train": manifest, "test": manifest}, ...}; relative paths resolve against `base`.
DataCatalog load_catalog(const nlohmann::json& data, const std::filesystem::path& base);

struct ExperimentResult {
  ExperimentSpec spec;
  ClusterModel clusters;
  ProjectorParams params;
  TrainHistory history;
  std::map<std::string, EvalReport> results;

  bool zero_shot(const std::string& dataset) const;
  /// Report document: {"spec", "results": {name: {...}}, "clusters", "best_epoch", "history_path"}.
  nlohmann::ordered_json report(const std::string& history_path = "") const;
};

/// Pure function of (spec, data).
ExperimentResult run_experiment(const ExperimentSpec& spec, const DataCatalog& data);

/// Runs `spec` once per lambda.
std::vector<ExperimentResult> run_lambda_sweep(const ExperimentSpec& spec, const std::vector<double>& lambdas,
                                               const DataCatalog& data);

/// Checkpoint metadata recorded for a finished run.
nlohmann::ordered_json checkpoint_metadata(const TrainConfig& cfg, const ClusterModel& clusters,
                                           const TrainHistory& history);

}  // namespace emoalign
