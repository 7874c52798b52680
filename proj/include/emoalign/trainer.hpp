// Copyright (c) 2026, The emoalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "emoalign/clustering.hpp"
#include "emoalign/data_io.hpp"
#include "emoalign/objectives.hpp"
#include "emoalign/projector.hpp"

namespace emoalign {

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 256;
  double lr = 2e-4;
  double min_lr = 1.6e-7;
  double plateau_factor = 0.5;
  std::size_t plateau_patience = 5;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
  ObjectiveConfig objective;
  /// Top-k used for validation, per dataset name; datasets not listed use default_k().
  std::map<std::string, std::size_t> eval_k;

  void validate() const;
};

nlohmann::ordered_json train_config_to_json(const TrainConfig& cfg);
/// Unknown keys are rejected; missing keys keep the values in `base`.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;
  double align = 0.0;
  double reg = 0.0;
  double val_macro_f1 = 0.0;
  double lr = 0.0;           // rate used during the epoch
  double wall_seconds = 0.0; // kept out of serialized output
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 0 when no epoch ran
  double best_val_macro_f1 = -std::numeric_limits<double>::infinity();
};

/// One JSON object per epoch, newline-terminated. Wall time is omitted so
/// identical runs serialize identically.
std::string history_to_jsonl(const TrainHistory& h);

// Optimizer and scheduler -----------------------------------------------------

struct AdamWState {
  std::size_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

/// Decoupled weight decay (p -= lr * wd * p) followed by a bias-corrected
/// Adam update, using each tensor's grad(). Throws NumericError naming the
/// first tensor with a non-finite gradient; nothing is updated in that case.
void adamw_step(std::span<const std::pair<std::string, Tensor*>> params, AdamWState& state, double lr,
                const TrainConfig& cfg);

struct PlateauState {
  double best = -std::numeric_limits<double>::infinity();
  std::size_t bad_epochs = 0;
};

/// Maximizing ReduceLROnPlateau. Returns the learning rate for the next epoch.
double plateau_step(PlateauState& state, double metric, double lr, const TrainConfig& cfg);

// Training -------------------------------------------------------------------

struct FitResult {
  ProjectorParams params;  // best validation epoch, rounded to float32 like a checkpoint
  TrainHistory history;
};

/// Trains a projector on the union of `datasets`.
FitResult fit(std::span<const Dataset> datasets, const ClusterModel& clusters, const ProjectorConfig& projector,
              const TrainConfig& cfg);

/// Stratified (by first label) seeded split of sample indices into train and validation.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_train_val(const Dataset& ds, double val_fraction,
                                                                               std::uint64_t seed);

}  // namespace emoalign
