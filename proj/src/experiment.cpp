// Copyright (c) 2026, The emoalign Authors
// SPDX-License-Identifier: Apache-2.0

#include "emoalign/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "json_util.hpp"

namespace emoalign {

using ojson = nlohmann::ordered_json;

std::string to_string(Phase p) {
  switch (p) {
    case Phase::baseline1: return "baseline1";
    case Phase::baseline2: return "baseline2";
    case Phase::align_reg: return "align_reg";
  }
  return "?";
}

Phase phase_from_string(const std::string& s) {
  if (s == "baseline1") return Phase::baseline1;
  if (s == "baseline2") return Phase::baseline2;
  if (s == "align_reg") return Phase::align_reg;
  throw ValidationError("phase must be baseline1, baseline2 or align_reg; got \"" + s + "\"");
}

void ExperimentSpec::validate() const {
  if (phase == Phase::baseline1 && train.size() != 1) {
    throw ValidationError("baseline1 trains on exactly one dataset, got " + std::to_string(train.size()));
  }
  if (phase != Phase::baseline1 && train.size() != 2) {
    throw ValidationError(to_string(phase) + " trains on exactly two datasets, got " + std::to_string(train.size()));
  }
  if (std::set<std::string>(train.begin(), train.end()).size() != train.size()) {
    throw ValidationError("training datasets must be distinct");
  }
  if (test.empty()) throw ValidationError("experiment needs at least one test dataset");
  if (!(lambda >= 0.0)) throw ValidationError("lambda must be >= 0");
  if (phase == Phase::align_reg && reg_mode == RegMode::off) {
    throw ValidationError("align_reg needs reg_mode negative or positive");
  }
  if (bandwidth && !(*bandwidth > 0.0)) throw ValidationError("bandwidth must be positive");
  if (!(quantile > 0.0 && quantile <= 1.0)) throw ValidationError("quantile must be in (0, 1]");
}

ojson experiment_spec_to_json(const ExperimentSpec& spec) {
  ojson j;
  j["phase"] = to_string(spec.phase);
  j["train"] = spec.train;
  j["test"] = spec.test;
  j["lambda"] = spec.lambda;
  j["reg_mode"] = to_string(spec.reg_mode);
  ojson k = ojson::object();
  for (const auto& [name, v] : spec.k) k[name] = v;
  j["k"] = std::move(k);
  j["seed"] = spec.seed;
  if (spec.bandwidth) {
    j["bandwidth"] = *spec.bandwidth;
  } else {
    j["quantile"] = spec.quantile;
  }
  j["segment_level"] = spec.segment_level;
  j["projector"] = projector_config_to_json(spec.projector);
  j["training"] = train_config_to_json(spec.training);
  return j;
}

ExperimentSpec experiment_spec_from_json(const nlohmann::json& j) {
  constexpr const char* ctx = "experiment";
  detail::reject_unknown_keys(j,
                              {"phase", "train", "test", "lambda", "reg_mode", "k", "seed", "bandwidth", "quantile",
                               "segment_level", "projector", "training", "data", "checkpoint", "history"},
                              ctx);
  ExperimentSpec s;
  std::string phase;
  detail::read_opt(j, "phase", phase, ctx);
  if (phase.empty()) throw ValidationError("experiment: missing \"phase\"");
  s.phase = phase_from_string(phase);
  detail::read_opt(j, "train", s.train, ctx);
  detail::read_opt(j, "test", s.test, ctx);
  if (j.contains("lambda") && !j.at("lambda").is_array()) detail::read_opt(j, "lambda", s.lambda, ctx);
  if (j.contains("reg_mode")) {
    std::string m;
    detail::read_opt(j, "reg_mode", m, ctx);
    s.reg_mode = reg_mode_from_string(m);
  }
  detail::read_opt(j, "k", s.k, ctx);
  detail::read_opt(j, "seed", s.seed, ctx);
  if (j.contains("bandwidth")) {
    double bw = 0.0;
    detail::read_opt(j, "bandwidth", bw, ctx);
    s.bandwidth = bw;
  }
  detail::read_opt(j, "quantile", s.quantile, ctx);
  detail::read_opt(j, "segment_level", s.segment_level, ctx);
  if (j.contains("projector")) s.projector = projector_config_from_json(j.at("projector"));
  if (j.contains("training")) s.training = train_config_from_json(j.at("training"));
  s.validate();
  return s;
}

DataCatalog load_catalog(const nlohmann::json& data, const std::filesystem::path& base) {
  detail::require_object(data, "data");
  DataCatalog out;
  for (auto it = data.begin(); it != data.end(); ++it) {
    detail::reject_unknown_keys(it.value(), {"train", "test"}, "data." + it.key());
    DataSplits splits;
    if (it.value().contains("train")) splits.train = load_dataset(base / it.value().at("train").get<std::string>());
    if (it.value().contains("test")) splits.test = load_dataset(base / it.value().at("test").get<std::string>());
    out.emplace(it.key(), std::move(splits));
  }
  return out;
}

bool ExperimentResult::zero_shot(const std::string& dataset) const {
  return std::find(spec.train.begin(), spec.train.end(), dataset) == spec.train.end();
}

ojson ExperimentResult::report(const std::string& history_path) const {
  ojson j;
  j["spec"] = experiment_spec_to_json(spec);
  ojson per_dataset = ojson::object();
  for (const auto& name : spec.test) {
    ojson entry = eval_report_to_json(results.at(name));
    entry["zero_shot"] = zero_shot(name);
    per_dataset[name] = std::move(entry);
  }
  j["results"] = std::move(per_dataset);
  j["clusters"] = cluster_model_to_json(clusters);
  j["best_epoch"] = history.best_epoch;
  j["best_val_macro_f1"] = history.epochs.empty() ? 0.0 : history.best_val_macro_f1;
  j["history_path"] = history_path;
  return j;
}

namespace {

const Dataset& find_split(const DataCatalog& data, const std::string& name, bool train) {
  auto it = data.find(name);
  if (it == data.end()) throw ValidationError("experiment references unknown dataset '" + name + "'");
  const Dataset& ds = train ? it->second.train : it->second.test;
  if (train && ds.samples.empty()) throw ValidationError("dataset '" + name + "' has no training samples");
  if (!train && ds.samples.empty()) throw ValidationError("dataset '" + name + "' has no test samples");
  return ds;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec, const DataCatalog& data) {
  spec.validate();
  ExperimentResult res;
  res.spec = spec;

  std::vector<Dataset> train_sets;
  std::vector<EmbeddingMatrix> spaces;
  for (const auto& name : spec.train) {
    train_sets.push_back(find_split(data, name, true));
    spaces.push_back(train_sets.back().label_space.embedding);
  }
  const EmbeddingMatrix points = stack_label_spaces(spaces);
  const double bw = spec.bandwidth ? *spec.bandwidth : estimate_bandwidth(points, spec.quantile);
  res.clusters = mean_shift(points, bw);

  TrainConfig cfg = spec.training;
  cfg.seed = spec.seed;
  switch (spec.phase) {
    case Phase::baseline1:
      cfg.objective.target_mode = TargetMode::label;
      cfg.objective.reg_mode = RegMode::off;
      cfg.objective.lambda = 0.0;
      break;
    case Phase::baseline2:
      cfg.objective.target_mode = TargetMode::centroid;
      cfg.objective.reg_mode = RegMode::off;
      cfg.objective.lambda = 0.0;
      break;
    case Phase::align_reg:
      cfg.objective.target_mode = TargetMode::centroid;
      cfg.objective.reg_mode = spec.reg_mode;
      cfg.objective.lambda = spec.lambda;
      break;
  }
  FitResult fitted = fit(train_sets, res.clusters, spec.projector, cfg);
  res.params = std::move(fitted.params);
  res.history = std::move(fitted.history);
  res.spec.training = cfg;

  for (const auto& name : spec.test) {
    const Dataset& ds = find_split(data, name, false);
    auto k_it = spec.k.find(name);
    const std::size_t k = k_it != spec.k.end() ? k_it->second : default_k(ds);
    res.results.emplace(name, evaluate(res.params, ds, k, spec.segment_level));
  }
  return res;
}

std::vector<ExperimentResult> run_lambda_sweep(const ExperimentSpec& spec, const std::vector<double>& lambdas,
                                               const DataCatalog& data) {
  std::vector<ExperimentResult> out;
  for (double l : lambdas) {
    ExperimentSpec s = spec;
    s.lambda = l;
    out.push_back(run_experiment(s, data));
  }
  return out;
}

ojson checkpoint_metadata(const TrainConfig& cfg, const ClusterModel& clusters, const TrainHistory& history) {
  ojson j;
  j["training"] = train_config_to_json(cfg);
  char hash[24];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(cluster_model_hash(clusters)));
  j["cluster_model_hash"] = hash;
  j["best_epoch"] = history.best_epoch;
  j["best_val_macro_f1"] = history.epochs.empty() ? 0.0 : history.best_val_macro_f1;
  return j;
}

}  // namespace emoalign
