// Copyright (c) 2026, The emoalign Authors
// SPDX-License-Identifier: Apache-2.0

#include "emoalign/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "emoalign/clustering.hpp"
#include "emoalign/data_io.hpp"
#include "emoalign/errors.hpp"
#include "emoalign/experiment.hpp"
#include "emoalign/inference.hpp"
#include "emoalign/projector.hpp"
#include "emoalign/trainer.hpp"
#include "json_util.hpp"

namespace emoalign {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  if (out.empty()) throw ArgumentError("expected a comma-separated list, got \"" + s + "\"");
  return out;
}

nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

ojson read_ordered_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return ojson::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

void write_json(const fs::path& path, const ojson& j) { write_text(path, j.dump(2) + "\n"); }

fs::path with_suffix(const fs::path& p, const std::string& suffix) { return fs::path(p.string() + suffix); }

// Input and output dims default to the data when the config leaves them out.
ProjectorConfig resolve_projector(const nlohmann::json* j, std::size_t d_in, std::size_t out_dim) {
  ProjectorConfig cfg;
  cfg.d_in = d_in;
  cfg.out_dim = out_dim;
  if (j) cfg = projector_config_from_json(*j, cfg);
  cfg.validate();
  return cfg;
}

struct CliConfig {
  std::optional<nlohmann::json> projector;
  TrainConfig train;
};

CliConfig load_cli_config(const std::string& path) {
  CliConfig c;
  if (path.empty()) return c;
  const nlohmann::json j = read_json_file(path);
  detail::reject_unknown_keys(j, {"projector", "train", "objective"}, "config");
  if (j.contains("projector")) c.projector = j.at("projector");
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
  if (j.contains("objective")) c.train.objective = objective_config_from_json(j.at("objective"), c.train.objective);
  return c;
}

// Subcommands ----------------------------------------------------------------

struct ClusterArgs {
  std::string labels, out;
  std::optional<double> quantile, bandwidth;
};

int cmd_cluster(const ClusterArgs& a, std::ostream& out) {
  std::vector<EmbeddingMatrix> spaces;
  for (const auto& p : split_commas(a.labels)) spaces.push_back(read_embedding_matrix(p));
  const EmbeddingMatrix points = stack_label_spaces(spaces);
  const double bw = a.bandwidth ? *a.bandwidth : estimate_bandwidth(points, a.quantile.value_or(kDefaultBandwidthQuantile));
  const ClusterModel model = mean_shift(points, bw);
  write_json(a.out, cluster_model_to_json(model));
  out << "clustered " << points.rows << " labels into " << model.num_clusters() << " clusters (bandwidth " << bw
      << ")\n";
  for (std::size_t k = 0; k < model.num_clusters(); ++k) {
    out << "  cluster " << k << ":";
    for (std::size_t i = 0; i < model.labels.size(); ++i)
      if (model.assignment[i] == k) out << ' ' << model.labels[i];
    out << '\n';
  }
  return kExitOk;
}

struct TrainArgs {
  std::string manifests, clusters, config, out;
  std::optional<double> lambda;
  std::optional<std::string> reg;
  std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  CliConfig cc = load_cli_config(a.config);
  TrainConfig& cfg = cc.train;
  if (a.lambda) cfg.objective.lambda = *a.lambda;
  if (a.reg) cfg.objective.reg_mode = reg_mode_from_string(*a.reg);
  if (a.seed) cfg.seed = *a.seed;
  cfg.validate();

  std::vector<std::string> manifest_paths = split_commas(a.manifests);
  std::vector<Dataset> datasets;
  for (const auto& p : manifest_paths) datasets.push_back(load_dataset(p));
  const ClusterModel clusters = cluster_model_from_json(read_ordered_json_file(a.clusters));
  const ProjectorConfig pcfg = resolve_projector(cc.projector ? &*cc.projector : nullptr, datasets.front().feature_dim(),
                                                 datasets.front().label_space.embedding.cols);

  FitResult fitted = fit(datasets, clusters, pcfg, cfg);
  ojson meta = checkpoint_metadata(cfg, clusters, fitted.history);
  meta["manifests"] = manifest_paths;
  save_checkpoint(fitted.params, meta, a.out);
  write_text(with_suffix(a.out, ".history.jsonl"), history_to_jsonl(fitted.history));

  out << "trained " << fitted.params.parameter_count() << " parameters for " << fitted.history.epochs.size()
      << " epochs\n";
  if (!fitted.history.epochs.empty()) {
    const auto& last = fitted.history.epochs.back();
    out << "final loss " << last.loss << ", best epoch " << fitted.history.best_epoch << " (val macro-F1 "
        << fitted.history.best_val_macro_f1 << ")\n";
  }
  out << "checkpoint written to " << a.out << '\n';
  return kExitOk;
}

struct EvalArgs {
  std::string model, manifest, out;
  std::optional<std::size_t> k;
  bool segment_level = false;
  std::size_t threads = 1;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(a.model);
  const Dataset ds = load_dataset(a.manifest);
  const std::size_t k = a.k ? *a.k : default_k(ds);
  const EvalReport rep = evaluate(ckpt.params, ds, k, a.segment_level, a.threads);
  ojson j;
  j["model"] = a.model;
  j["manifest"] = a.manifest;
  j["projector"] = projector_config_to_json(ckpt.params.config);
  j["report"] = eval_report_to_json(rep);
  auto preds = ojson::array();
  std::size_t unit = 0;
  for (const auto& s : ds.samples) {
    const std::size_t units = a.segment_level ? s.features.rows() : 1;
    for (std::size_t t = 0; t < units; ++t, ++unit) {
      const Prediction& p = rep.predictions.samples[unit];
      ojson entry;
      entry["id"] = a.segment_level ? s.id + "#" + std::to_string(t) : s.id;
      auto names = ojson::array();
      for (std::size_t l : p.labels) names.push_back(ds.label_space.name(l));
      entry["labels"] = std::move(names);
      entry["distances"] = p.distances;
      preds.push_back(std::move(entry));
    }
  }
  j["predictions"] = std::move(preds);
  write_json(a.out, j);
  out << rep.dataset << ": macro-F1 " << rep.macro_f1 << " over " << rep.samples << " samples at k=" << k << '\n';
  return kExitOk;
}

struct PredictArgs {
  std::string model, features, label_space;
  std::size_t k = 1;
};

int cmd_predict(const PredictArgs& a, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(a.model);
  const EmbeddingMatrix feats = read_embedding_matrix(a.features);
  LabelSpace space;
  space.embedding = read_embedding_matrix(a.label_space);
  space.source = a.label_space;
  if (a.k == 0 || a.k > space.size()) {
    throw ArgumentError("k=" + std::to_string(a.k) + " is out of range for a label space of N=" +
                        std::to_string(space.size()) + " labels");
  }
  const Prediction p = predict_topk(ckpt.params, feats.to_tensor(), space, a.k);
  for (std::size_t r = 0; r < p.labels.size(); ++r) {
    out << (r + 1) << '\t' << space.name(p.labels[r]) << '\t' << p.distances[r] << '\n';
  }
  return kExitOk;
}

struct SynthArgs {
  std::string spec, out;
  std::uint64_t seed = 0;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const SynthSpec spec = synth_spec_from_json(read_json_file(a.spec));
  const SynthResult res = generate_synthetic(spec, a.seed);
  const fs::path dir = a.out;
  fs::create_directories(dir);
  for (const auto& d : res.datasets) {
    const fs::path labels = dir / (d.train.name + "_labels.emb");
    const fs::path train = write_dataset(d.train, dir, labels);
    const fs::path test = write_dataset(d.test, dir, labels);
    out << d.train.name << ": " << d.train.samples.size() << " train -> " << train.string() << ", "
        << d.test.samples.size() << " test -> " << test.string() << '\n';
  }
  ojson truth;
  truth["seed"] = a.seed;
  truth["spec"] = synth_spec_to_json(spec);
  ojson concept_of = ojson::object();
  for (const auto& [name, c] : res.concept_of) concept_of[name] = c;
  truth["concept_of"] = std::move(concept_of);
  write_json(dir / "truth.json", truth);
  return kExitOk;
}

struct GraphArgs {
  std::string clusters, out;
};

int cmd_graph(const GraphArgs& a, std::ostream& out) {
  const ClusterModel model = cluster_model_from_json(read_ordered_json_file(a.clusters));
  write_text(a.out, export_cluster_graph(model, model.labels));
  out << "wrote " << model.labels.size() << " nodes in " << model.num_clusters() << " clusters to " << a.out << '\n';
  return kExitOk;
}

struct ExperimentArgs {
  std::string spec, out;
  std::optional<std::uint64_t> seed;
};

void write_run(const ExperimentResult& res, const fs::path& report_path, const fs::path& ckpt_path,
               ojson& report_out) {
  const fs::path history_path = with_suffix(report_path, ".history.jsonl");
  ojson meta = checkpoint_metadata(res.spec.training, res.clusters, res.history);
  meta["experiment"] = experiment_spec_to_json(res.spec);
  save_checkpoint(res.params, meta, ckpt_path);
  write_text(history_path, history_to_jsonl(res.history));
  report_out = res.report(history_path.filename().string());
  report_out["checkpoint"] = ckpt_path.filename().string();
}

void summarize(const ExperimentResult& res, std::ostream& out) {
  out << to_string(res.spec.phase) << " (lambda " << res.spec.lambda << ", " << res.clusters.num_clusters()
      << " clusters)\n";
  for (const auto& name : res.spec.test) {
    const auto& r = res.results.at(name);
    out << "  " << name << (res.zero_shot(name) ? " [zero-shot]" : "") << ": macro-F1 " << r.macro_f1 << " at k="
        << r.k << '\n';
  }
}

int cmd_experiment(const ExperimentArgs& a, std::ostream& out) {
  const fs::path spec_path = a.spec;
  nlohmann::json j = read_json_file(spec_path);
  detail::require_object(j, "experiment");
  if (!j.contains("data")) throw ValidationError("experiment: missing \"data\"");
  if (a.seed) j["seed"] = *a.seed;

  ExperimentSpec spec = experiment_spec_from_json(j);
  const DataCatalog data = load_catalog(j.at("data"), spec_path.parent_path());
  {
    const auto it = data.find(spec.train.front());
    if (it == data.end()) throw ValidationError("experiment references unknown dataset '" + spec.train.front() + "'");
    const Dataset& first = it->second.train;
    const nlohmann::json* pj = j.contains("projector") ? &j.at("projector") : nullptr;
    spec.projector = resolve_projector(pj, first.feature_dim(), first.label_space.embedding.cols);
  }

  const fs::path report_path = a.out;
  fs::path ckpt_path = with_suffix(report_path, ".ckpt");
  if (j.contains("checkpoint")) ckpt_path = report_path.parent_path() / j.at("checkpoint").get<std::string>();

  if (j.contains("lambda") && j.at("lambda").is_array()) {
    std::vector<double> lambdas;
    detail::read_opt(j, "lambda", lambdas, "experiment");
    if (lambdas.empty()) throw ValidationError("experiment: lambda sweep is empty");
    ojson sweep = ojson::array();
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
      ExperimentSpec s = spec;
      s.lambda = lambdas[i];
      const ExperimentResult res = run_experiment(s, data);
      const std::string tag = ".lambda" + std::to_string(i);
      ojson rep;
      write_run(res, with_suffix(report_path, tag), with_suffix(ckpt_path, tag), rep);
      sweep.push_back(std::move(rep));
      summarize(res, out);
    }
    ojson doc;
    doc["sweep"] = std::move(sweep);
    write_json(report_path, doc);
  } else {
    const ExperimentResult res = run_experiment(spec, data);
    ojson rep;
    write_run(res, report_path, ckpt_path, rep);
    write_json(report_path, rep);
    summarize(res, out);
  }
  out << "report written to " << report_path.string() << '\n';
  return kExitOk;
}

struct LabelsArgs {
  std::string ratings, rule, out;
  double param = 3.0;
  double scale_min = 1.0, scale_max = 5.0;
};

int cmd_labels(const LabelsArgs& a, std::ostream& out) {
  const RatingsTable table = read_ratings_csv(a.ratings, a.scale_min, a.scale_max);
  LabelSets sets;
  if (a.rule == "threshold") {
    sets = derive_labels_mean_threshold(table, a.param);
  } else if (a.rule == "topk") {
    if (!(a.param >= 1.0) || a.param != static_cast<double>(static_cast<std::size_t>(a.param))) {
      throw ArgumentError("topk needs a positive integer --param");
    }
    sets = derive_labels_top_k(table, static_cast<std::size_t>(a.param));
  } else {
    throw ArgumentError("--rule must be threshold or topk");
  }
  std::string text;
  for (std::size_t s = 0; s < sets.size(); ++s) {
    ojson line;
    line["id"] = table.sample_ids[s];
    auto names = ojson::array();
    for (std::size_t l : sets[s]) names.push_back(table.label_names[l]);
    line["labels"] = std::move(names);
    text += line.dump() + "\n";
  }
  write_text(a.out, text);
  out << "derived labels for " << sets.size() << " samples\n";
  return kExitOk;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ArgumentError*>(&e)) return kExitUsage;
  if (dynamic_cast<const NumericError*>(&e) || dynamic_cast<const DegenerateError*>(&e)) return kExitNumeric;
  if (dynamic_cast<const Error*>(&e)) return kExitData;
  if (dynamic_cast<const nlohmann::json::exception*>(&e)) return kExitData;
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return kExitData;
  return kExitData;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Emotion-label taxonomy alignment and zero-shot prediction", "emoalign"};
  app.require_subcommand(1);

  ClusterArgs ca;
  auto* cluster = app.add_subcommand("cluster", "Mean-shift cluster one or more label spaces");
  cluster->add_option("--labels", ca.labels, "Comma-separated EMBMAT01 label files")->required();
  auto* q = cluster->add_option("--quantile", ca.quantile, "Bandwidth quantile");
  auto* b = cluster->add_option("--bandwidth", ca.bandwidth, "Explicit bandwidth");
  q->excludes(b);
  cluster->add_option("--out", ca.out)->required();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a projector");
  train->add_option("--manifest", ta.manifests, "Comma-separated dataset manifests")->required();
  train->add_option("--clusters", ta.clusters)->required();
  train->add_option("--config", ta.config, "JSON config with projector, train and objective sections");
  train->add_option("--out", ta.out)->required();
  train->add_option("--lambda", ta.lambda);
  train->add_option("--reg", ta.reg)->check(CLI::IsMember({"negative", "positive", "off"}));
  train->add_option("--seed", ta.seed);

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval->add_option("--model", ea.model)->required();
  eval->add_option("--manifest", ea.manifest)->required();
  eval->add_option("--k", ea.k);
  eval->add_flag("--segment-level", ea.segment_level);
  eval->add_option("--out", ea.out)->required();
  eval->add_option("--threads", ea.threads)->check(CLI::PositiveNumber);

  PredictArgs pa;
  auto* predict = app.add_subcommand("predict", "Rank a label space for one sample");
  predict->add_option("--model", pa.model)->required();
  predict->add_option("--features", pa.features)->required();
  predict->add_option("--label-space", pa.label_space)->required();
  predict->add_option("--k", pa.k)->required();

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic scenario");
  synth->add_option("--spec", sa.spec)->required();
  synth->add_option("--seed", sa.seed)->required();
  synth->add_option("--out", sa.out)->required();

  GraphArgs ga;
  auto* graph = app.add_subcommand("graph", "Export clusters as a DOT graph");
  graph->add_option("--clusters", ga.clusters)->required();
  graph->add_option("--out", ga.out)->required();

  ExperimentArgs xa;
  auto* experiment = app.add_subcommand("experiment", "Run a full train/evaluate experiment");
  experiment->add_option("--spec", xa.spec)->required();
  experiment->add_option("--out", xa.out)->required();
  experiment->add_option("--seed", xa.seed);

  LabelsArgs la;
  auto* labels = app.add_subcommand("labels", "Derive label sets from a ratings table");
  labels->add_option("--ratings", la.ratings)->required();
  labels->add_option("--rule", la.rule)->required()->check(CLI::IsMember({"threshold", "topk"}));
  labels->add_option("--param", la.param);
  labels->add_option("--scale-min", la.scale_min);
  labels->add_option("--scale-max", la.scale_max);
  labels->add_option("--out", la.out)->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*cluster) return cmd_cluster(ca, out);
    if (*train) return cmd_train(ta, out);
    if (*eval) return cmd_eval(ea, out);
    if (*predict) return cmd_predict(pa, out);
    if (*synth) return cmd_synth(sa, out);
    if (*graph) return cmd_graph(ga, out);
    if (*experiment) return cmd_experiment(xa, out);
    if (*labels) return cmd_labels(la, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kExitUsage;
}

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace emoalign
