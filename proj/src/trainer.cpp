// Copyright (c) 2026, The emoalign Authors
// SPDX-License-Identifier: Apache-2.0

#include "emoalign/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>

#include "emoalign/inference.hpp"
#include "emoalign/random.hpp"
#include "json_util.hpp"

namespace emoalign {

void TrainConfig::validate() const {
  if (batch_size == 0) throw ArgumentError("batch_size must be >= 1");
  if (!(lr > 0.0 && std::isfinite(lr))) throw ArgumentError("lr must be positive");
  if (!(min_lr > 0.0 && min_lr <= lr)) throw ArgumentError("min_lr must satisfy 0 < min_lr <= lr");
  if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) throw ArgumentError("plateau_factor must be in (0, 1)");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ArgumentError("val_fraction must be in (0, 1)");
  if (!(weight_decay >= 0.0)) throw ArgumentError("weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ArgumentError("betas must be in [0, 1)");
  if (!(adam_eps > 0.0)) throw ArgumentError("adam_eps must be positive");
  for (const auto& [name, k] : eval_k)
    if (k == 0) throw ArgumentError("eval_k for '" + name + "' must be >= 1");
  objective.validate();
}

nlohmann::ordered_json train_config_to_json(const TrainConfig& cfg) {
  nlohmann::ordered_json j;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["lr"] = cfg.lr;
  j["min_lr"] = cfg.min_lr;
  j["plateau_factor"] = cfg.plateau_factor;
  j["plateau_patience"] = cfg.plateau_patience;
  j["weight_decay"] = cfg.weight_decay;
  j["betas"] = {cfg.beta1, cfg.beta2};
  j["adam_eps"] = cfg.adam_eps;
  j["val_fraction"] = cfg.val_fraction;
  j["seed"] = cfg.seed;
  j["objective"] = objective_config_to_json(cfg.objective);
  nlohmann::ordered_json k = nlohmann::ordered_json::object();
  for (const auto& [name, v] : cfg.eval_k) k[name] = v;
  j["eval_k"] = std::move(k);
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base) {
  constexpr const char* ctx = "train";
  detail::reject_unknown_keys(j,
                              {"epochs", "batch_size", "lr", "min_lr", "plateau_factor", "plateau_patience",
                               "weight_decay", "betas", "adam_eps", "val_fraction", "seed", "objective", "eval_k"},
                              ctx);
  detail::read_opt(j, "epochs", base.epochs, ctx);
  detail::read_opt(j, "batch_size", base.batch_size, ctx);
  detail::read_opt(j, "lr", base.lr, ctx);
  detail::read_opt(j, "min_lr", base.min_lr, ctx);
  detail::read_opt(j, "plateau_factor", base.plateau_factor, ctx);
  detail::read_opt(j, "plateau_patience", base.plateau_patience, ctx);
  detail::read_opt(j, "weight_decay", base.weight_decay, ctx);
  if (j.contains("betas")) {
    std::vector<double> betas;
    detail::read_opt(j, "betas", betas, ctx);
    if (betas.size() != 2) throw ValidationError("train.betas must hold two numbers");
    base.beta1 = betas[0];
    base.beta2 = betas[1];
  }
  detail::read_opt(j, "adam_eps", base.adam_eps, ctx);
  detail::read_opt(j, "val_fraction", base.val_fraction, ctx);
  detail::read_opt(j, "seed", base.seed, ctx);
  detail::read_opt(j, "eval_k", base.eval_k, ctx);
  if (j.contains("objective")) base.objective = objective_config_from_json(j.at("objective"), base.objective);
  base.validate();
  return base;
}

std::string history_to_jsonl(const TrainHistory& h) {
  std::string out;
  for (const auto& e : h.epochs) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["loss"] = e.loss;
    j["align"] = e.align;
    j["reg"] = e.reg;
    j["val_macro_f1"] = e.val_macro_f1;
    j["lr"] = e.lr;
    out += j.dump();
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------

void adamw_step(std::span<const std::pair<std::string, Tensor*>> params, AdamWState& state, double lr,
                const TrainConfig& cfg) {
  for (const auto& [name, t] : params) {
    if (t->grad().size() != t->numel()) throw ArgumentError("adamw_step: tensor '" + name + "' has no gradient buffer");
    for (double g : t->grad())
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in tensor '" + name + "'");
  }
  if (state.first_moment.empty()) {
    for (const auto& [name, t] : params) {
      state.first_moment.emplace_back(t->numel(), 0.0);
      state.second_moment.emplace_back(t->numel(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) throw ArgumentError("adamw_step: optimizer state does not match params");
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& t = *params[i].second;
    auto p = t.data();
    auto g = t.grad();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      p[k] -= lr * cfg.weight_decay * p[k];
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
      const double m_hat = m[k] / bc1;
      const double v_hat = v[k] / bc2;
      p[k] -= lr * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
    }
  }
}

double plateau_step(PlateauState& state, double metric, double lr, const TrainConfig& cfg) {
  if (metric > state.best) {
    state.best = metric;
    state.bad_epochs = 0;
    return lr;
  }
  if (++state.bad_epochs > cfg.plateau_patience) {
    state.bad_epochs = 0;
    return std::max(lr * cfg.plateau_factor, cfg.min_lr);
  }
  return lr;
}

// ---------------------------------------------------------------------------

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_train_val(const Dataset& ds, double val_fraction,
                                                                               std::uint64_t seed) {
  std::map<std::size_t, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) strata[ds.samples[i].labels.front()].push_back(i);
  Rng rng(seed);
  std::vector<std::size_t> train, val;
  for (auto& [label, members] : strata) {
    rng.shuffle(members);
    auto n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(members.size()) + 0.5));
    if (n_val >= members.size()) n_val = members.size() - 1;
    val.insert(val.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_val));
    train.insert(train.end(), members.begin() + static_cast<std::ptrdiff_t>(n_val), members.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  return {std::move(train), std::move(val)};
}

namespace {

/// Union of the training label spaces, de-duplicated by name.
struct LabelUniverse {
  EmbeddingMatrix embeddings;
  std::vector<std::vector<std::size_t>> local_to_global;  // per dataset
};

LabelUniverse build_universe(std::span<const Dataset> datasets) {
  LabelUniverse u;
  std::map<std::string, std::size_t> index;
  u.embeddings.cols = datasets.front().label_space.embedding.cols;
  for (const auto& ds : datasets) {
    const auto& e = ds.label_space.embedding;
    if (e.cols != u.embeddings.cols) {
      throw DimensionError("dataset '" + ds.name + "' has label dim " + std::to_string(e.cols) + ", expected " +
                           std::to_string(u.embeddings.cols));
    }
    std::vector<std::size_t> map;
    for (std::size_t l = 0; l < e.rows; ++l) {
      auto [it, inserted] = index.emplace(e.names[l], u.embeddings.rows);
      if (inserted) {
        u.embeddings.names.push_back(e.names[l]);
        u.embeddings.data.insert(u.embeddings.data.end(), e.row(l).begin(), e.row(l).end());
        ++u.embeddings.rows;
      }
      map.push_back(it->second);
    }
    u.local_to_global.push_back(std::move(map));
  }
  return u;
}

struct TrainItem {
  const Sample* sample;
  std::vector<std::size_t> labels;  // global indices
  ClusterSet clusters;
};

struct ValSet {
  Dataset data;  // samples copied from the source dataset
  std::size_t k;
};

double validation_f1(const ProjectorParams& params, const std::vector<ValSet>& sets) {
  double total = 0.0;
  for (const auto& v : sets) total += evaluate(params, v.data, v.k).macro_f1;
  return total / static_cast<double>(sets.size());
}

void copy_values(const ProjectorParams& from, ProjectorParams& to) {
  auto src = from.named();
  auto dst = to.named();
  for (std::size_t i = 0; i < src.size(); ++i) {
    std::copy(src[i].second->data().begin(), src[i].second->data().end(), dst[i].second->data().begin());
  }
}

}  // namespace

FitResult fit(std::span<const Dataset> datasets, const ClusterModel& clusters, const ProjectorConfig& projector,
              const TrainConfig& cfg) {
  cfg.validate();
  projector.validate();
  if (datasets.empty()) throw ArgumentError("fit needs at least one dataset");
  for (const auto& ds : datasets) {
    ds.validate();
    if (!ds.samples.empty() && ds.feature_dim() != projector.d_in) {
      throw DimensionError("dataset '" + ds.name + "' has feature dim " + std::to_string(ds.feature_dim()) +
                           ", projector expects " + std::to_string(projector.d_in));
    }
    if (ds.label_space.embedding.cols != projector.out_dim) {
      throw DimensionError("dataset '" + ds.name + "' has label dim " + std::to_string(ds.label_space.embedding.cols) +
                           ", projector outputs " + std::to_string(projector.out_dim));
    }
  }
  if (cfg.objective.target_mode == TargetMode::centroid && clusters.dim != projector.out_dim) {
    throw DimensionError("cluster centers have dim " + std::to_string(clusters.dim) + ", projector outputs " +
                         std::to_string(projector.out_dim));
  }

  Rng master(cfg.seed);
  const std::uint64_t split_seed = master.fork();
  const std::uint64_t init_seed = master.fork();
  Rng shuffle_rng(master.fork());
  Rng negative_rng(master.fork());
  Rng dropout_rng(master.fork());

  const LabelUniverse universe = build_universe(datasets);
  const std::vector<std::size_t> label_cluster = label_clusters(universe.embeddings, clusters);

  std::vector<TrainItem> pool;
  std::vector<ValSet> val_sets;
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    const Dataset& ds = datasets[d];
    if (ds.samples.empty()) continue;
    auto [train_idx, val_idx] = split_train_val(ds, cfg.val_fraction, split_seed + d);
    for (std::size_t i : train_idx) {
      TrainItem item;
      item.sample = &ds.samples[i];
      for (std::size_t l : ds.samples[i].labels) item.labels.push_back(universe.local_to_global[d][l]);
      item.clusters = cluster_set_of(item.labels, label_cluster);
      pool.push_back(std::move(item));
    }
    ValSet v;
    v.data.name = ds.name;
    v.data.label_space = ds.label_space;
    v.data.split = ds.split;
    // Without held-out samples the dataset is scored on its training part.
    const auto& chosen = val_idx.empty() ? train_idx : val_idx;
    for (std::size_t i : chosen) v.data.samples.push_back(ds.samples[i]);
    auto k_it = cfg.eval_k.find(ds.name);
    v.k = k_it != cfg.eval_k.end() ? k_it->second : default_k(ds);
    v.k = std::min(v.k, ds.label_space.size());
    val_sets.push_back(std::move(v));
  }
  if (pool.empty()) throw ArgumentError("fit: the training pool is empty");

  FitResult result;
  ProjectorParams params = init_projector(projector, init_seed);
  result.params = params;
  if (cfg.epochs == 0) return result;

  params.set_requires_grad(true);
  const auto named = params.named();
  AdamWState opt;
  PlateauState plateau;
  double lr = cfg.lr;
  std::vector<std::size_t> order(pool.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0, align_sum = 0.0, reg_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      params.zero_grad();
      Tape tape;
      const ProjectorVars vars = bind_parameters(tape, params);
      BatchContext ctx;
      ctx.label_embeddings = &universe.embeddings;
      ctx.label_cluster = label_cluster;
      ctx.cluster_model = &clusters;
      for (std::size_t b = begin; b < end; ++b) {
        const TrainItem& item = pool[order[b]];
        Var x = tape.constant_ref(item.sample->features);
        ctx.outputs.push_back(forward(tape, vars, projector, x, &dropout_rng));
        ctx.labels.push_back(item.labels);
        ctx.clusters.push_back(item.clusters);
      }
      const LossTerms terms = total_loss(tape, ctx, cfg.objective, negative_rng);
      const double batch_loss = tape.scalar(terms.total);
      if (!std::isfinite(batch_loss)) throw NumericError("training loss became non-finite at epoch " + std::to_string(epoch));
      tape.backward(terms.total);
      adamw_step(named, opt, lr, cfg);
      const double w = static_cast<double>(end - begin);
      loss_sum += w * batch_loss;
      align_sum += w * terms.align;
      reg_sum += w * terms.reg;
    }
    const double n = static_cast<double>(order.size());
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / n;
    rec.align = align_sum / n;
    rec.reg = reg_sum / n;
    rec.lr = lr;
    rec.val_macro_f1 = validation_f1(params, val_sets);
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (rec.val_macro_f1 > result.history.best_val_macro_f1) {
      result.history.best_val_macro_f1 = rec.val_macro_f1;
      result.history.best_epoch = epoch;
      copy_values(params, result.params);
    }
    lr = plateau_step(plateau, rec.val_macro_f1, lr, cfg);
    result.history.epochs.push_back(rec);
  }
  for (Tensor* t : result.params.tensors())
    for (double& v : t->data()) v = static_cast<double>(static_cast<float>(v));
  return result;
}

}  // namespace emoalign
