// Copyright (c) 2026, The emoalign Authors
// SPDX-License-Identifier: Apache-2.0

#include "emoalign/projector.hpp"

#include <cmath>

#include "emoalign/random.hpp"
#include "json_util.hpp"

namespace emoalign {

void ProjectorConfig::validate() const {
  if (d_in == 0 || d_model == 0 || layers == 0 || heads == 0 || ffn_mult == 0 || out_dim == 0) {
    throw ArgumentError("projector dims must all be >= 1");
  }
  if (d_model % heads != 0) {
    throw ArgumentError("d_model " + std::to_string(d_model) + " is not divisible by heads " + std::to_string(heads));
  }
  if (!(ln_eps > 0.0)) throw ArgumentError("layer-norm eps must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ArgumentError("dropout must be in [0, 1)");
}

std::vector<std::pair<std::string, Tensor*>> ProjectorParams::named() {
  std::vector<std::pair<std::string, Tensor*>> out;
  out.emplace_back("input.weight", &in_w);
  out.emplace_back("input.bias", &in_b);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    auto& b = blocks[i];
    const std::string p = "blocks." + std::to_string(i) + ".";
    out.emplace_back(p + "attn.q.weight", &b.wq);
    out.emplace_back(p + "attn.q.bias", &b.bq);
    out.emplace_back(p + "attn.k.weight", &b.wk);
    out.emplace_back(p + "attn.k.bias", &b.bk);
    out.emplace_back(p + "attn.v.weight", &b.wv);
    out.emplace_back(p + "attn.v.bias", &b.bv);
    out.emplace_back(p + "attn.o.weight", &b.wo);
    out.emplace_back(p + "attn.o.bias", &b.bo);
    out.emplace_back(p + "norm1.gain", &b.ln1_gain);
    out.emplace_back(p + "norm1.bias", &b.ln1_bias);
    out.emplace_back(p + "ffn.1.weight", &b.ffn_w1);
    out.emplace_back(p + "ffn.1.bias", &b.ffn_b1);
    out.emplace_back(p + "ffn.2.weight", &b.ffn_w2);
    out.emplace_back(p + "ffn.2.bias", &b.ffn_b2);
    out.emplace_back(p + "norm2.gain", &b.ln2_gain);
    out.emplace_back(p + "norm2.bias", &b.ln2_bias);
  }
  out.emplace_back("output.weight", &out_w);
  out.emplace_back("output.bias", &out_b);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> ProjectorParams::named() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (auto& [name, t] : const_cast<ProjectorParams*>(this)->named()) out.emplace_back(name, t);
  return out;
}

std::vector<Tensor*> ProjectorParams::tensors() {
  std::vector<Tensor*> out;
  for (auto& [name, t] : named()) out.push_back(t);
  return out;
}

std::size_t ProjectorParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named()) n += t->numel();
  return n;
}

void ProjectorParams::set_requires_grad(bool on) {
  for (Tensor* t : tensors()) t->set_requires_grad(on);
}

void ProjectorParams::zero_grad() {
  for (Tensor* t : tensors()) t->zero_grad();
}

namespace {

Tensor uniform_weight(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor w({fan_in, fan_out});
  for (double& v : w.data()) v = static_cast<double>(static_cast<float>(rng.uniform(-bound, bound)));
  return w;
}

}  // namespace

ProjectorParams init_projector(const ProjectorConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  const std::size_t d = cfg.d_model, f = cfg.ffn_mult * cfg.d_model;
  ProjectorParams p;
  p.config = cfg;
  p.in_w = uniform_weight(rng, cfg.d_in, d);
  p.in_b = Tensor({d});
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    AttentionBlock b;
    b.wq = uniform_weight(rng, d, d);
    b.bq = Tensor({d});
    b.wk = uniform_weight(rng, d, d);
    b.bk = Tensor({d});
    b.wv = uniform_weight(rng, d, d);
    b.bv = Tensor({d});
    b.wo = uniform_weight(rng, d, d);
    b.bo = Tensor({d});
    b.ln1_gain = Tensor({d}, 1.0);
    b.ln1_bias = Tensor({d});
    b.ffn_w1 = uniform_weight(rng, d, f);
    b.ffn_b1 = Tensor({f});
    b.ffn_w2 = uniform_weight(rng, f, d);
    b.ffn_b2 = Tensor({d});
    b.ln2_gain = Tensor({d}, 1.0);
    b.ln2_bias = Tensor({d});
    p.blocks.push_back(std::move(b));
  }
  p.out_w = uniform_weight(rng, d, cfg.out_dim);
  p.out_b = Tensor({cfg.out_dim});
  return p;
}

namespace {

template <typename Bind, typename Params>
ProjectorVars bind_with(Params& params, Bind&& bind) {
  ProjectorVars v;
  v.in_w = bind(params.in_w);
  v.in_b = bind(params.in_b);
  for (auto& b : params.blocks) {
    v.blocks.push_back({bind(b.wq), bind(b.bq), bind(b.wk), bind(b.bk), bind(b.wv), bind(b.bv), bind(b.wo),
                        bind(b.bo), bind(b.ln1_gain), bind(b.ln1_bias), bind(b.ffn_w1), bind(b.ffn_b1),
                        bind(b.ffn_w2), bind(b.ffn_b2), bind(b.ln2_gain), bind(b.ln2_bias)});
  }
  v.out_w = bind(params.out_w);
  v.out_b = bind(params.out_b);
  return v;
}

Var linear(Tape& t, Var x, Var w, Var b) { return add_row_bias(t, matmul(t, x, w), b); }

}  // namespace

ProjectorVars bind_parameters(Tape& tape, ProjectorParams& params) {
  return bind_with(params, [&tape](Tensor& t) { return tape.parameter(t); });
}

ProjectorVars bind_constants(Tape& tape, const ProjectorParams& params) {
  return bind_with(params, [&tape](const Tensor& t) { return tape.constant_ref(t); });
}

Var forward(Tape& tape, const ProjectorVars& vars, const ProjectorConfig& cfg, Var features, Rng* dropout_rng) {
  const Tensor& x = tape.value(features);
  if (x.rank() != 2 || x.cols() != cfg.d_in) {
    throw DimensionError("projector expects T x " + std::to_string(cfg.d_in) + " features, got " +
                         shape_to_string(x.shape()));
  }
  if (!x.all_finite()) throw NumericError("projector input contains non-finite values");
  const bool drop = dropout_rng != nullptr && cfg.dropout > 0.0;
  auto maybe_drop = [&](Var v) { return drop ? dropout(tape, v, cfg.dropout, *dropout_rng) : v; };

  const std::size_t dh = cfg.head_dim();
  Var a = linear(tape, features, vars.in_w, vars.in_b);
  for (const auto& b : vars.blocks) {
    Var q = linear(tape, a, b.wq, b.bq);
    Var k = linear(tape, a, b.wk, b.bk);
    Var v = linear(tape, a, b.wv, b.bv);
    Var attn;
    if (cfg.heads == 1) {
      attn = softmax_attention(tape, q, k, v);
    } else {
      std::vector<Var> heads;
      heads.reserve(cfg.heads);
      for (std::size_t h = 0; h < cfg.heads; ++h) {
        heads.push_back(softmax_attention(tape, slice_cols(tape, q, h * dh, dh), slice_cols(tape, k, h * dh, dh),
                                          slice_cols(tape, v, h * dh, dh)));
      }
      attn = concat_cols(tape, heads);
    }
    Var o = maybe_drop(linear(tape, attn, b.wo, b.bo));
    a = layer_norm(tape, add(tape, o, a), b.ln1_gain, b.ln1_bias, cfg.ln_eps);
    Var hidden = relu(tape, linear(tape, a, b.ffn_w1, b.ffn_b1));
    Var ffn = maybe_drop(linear(tape, hidden, b.ffn_w2, b.ffn_b2));
    a = layer_norm(tape, add(tape, ffn, a), b.ln2_gain, b.ln2_bias, cfg.ln_eps);
  }
  Var pooled = mean_rows(tape, a);
  return linear(tape, pooled, vars.out_w, vars.out_b);
}

std::vector<double> project(const ProjectorParams& params, const Tensor& features) {
  Tape tape(false);
  const ProjectorVars vars = bind_constants(tape, params);
  Var out = forward(tape, vars, params.config, tape.constant_ref(features));
  const auto v = tape.value(out).data();
  return {v.begin(), v.end()};
}

nlohmann::ordered_json projector_config_to_json(const ProjectorConfig& cfg) {
  nlohmann::ordered_json j;
  j["d_in"] = cfg.d_in;
  j["d_model"] = cfg.d_model;
  j["layers"] = cfg.layers;
  j["heads"] = cfg.heads;
  j["ffn_mult"] = cfg.ffn_mult;
  j["out_dim"] = cfg.out_dim;
  j["ln_eps"] = cfg.ln_eps;
  j["dropout"] = cfg.dropout;
  return j;
}

ProjectorConfig projector_config_from_json(const nlohmann::json& j, ProjectorConfig base) {
  constexpr const char* ctx = "projector";
  detail::reject_unknown_keys(j, {"d_in", "d_model", "layers", "heads", "ffn_mult", "out_dim", "ln_eps", "dropout"},
                              ctx);
  detail::read_opt(j, "d_in", base.d_in, ctx);
  detail::read_opt(j, "d_model", base.d_model, ctx);
  detail::read_opt(j, "layers", base.layers, ctx);
  detail::read_opt(j, "heads", base.heads, ctx);
  detail::read_opt(j, "ffn_mult", base.ffn_mult, ctx);
  detail::read_opt(j, "out_dim", base.out_dim, ctx);
  detail::read_opt(j, "ln_eps", base.ln_eps, ctx);
  detail::read_opt(j, "dropout", base.dropout, ctx);
  return base;
}

}  // namespace emoalign
